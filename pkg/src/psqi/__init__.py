"""Task- and metric-specific signal quality via worst-case perturbations."""

__version__ = "0.1.0"

from .cmaes import CmaConfig, decode, minimize
from .data import AnnotatedWindow, SynthSpec, load_dataset, segment, synth_corpus
from .engine import PsqiConfig, PsqiResult, psqi_score, score_many
from .evaluation import (
    EvalRecord,
    binary_margin,
    monotonicity_bins,
    optimal_margin,
    separation_margin,
    snr_sweep,
    spearman,
)
from .features import FeatureVector, export_features, extract_features
from .metrics import binary_accuracy, f1_score, match_peaks, peak_f1
from .perturbation import PerturbationParams, apply_perturbation, sample_noise
from .signal_core import (
    FilterSpec,
    Signal,
    SnrConfig,
    design_butterworth,
    filtfilt,
    global_snr,
    local_deviation_bound,
    useful_component,
)
from .tasks import (
    RPEAK_TASK,
    BinaryLabel,
    ExternalCommandSpec,
    PeakList,
    TaskBinding,
    detect_rpeaks_alternate,
    detect_rpeaks_reference,
    external_classifier,
    external_task,
)
