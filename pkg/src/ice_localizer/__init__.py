"""Classification of atrial activation source (sinus rhythm vs. distal vs.
proximal coronary-sinus pacing) from intracardiac echo heartbeat videos."""

from .corpus import (
    BeatAnnotation,
    ClipRecord,
    DatasetManifest,
    PacingClass,
    PatientRecord,
    SynthConfig,
    ViewLabel,
    generate_synthetic,
    load_clip,
    parse_manifest,
    validate_manifest,
)
from .preprocess import PreprocessConfig, preprocess_pipeline
from .augment import AugmentConfig, make_variants
from .folds import FoldSpec, check_disjoint, make_folds
from .model import ModelConfig, build_model, load_checkpoint, save_checkpoint
from .train import TrainConfig, TrainState, train_fold_view, weighted_cross_entropy
from .evaluate import (
    FoldReport,
    SamplePrediction,
    accuracy,
    aggregate_means,
    clip_vote,
    cross_view_vote,
    fold_report,
)
from .gradcam import compute_gradcam, export_overlay
from .experiment import ExperimentConfig, report, run_experiment

__version__ = "0.1.0"
