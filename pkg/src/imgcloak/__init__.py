"""imgcloak: adversarial perturbations that hide or disguise objects from
two-stage detectors, with an evaluation harness and quality metrics."""

from .attack import (
    AttackConfig,
    AttackResult,
    AttackTrace,
    NonSensitiveSet,
    clamp_step,
    hide_all,
    hide_sensitive,
    select_nonsensitive_set,
)
from .baselines import BaselineSpec, apply_baseline
from .detector import (
    ImageTensor,
    ToyDetector,
    generate_corpus,
    load_bundled_detector,
    train_toy_detector,
)
from .harness import (
    DatasetManifest,
    EvaluationReport,
    RunConfig,
    load_dataset,
    per_category_leakage,
    read_report,
    run_batch,
    sweep_parameter,
    write_report,
)
from .metrics import (
    ImageOutcome,
    MatchCriterion,
    leakage_all,
    leakage_sensitive,
    match_boxes,
    psnr,
    ssim,
    success_rate_all,
    success_rate_sensitive,
)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackResult",
    "AttackTrace",
    "NonSensitiveSet",
    "clamp_step",
    "hide_all",
    "hide_sensitive",
    "select_nonsensitive_set",
    "BaselineSpec",
    "apply_baseline",
    "ImageTensor",
    "ToyDetector",
    "generate_corpus",
    "load_bundled_detector",
    "train_toy_detector",
    "DatasetManifest",
    "EvaluationReport",
    "RunConfig",
    "load_dataset",
    "per_category_leakage",
    "read_report",
    "run_batch",
    "sweep_parameter",
    "write_report",
    "ImageOutcome",
    "MatchCriterion",
    "leakage_all",
    "leakage_sensitive",
    "match_boxes",
    "psnr",
    "ssim",
    "success_rate_all",
    "success_rate_sensitive",
    "__version__",
]
