from src.trainer.controller import (
    clone_for_targets,
    ensemble_forward,
    ensemble_mean,
    ensemble_predict,
    evaluate,
    finetune,
    pretrain,
    resume,
)
from src.trainer.experiments import (
    EXPERIMENTS,
    compare_dropout,
    compare_encoders,
    compare_optimizers,
    compare_pretraining,
    compare_skip_modes,
    write_experiment,
)
from src.trainer.plan_runner import PlanRunner, run_plan, write_report

__all__ = [
    "EXPERIMENTS",
    "PlanRunner",
    "clone_for_targets",
    "compare_dropout",
    "compare_encoders",
    "compare_optimizers",
    "compare_pretraining",
    "compare_skip_modes",
    "ensemble_forward",
    "ensemble_mean",
    "ensemble_predict",
    "evaluate",
    "finetune",
    "pretrain",
    "resume",
    "run_plan",
    "write_experiment",
    "write_report",
]
