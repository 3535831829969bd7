from src.io_schemas.cli_schemas import (
    EvaluateOptions,
    ExperimentOptions,
    ImportOptions,
    MaskOptions,
    PredictOptions,
    SampleOptions,
    ScoreOptions,
    SynthOptions,
    TrainOptions,
)
from src.io_schemas.config_schemas import (
    ModelConfig,
    OptimizerConfig,
    PhaseConfig,
    SamplingConfig,
    TargetConfig,
    TrainPlan,
)
from src.io_schemas.output_schemas import (
    CheckpointMetadata,
    EpochRecord,
    EvaluationResult,
    ExperimentResult,
    ParameterBreakdown,
    PlanOutcome,
    RunReport,
)
