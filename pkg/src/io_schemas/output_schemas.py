from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from src.io_schemas.config_schemas import ModelConfig, OptimizerConfig


class ParameterBreakdown(BaseModel):
    per_layer: Dict[str, int] = Field(default_factory=dict)
    per_group: Dict[str, int] = Field(default_factory=dict)
    total: int = 0
    trainable: int = 0
    frozen: int = 0


class CheckpointMetadata(BaseModel):
    model: ModelConfig
    phase: Literal["initialized", "pretrained", "finetuned"] = "initialized"
    frozen_groups: List[str] = Field(default_factory=list)
    epoch: int = Field(default=0, ge=0, description="Epochs completed across all phases.")
    optimizer: Optional[OptimizerConfig] = None
    target: Optional[str] = Field(default=None, description="City a fine-tune adapted to.")


class EpochRecord(BaseModel):
    epoch: int = Field(ge=1, description="Epochs completed across all phases.")
    phase: str = Field(description="Phase name; fan-out fine-tunes use '<phase>/<target>'.")
    train_loss: float = Field(allow_inf_nan=False)
    val_loss: Optional[float] = Field(default=None, allow_inf_nan=False)
    seconds: float = Field(ge=0.0)


class RunReport(BaseModel):
    """Per-epoch losses of one training run plus snapshots of the model's parameter split."""

    records: List[EpochRecord] = Field(default_factory=list)
    parameters: Optional[ParameterBreakdown] = None
    frozen_groups: List[str] = Field(default_factory=list)

    @field_validator("records")
    def validate_records(cls, records):
        last_epoch: Dict[str, int] = {}
        for record in records:
            if record.epoch <= last_epoch.get(record.phase, 0):
                raise ValueError(f"Epochs of phase '{record.phase}' must be strictly increasing.")
            last_epoch[record.phase] = record.epoch
        return records

    def append(self, record: EpochRecord) -> None:
        previous = [r.epoch for r in self.records if r.phase == record.phase]
        if previous and record.epoch <= previous[-1]:
            raise ValueError(
                f"Epoch {record.epoch} of phase '{record.phase}' does not follow epoch {previous[-1]}."
            )
        self.records.append(record)

    def extend(self, other: "RunReport") -> None:
        for record in other.records:
            self.append(record)
        self.parameters = other.parameters or self.parameters
        self.frozen_groups = other.frozen_groups or self.frozen_groups

    def final_losses(self) -> Dict[str, float]:
        """Training loss of the last epoch of every phase."""
        return {record.phase: record.train_loss for record in self.records}


class EvaluationResult(BaseModel):
    loss: float = Field(description="Mean MSE in normalized [0, 1] units.")
    score: float = Field(description="MSE on the raw 0-255 scale.")
    samples: int = Field(ge=1)


class PlanOutcome(BaseModel):
    """Everything a finished training plan leaves behind."""

    report: RunReport
    output_dir: str
    checkpoints: Dict[str, str] = Field(
        default_factory=dict, description="Checkpoint paths by phase or target name."
    )
    ensemble: List[str] = Field(
        default_factory=list, description="Checkpoints whose mean forms the final predictor."
    )
    evaluation: Optional[EvaluationResult] = None


class ExperimentResult(BaseModel):
    """Validation losses of an ablation, one list of per-seed runs per arm."""

    name: str
    seeds: List[int]
    losses: Dict[str, List[float]] = Field(default_factory=dict)

    @property
    def medians(self) -> Dict[str, float]:
        return {arm: float(np.median(values)) for arm, values in self.losses.items()}
