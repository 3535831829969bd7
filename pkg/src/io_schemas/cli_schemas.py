from typing import List, Literal, Optional

from pydantic import BaseModel, Field

from src.utils.constants import DEFAULT_BATCH_SIZE


class SynthOptions(BaseModel):
    city: str = "synth"
    seed: int = 0
    days: int = Field(default=7, ge=1)
    height: int = Field(default=32, ge=8)
    width: int = Field(default=32, ge=8)
    profile: Literal["pre", "covid"] = "pre"
    year: Optional[int] = Field(default=None, description="Defaults to 2019 (pre) or 2020 (covid).")
    out: str


class ImportOptions(BaseModel):
    source: str = Field(description="Directory of (T, H, W, 8) uint8 .npy chunks.")
    city: str
    year: int = 0
    out: str


class SampleOptions(BaseModel):
    inputs: List[str] = Field(min_length=1)
    strategy: Literal["nonoverlap", "overlap"] = "nonoverlap"
    stride: Optional[int] = Field(default=None, ge=1)


class TrainOptions(BaseModel):
    plan: str
    output_dir: Optional[str] = None
    jobs: int = Field(default=1, ge=1, description="Parallel fine-tunes of cloned checkpoints.")


class PredictOptions(BaseModel):
    checkpoints: List[str] = Field(min_length=1, description="Several checkpoints form an ensemble.")
    input: str
    mask: Optional[str] = Field(default=None, description="Movie the road mask is derived from.")
    out: str
    jobs: int = Field(default=1, ge=1)


class MaskOptions(BaseModel):
    source: str
    out: str
    origin: Literal["training", "test"] = "training"


class ScoreOptions(BaseModel):
    pred: str
    truth: str


class EvaluateOptions(BaseModel):
    checkpoints: List[str] = Field(min_length=1)
    inputs: List[str] = Field(min_length=1)
    mask: Optional[str] = None
    strategy: Literal["nonoverlap", "overlap"] = "nonoverlap"
    stride: Optional[int] = Field(default=None, ge=1)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=1)


class ExperimentOptions(BaseModel):
    name: Literal["skip_modes", "optimizers", "pretraining", "encoders", "dropout"]
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    out: Optional[str] = Field(default=None, description="CSV of every run (arm, seed, val_loss).")
