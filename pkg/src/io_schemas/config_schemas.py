from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from src.utils.constants import (
    CHANNELS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_DROPOUT_RATE,
    DEFAULT_LEARNING_RATE,
    INPUT_FRAMES,
)
from src.utils.custom_exceptions import ConfigError


DEFAULT_WIDTHS = {
    "core": [CHANNELS, 16, 48],
    "extended": [CHANNELS, 12, 20],
}
GROUP_NAMES = ("E_theta", "E_phi", "D_theta", "head")
GroupName = Literal["E_theta", "E_phi", "D_theta", "head"]


class ModelConfig(BaseModel):
    variant: Literal["core", "extended"] = Field(
        default="core",
        description="'core' has the spatial dropout + 1x1 3D conv head, 'extended' has neither.",
    )
    input_frames: int = Field(default=INPUT_FRAMES, ge=1)
    output_frames: Literal[6, 12] = Field(default=6, description="Predicted frames T_out.")
    repeat_frames: Optional[int] = Field(
        default=None,
        ge=1,
        description="Times the encoding is repeated before the head. Defaults to T_out; "
        "the core head maps it to T_out feature maps.",
    )
    channels: int = Field(default=CHANNELS, ge=1)
    encoder_widths: Optional[List[int]] = Field(
        default=None, description="ConvLSTM filters [f1, f2, f3] of each encoder."
    )
    decoder_widths: Optional[List[int]] = Field(
        default=None, description="ConvLSTM filters [g1, g2, g3]; must mirror the encoder."
    )
    kernel: int = Field(default=3, ge=1)
    skip_mode: Literal["addition", "temporal_concat", "hidden_cell"] = "hidden_cell"
    dropout_rate: float = Field(default=DEFAULT_DROPOUT_RATE)
    output_activation: Literal["relu", "sigmoid"] = "relu"
    peephole: bool = False
    forget_bias: float = 1.0
    dual_encoder: bool = True
    dtype: Literal["f32", "f64"] = "f32"
    seed: int = 0

    @model_validator(mode="after")
    def validate_architecture(self):
        if self.encoder_widths is None:
            self.encoder_widths = list(DEFAULT_WIDTHS[self.variant])
        if self.decoder_widths is None:
            self.decoder_widths = list(reversed(self.encoder_widths))
        if self.repeat_frames is None:
            self.repeat_frames = self.output_frames

        if len(self.encoder_widths) != 3 or len(self.decoder_widths) != 3:
            raise ConfigError("Encoders and the decoder have exactly three ConvLSTM layers each.")
        if any(width < 1 for width in self.encoder_widths + self.decoder_widths):
            raise ConfigError("Filter widths must be positive.")
        if self.decoder_widths != list(reversed(self.encoder_widths)):
            raise ConfigError(
                f"Decoder widths {self.decoder_widths} must mirror encoder widths "
                f"{self.encoder_widths} so skip connections need no projection."
            )
        if self.encoder_widths[0] != self.channels:
            raise ConfigError(
                f"The first encoder width ({self.encoder_widths[0]}) must equal the frame "
                f"channel count ({self.channels}); the last decoder layer emits the frames."
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"Dropout rate must lie in [0, 1), got {self.dropout_rate}.")
        if self.variant == "extended" and self.repeat_frames != self.output_frames:
            raise ConfigError(
                "The extended variant has no 3D conv head, so repeat_frames must equal output_frames."
            )
        if self.variant == "extended":
            core = [self.channels] + DEFAULT_WIDTHS["core"][1:]
            narrower = all(width <= limit for width, limit in zip(self.encoder_widths, core))
            if not narrower or sum(self.encoder_widths) >= sum(core):
                raise ConfigError(
                    f"Extended widths {self.encoder_widths} must be narrower than the core widths {core}."
                )
        return self

    @property
    def has_head(self) -> bool:
        return self.variant == "core"


class OptimizerConfig(BaseModel):
    name: Literal["sgd", "adam", "adamw", "lamb"] = "lamb"
    lr: float = Field(default=DEFAULT_LEARNING_RATE, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: Optional[float] = Field(
        default=None, gt=0.0, description="Defaults to 1e-6 for LAMB and 1e-8 otherwise."
    )
    weight_decay: float = Field(default=0.01, ge=0.0)
    momentum: float = Field(default=0.0, ge=0.0, lt=1.0)
    clip_norm: Optional[float] = Field(
        default=None, gt=0.0, description="Global gradient-norm clip. Off by default."
    )

    @property
    def resolved_eps(self) -> float:
        if self.eps is not None:
            return self.eps
        return 1e-6 if self.name == "lamb" else 1e-8


class SamplingConfig(BaseModel):
    strategy: Literal["nonoverlap", "overlap"] = "nonoverlap"
    stride: Optional[int] = Field(default=None, ge=1)
    frame_mode: Literal["six", "twelve"] = "six"

    @model_validator(mode="after")
    def validate_stride(self):
        if self.strategy == "overlap" and self.stride is None:
            raise ConfigError("The overlap strategy needs a stride.")
        return self


class TargetConfig(BaseModel):
    name: str = Field(description="Target city; also names the fine-tuned checkpoint.")
    datasets: List[str] = Field(min_length=1, description="Movie globs to fine-tune on.")
    validation: List[str] = Field(default_factory=list)


class PhaseConfig(BaseModel):
    name: str
    kind: Literal["pretrain", "finetune"]
    datasets: List[str] = Field(default_factory=list)
    epochs: int = Field(ge=0)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=1)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    freeze: List[GroupName] = Field(
        default_factory=list, description="Groups frozen before this phase starts."
    )
    targets: List[TargetConfig] = Field(
        default_factory=list,
        description="Fine-tune one clone of the incoming checkpoint per target.",
    )

    @model_validator(mode="after")
    def validate_datasets(self):
        if not self.datasets and not self.targets:
            raise ConfigError(f"Phase '{self.name}' names no datasets and no targets.")
        if self.targets and self.kind != "finetune":
            raise ConfigError(f"Phase '{self.name}': only finetune phases fan out to targets.")
        return self


class TrainPlan(BaseModel):
    name: str = "plan"
    seed: int = 0
    model: ModelConfig = Field(default_factory=ModelConfig)
    phases: List[PhaseConfig] = Field(min_length=1)
    validation: List[str] = Field(
        default_factory=list, description="Movie globs scored after every epoch."
    )
    output_dir: Optional[str] = Field(
        default=None, description="Relative to the plan file. Defaults to runs/<name>."
    )

    @model_validator(mode="after")
    def validate_phases(self):
        names = [phase.name for phase in self.phases]
        if len(set(names)) != len(names):
            raise ConfigError(f"Phase names must be unique, got {names}.")
        for phase in self.phases[:-1]:
            if phase.targets:
                raise ConfigError(f"Fan-out phase '{phase.name}' must be the last phase.")
        expected_mode = "six" if self.model.output_frames == 6 else "twelve"
        for phase in self.phases:
            if phase.sampling.frame_mode != expected_mode:
                raise ConfigError(
                    f"Phase '{phase.name}' samples '{phase.sampling.frame_mode}' targets but "
                    f"the model predicts {self.model.output_frames} frames."
                )
        return self
