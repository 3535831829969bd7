from typing import Annotated, Tuple


BIN_MINUTES: Annotated[
    int, "Minutes covered by a single frame of a traffic movie"
] = 5
CHANNELS: Annotated[
    int, "Channels per pixel: (volume, speed) for headings NE, SE, SW and NW"
] = 8
CHECKPOINT_MAGIC: Annotated[
    bytes, "Magic bytes opening every checkpoint file"
] = b"GCKP"
COVID_VOLUME_FACTOR: Annotated[
    float, "Volume reduction applied by the synthetic 'covid' year profile"
] = 0.6
COVID_PEAK_FACTOR: Annotated[
    float, "Fraction of the rush-hour peak amplitude kept by the 'covid' year profile"
] = 0.4
DEFAULT_BATCH_SIZE: Annotated[
    int, "Mini-batch size used by every training phase unless a plan overrides it"
] = 4
DEFAULT_DROPOUT_RATE: Annotated[
    float, "Spatial dropout rate of the core variant"
] = 0.2
DEFAULT_LEARNING_RATE: Annotated[
    float, "Learning rate used with the LAMB optimiser"
] = 1.5e-3
EXIT_DIVERGENCE: Annotated[int, "CLI exit code when training diverges"] = 3
EXIT_IO: Annotated[int, "CLI exit code for file system and checkpoint failures"] = 4
EXIT_OK: Annotated[int, "CLI exit code on success"] = 0
EXIT_USAGE: Annotated[int, "CLI exit code for usage, config and shape errors"] = 2
DURATION_OF_ERROR_MESSAGE: Annotated[
    int, "Seconds an error message stays visible in the web demo"
] = 10
FINETUNE_EPOCHS: Annotated[
    int, "Epochs spent adapting a pre-trained model to one target city"
] = 5
FORMAT_VERSION: Annotated[
    int, "Version written into movie and checkpoint headers"
] = 1
FRAMES_PER_DAY: Annotated[
    int, "Frames in one day of traffic at 5 minute bins"
] = 288
GRADCHECK_STEP: Annotated[
    float, "Central finite-difference step used by the gradient checks"
] = 1e-5
INPUT_FRAMES: Annotated[
    int, "Frames (one hour) fed to the model for every prediction"
] = 12
MOVIE_MAGIC: Annotated[
    bytes, "Magic bytes opening every movie and mask file"
] = b"GCMV"
PREVIEW_SCALE: Annotated[
    int, "Pixel upscaling factor of the frame comparison rendered by the web demo"
] = 8
SEED_ENV_VAR: Annotated[
    str, "Environment variable read as a global seed fallback by the CLI"
] = "GRIDCAST_SEED"
SIX_FRAME_OFFSETS: Annotated[
    Tuple[int, ...],
    "Target offsets after the last input frame: 5, 10, 15, 30, 45 and 60 minutes",
] = (1, 2, 3, 6, 9, 12)
TWELVE_FRAME_OFFSETS: Annotated[
    Tuple[int, ...], "Target offsets covering the full following hour"
] = tuple(range(1, 13))
WINDOW_FRAMES: Annotated[
    int, "Frames consumed by one (input, target) training window"
] = 24
