import argparse
import sys
from typing import Callable, Dict, List, Optional, Tuple, Type

from loguru import logger
from pydantic import BaseModel

from src.data_pipeline import (
    count_samples,
    derive_mask,
    extract_samples,
    import_chunks,
    read_array,
    read_movie,
    score,
    synth_city,
    write_array,
    write_mask,
    write_movie,
)
from src.inference import load_mask_source, load_models, predict_movie
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
from src.trainer import EXPERIMENTS, evaluate, run_plan, write_experiment
from src.utils.constants import EXIT_DIVERGENCE, EXIT_IO, EXIT_OK, EXIT_USAGE
from src.utils.custom_exceptions import (
    CheckpointError,
    ConfigError,
    DegenerateInputError,
    DivergenceError,
    DTypeError,
    IoError,
    MissingGradError,
    ShapeError,
)
from src.utils.input_validation import resolve_options
from src.utils.log_setup import LOG_LEVELS, configure_logging


def cmd_synth(options: SynthOptions) -> int:
    movie = synth_city(
        options.seed,
        options.height,
        options.width,
        options.days,
        profile=options.profile,
        city=options.city,
        year=options.year,
    )
    write_movie(options.out, movie)
    return EXIT_OK


def cmd_import(options: ImportOptions) -> int:
    write_movie(options.out, import_chunks(options.source, options.city, options.year))
    return EXIT_OK


def cmd_sample(options: SampleOptions) -> int:
    movies = [read_movie(path) for path in options.inputs]
    print(count_samples(movies, options.strategy, options.stride))
    return EXIT_OK


def cmd_train(options: TrainOptions) -> int:
    outcome = run_plan(options.plan, output_dir=options.output_dir, jobs=options.jobs)
    print(outcome.output_dir)
    return EXIT_OK


def cmd_predict(options: PredictOptions) -> int:
    models = load_models(options.checkpoints)
    mask = load_mask_source(options.mask) if options.mask else None
    prediction = predict_movie(models, read_movie(options.input), mask=mask, jobs=options.jobs)
    write_array(options.out, prediction.data)
    logger.info(f"Wrote prediction {prediction.shape} to {options.out}")
    return EXIT_OK


def cmd_mask(options: MaskOptions) -> int:
    write_mask(options.out, derive_mask(read_movie(options.source).frames, source=options.origin))
    return EXIT_OK


def cmd_score(options: ScoreOptions) -> int:
    print(f"{score(read_array(options.pred), read_array(options.truth)):.4f}")
    return EXIT_OK


def cmd_evaluate(options: EvaluateOptions) -> int:
    models = load_models(options.checkpoints)
    frame_mode = "six" if models[0].config.output_frames == 6 else "twelve"
    samples = list(
        extract_samples(
            [read_movie(path) for path in options.inputs],
            strategy=options.strategy,
            stride=options.stride,
            frame_mode=frame_mode,
        )
    )
    mask = load_mask_source(options.mask) if options.mask else None
    result = evaluate(models, samples, mask=mask, batch_size=options.batch_size)
    print(f"loss {result.loss:.6e}")
    print(f"score {result.score:.4f}")
    return EXIT_OK


def cmd_experiment(options: ExperimentOptions) -> int:
    result = EXPERIMENTS[options.name](seeds=options.seeds)
    for arm, median in result.medians.items():
        print(f"{arm} {median:.6e}")
    if options.out:
        write_experiment(result, options.out)
    return EXIT_OK


COMMANDS: Dict[str, Tuple[Type[BaseModel], Callable[[BaseModel], int]]] = {
    "synth": (SynthOptions, cmd_synth),
    "import": (ImportOptions, cmd_import),
    "sample": (SampleOptions, cmd_sample),
    "train": (TrainOptions, cmd_train),
    "predict": (PredictOptions, cmd_predict),
    "mask": (MaskOptions, cmd_mask),
    "score": (ScoreOptions, cmd_score),
    "evaluate": (EvaluateOptions, cmd_evaluate),
    "experiment": (ExperimentOptions, cmd_experiment),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values.")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="Override an option."
    )
    common.add_argument("--log-level", default="INFO", type=str.upper, choices=LOG_LEVELS)

    parser = argparse.ArgumentParser(
        prog="gridcast", description="Traffic-movie forecasting with a dual-encoding ConvLSTM U-Net."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", parents=[common], help="Generate a synthetic city movie.")
    synth.add_argument("--city")
    synth.add_argument("--seed", type=int)
    synth.add_argument("--days", type=int)
    synth.add_argument("--height", type=int)
    synth.add_argument("--width", type=int)
    synth.add_argument("--profile", choices=["pre", "covid"])
    synth.add_argument("--year", type=int)
    synth.add_argument("--out")

    chunks = commands.add_parser("import", parents=[common], help="Build a movie from .npy chunks.")
    chunks.add_argument("--source")
    chunks.add_argument("--city")
    chunks.add_argument("--year", type=int)
    chunks.add_argument("--out")

    sample = commands.add_parser("sample", parents=[common], help="Count training pairs.")
    sample.add_argument("--input", dest="inputs", action="append")
    sample.add_argument("--strategy", choices=["nonoverlap", "overlap"])
    sample.add_argument("--stride", type=int)

    train = commands.add_parser("train", parents=[common], help="Run a training plan.")
    train.add_argument("--plan")
    train.add_argument("--output-dir")
    train.add_argument("--jobs", type=int)

    predict = commands.add_parser("predict", parents=[common], help="Predict a test movie.")
    predict.add_argument("--ckpt", dest="checkpoints", action="append")
    predict.add_argument("--input")
    predict.add_argument("--mask", help="Movie (or mask file) the road mask comes from.")
    predict.add_argument("--out")
    predict.add_argument("--jobs", type=int)

    mask = commands.add_parser("mask", parents=[common], help="Derive a road mask from a movie.")
    mask.add_argument("--from", dest="source")
    mask.add_argument("--out")
    mask.add_argument("--origin", choices=["training", "test"])

    score_parser = commands.add_parser("score", parents=[common], help="MSE between two movies.")
    score_parser.add_argument("--pred")
    score_parser.add_argument("--truth")

    evaluation = commands.add_parser("evaluate", parents=[common], help="Score checkpoints on movies.")
    evaluation.add_argument("--ckpt", dest="checkpoints", action="append")
    evaluation.add_argument("--input", dest="inputs", action="append")
    evaluation.add_argument("--mask")
    evaluation.add_argument("--strategy", choices=["nonoverlap", "overlap"])
    evaluation.add_argument("--stride", type=int)
    evaluation.add_argument("--batch-size", type=int)

    experiment = commands.add_parser(
        "experiment", parents=[common], help="Run an ablation on synthetic cities."
    )
    experiment.add_argument("--name", choices=sorted(EXPERIMENTS))
    experiment.add_argument("--seed", dest="seeds", type=int, action="append")
    experiment.add_argument("--out", help="CSV of every run.")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    configure_logging(args.log_level)
    options_class, handler = COMMANDS[args.command]
    flags = {key: value for key, value in vars(args).items() if key in options_class.model_fields}

    try:
        options = resolve_options(options_class, flags, args.config, args.set)
        return handler(options)
    except DivergenceError as e:
        logger.error(str(e))
        return EXIT_DIVERGENCE
    except (IoError, CheckpointError) as e:
        logger.error(str(e))
        return EXIT_IO
    except (ConfigError, ShapeError, DTypeError, DegenerateInputError, MissingGradError) as e:
        logger.error(str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
