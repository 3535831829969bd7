from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
from loguru import logger

from src.data_pipeline import SamplePair, TrafficMovie, extract_samples, synth_city
from src.io_schemas.config_schemas import ModelConfig, OptimizerConfig
from src.io_schemas.output_schemas import ExperimentResult
from src.model import Checkpoint, DualUNet
from src.optim import build_optimizer
from src.trainer.controller import evaluate, finetune, pretrain
from src.utils.custom_exceptions import IoError


# Pools twice down to 4x4
BENCHMARK_GRID = 16
BENCHMARK_WIDTHS = [8, 8, 8]
PRETRAIN_SCENARIOS = ("none", "2019", "2020", "both")
# The default rate barely moves the weights within the skip-mode benchmark.
SKIP_MODE_OPTIMIZER = OptimizerConfig(name="lamb", lr=1e-2)
DROPOUT_ARMS: Dict[str, Dict] = {
    "with_dropout": {"variant": "core", "dropout_rate": 0.2},
    "without_dropout": {"variant": "core", "dropout_rate": 0.0},
    "no_head": {"variant": "extended"},
}


def benchmark_config(seed: int, **overrides) -> ModelConfig:
    fields = {"encoder_widths": BENCHMARK_WIDTHS, "seed": seed}
    fields.update(overrides)
    return ModelConfig(**fields)


def _samples(movies: Sequence[TrafficMovie]) -> List[SamplePair]:
    return list(extract_samples(movies, strategy="nonoverlap"))


def city_pair(seed: int, city: str, days: int = 1, grid: int = BENCHMARK_GRID) -> Tuple[TrafficMovie, TrafficMovie]:
    """The same synthetic city in its pre-pandemic and pandemic years."""
    return (
        synth_city(seed, grid, grid, days, profile="pre", city=city),
        synth_city(seed, grid, grid, days, profile="covid", city=city),
    )


def _train_and_score(
    config: ModelConfig,
    optimizer_config: OptimizerConfig,
    train: List[SamplePair],
    validation: List[SamplePair],
    epochs: int,
    seed: int,
) -> float:
    model = DualUNet(config)
    pretrain(model, train, epochs, build_optimizer(optimizer_config), optimizer_config, seed=seed)
    return evaluate(model, validation).loss


def _transfer_split(
    seed: int, days: int
) -> Tuple[Dict[str, List[SamplePair]], List[SamplePair], List[SamplePair]]:
    """
    Auxiliary pre-training pools plus the target city's fine-tune and validation pairs.

    Cities A and B are the auxiliary cities, available in both years. City C is the
    target: fine-tuned on its pre-pandemic year and validated on its pandemic year.
    """
    auxiliary = [city_pair(seed * 100 + offset, city, days) for offset, city in ((1, "a"), (2, "b"))]
    target_pre, target_covid = city_pair(seed * 100 + 3, "c", days)
    pools = {
        "2019": [pre for pre, _ in auxiliary],
        "2020": [covid for _, covid in auxiliary],
    }
    pools["both"] = pools["2019"] + pools["2020"]
    samples = {name: _samples(movies) for name, movies in pools.items()}
    return samples, _samples([target_pre]), _samples([target_covid])


def _pretrain_and_finetune(
    config: ModelConfig,
    optimizer_config: OptimizerConfig,
    pool: Optional[List[SamplePair]],
    finetune_set: List[SamplePair],
    validation: List[SamplePair],
    pretrain_epochs: int,
    finetune_epochs: int,
    seed: int,
) -> float:
    model = DualUNet(config)
    if pool is None:
        checkpoint = Checkpoint.from_model(model, phase="initialized")
    else:
        checkpoint = pretrain(
            model, pool, pretrain_epochs, build_optimizer(optimizer_config), optimizer_config, seed=seed
        )
    tuned = finetune(checkpoint, finetune_set, finetune_epochs, optimizer_config, seed=seed)
    return evaluate(tuned.build_model(), validation).loss


def compare_skip_modes(
    seeds: Sequence[int] = (0, 1, 2),
    epochs: int = 10,
    days: int = 2,
    modes: Sequence[str] = ("addition", "temporal_concat", "hidden_cell"),
    optimizer_config: Optional[OptimizerConfig] = None,
) -> ExperimentResult:
    """
    Train one model per skip mode on a city's pre-pandemic year and validate on the
    same city's pandemic year (temporal domain shift). Every mode of a seed starts from
    the same initial weights and sees the same batches.
    """
    optimizer_config = optimizer_config or SKIP_MODE_OPTIMIZER
    result = ExperimentResult(name="skip_modes", seeds=list(seeds))
    for seed in seeds:
        pre, covid = city_pair(seed, "shift", days)
        train, validation = _samples([pre]), _samples([covid])
        for mode in modes:
            loss = _train_and_score(
                benchmark_config(seed, skip_mode=mode), optimizer_config, train, validation, epochs, seed
            )
            result.losses.setdefault(mode, []).append(loss)
            logger.info(f"[skip_modes] seed {seed} {mode}: validation loss {loss:.6f}")
    return result


def compare_optimizers(
    seeds: Sequence[int] = (0, 1, 2),
    epochs: int = 3,
    days: int = 1,
    optimizers: Optional[Dict[str, OptimizerConfig]] = None,
) -> ExperimentResult:
    optimizers = optimizers or {
        "sgd": OptimizerConfig(name="sgd", lr=0.05, momentum=0.9),
        "adam": OptimizerConfig(name="adam"),
        "adamw": OptimizerConfig(name="adamw"),
        "lamb": OptimizerConfig(name="lamb"),
    }
    result = ExperimentResult(name="optimizers", seeds=list(seeds))
    for seed in seeds:
        pre, covid = city_pair(seed, "shift", days)
        train, validation = _samples([pre]), _samples([covid])
        for name, optimizer_config in optimizers.items():
            loss = _train_and_score(benchmark_config(seed), optimizer_config, train, validation, epochs, seed)
            result.losses.setdefault(name, []).append(loss)
            logger.info(f"[optimizers] seed {seed} {name}: validation loss {loss:.6f}")
    return result


def compare_pretraining(
    seeds: Sequence[int] = (0, 1, 2),
    pretrain_epochs: int = 2,
    finetune_epochs: int = 1,
    days: int = 1,
    scenarios: Sequence[str] = PRETRAIN_SCENARIOS,
) -> ExperimentResult:
    """
    Pre-training scenario matrix on synthetic cities.

    Scenarios pre-train on no auxiliary data, on the 2019 movies, on the 2020 movies or
    on both, then fine-tune the target city with E_phi frozen.
    """
    result = ExperimentResult(name="pretraining", seeds=list(seeds))
    optimizer_config = OptimizerConfig()
    for seed in seeds:
        pools, finetune_set, validation = _transfer_split(seed, days)
        for scenario in scenarios:
            loss = _pretrain_and_finetune(
                benchmark_config(seed),
                optimizer_config,
                None if scenario == "none" else pools[scenario],
                finetune_set,
                validation,
                pretrain_epochs,
                finetune_epochs,
                seed,
            )
            result.losses.setdefault(scenario, []).append(loss)
            logger.info(f"[pretraining] seed {seed} {scenario}: validation loss {loss:.6f}")
    return result


def compare_encoders(
    seeds: Sequence[int] = (0, 1, 2),
    pretrain_epochs: int = 2,
    finetune_epochs: int = 1,
    days: int = 1,
) -> ExperimentResult:
    """
    Single against double encoder under the transfer protocol: pre-train on both years
    of the auxiliary cities, then fine-tune the target city. The double encoder keeps
    E_phi frozen while fine-tuning; the single encoder has no E_phi to freeze.
    """
    result = ExperimentResult(name="encoders", seeds=list(seeds))
    optimizer_config = OptimizerConfig()
    for seed in seeds:
        pools, finetune_set, validation = _transfer_split(seed, days)
        for arm, dual in (("single", False), ("double", True)):
            loss = _pretrain_and_finetune(
                benchmark_config(seed, dual_encoder=dual),
                optimizer_config,
                pools["both"],
                finetune_set,
                validation,
                pretrain_epochs,
                finetune_epochs,
                seed,
            )
            result.losses.setdefault(arm, []).append(loss)
            logger.info(f"[encoders] seed {seed} {arm}: validation loss {loss:.6f}")
    return result


def compare_dropout(
    seeds: Sequence[int] = (0, 1, 2),
    epochs: int = 3,
    days: int = 1,
    arms: Optional[Dict[str, Dict]] = None,
) -> ExperimentResult:
    """
    Spatial dropout and 1x1 3D conv head ablation: the core head with and without
    dropout, and the extended variant that has no head at all.
    """
    arms = arms or DROPOUT_ARMS
    result = ExperimentResult(name="dropout", seeds=list(seeds))
    for seed in seeds:
        pre, covid = city_pair(seed, "shift", days)
        train, validation = _samples([pre]), _samples([covid])
        for arm, overrides in arms.items():
            loss = _train_and_score(
                benchmark_config(seed, **overrides), OptimizerConfig(), train, validation, epochs, seed
            )
            result.losses.setdefault(arm, []).append(loss)
            logger.info(f"[dropout] seed {seed} {arm}: validation loss {loss:.6f}")
    return result


EXPERIMENTS = {
    "skip_modes": compare_skip_modes,
    "optimizers": compare_optimizers,
    "pretraining": compare_pretraining,
    "encoders": compare_encoders,
    "dropout": compare_dropout,
}


def write_experiment(result: ExperimentResult, path: Union[str, Path]) -> Path:
    """Write one row per arm and seed (arm, seed, val_loss) as CSV."""
    path = Path(path)
    rows = [
        {"arm": arm, "seed": seed, "val_loss": loss}
        for arm, losses in result.losses.items()
        for seed, loss in zip(result.seeds, losses)
    ]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows, columns=["arm", "seed", "val_loss"]).to_csv(path, index=False)
    except OSError as e:
        raise IoError(f"Cannot write experiment results: {e.strerror}", path=str(path))
    logger.info(f"Wrote {len(rows)} {result.name} runs to {path}")
    return path
