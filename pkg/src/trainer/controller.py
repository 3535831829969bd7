import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from tqdm import tqdm

from src.data_pipeline import BinaryMask, SamplePair, apply_mask, denormalize, score
from src.io_schemas.config_schemas import OptimizerConfig
from src.io_schemas.output_schemas import EpochRecord, EvaluationResult, RunReport
from src.model import Checkpoint, DualUNet
from src.optim import Optimizer, build_optimizer
from src.tensor_core.ops import mse_loss
from src.tensor_core.tensor import Tensor, backward, no_grad
from src.utils.constants import DEFAULT_BATCH_SIZE, FINETUNE_EPOCHS
from src.utils.custom_exceptions import ConfigError, DivergenceError, ShapeError


Predictor = Union[DualUNet, Sequence[DualUNet], Callable[[Tensor], Tensor]]


def stack_batch(samples: Sequence[SamplePair]) -> Tuple[Tensor, Tensor]:
    inputs = np.stack([sample.input.data for sample in samples])
    targets = np.stack([sample.target.data for sample in samples])
    return Tensor(inputs), Tensor(targets)


def resume(checkpoint: Checkpoint, optimizer_config: OptimizerConfig) -> Tuple[DualUNet, Optimizer]:
    """
    Rebuild the model and an optimizer from a checkpoint. Optimizer slots carry over
    when the checkpoint was written by the same kind of optimizer.
    """
    model = checkpoint.build_model()
    optimizer = build_optimizer(optimizer_config)
    stored = checkpoint.metadata.optimizer
    if checkpoint.optimizer_state and stored is not None and stored.name == optimizer_config.name:
        optimizer.restore(checkpoint.optimizer_state, model.named_parameters())
    elif checkpoint.optimizer_state:
        logger.info(
            f"Starting a fresh {optimizer_config.name} optimizer; the checkpoint state belongs to {stored.name if stored else 'an unknown optimizer'}"
        )
    return model, optimizer


def train_epochs(
    model: DualUNet,
    optimizer: Optimizer,
    samples: Sequence[SamplePair],
    epochs: int,
    phase: str,
    checkpoint_phase: str,
    batch_size: int = DEFAULT_BATCH_SIZE,
    seed: int = 0,
    start_epoch: int = 0,
    validation: Optional[Sequence[SamplePair]] = None,
    optimizer_config: Optional[OptimizerConfig] = None,
    report: Optional[RunReport] = None,
    target: Optional[str] = None,
) -> Checkpoint:
    """
    Shared mini-batch loop of every training phase.

    Epoch `e` (counted globally across phases) shuffles with `default_rng([seed, e])`
    and draws dropout masks from `default_rng([seed, e, 1])`, so a run split into resumed
    halves matches the unsplit run. Only the model's trainable (unfrozen) parameters
    are stepped.

    Raises
    ------
    ConfigError
        If `samples` is empty.
    DivergenceError
        If a batch loss is not finite. The error carries the checkpoint taken at the
        start of the failing epoch.
    """
    if not samples:
        raise ConfigError(f"Phase '{phase}' has no training samples.")
    report = report if report is not None else RunReport()
    metadata = {"optimizer": optimizer_config, "target": target}

    for epoch in range(start_epoch + 1, start_epoch + epochs + 1):
        epoch_start = Checkpoint.from_model(
            model, optimizer.serialize(), phase=checkpoint_phase, epoch=epoch - 1, **metadata
        )
        started = time.perf_counter()
        order = np.random.default_rng([seed, epoch]).permutation(len(samples))
        dropout_rng = np.random.default_rng([seed, epoch, 1])

        losses = []
        batches = range(0, len(order), batch_size)
        for offset in tqdm(batches, desc=f"{phase} epoch {epoch}", leave=False):
            inputs, targets = stack_batch([samples[i] for i in order[offset : offset + batch_size]])
            model.zero_grad()
            targets = Tensor(targets.data, dtype=model.config.dtype)
            loss = mse_loss(model.forward(inputs, mode="train", rng=dropout_rng), targets)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(phase, epoch, value, last_checkpoint=epoch_start)
            backward(loss)
            optimizer.step(model.trainable_parameters())
            losses.append(value)
        model.zero_grad()

        val_loss = evaluate(model, validation).loss if validation else None
        record = EpochRecord(
            epoch=epoch,
            phase=phase,
            train_loss=float(np.mean(losses)),
            val_loss=val_loss,
            seconds=time.perf_counter() - started,
        )
        report.append(record)
        logger.info(
            f"[{phase}] epoch {epoch}: train {record.train_loss:.6f}"
            + (f", val {val_loss:.6f}" if val_loss is not None else "")
        )

    report.parameters = model.count_parameters()
    report.frozen_groups = sorted(model.frozen)
    return Checkpoint.from_model(
        model, optimizer.serialize(), phase=checkpoint_phase, epoch=start_epoch + epochs, **metadata
    )


def pretrain(
    model: DualUNet,
    dataset: Sequence[SamplePair],
    epochs: int,
    optimizer: Optimizer,
    optimizer_config: Optional[OptimizerConfig] = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
    seed: int = 0,
    start_epoch: int = 0,
    validation: Optional[Sequence[SamplePair]] = None,
    report: Optional[RunReport] = None,
    phase: str = "pretrain",
) -> Checkpoint:
    """
    Warm up a fresh or resumed model on the auxiliary cities.

    Parameters
    ----------
    model : DualUNet
        Model to train in place.
    dataset : sequence of SamplePair
        Training pairs; must not be empty.
    epochs : int
        Number of epochs; 0 returns a checkpoint of the unchanged model.
    optimizer : Optimizer
        Optimizer whose state continues across phases.
    optimizer_config : OptimizerConfig, optional
        Recorded in the checkpoint so a later phase can resume the same optimizer.
    batch_size, seed, start_epoch : int
        Mini-batch size, shuffling seed and the number of epochs already completed.
    validation : sequence of SamplePair, optional
        Scored at the end of every epoch.
    report : RunReport, optional
        Receives one record per epoch.

    Returns
    -------
    Checkpoint
        Checkpoint in the 'pretrained' phase.
    """
    logger.info(f"Pre-training on {len(dataset)} samples for {epochs} epochs")
    return train_epochs(
        model,
        optimizer,
        dataset,
        epochs,
        phase=phase,
        checkpoint_phase="pretrained",
        batch_size=batch_size,
        seed=seed,
        start_epoch=start_epoch,
        validation=validation,
        optimizer_config=optimizer_config,
        report=report,
    )


def finetune(
    checkpoint: Checkpoint,
    dataset: Sequence[SamplePair],
    epochs: int = FINETUNE_EPOCHS,
    optimizer_config: Optional[OptimizerConfig] = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
    seed: int = 0,
    validation: Optional[Sequence[SamplePair]] = None,
    report: Optional[RunReport] = None,
    target: Optional[str] = None,
    phase: str = "finetune",
) -> Checkpoint:
    """
    Adapt a pre-trained checkpoint to one target city with E_phi frozen.

    E_phi is frozen before the first step, so its parameters leave the phase
    bit-identical. Fine-tuning an already fine-tuned (or never trained) checkpoint is
    allowed and logged as a warning.
    """
    if checkpoint.metadata.phase == "finetuned":
        logger.warning("Fine-tuning a checkpoint that is already fine-tuned")
    elif checkpoint.metadata.phase != "pretrained":
        logger.warning("Fine-tuning a checkpoint that was never pre-trained")

    optimizer_config = optimizer_config or checkpoint.metadata.optimizer or OptimizerConfig()
    model, optimizer = resume(checkpoint, optimizer_config)
    if "E_phi" in model.groups():
        model.freeze("E_phi")
    else:
        logger.warning("Model has no E_phi encoder; fine-tuning all parameters")

    logger.info(f"Fine-tuning{f' for {target}' if target else ''} on {len(dataset)} samples for {epochs} epochs")
    return train_epochs(
        model,
        optimizer,
        dataset,
        epochs,
        phase=phase,
        checkpoint_phase="finetuned",
        batch_size=batch_size,
        seed=seed,
        start_epoch=checkpoint.metadata.epoch,
        validation=validation,
        optimizer_config=optimizer_config,
        report=report,
        target=target,
    )


def clone_for_targets(checkpoint: Checkpoint, targets: Sequence[str]) -> List[Checkpoint]:
    """
    Independent deep copies of `checkpoint`, one per target city.

    Raises
    ------
    ConfigError
        If `targets` is empty.
    """
    if not targets:
        raise ConfigError("clone_for_targets needs at least one target.")
    if checkpoint.metadata.phase != "pretrained":
        logger.warning(f"Cloning a '{checkpoint.metadata.phase}' checkpoint for fine-tuning")
    return [checkpoint.clone() for _ in targets]


def ensemble_mean(outputs: Sequence[np.ndarray]) -> np.ndarray:
    """
    Elementwise mean of member outputs. Values are sorted along the member axis before
    summation, so the result does not depend on member order.

    Raises
    ------
    ShapeError
        If the outputs have different shapes.
    """
    shapes = {output.shape for output in outputs}
    if len(shapes) != 1:
        raise ShapeError(f"Ensemble members disagree on output shape: {sorted(shapes)}.")
    stacked = np.sort(np.stack(outputs), axis=0)
    return stacked.sum(axis=0) / len(outputs)


def _predict_members(models: Sequence[DualUNet], x: Tensor, jobs: int = 1) -> List[np.ndarray]:
    def run(model: DualUNet) -> np.ndarray:
        # no_grad is thread-local, so it is entered inside the worker
        with no_grad():
            return model.forward(x, mode="eval").data

    if jobs > 1 and len(models) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, models))
    return [run(model) for model in models]


def ensemble_forward(models: Sequence[DualUNet], x: Tensor, jobs: int = 1) -> Tensor:
    """Mean of the member predictions in normalized units (eval mode)."""
    if not models:
        raise ConfigError("An ensemble needs at least one model.")
    return Tensor(ensemble_mean(_predict_members(models, x, jobs)))


def ensemble_predict(
    models: Sequence[DualUNet],
    x: Tensor,
    mask: Optional[BinaryMask] = None,
    jobs: int = 1,
) -> Tensor:
    """
    Final uint8 prediction of an ensemble: member mean, then the optional mask, then
    denormalization.
    """
    prediction = ensemble_forward(models, x, jobs)
    if mask is not None:
        prediction = apply_mask(prediction, mask)
    return denormalize(prediction)


def _as_callable(predictor: Predictor) -> Callable[[Tensor], Tensor]:
    if isinstance(predictor, DualUNet):
        return lambda x: predictor.forward(x, mode="eval")
    if isinstance(predictor, (list, tuple)):
        return lambda x: ensemble_forward(predictor, x)
    return predictor


def evaluate(
    predictor: Predictor,
    dataset: Sequence[SamplePair],
    mask: Optional[BinaryMask] = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> EvaluationResult:
    """
    Score a model, an ensemble (list of models) or any callable on a dataset.

    Returns the mean squared error in normalized units and the raw-scale score
    (MSE of the denormalized uint8 predictions against the uint8 targets). With a mask,
    predictions are masked before both are computed.

    Raises
    ------
    ConfigError
        If the dataset is empty.
    """
    if not dataset:
        raise ConfigError("Cannot evaluate on an empty dataset.")
    predict = _as_callable(predictor)
    squared, raw_squared, count = 0.0, 0.0, 0
    with no_grad():
        for offset in range(0, len(dataset), batch_size):
            inputs, targets = stack_batch(dataset[offset : offset + batch_size])
            prediction = predict(inputs)
            if mask is not None:
                prediction = apply_mask(prediction, mask)
            if prediction.shape != targets.shape:
                raise ShapeError(
                    f"Prediction {prediction.shape} does not match targets {targets.shape}."
                )
            diff = prediction.data.astype(np.float64) - targets.data.astype(np.float64)
            squared += float(np.sum(diff * diff))
            raw_squared += score(denormalize(prediction), denormalize(targets)) * targets.size
            count += targets.size
    return EvaluationResult(loss=squared / count, score=raw_squared / count, samples=len(dataset))
