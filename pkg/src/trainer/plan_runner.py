from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import pandas as pd
from loguru import logger

from src.data_pipeline import SamplePair, TrafficMovie, extract_samples, read_movie
from src.io_schemas.config_schemas import PhaseConfig, SamplingConfig, TargetConfig, TrainPlan
from src.io_schemas.output_schemas import EvaluationResult, PlanOutcome, RunReport
from src.model import Checkpoint, DualUNet
from src.trainer.controller import clone_for_targets, evaluate, finetune, pretrain, resume
from src.utils.custom_exceptions import ConfigError, DivergenceError
from src.utils.input_validation import load_plan, resolve_globs


REPORT_COLUMNS = ["epoch", "phase", "train_loss", "val_loss", "seconds"]


class DatasetLoader:
    """Resolves plan globs to sample lists, reading every movie file at most once."""

    def __init__(self, base_dir: Path):
        self.base_dir = base_dir
        self._movies: Dict[Path, TrafficMovie] = {}

    def movies(self, patterns: Iterable[str]) -> List[TrafficMovie]:
        paths = resolve_globs(patterns, self.base_dir)
        for path in paths:
            if path not in self._movies:
                self._movies[path] = read_movie(path)
        return [self._movies[path] for path in paths]

    def samples(self, patterns: Sequence[str], sampling: SamplingConfig) -> List[SamplePair]:
        if not patterns:
            return []
        return list(
            extract_samples(
                self.movies(patterns),
                strategy=sampling.strategy,
                stride=sampling.stride,
                frame_mode=sampling.frame_mode,
            )
        )


def write_report(report: RunReport, path: Path) -> Path:
    """Write the per-epoch records as CSV (epoch, phase, train_loss, val_loss, seconds)."""
    frame = pd.DataFrame([record.model_dump() for record in report.records], columns=REPORT_COLUMNS)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} report rows to {path}")
    return path


def write_summary(
    plan: TrainPlan,
    report: RunReport,
    path: Path,
    evaluation: Optional[EvaluationResult] = None,
    ensemble: Sequence[str] = (),
) -> Path:
    lines = [f"plan: {plan.name}", f"seed: {plan.seed}", f"variant: {plan.model.variant}"]
    if report.parameters is not None:
        lines.append(
            f"parameters: {report.parameters.total} total, {report.parameters.trainable} "
            f"trainable, {report.parameters.frozen} frozen"
        )
    lines.append(f"frozen groups: {', '.join(report.frozen_groups) or 'none'}")
    for phase, loss in report.final_losses().items():
        lines.append(f"final train loss [{phase}]: {loss:.6f}")
    if ensemble:
        lines.append(f"ensemble: {', '.join(ensemble)}")
    if evaluation is not None:
        lines.append(f"validation loss: {evaluation.loss:.6f}")
        lines.append(f"validation score: {evaluation.score:.4f}")
        lines.append(f"validation samples: {evaluation.samples}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _with_frozen(checkpoint: Checkpoint, groups: Sequence[str]) -> Checkpoint:
    if not groups:
        return checkpoint
    model = checkpoint.build_model()
    for group in groups:
        model.freeze(group)
    frozen = checkpoint.clone()
    frozen.metadata.frozen_groups = sorted(model.frozen)
    return frozen


class PlanRunner:
    """
    Executes the phases of a TrainPlan in order, carrying model and optimizer state
    from one phase to the next.

    A finetune phase with targets clones the incoming checkpoint once per target and
    fine-tunes the clones independently (in parallel with `jobs > 1`); their mean is the
    final predictor. Checkpoints land in `<output_dir>/checkpoints/`, the per-epoch report
    in `report.csv` and a plain-text summary in `summary.txt`.
    """

    def __init__(self, plan: TrainPlan, base_dir: Path, output_dir: Optional[Path] = None, jobs: int = 1):
        if jobs < 1:
            raise ConfigError(f"jobs must be at least 1, got {jobs}.")
        self.plan = plan
        self.base_dir = base_dir
        self.output_dir = output_dir or base_dir / (plan.output_dir or f"runs/{plan.name}")
        self.jobs = jobs
        self.data = DatasetLoader(base_dir)
        self.report = RunReport()
        self.checkpoints: Dict[str, str] = {}

    @property
    def checkpoint_dir(self) -> Path:
        return self.output_dir / "checkpoints"

    def initial_checkpoint(self) -> Checkpoint:
        config = self.plan.model
        if "seed" not in config.model_fields_set:
            config = config.model_copy(update={"seed": self.plan.seed})
        return Checkpoint.from_model(DualUNet(config), phase="initialized")

    def _save(self, name: str, checkpoint: Checkpoint) -> None:
        path = checkpoint.save(self.checkpoint_dir / f"{name}.gckp")
        self.checkpoints[name] = str(path)

    def _validation(self, patterns: Sequence[str], sampling: SamplingConfig) -> List[SamplePair]:
        return self.data.samples(patterns, sampling)

    def run_phase(self, phase: PhaseConfig, checkpoint: Checkpoint) -> Checkpoint:
        samples = self.data.samples(phase.datasets, phase.sampling)
        validation = self._validation(self.plan.validation, phase.sampling)
        checkpoint = _with_frozen(checkpoint, phase.freeze)
        common = {
            "batch_size": phase.batch_size,
            "seed": self.plan.seed,
            "validation": validation,
            "report": self.report,
            "phase": phase.name,
        }
        if phase.kind == "pretrain":
            model, optimizer = resume(checkpoint, phase.optimizer)
            return pretrain(
                model,
                samples,
                phase.epochs,
                optimizer,
                optimizer_config=phase.optimizer,
                start_epoch=checkpoint.metadata.epoch,
                **common,
            )
        return finetune(checkpoint, samples, phase.epochs, phase.optimizer, **common)

    def _finetune_target(
        self, phase: PhaseConfig, target: TargetConfig, checkpoint: Checkpoint
    ) -> Tuple[Checkpoint, RunReport]:
        report = RunReport()
        samples = self.data.samples(target.datasets, phase.sampling)
        validation = self._validation(target.validation or self.plan.validation, phase.sampling)
        tuned = finetune(
            _with_frozen(checkpoint, phase.freeze),
            samples,
            phase.epochs,
            phase.optimizer,
            batch_size=phase.batch_size,
            seed=self.plan.seed,
            validation=validation,
            report=report,
            target=target.name,
            phase=f"{phase.name}/{target.name}",
        )
        return tuned, report

    def run_targets(self, phase: PhaseConfig, checkpoint: Checkpoint) -> List[Checkpoint]:
        clones = clone_for_targets(checkpoint, [target.name for target in phase.targets])
        jobs = list(zip(phase.targets, clones))
        # Warm the movie cache before the workers start
        for target in phase.targets:
            self.data.movies(list(target.datasets) + list(target.validation or self.plan.validation))
        if self.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                results = list(pool.map(lambda job: self._finetune_target(phase, *job), jobs))
        else:
            results = [self._finetune_target(phase, *job) for job in jobs]

        tuned = []
        for target, (target_checkpoint, report) in zip(phase.targets, results):
            self.report.extend(report)
            self._save(target.name, target_checkpoint)
            tuned.append(target_checkpoint)
        return tuned

    def run(self) -> PlanOutcome:
        """
        Raises
        ------
        ConfigError
            If a dataset glob matches nothing or a phase is inconsistent with the model.
        DivergenceError
            If a loss turns non-finite. The checkpoint from the start of the failing
            epoch is saved as `last_good.gckp` and the partial report is still written.
        """
        logger.info(f"Running plan '{self.plan.name}' into {self.output_dir}")
        checkpoint = self.initial_checkpoint()
        ensemble: List[Checkpoint] = []
        try:
            for phase in self.plan.phases:
                if phase.targets:
                    ensemble = self.run_targets(phase, checkpoint)
                else:
                    checkpoint = self.run_phase(phase, checkpoint)
                    self._save(phase.name, checkpoint)
        except DivergenceError as e:
            if e.last_checkpoint is not None:
                self._save("last_good", e.last_checkpoint)
            write_report(self.report, self.output_dir / "report.csv")
            raise

        members = ensemble or [checkpoint]
        member_names = [member.metadata.target or self.plan.phases[-1].name for member in members]
        evaluation = None
        if self.plan.validation:
            validation = self._validation(self.plan.validation, self.plan.phases[-1].sampling)
            evaluation = evaluate([member.build_model() for member in members], validation)
            logger.info(f"Validation loss {evaluation.loss:.6f}, score {evaluation.score:.4f}")

        write_report(self.report, self.output_dir / "report.csv")
        write_summary(self.plan, self.report, self.output_dir / "summary.txt", evaluation, member_names)
        return PlanOutcome(
            report=self.report,
            output_dir=str(self.output_dir),
            checkpoints=self.checkpoints,
            ensemble=[self.checkpoints[name] for name in member_names],
            evaluation=evaluation,
        )


def run_plan(
    plan_path: Union[str, Path],
    output_dir: Optional[Union[str, Path]] = None,
    jobs: int = 1,
    overrides: Iterable[str] = (),
) -> PlanOutcome:
    """Load a plan file and run it; dataset globs resolve relative to the plan's directory."""
    plan_path = Path(plan_path)
    plan = load_plan(plan_path, overrides)
    return PlanRunner(
        plan,
        base_dir=plan_path.resolve().parent,
        output_dir=Path(output_dir) if output_dir is not None else None,
        jobs=jobs,
    ).run()
