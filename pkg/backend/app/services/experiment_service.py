"""
Experiment service: testbed dispatch, seed fan-out and run outputs.
"""
import csv
import time
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import wilcoxon

from app.core.config import settings
from app.core.exceptions import ConfigError
from app.core.logging import get_logger
from app.core.metrics import RUN_DURATION, RUNS_TOTAL
from app.core.parallel import fan_out
from app.models.dataset import Dataset
from app.models.estimator import BaselineKind, OracleArm, Testbed
from app.models.sample import SeedTrace
from app.schemas.experiment import (
    SWEEP_AXES,
    Arm,
    ArmComparison,
    ExperimentConfig,
    RunResult,
    RunSummary,
    SweepRow,
    split_token,
)
from app.schemas.tabular import SymmetricBanditSpec
from app.services.data_service import DataService
from app.services.multictx_service import MultiContextService
from app.services.neural_service import ClassificationRun, NeuralService
from app.services.tabular_service import TabularService

logger = get_logger(__name__)

TRACE_COLUMNS = {
    Testbed.BANDIT: ("seed", "step", "error", "misalignment"),
    Testbed.MULTICTX: ("seed", "step", "mean_error", "misalignment_ce"),
    Testbed.CLASSIFY: ("seed", "step", "train_error", "val_error", "miss_pg_oracle", "miss_ce_oracle"),
}
MISALIGNMENT_COLUMN = {
    Testbed.BANDIT: "misalignment",
    Testbed.MULTICTX: "misalignment_ce",
    Testbed.CLASSIFY: "miss_ce_oracle",
}
ERROR_COLUMN = {Testbed.BANDIT: "error", Testbed.MULTICTX: "mean_error", Testbed.CLASSIFY: "train_error"}
TAIL_STEPS = 500
SWEEP_HEADER = ("axis", "value", "arm", "mean_final_error", "stderr_final_error", "seeds")


@dataclass
class ArmRun:
    """Traces and summaries of one arm across seeds."""

    name: str
    traces: List[SeedTrace]
    summaries: List[RunSummary] = field(default_factory=list)
    family: str = ""
    cell: str = ""

    def final_errors(self) -> np.ndarray:
        return np.array([s.final_error for s in self.summaries])


def _classify_seed(
    seed_index: int,
    config: ExperimentConfig,
    dataset: Dataset,
    arm: Arm,
    baseline: BaselineKind,
    samples: int,
) -> ClassificationRun:
    return NeuralService.run_classification_experiment(config, dataset, arm, baseline, samples, seed_index)


def _format(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


class ExperimentService:
    """Experiment service class."""

    @staticmethod
    def arm_label(token: str, arm: Arm, baseline: Optional[BaselineKind] = None, samples: Optional[int] = None) -> str:
        if isinstance(arm, OracleArm) or baseline is None:
            return token.replace(":", "")
        return f"{token.replace(':', '')}-{baseline.value}-s{samples}"

    @staticmethod
    def _summarize(config: ExperimentConfig, name: str, trace: SeedTrace, **extra) -> RunSummary:
        tail = trace.column(MISALIGNMENT_COLUMN[config.testbed])[-TAIL_STEPS:]
        values = dict(
            testbed=config.testbed,
            label=config.label,
            arm=name,
            seed=trace.seed,
            final_error=trace.final(ERROR_COLUMN[config.testbed]),
            tail_misalignment=float(tail.mean()),
            config=config.model_dump(mode="json"),
        )
        values.update(extra)
        return RunSummary(**values)

    # Testbeds

    @staticmethod
    def run_bandit(config: ExperimentConfig) -> List[ArmRun]:
        spec = SymmetricBanditSpec(
            num_actions=config.resolved_actions,
            error=config.resolved_error,
            baseline=config.bandit_baseline,
            eta=config.eta,
        )
        runs = []
        for token, kind in config.arm_kinds():
            traces = TabularService.run_symmetric_bandit(
                spec, kind, config.batch, config.alpha, config.resolved_steps,
                config.seeds, base_seed=config.base_seed, workers=config.workers,
            )
            name = ExperimentService.arm_label(token, kind)
            runs.append(ArmRun(
                name,
                traces,
                [ExperimentService._summarize(config, name, t) for t in traces],
                family=split_token(token)[0],
            ))
        return runs

    @staticmethod
    def run_multictx(config: ExperimentConfig) -> List[ArmRun]:
        runs = []
        for token, kind in config.arm_kinds():
            traces = MultiContextService.run_multictx_descent(
                config.contexts, config.resolved_actions, config.eta, config.alpha,
                config.resolved_steps, config.seeds, kind,
                base_seed=config.base_seed, workers=config.workers,
            )
            name = ExperimentService.arm_label(token, kind)
            runs.append(ArmRun(
                name,
                traces,
                [ExperimentService._summarize(config, name, t) for t in traces],
                family=split_token(token)[0],
            ))
        return runs

    @staticmethod
    def load_dataset(config: ExperimentConfig) -> Dataset:
        return DataService.resolve(
            config.dataset,
            config.base_seed,
            num_classes=config.synthetic_classes,
            dim=config.synthetic_dim,
            per_class=config.synthetic_per_class,
            spread=config.synthetic_spread,
            mnist_dir=settings.MNIST_DIR,
        )

    @staticmethod
    def run_classify(config: ExperimentConfig, dataset: Optional[Dataset] = None) -> List[ArmRun]:
        dataset = dataset if dataset is not None else ExperimentService.load_dataset(config)
        cells: List[Tuple[str, Arm, BaselineKind, int]] = []
        for token, kind in config.arm_kinds():
            if isinstance(kind, OracleArm):
                cells.append((token, kind, BaselineKind.ZERO, 1))
                continue
            for baseline in config.baselines:
                for samples in config.samples_per_input:
                    cells.append((token, kind, baseline, samples))
        runs = []
        for token, kind, baseline, samples in cells:
            name = ExperimentService.arm_label(
                token, kind, None if isinstance(kind, OracleArm) else baseline, samples
            )
            job = partial(_classify_seed, config=config, dataset=dataset, arm=kind, baseline=baseline, samples=samples)
            results: List[ClassificationRun] = fan_out(job, range(config.seeds), config.workers)
            summaries = [
                ExperimentService._summarize(
                    config,
                    name,
                    result.trace,
                    final_error=result.final_train_error,
                    final_val_error=result.final_val_error,
                    label_dependent=result.label_dependent,
                )
                for result in results
            ]
            cell = "" if isinstance(kind, OracleArm) else f"{baseline.value}-s{samples}"
            runs.append(ArmRun(name, [r.trace for r in results], summaries, family=split_token(token)[0], cell=cell))
        return runs

    @staticmethod
    def run_arms(config: ExperimentConfig) -> List[ArmRun]:
        if config.testbed is Testbed.BANDIT:
            return ExperimentService.run_bandit(config)
        if config.testbed is Testbed.MULTICTX:
            return ExperimentService.run_multictx(config)
        if config.testbed is Testbed.CLASSIFY:
            return ExperimentService.run_classify(config)
        raise ConfigError(f"'{config.testbed.value}' is not a run testbed", field="testbed")

    # Comparisons

    @staticmethod
    def one_sided_p(better: np.ndarray, worse: np.ndarray) -> Optional[float]:
        """Paired Wilcoxon signed-rank p-value for better < worse."""
        diffs = better - worse
        if diffs.size < 2 or np.all(diffs == 0):
            return None
        return float(wilcoxon(better, worse, alternative="less").pvalue)

    @staticmethod
    def compare(config: ExperimentConfig, runs: Sequence[ArmRun]) -> List[ArmComparison]:
        """Every non-PG arm against the PG arm sharing its baseline and S."""
        references: Dict[str, ArmRun] = {run.cell: run for run in runs if run.family == "pg"}
        ce = next((run for run in runs if run.family == OracleArm.CE.value), None)
        comparisons = []
        for run in runs:
            if run.family in ("pg", OracleArm.CE.value, OracleArm.PG_ORACLE.value):
                continue
            reference = references.get(run.cell)
            if reference is None:
                continue
            better, worse = run.final_errors(), reference.final_errors()
            gap_closed = None
            if ce is not None and config.testbed is Testbed.CLASSIFY:
                span = worse.mean() - ce.final_errors().mean()
                gap_closed = float((worse.mean() - better.mean()) / span) if span > 0 else None
            comparisons.append(
                ArmComparison(
                    testbed=config.testbed,
                    label=config.label,
                    better=run.name,
                    worse=reference.name,
                    mean_better=float(better.mean()),
                    mean_worse=float(worse.mean()),
                    p_value=ExperimentService.one_sided_p(better, worse),
                    gap_closed=gap_closed,
                )
            )
        return comparisons

    # Outputs

    @staticmethod
    def run_directory(config: ExperimentConfig) -> Path:
        return Path(config.output_dir) / config.testbed.value / config.label

    @staticmethod
    def write_trace_csv(path: Path, header: Sequence[str], traces: Sequence[SeedTrace]) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for trace in traces:
                for row in trace.rows():
                    writer.writerow([_format(v) for v in row])

    @staticmethod
    def write_summaries(path: Path, summaries: Sequence[RunSummary], comparisons: Sequence[ArmComparison]) -> None:
        with open(path, "w") as f:
            for record in [*summaries, *comparisons]:
                f.write(record.model_dump_json() + "\n")

    @staticmethod
    def cmd_run(config: ExperimentConfig) -> RunResult:
        """Run every arm over all seeds and write config.echo, summary.jsonl and per-arm trace.csv."""
        started = time.perf_counter()
        logger.info("run.started", testbed=config.testbed.value, label=config.label, seeds=config.seeds)
        runs = ExperimentService.run_arms(config)
        comparisons = ExperimentService.compare(config, runs)

        out_dir = ExperimentService.run_directory(config)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.echo").write_text(config.to_echo())
        summaries = [s for run in runs for s in run.summaries]
        ExperimentService.write_summaries(out_dir / "summary.jsonl", summaries, comparisons)
        for run in runs:
            ExperimentService.write_trace_csv(out_dir / run.name / "trace.csv", TRACE_COLUMNS[config.testbed], run.traces)

        elapsed = time.perf_counter() - started
        RUNS_TOTAL.labels(testbed=config.testbed.value).inc()
        RUN_DURATION.observe(elapsed)
        logger.info("run.finished", testbed=config.testbed.value, label=config.label, output=str(out_dir),
                    elapsed=round(elapsed, 3))
        return RunResult(output_dir=str(out_dir), summaries=summaries, comparisons=comparisons)

    @staticmethod
    def cmd_sweep(
        config: ExperimentConfig, axis: Optional[str] = None, values: Optional[Sequence[float]] = None
    ) -> Tuple[Path, List[SweepRow]]:
        """One row per (value, arm) with the mean and standard error of the final error."""
        axis = axis or config.sweep_axis
        values = list(values) if values is not None else list(config.sweep_values)
        if axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis '{axis}'", field="axis")
        if not values:
            raise ConfigError("empty value list", field="values")
        if config.sweep_target not in TRACE_COLUMNS:
            raise ConfigError("sweeps run bandit, multictx or classify", field="sweep_target")
        cast = SWEEP_AXES[axis]
        rows: List[SweepRow] = []
        for value in values:
            setting = [cast(value)] if axis == "samples_per_input" else cast(value)
            cell = config.with_overrides(testbed=config.sweep_target, **{axis: setting})
            for run in ExperimentService.run_arms(cell):
                errors = run.final_errors()
                stderr = float(errors.std(ddof=1) / np.sqrt(errors.size)) if errors.size > 1 else 0.0
                rows.append(
                    SweepRow(
                        axis=axis,
                        value=float(value),
                        arm=run.name,
                        mean_final_error=float(errors.mean()),
                        stderr_final_error=stderr,
                        seeds=int(errors.size),
                    )
                )
            logger.info("sweep.cell", axis=axis, value=value, arms=len(rows))
        out_dir = Path(config.output_dir) / Testbed.SWEEP.value / config.label
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.echo").write_text(config.to_echo())
        path = out_dir / "sweep.csv"
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(SWEEP_HEADER)
            for row in rows:
                writer.writerow([_format(getattr(row, name)) for name in SWEEP_HEADER])
        RUNS_TOTAL.labels(testbed=Testbed.SWEEP.value).inc()
        return path, rows
