"""Configuration-driven experiment runs with durable, auditable outputs.

A run is described by one flat config (JSON on disk, dataclass in memory),
executes the full mask -> train -> impute -> score pipeline, and persists
two artifacts into its own directory under ``out_dir``:

    results.json   scores, config echo, run id, version, timing
    losses.csv     per-epoch training record of the first fold run

Artifact files are written to a temp name in the destination directory and
renamed into place, so an interrupted run never leaves a partial file.
Reruns of an identical config produce identical results up to the two
wall-clock fields (``timestamp`` and ``wall_seconds``).
"""

import contextlib
import csv
import dataclasses
import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .augment import MisaConfig
from .dataio import load_csv
from .errors import ConfigError
from .metrics import ScoreReport, cross_validated_run
from .training import LossCurve, TrainPlan

MODEL_KINDS = ("dae", "gain")
MECHANISMS = ("mcar", "mar", "mnar")
# Fields excluded when comparing results files for determinism.
VOLATILE_KEYS = ("timestamp", "wall_seconds")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one imputation experiment depends on, in one flat record."""

    dataset_path: str
    schema_path: str
    model: str = "dae"
    mechanism: str = "mcar"
    rate: float = 0.5
    observed_fraction: float = 0.3
    misa: bool = False
    alpha: float | str | None = None
    repeats: int = 3
    folds: int = 5
    seed: int = 0
    out_dir: str = "results"
    epochs: int | None = None
    batch_size: int = 64
    lr: float = 1e-3

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, "
                              f"got {self.model!r}")
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"mechanism must be one of {MECHANISMS}, "
                              f"got {self.mechanism!r}")
        if not 0.0 < self.rate < 1.0:
            raise ConfigError(f"rate must be in (0, 1), got {self.rate}")
        if not 0.0 < self.observed_fraction < 1.0:
            raise ConfigError("observed_fraction must be in (0, 1), "
                              f"got {self.observed_fraction}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if isinstance(self.alpha, str):
            if self.alpha != "auto":
                raise ConfigError(f"alpha must be a number, 'auto', or null; "
                                  f"got {self.alpha!r}")
        elif self.alpha is not None and self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - names)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        try:
            return cls(**raw)
        except TypeError as err:
            raise ConfigError(str(err)) from err

    def to_json(self, path) -> None:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        Path(path).write_text(text)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(raw)

    def run_id(self) -> str:
        """Content hash of the experiment identity (output location aside)."""
        ident = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        canon = json.dumps(ident, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def misa_config(self) -> MisaConfig:
        return MisaConfig(enabled=self.misa, alpha=self.alpha)

    def train_plan(self) -> TrainPlan:
        return TrainPlan(epochs=self.epochs, batch_size=self.batch_size,
                         lr=self.lr)


@dataclass(frozen=True)
class ExperimentResult:
    """A finished run: scores plus the provenance needed to reproduce it."""

    config: ExperimentConfig
    report: ScoreReport
    run_id: str
    version: str
    wall_seconds: float
    results_path: str
    losses_path: str


def _stage(name, fn, *args, **kwargs):
    """Run one pipeline stage; an escaping error gets the stage name."""
    try:
        return fn(*args, **kwargs)
    except Exception as err:
        raise type(err)(f"{name}: {err}") from err


def _atomic_write(path, write_fn) -> None:
    # Temp file shares the destination directory so the final rename
    # cannot cross filesystems.
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".",
                               prefix=".tmp-")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def run(config: ExperimentConfig) -> ExperimentResult:
    """Execute one experiment end to end and persist its artifacts."""
    for path in (config.dataset_path, config.schema_path):
        if not os.path.exists(path):
            raise ConfigError(f"input file does not exist: {path}")

    started = time.monotonic()
    dataset = _stage("load-data", load_csv,
                     config.dataset_path, config.schema_path)
    report = _stage("experiment", cross_validated_run,
                    dataset, config.mechanism, config.rate, config.model,
                    config.misa_config(), repeats=config.repeats,
                    master_seed=config.seed, folds=config.folds,
                    observed_fraction=config.observed_fraction,
                    plan=config.train_plan())
    wall = round(time.monotonic() - started, 3)

    run_id = config.run_id()
    run_dir = os.path.join(config.out_dir, f"run-{run_id}")
    results_path = os.path.join(run_dir, "results.json")
    losses_path = os.path.join(run_dir, "losses.csv")
    curve = report.sample_curve or LossCurve(alpha=report.alpha)
    payload = {
        "run_id": run_id,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "wall_seconds": wall,
        "config": config.to_dict(),
        "report": report.to_dict(),
        "artifacts": {"losses": "losses.csv"},
    }

    def persist():
        os.makedirs(run_dir, exist_ok=True)
        written = []
        try:
            _atomic_write(losses_path, curve.save_csv)
            written.append(losses_path)
            text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
            _atomic_write(results_path,
                          lambda tmp: Path(tmp).write_text(text))
        except BaseException:
            # A results file must never appear without its companions.
            for done in written:
                with contextlib.suppress(OSError):
                    os.unlink(done)
            raise

    _stage("persist", persist)
    return ExperimentResult(config=config, report=report, run_id=run_id,
                            version=__version__, wall_seconds=wall,
                            results_path=results_path,
                            losses_path=losses_path)


def load_result(path) -> ExperimentResult:
    """Rehydrate a persisted results.json into an ExperimentResult."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read results {path}: {err}") from err
    try:
        config = ExperimentConfig.from_dict(raw["config"])
        report = ScoreReport.from_dict(raw["report"])
        run_id = raw["run_id"]
        version = raw["version"]
        wall = raw["wall_seconds"]
        losses_name = raw["artifacts"]["losses"]
    except KeyError as err:
        raise ConfigError(f"results {path} is missing field {err}") from err
    base = os.path.dirname(os.path.abspath(path))
    return ExperimentResult(config=config, report=report, run_id=run_id,
                            version=version, wall_seconds=wall,
                            results_path=str(path),
                            losses_path=os.path.join(base, losses_name))


def stable_view(results_payload: dict) -> dict:
    """Results dict minus the wall-clock fields; reruns must agree on this."""
    return {k: v for k, v in results_payload.items()
            if k not in VOLATILE_KEYS}


@dataclass(frozen=True)
class Comparison:
    """Baseline-versus-augmented score table for one model family."""

    model: str
    baseline_mean: float
    baseline_std: float
    augmented_mean: float
    augmented_std: float

    @property
    def improvement_pct(self) -> float:
        if self.baseline_mean == self.augmented_mean:
            return 0.0
        return ((self.baseline_mean - self.augmented_mean)
                / self.baseline_mean * 100.0)

    def rows(self) -> list:
        return [
            {"model": self.model, "mean": self.baseline_mean,
             "std": self.baseline_std, "improvement_pct": None},
            {"model": self.model + "+", "mean": self.augmented_mean,
             "std": self.augmented_std,
             "improvement_pct": self.improvement_pct},
        ]

    def save_csv(self, path) -> None:
        def write(tmp):
            with Path(tmp).open("w", newline="") as handle:
                writer = csv.DictWriter(
                    handle, ["model", "mean", "std", "improvement_pct"])
                writer.writeheader()
                for row in self.rows():
                    out = {"model": row["model"],
                           "mean": repr(row["mean"]),
                           "std": repr(row["std"]),
                           "improvement_pct": ""
                           if row["improvement_pct"] is None
                           else repr(row["improvement_pct"])}
                    writer.writerow(out)

        _atomic_write(str(path), write)

    @classmethod
    def load_csv(cls, path) -> "Comparison":
        with Path(path).open(newline="") as handle:
            rows = list(csv.DictReader(handle))
        if len(rows) != 2 or rows[1]["model"] != rows[0]["model"] + "+":
            raise ConfigError(f"{path} is not a comparison file")
        return cls(model=rows[0]["model"],
                   baseline_mean=float(rows[0]["mean"]),
                   baseline_std=float(rows[0]["std"]),
                   augmented_mean=float(rows[1]["mean"]),
                   augmented_std=float(rows[1]["std"]))


def compare(baseline: ExperimentResult,
            augmented: ExperimentResult) -> Comparison:
    """Pair a baseline run with its augmented counterpart."""
    if baseline.report.metric != augmented.report.metric:
        raise ConfigError(
            f"cannot compare {baseline.report.metric!r} against "
            f"{augmented.report.metric!r} results")
    if baseline.config.model != augmented.config.model:
        raise ConfigError(
            f"cannot compare model {baseline.config.model!r} against "
            f"{augmented.config.model!r}")
    return Comparison(model=baseline.config.model,
                      baseline_mean=baseline.report.mean,
                      baseline_std=baseline.report.std,
                      augmented_mean=augmented.report.mean,
                      augmented_std=augmented.report.std)


def _write_table(path, fieldnames, rows) -> None:
    def write(tmp):
        with Path(tmp).open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames)
            writer.writeheader()
            writer.writerows(rows)

    _atomic_write(str(path), write)


def sweep_alpha(config: ExperimentConfig, alphas) -> list:
    """One baseline run plus one augmented run per weight; table of scores."""
    rows = []
    base = run(replace(config, misa=False))
    rows.append({"model": config.model, "alpha": 0.0,
                 "mean": base.report.mean, "std": base.report.std,
                 "seed": config.seed})
    for alpha in alphas:
        res = run(replace(config, misa=True, alpha=float(alpha)))
        rows.append({"model": config.model + "+", "alpha": float(alpha),
                     "mean": res.report.mean, "std": res.report.std,
                     "seed": config.seed})
    _write_table(os.path.join(config.out_dir, "alpha_sweep.csv"),
                 ["model", "alpha", "mean", "std", "seed"], rows)
    return rows


def sweep_missing_rate(config: ExperimentConfig, rates) -> list:
    """Baseline and augmented scores at each missing rate."""
    rows = []
    for rate in rates:
        base = run(replace(config, misa=False, rate=float(rate)))
        aug = run(replace(config, misa=True, rate=float(rate)))
        pair = compare(base, aug)
        rows.append({"rate": float(rate), "model": config.model,
                     "baseline_mean": base.report.mean,
                     "baseline_std": base.report.std,
                     "augmented_mean": aug.report.mean,
                     "augmented_std": aug.report.std,
                     "improvement_pct": pair.improvement_pct,
                     "seed": config.seed})
    _write_table(os.path.join(config.out_dir, "rate_sweep.csv"),
                 ["rate", "model", "baseline_mean", "baseline_std",
                  "augmented_mean", "augmented_std", "improvement_pct",
                  "seed"], rows)
    return rows
