"""Calibration, training and testing across all methods.

Data handling follows one fixed recipe:

1. hold out a test partition (``SplitSpec.test_fraction``);
2. calibrate lambda (and the ensemble size K for QUBO methods) with Monte
   Carlo cross-validation on the training partition, each fold training on
   ``bag_fraction`` of it and validating on the rest;
3. train one model per bootstrap bag;
4. score every trained model on the test partition.

Targets are mapped onto ``[0, L]`` (see :class:`qabind.model.TargetScaler`)
using the training partition's range, identically for every method.
"""
from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import _rng
from .baselines import lasso_fit, ridge_fit
from .logo import average_weights, emit_weight_logo
from .metrics import DegenerateLabelsError, auprc, kendall_tau, threshold_labels
from .model import TargetScaler, build_qubo, predict, qubo_to_ising, scale_ising
from .samplers import (MAX_ENSEMBLE, AnnealSchedule, brute_force_solve,
                       ensemble_average, ensemble_prefix_means, simulated_anneal,
                       simulated_quantum_anneal)
from .seqdata import SplitSpec, bag_sample, bag_size, preprocess, read_tsv, train_test_split

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = tuple(2.0 ** e for e in range(-3, 7))
DEFAULT_THRESHOLDS = (70.0, 80.0, 90.0, 95.0, 99.0)
CALIBRATION_PERCENTILE = 80.0
DEFAULT_FOLDS = 100
MAX_FOLD_REDRAWS = 20


class MethodKind(str, Enum):
    SA_QUBO = "sa"
    SQA_QUBO = "sqa"
    EXACT_QUBO = "exact"
    RIDGE = "ridge"
    LASSO = "lasso"
    EXTERNAL = "external"


class Task(str, Enum):
    CLASSIFY = "classify"
    RANK = "rank"


class PipelineError(RuntimeError):
    def __init__(self, phase, message):
        self.phase = phase
        super().__init__(f"[{phase}] {message}")


class DigestOverlapError(ValueError):
    """Test sequences were seen during calibration or training."""


@dataclass(frozen=True)
class MethodSpec:
    kind: MethodKind
    schedule: AnnealSchedule | None = None
    ensemble_K: int | None = None
    command: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MethodKind(self.kind))
        if self.is_annealer != (self.schedule is not None):
            raise ValueError(f"{self.kind.value}: schedule is required for SA/SQA and only for them")
        if self.ensemble_K is not None:
            if not self.is_qubo:
                raise ValueError("ensemble_K applies to QUBO methods only")
            if not 1 <= self.ensemble_K <= MAX_ENSEMBLE:
                raise ValueError(f"ensemble_K must be in 1..{MAX_ENSEMBLE}")
        if self.kind is MethodKind.EXTERNAL and not self.command:
            raise ValueError("external method needs a command template")
        if self.kind is MethodKind.SQA_QUBO:
            self.schedule.check_sqa()

    @property
    def is_annealer(self):
        return self.kind in (MethodKind.SA_QUBO, MethodKind.SQA_QUBO)

    @property
    def is_qubo(self):
        return self.kind in (MethodKind.SA_QUBO, MethodKind.SQA_QUBO, MethodKind.EXACT_QUBO)

    @property
    def name(self):
        return self.kind.value

    def k_candidates(self):
        if not self.is_qubo:
            return (None,)
        if self.ensemble_K is not None:
            return (self.ensemble_K,)
        return tuple(range(1, MAX_ENSEMBLE + 1))

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "schedule": dataclasses.asdict(self.schedule) if self.schedule else None,
            "ensemble_K": self.ensemble_K,
            "command": self.command,
        }

    @classmethod
    def from_dict(cls, d):
        sched = AnnealSchedule(**d["schedule"]) if d.get("schedule") else None
        return cls(MethodKind(d["kind"]), sched, d.get("ensemble_K"), d.get("command"))


# -- fitting -------------------------------------------------------------------

class ExternalPredictor:
    """Shells out to a user command for one training set.

    The command template may use ``{train}`` (TSV ``sequence<TAB>value``),
    ``{predict}`` (one sequence per line), ``{out}`` (the command writes one
    prediction per line, in order), ``{lambda}`` and ``{seed}``.
    """

    def __init__(self, command, train, lam, seed):
        self.command = command
        self.train = train
        self.lam = lam
        self.seed = seed

    def predict(self, data):
        with tempfile.TemporaryDirectory(prefix="qabind-ext-") as tmp:
            tmp = Path(tmp)
            train_path, predict_path, out_path = tmp / "train.tsv", tmp / "predict.txt", tmp / "out.txt"
            with open(train_path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("sequence\tvalue\n")
                for s, y in zip(self.train.sequence_labels, self.train.targets):
                    fh.write(f"{s}\t{float(y)!r}\n")
            predict_path.write_text("".join(s + "\n" for s in data.sequence_labels), encoding="utf-8")
            argv = [part.format(train=train_path, predict=predict_path, out=out_path,
                                seed=self.seed, **{"lambda": self.lam})
                    for part in shlex.split(self.command)]
            proc = subprocess.run(argv, capture_output=True, text=True)
            if proc.returncode != 0:
                raise RuntimeError(
                    f"external command exited {proc.returncode}: {proc.stderr.strip()[:200]}")
            values = [float(v) for v in out_path.read_text(encoding="utf-8").split()]
        if len(values) != len(data):
            raise RuntimeError(f"external command returned {len(values)} predictions for {len(data)} rows")
        return np.array(values)


def _solve_pool(method, data, lam, seed):
    ising = scale_ising(qubo_to_ising(build_qubo(data, lam)))
    if method.kind is MethodKind.SA_QUBO:
        return simulated_anneal(ising, method.schedule, seed)
    if method.kind is MethodKind.SQA_QUBO:
        return simulated_quantum_anneal(ising, method.schedule, seed)
    return brute_force_solve(ising, keep=max(method.k_candidates()))


def fit_candidates(method, data, lam, seed):
    """One model per K candidate (a single one for non-QUBO methods).

    Returns a ``(n_candidates, dim)`` weight array, or a list holding one
    :class:`ExternalPredictor`.
    """
    if method.is_qubo:
        pool = _solve_pool(method, data, lam, seed)
        if method.ensemble_K is not None:
            return ensemble_average(pool, method.ensemble_K)[None, :]
        return ensemble_prefix_means(pool, MAX_ENSEMBLE)
    if method.kind is MethodKind.RIDGE:
        return ridge_fit(data, lam).weights[None, :]
    if method.kind is MethodKind.LASSO:
        return lasso_fit(data, lam).weights[None, :]
    return [ExternalPredictor(method.command, data, lam, seed)]


def predict_all(models, data):
    """Predictions of each model as rows of an ``(n_models, N)`` array."""
    if isinstance(models, np.ndarray):
        return models @ data.features.T.astype(np.float64)
    rows = []
    for m in models:
        if hasattr(m, "predict"):
            rows.append(np.asarray(m.predict(data), dtype=float))
        else:
            rows.append(predict(m, data.features))
    return np.array(rows)


def safe_tau(y_true, y_pred):
    """Kendall tau-b, with 0.0 when predictions are all tied (no ranking information)."""
    try:
        return kendall_tau(y_true, y_pred)
    except DegenerateLabelsError:
        return 0.0


# -- calibration ---------------------------------------------------------------

@dataclass
class CalibrationResult:
    method: MethodSpec
    task: Task
    lambda_grid: np.ndarray
    chosen_lambda: float
    chosen_K: int | None
    fold_scores: np.ndarray  # grid x folds at the chosen K
    mean_scores: np.ndarray  # grid x K candidates
    k_grid: tuple = (None,)
    scaler: TargetScaler | None = None

    def to_dict(self):
        return {
            "method": self.method.to_dict(),
            "task": self.task.value,
            "lambda_grid": [float(v) for v in self.lambda_grid],
            "chosen_lambda": float(self.chosen_lambda),
            "chosen_K": self.chosen_K,
            "k_grid": list(self.k_grid),
            "fold_scores": np.asarray(self.fold_scores).tolist(),
            "mean_scores": np.asarray(self.mean_scores).tolist(),
            "scaler": dataclasses.asdict(self.scaler) if self.scaler else None,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            MethodSpec.from_dict(d["method"]), Task(d["task"]), np.array(d["lambda_grid"]),
            d["chosen_lambda"], d["chosen_K"], np.array(d["fold_scores"]),
            np.array(d["mean_scores"]), tuple(d["k_grid"]),
            TargetScaler(**d["scaler"]) if d.get("scaler") else None)


def _fold_ok(val_targets, task):
    if np.all(val_targets == val_targets[0]):
        return False
    if task is Task.CLASSIFY:
        try:
            threshold_labels(val_targets, CALIBRATION_PERCENTILE)
        except DegenerateLabelsError:
            return False
    return True


def draw_folds(train, spec, task, folds=DEFAULT_FOLDS):
    """Monte Carlo splits: ``bag_fraction`` of the rows to fit, the rest to validate.

    A fold whose validation targets cannot be scored is redrawn, up to
    ``MAX_FOLD_REDRAWS`` times.
    """
    n = len(train)
    size = bag_size(n, spec.bag_fraction)
    if not 1 <= size < n:
        raise ValueError(f"fold training size {size} invalid for {n} rows")
    out = []
    for f in range(folds):
        for attempt in range(MAX_FOLD_REDRAWS + 1):
            perm = _rng.substream(spec.seed, _rng.FOLD, f, attempt).permutation(n)
            fit_idx, val_idx = np.sort(perm[:size]), np.sort(perm[size:])
            if _fold_ok(train.targets[val_idx], task):
                out.append((fit_idx, val_idx))
                break
        else:
            raise ValueError(f"fold {f}: no scorable validation split after {MAX_FOLD_REDRAWS} redraws")
    return out


def _score(task, val_targets, labels, preds):
    if task is Task.CLASSIFY:
        return auprc(preds, labels)
    return safe_tau(val_targets, preds)


def calibrate(train, method, task, spec, lambda_grid=DEFAULT_LAMBDA_GRID, folds=DEFAULT_FOLDS):
    """Pick lambda (and K) maximizing the mean validation score.

    Classification is scored by AUPRC at the 80th percentile, ranking by
    Kendall's tau. Ties go to the larger lambda, then the smaller K.
    """
    task = Task(task)
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0):
        raise ValueError("lambda grid must be non-empty and non-negative")
    scaler = TargetScaler.fit(train.targets, train.seq_length)
    data = scaler.apply(train)
    k_grid = method.k_candidates()
    scores = np.empty((grid.size, len(k_grid), folds))
    for f, (fit_idx, val_idx) in enumerate(draw_folds(data, spec, task, folds)):
        fit, val = data.take(fit_idx), data.take(val_idx)
        labels = threshold_labels(val.targets, CALIBRATION_PERCENTILE).labels if task is Task.CLASSIFY else None
        for g, lam in enumerate(grid):
            seed = _rng.derive_seed(spec.seed, _rng.CALIBRATION_SOLVE, f, g)
            preds = predict_all(fit_candidates(method, fit, lam, seed), val)
            for c, row in enumerate(preds):
                scores[g, c, f] = _score(task, val.targets, labels, row)
    mean = scores.mean(axis=2)
    best = mean.max()
    # larger lambda first, then smaller K
    g_best, c_best = next((g, c) for g in np.argsort(-grid, kind="stable")
                          for c in range(len(k_grid)) if mean[g, c] == best)
    return CalibrationResult(method, task, grid, float(grid[g_best]), k_grid[c_best],
                             scores[:, c_best, :], mean, k_grid, scaler)


# -- training ------------------------------------------------------------------

def train_instances(train, method, calib, spec):
    """Fit one model per bag, in instance order.

    Linear methods yield weight vectors (in normalized target units), the
    external method yields :class:`ExternalPredictor` objects.
    """
    scaler = calib.scaler or TargetScaler.fit(train.targets, train.seq_length)
    data = scaler.apply(train)
    fixed = dataclasses.replace(method, ensemble_K=calib.chosen_K) if method.is_qubo else method
    out = []
    for i in range(spec.bag_count):
        bag = bag_sample(data, spec, i)
        seed = _rng.derive_seed(spec.seed, _rng.TRAINING_SOLVE, i)
        try:
            models = fit_candidates(fixed, bag, calib.chosen_lambda, seed)
        except Exception as exc:
            raise PipelineError("train", f"instance {i}: {exc}") from exc
        out.append(models[0])
    return out


# -- evaluation ----------------------------------------------------------------

def _num(v):
    return None if np.isnan(v) else float(v)


@dataclass
class EvaluationReport:
    """Per-instance test metrics and their aggregates.

    ``auprc`` is ``instances x thresholds``; aggregates are the mean and
    population standard deviation of AUPRC per threshold and the median and
    quartiles (linear interpolation) of tau. A threshold that leaves the test
    set without positives (e.g. the 99th percentile of fewer than 100 values)
    has NaN entries, written as ``null``.
    """

    thresholds: tuple
    auprc: np.ndarray
    tau: np.ndarray
    method: str = ""
    task: str = ""
    bag_fraction: float | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def instance_count(self):
        return self.tau.size

    @property
    def auprc_mean(self):
        return self.auprc.mean(axis=0)

    @property
    def auprc_std(self):
        # shifting by the first row leaves the value unchanged and makes it exactly
        # zero when all instances agree
        return (self.auprc - self.auprc[:1]).std(axis=0)

    @property
    def tau_median(self):
        return float(np.median(self.tau))

    @property
    def tau_quartiles(self):
        q25, q75 = np.percentile(self.tau, [25, 75])
        return float(q25), float(q75)

    def aggregates(self):
        q25, q75 = self.tau_quartiles
        return {
            "auprc": {f"{t:g}": {"mean": _num(m), "std": _num(s)}
                      for t, m, s in zip(self.thresholds, self.auprc_mean, self.auprc_std)},
            "tau": {"median": self.tau_median, "q25": q25, "q75": q75},
        }

    def to_dict(self):
        return {
            "method": self.method,
            "task": self.task,
            "bag_fraction": self.bag_fraction,
            "instances": self.instance_count,
            "thresholds": [float(t) for t in self.thresholds],
            "aggregates": self.aggregates(),
            "per_instance": {"auprc": [[_num(v) for v in row] for row in self.auprc],
                             "tau": self.tau.tolist()},
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d):
        auprcs = [[np.nan if v is None else v for v in row] for row in d["per_instance"]["auprc"]]
        return cls(tuple(d["thresholds"]), np.array(auprcs, dtype=float).reshape(-1, len(d["thresholds"])),
                   np.array(d["per_instance"]["tau"], dtype=float), d.get("method", ""),
                   d.get("task", ""), d.get("bag_fraction"), d.get("provenance", {}))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_tsv(self):
        lines = ["metric\tthreshold\tmean\tstd\tmedian\tq25\tq75"]
        for t, m, s in zip(self.thresholds, self.auprc_mean, self.auprc_std):
            lines.append(f"auprc\t{t:g}\t{m:.6f}\t{s:.6f}\t\t\t")
        q25, q75 = self.tau_quartiles
        lines.append(f"kendall_tau\t\t\t\t{self.tau_median:.6f}\t{q25:.6f}\t{q75:.6f}")
        lines.append("")
        lines.append("instance\t" + "\t".join(f"auprc@{t:g}" for t in self.thresholds) + "\ttau")
        for i, (row, tau) in enumerate(zip(self.auprc, self.tau)):
            lines.append(f"{i}\t" + "\t".join(f"{v:.6f}" for v in row) + f"\t{tau:.6f}")
        return "\n".join(lines) + "\n"


def evaluate(test, weights, thresholds=DEFAULT_THRESHOLDS, exclude=None, **meta):
    """Score each trained model on ``test``.

    ``exclude`` is a dataset (or set of sequence digests) that must not
    overlap ``test``; evaluation is refused when it does.
    """
    if exclude is not None:
        seen = exclude.digests() if hasattr(exclude, "digests") else set(exclude)
        overlap = seen & test.digests()
        if overlap:
            raise DigestOverlapError(f"{len(overlap)} test sequences were seen in training")
    if not weights:
        raise ValueError("no trained models to evaluate")
    thresholds = tuple(float(t) for t in thresholds)
    label_sets = []
    for t in thresholds:
        try:
            label_sets.append(threshold_labels(test.targets, t).labels)
        except DegenerateLabelsError:
            log.warning("percentile %g leaves no positives among %d test values", t, len(test))
            label_sets.append(None)
    preds = predict_all(weights, test)
    auprcs = np.array([[np.nan if labels is None else auprc(p, labels) for labels in label_sets]
                       for p in preds])
    taus = np.array([safe_tau(test.targets, p) for p in preds])
    return EvaluationReport(thresholds, auprcs.reshape(len(preds), len(thresholds)), taus, **meta)


# -- experiment ----------------------------------------------------------------

_LIST_KEYS = {"bag_fractions", "methods", "lambda_grid", "thresholds", "tasks"}


@dataclass
class ExperimentConfig:
    """Experiment settings, read from ``key = value`` lines.

    Lists are comma separated; ``#`` starts a comment.
    """

    input: str
    output: str = "results"
    seed: int = 0
    test_fraction: float = 0.10
    bag_fractions: tuple = (0.02, 0.10)
    bag_count: int = 50
    methods: tuple = ("sa", "sqa", "ridge", "lasso")
    tasks: tuple = ("classify", "rank")
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    thresholds: tuple = DEFAULT_THRESHOLDS
    cv_folds: int = DEFAULT_FOLDS
    keep_window: int | None = None
    log2: bool = False
    sweeps: int = 10000
    reads: int = 1000
    beta_initial: float = 0.1
    beta_final: float = 3.0
    gamma_initial: float = 3.0
    gamma_final: float = 0.01
    trotter_slices: int = 20
    ensemble_k: int | None = None
    external_command: str | None = None
    logos: bool = True

    @classmethod
    def from_file(cls, path):
        values = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                key, value = (part.strip() for part in line.split("=", 1))
                values[key] = value
        cfg = cls.from_mapping(values)
        base = Path(path).parent
        if not Path(cfg.input).is_absolute():
            cfg.input = str(base / cfg.input)
        if not Path(cfg.output).is_absolute():
            cfg.output = str(base / cfg.output)
        return cfg

    @classmethod
    def from_mapping(cls, values):
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in fields:
                raise ValueError(f"unknown config key {key!r}")
            default = fields[key].default
            if not isinstance(value, str):
                kwargs[key] = value
            elif key in _LIST_KEYS:
                items = [v.strip() for v in value.split(",") if v.strip()]
                kwargs[key] = tuple(items if key in ("methods", "tasks") else (float(v) for v in items))
            elif key in ("keep_window", "ensemble_k"):
                kwargs[key] = None if value.lower() in ("", "none") else int(value)
            elif isinstance(default, bool):
                if value.lower() not in ("true", "false", "yes", "no", "1", "0"):
                    raise ValueError(f"{key}: expected a boolean, got {value!r}")
                kwargs[key] = value.lower() in ("true", "yes", "1")
            elif isinstance(default, int):
                kwargs[key] = int(value)
            elif isinstance(default, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        if "input" not in kwargs:
            raise ValueError("config needs an 'input' key")
        return cls(**kwargs)

    def schedule(self):
        return AnnealSchedule(self.sweeps, self.beta_initial, self.beta_final, self.reads,
                              self.gamma_initial, self.gamma_final, self.trotter_slices)

    def method_specs(self):
        specs = []
        for name in self.methods:
            kind = MethodKind(name.lower())
            sched = self.schedule() if kind in (MethodKind.SA_QUBO, MethodKind.SQA_QUBO) else None
            k = self.ensemble_k if kind in (MethodKind.SA_QUBO, MethodKind.SQA_QUBO,
                                            MethodKind.EXACT_QUBO) else None
            cmd = self.external_command if kind is MethodKind.EXTERNAL else None
            specs.append(MethodSpec(kind, sched, k, cmd))
        return specs


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_weights_tsv(fh, weights):
    """One row per instance: index, then the weight vector."""
    for i, w in enumerate(weights):
        fh.write(f"{i}\t" + "\t".join(repr(float(v)) for v in w) + "\n")


def read_weights_tsv(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip() and not line.startswith("#"):
                rows.append(np.array([float(v) for v in line.rstrip("\n").split("\t")[1:]]))
    if not rows:
        raise ValueError(f"{path}: no weight vectors")
    return rows


def summary_table(reports, threshold=CALIBRATION_PERCENTILE):
    """Method comparison: AUPRC at ``threshold`` and median tau per report."""
    lines = ["method\tbag_fraction\ttask\tlambda\tK\tauprc_mean\tauprc_std\ttau_median"]
    for r in reports:
        col = r.thresholds.index(threshold) if threshold in r.thresholds else None
        mean = f"{r.auprc_mean[col]:.4f}" if col is not None else "NA"
        std = f"{r.auprc_std[col]:.4f}" if col is not None else "NA"
        k = r.provenance.get("K")
        lines.append(f"{r.method}\t{r.bag_fraction:g}\t{r.task}\t{r.provenance.get('lambda'):g}\t"
                     f"{'' if k is None else k}\t{mean}\t{std}\t{r.tau_median:.4f}")
    return "\n".join(lines) + "\n"


def run_experiment(config):
    """Preprocess, split, then calibrate/train/evaluate every method and bag fraction.

    Writes one JSON + TSV report per (method, bag fraction, task) under
    ``config.output`` together with calibration results, trained weights,
    weight logos, ``summary.tsv`` and ``manifest.json``. Returns the reports.
    """
    out = Path(config.output)
    try:
        data = preprocess(read_tsv(config.input), config.keep_window, config.log2)
    except Exception as exc:
        raise PipelineError("preprocess", str(exc)) from exc
    try:
        split = SplitSpec(config.test_fraction, config.bag_fractions[0], config.bag_count, config.seed)
        train, test = train_test_split(data, split)
    except Exception as exc:
        raise PipelineError("split", str(exc)) from exc
    if train.digests() & test.digests():
        raise PipelineError("split", "train and test partitions overlap")
    methods = config.method_specs()
    tasks = [Task(t) for t in config.tasks]

    reports = []
    written = []
    for frac in config.bag_fractions:
        spec = dataclasses.replace(split, bag_fraction=frac)
        for method in methods:
            for task in tasks:
                name = f"{method.name}_bag{frac:g}_{task.value}"
                log.info("%s: calibrating", name)
                try:
                    calib = calibrate(train, method, task, spec, config.lambda_grid, config.cv_folds)
                except Exception as exc:
                    raise PipelineError("calibrate", f"{name}: {exc}") from exc
                log.info("%s: lambda=%g K=%s; training %d instances", name,
                         calib.chosen_lambda, calib.chosen_K, spec.bag_count)
                models = train_instances(train, method, calib, spec)
                provenance = {
                    "seed": config.seed, "lambda": calib.chosen_lambda, "K": calib.chosen_K,
                    "schedule": dataclasses.asdict(method.schedule) if method.schedule else None,
                    "scaler": dataclasses.asdict(calib.scaler),
                    "train_digest": train.digest, "test_digest": test.digest,
                    "n_train": len(train), "n_test": len(test),
                    "bag_size": bag_size(len(train), frac), "cv_folds": config.cv_folds,
                }
                try:
                    report = evaluate(test, models, config.thresholds, exclude=train,
                                      method=method.name, task=task.value, bag_fraction=frac,
                                      provenance=provenance)
                except Exception as exc:
                    raise PipelineError("evaluate", f"{name}: {exc}") from exc
                reports.append(report)
                files = {
                    out / "reports" / f"{name}.json": report.to_json(),
                    out / "reports" / f"{name}.tsv": report.to_tsv(),
                    out / "calibration" / f"{name}.json":
                        json.dumps(calib.to_dict(), indent=1, sort_keys=True) + "\n",
                }
                if method.kind is not MethodKind.EXTERNAL:
                    buf = io.StringIO()
                    write_weights_tsv(buf, models)
                    files[out / "weights" / f"{name}.tsv"] = buf.getvalue()
                for path, text in files.items():
                    _write(path, text)
                    written.append(path)
                if config.logos and method.kind is not MethodKind.EXTERNAL:
                    logo = average_weights(models, train.seq_length)
                    (out / "logos").mkdir(parents=True, exist_ok=True)
                    written.extend(emit_weight_logo(logo, out / "logos" / f"{name}.svg"))

    _write(out / "summary.tsv", summary_table(reports))
    written.append(out / "summary.tsv")
    manifest = {
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in dataclasses.asdict(config).items() if k not in ("input", "output")},
        "input_sha256": _sha256(config.input),
        "n_sequences": len(data),
        "files": {str(p.relative_to(out)): _sha256(p) for p in sorted(written)},
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return reports
