"""Seeded benchmark runner: trials, aggregation with 95% intervals, CSV output.

A *trial* is identified by ``(dataset, sketch_dim, regime point, seed)``.
Within a trial the sketch, the split and every propagated feature matrix
are computed once and shared by all models, so model differences are not
confounded by data randomness.

Per-trial randomness comes from three independent streams (``split``,
``sketch``, ``init:<model>``) whose seeds are derived from the trial seed
with :func:`child_seed`.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .data import Dataset, load_dataset, sketch_features, split_fraction, split_per_class
from .graph import normalize_with_self_loops
from .models import (
    APPNP,
    APPNP_MLP,
    GCN,
    SGC,
    SGC_MLP,
    ModelSpec,
    evaluate_accuracy,
    precompute_features,
    predict,
    train_model,
)
from .nn import TrainConfig

logger = logging.getLogger(__name__)

RAW = "raw"
FEATURE_GRID = (50, 100, 200, 300, 500, 1000, 2000, 3000)
FRACTION_GRID = (0.025, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7)

SUMMARY_HEADER = [
    "dataset", "model", "sketch_dim", "frac_observed", "n_per_class",
    "n_trials", "mean_acc", "ci95",
]
RAW_HEADER = [
    "dataset", "model", "sketch_dim", "frac_observed", "n_per_class", "trial",
    "seed", "n_observed", "feature_dim", "ratio", "accuracy", "error",
]
CURVE_HEADER = ["sweep_value", "model", "mean_acc", "ci95", "n"]


class ExperimentError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConfigError(ValueError):
    pass


def child_seed(seed: int, stream: str) -> int:
    """64-bit seed for one named random stream of one trial."""
    digest = hashlib.blake2b(f"{int(seed)}/{stream}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def ci95(samples: Sequence[float]) -> Tuple[float, Optional[float]]:
    """Mean and normal-approximation half-width ``1.96 * s / sqrt(n)``."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no samples")
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None
    return mean, float(1.96 * arr.std(ddof=1) / math.sqrt(arr.size))


@dataclass
class SummaryStat:
    mean: float
    ci95: Optional[float]
    n: int
    accuracies: List[float] = field(default_factory=list)
    n_failed: int = 0

    @classmethod
    def from_samples(cls, accuracies: Sequence[float], n_failed: int = 0) -> "SummaryStat":
        mean, half = ci95(accuracies)
        return cls(mean, half, len(accuracies), list(accuracies), n_failed)

    @property
    def interval(self) -> Tuple[float, float]:
        half = self.ci95 or 0.0
        return self.mean - half, self.mean + half


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class Regime:
    """How observed nodes are chosen: ``per_class`` counts or a ``fraction`` of N."""

    kind: str
    n_per_class: Optional[int] = None
    n_val: int = 500
    frac_observed: Optional[float] = None
    val_frac: float = 0.2

    def __post_init__(self):
        if self.kind == "per_class":
            if not self.n_per_class or self.n_per_class < 1:
                raise ConfigError("per_class regime needs n_per_class >= 1")
        elif self.kind == "fraction":
            if self.frac_observed is None or not 0 < self.frac_observed < 1:
                raise ConfigError("fraction regime needs frac_observed in (0, 1)")
        else:
            raise ConfigError(f"unknown regime kind {self.kind!r}")

    def make_split(self, labels, rng):
        if self.kind == "per_class":
            return split_per_class(labels, self.n_per_class, self.n_val, rng)
        return split_fraction(labels, self.frac_observed, self.val_frac, rng)


@dataclass(frozen=True)
class NamedModel:
    name: str
    spec: ModelSpec


@dataclass
class ExperimentConfig:
    datasets: List[str]
    models: List[Union[str, dict]] = field(
        default_factory=lambda: [SGC, SGC_MLP, GCN, APPNP, APPNP_MLP]
    )
    regime: str = "fraction"
    n_per_class: int = 20
    n_val: int = 500
    frac_observed: List[float] = field(default_factory=lambda: [0.5])
    val_frac: float = 0.2
    sketch_dims: List[Union[int, str]] = field(default_factory=lambda: [300])
    n_trials: int = 40
    base_seed: int = 0
    train: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.datasets, str):
            self.datasets = [self.datasets]
        if not self.datasets:
            raise ConfigError("datasets must not be empty")
        if not self.models:
            raise ConfigError("models must not be empty")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if self.regime not in ("per_class", "fraction"):
            raise ConfigError(f"regime must be 'per_class' or 'fraction', got {self.regime!r}")
        if self.regime == "fraction" and not self.frac_observed:
            raise ConfigError("frac_observed must not be empty")
        if not self.sketch_dims:
            raise ConfigError("sketch_dims must not be empty")
        for dim in self.sketch_dims:
            if dim != RAW and not (isinstance(dim, int) and dim >= 1):
                raise ConfigError(f"sketch dimension {dim!r} must be a positive int or 'raw'")
        unknown = set(self.train) - {f.name for f in fields(TrainConfig)} - {"seed"}
        if unknown:
            raise ConfigError(f"unknown train keys: {sorted(unknown)}")
        self.named_models()

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        allowed = {f.name for f in fields(cls)}
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "datasets" not in raw:
            raise ConfigError("config must list datasets")
        return cls(**raw)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        cfg = cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        # dataset paths are relative to the config file
        cfg.datasets = [str((path.parent / d).resolve()) if not Path(d).is_absolute() else d
                        for d in cfg.datasets]
        return cfg

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def named_models(self) -> List[NamedModel]:
        out = []
        for entry in self.models:
            if isinstance(entry, str):
                spec = ModelSpec(entry)
                name = spec.display_name
            else:
                entry = dict(entry)
                name = entry.pop("name", None)
                try:
                    spec = ModelSpec(**entry)
                except TypeError as exc:
                    raise ConfigError(f"bad model entry: {exc}") from None
                name = name or spec.display_name
            out.append(NamedModel(name, spec))
        names = [m.name for m in out]
        if len(set(names)) != len(names):
            raise ConfigError(f"model names must be unique, got {names}")
        return out

    def regimes(self) -> List[Regime]:
        if self.regime == "per_class":
            return [Regime("per_class", n_per_class=self.n_per_class, n_val=self.n_val)]
        return [
            Regime("fraction", frac_observed=float(f), val_frac=self.val_frac)
            for f in self.frac_observed
        ]

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train)


# ------------------------------------------------------------------------ trials


@dataclass
class TrialRecord:
    dataset: str
    model: str
    sketch_dim: Union[int, str]
    frac_observed: Optional[float]
    n_per_class: Optional[int]
    trial: int
    seed: int
    n_observed: int
    feature_dim: int
    accuracy: Optional[float]
    error: str = ""

    @property
    def ratio(self) -> float:
        return self.n_observed / self.feature_dim

    @property
    def key(self):
        return (self.dataset, self.model, self.sketch_dim, self.frac_observed, self.n_per_class)


def _propagation_key(spec: ModelSpec):
    if spec.kind == GCN:
        return None
    if spec.kind in (SGC, SGC_MLP):
        return ("power", spec.k_hops)
    return ("ppr", spec.alpha, spec.ppr_iters, spec.ppr_tol)


def run_trial_models(
    dataset: Dataset,
    models: Sequence[NamedModel],
    regime: Regime,
    sketch_dim: Union[int, str],
    seed: int,
    train_cfg: Optional[TrainConfig] = None,
    trial: int = 0,
    adj=None,
) -> List[TrialRecord]:
    """Run every model on one shared sketch and split; failures become records."""
    train_cfg = train_cfg or TrainConfig()
    adj = adj if adj is not None else normalize_with_self_loops(dataset.graph)
    if sketch_dim == RAW:
        features = dataset.features
    else:
        features = sketch_features(dataset.features, int(sketch_dim),
                                   np.random.default_rng(child_seed(seed, "sketch")))
    split = regime.make_split(dataset.labels, np.random.default_rng(child_seed(seed, "split")))
    common = dict(
        dataset=dataset.name,
        sketch_dim=sketch_dim,
        frac_observed=regime.frac_observed,
        n_per_class=regime.n_per_class,
        trial=trial,
        seed=seed,
        n_observed=split.n_observed,
        feature_dim=features.shape[1],
    )
    cache = {}
    records = []
    for model in models:
        try:
            key = _propagation_key(model.spec)
            if key not in cache:
                cache[key] = precompute_features(model.spec, adj, features)
            inputs = cache[key]
            rng = np.random.default_rng(child_seed(seed, f"init:{model.name}"))
            result = train_model(model.spec, adj, features, dataset.labels, split, train_cfg,
                                 rng=rng, n_classes=dataset.n_classes, precomputed=inputs)
            pred = predict(model.spec, adj, features, result.params, precomputed=inputs)
            acc = evaluate_accuracy(pred, dataset.labels, split.test)
            records.append(TrialRecord(model=model.name, accuracy=acc, **common))
        except Exception as exc:  # recorded, never dropped
            logger.warning("trial %d of %s/%s failed: %s", trial, dataset.name, model.name, exc)
            records.append(TrialRecord(model=model.name, accuracy=None,
                                       error=f"{type(exc).__name__}: {exc}", **common))
    return records


def run_trial(
    dataset: Dataset,
    model_spec: ModelSpec,
    regime: Regime,
    sketch_dim: Union[int, str],
    seed: int,
    train_cfg: Optional[TrainConfig] = None,
) -> float:
    """Test accuracy of one model in one trial; raises if training failed."""
    named = NamedModel(model_spec.display_name, model_spec)
    (record,) = run_trial_models(dataset, [named], regime, sketch_dim, seed, train_cfg)
    if record.accuracy is None:
        raise RuntimeError(record.error)
    return record.accuracy


# ------------------------------------------------------------------- experiments


@dataclass
class ExperimentResult:
    records: List[TrialRecord]
    summary: Dict[tuple, SummaryStat]

    def stat(self, dataset, model, sketch_dim=None, frac_observed=None, n_per_class=None):
        """Look up one cell; unspecified key parts must be unambiguous."""
        hits = [
            (k, v) for k, v in self.summary.items()
            if k[0] == dataset and k[1] == model
            and (sketch_dim is None or k[2] == sketch_dim)
            and (frac_observed is None or k[3] == frac_observed)
            and (n_per_class is None or k[4] == n_per_class)
        ]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} cells match {(dataset, model, sketch_dim, frac_observed)}")
        return hits[0][1]


def _sort_key(key):
    dataset, model, sketch_dim, frac, n_pc = key
    dim = -1 if sketch_dim == RAW else int(sketch_dim)
    return (dataset, model, dim, -1.0 if frac is None else frac, -1 if n_pc is None else n_pc)


def summarize(records: Sequence[TrialRecord]) -> Dict[tuple, SummaryStat]:
    cells: Dict[tuple, List[TrialRecord]] = {}
    for rec in records:
        cells.setdefault(rec.key, []).append(rec)
    summary = {}
    for key in sorted(cells, key=_sort_key):
        recs = sorted(cells[key], key=lambda r: r.trial)
        accs = [r.accuracy for r in recs if r.accuracy is not None]
        failed = len(recs) - len(accs)
        if accs:
            summary[key] = SummaryStat.from_samples(accs, failed)
        else:
            summary[key] = SummaryStat(float("nan"), None, 0, [], failed)
    return summary


_WORKER_DATASETS: Dict[str, Dataset] = {}
_WORKER_ADJ: Dict[str, object] = {}


def _init_worker(datasets: Dict[str, Dataset]):
    _WORKER_DATASETS.clear()
    _WORKER_DATASETS.update(datasets)
    _WORKER_ADJ.clear()


def _run_unit(unit):
    ds_key, models, regime, sketch_dim, seed, train_cfg, trial = unit
    ds = _WORKER_DATASETS[ds_key]
    if ds_key not in _WORKER_ADJ:
        _WORKER_ADJ[ds_key] = normalize_with_self_loops(ds.graph)
    return run_trial_models(ds, models, regime, sketch_dim, seed, train_cfg, trial,
                            adj=_WORKER_ADJ[ds_key])


def run_experiment(
    cfg: ExperimentConfig,
    threads: int = 1,
    datasets: Optional[Dict[str, Dataset]] = None,
    strict: bool = True,
) -> ExperimentResult:
    """Run ``n_trials`` seeds (``base_seed + i``) for every sweep cell.

    ``datasets`` maps entries of ``cfg.datasets`` to already-loaded data;
    anything missing is read from disk.  With ``strict`` an
    :class:`ExperimentError` is raised when every trial of some cell failed.
    """
    loaded = dict(datasets or {})
    for entry in cfg.datasets:
        if entry not in loaded:
            loaded[entry] = load_dataset(entry)
    models = cfg.named_models()
    train_cfg = cfg.train_config()
    units = [
        (entry, models, regime, dim, cfg.base_seed + i, train_cfg, i)
        for entry in cfg.datasets
        for dim in cfg.sketch_dims
        for regime in cfg.regimes()
        for i in range(cfg.n_trials)
    ]
    if threads <= 1:
        _init_worker(loaded)
        outputs = [_run_unit(u) for u in units]
    else:
        with ProcessPoolExecutor(threads, initializer=_init_worker, initargs=(loaded,)) as pool:
            outputs = list(pool.map(_run_unit, units))
    records = [r for out in outputs for r in out]
    result = ExperimentResult(records, summarize(records))
    if strict:
        dead = [k for k, s in result.summary.items() if s.n == 0]
        if dead:
            raise ExperimentError(f"every trial failed for cells {dead}", result)
    return result


def sweep_features(
    cfg: ExperimentConfig,
    dims: Optional[Sequence[int]] = None,
    frac: float = 0.5,
    **kwargs,
) -> ExperimentResult:
    """Vary the sketch dimension at a fixed observed fraction.

    Without explicit ``dims`` the default grid is used, capped at the
    smallest raw feature dimension among the datasets.
    """
    if dims is None:
        cap = min(_feature_dim(d, kwargs.get("datasets")) for d in cfg.datasets)
        dims = [d for d in FEATURE_GRID if d <= cap]
    swept = replace(cfg, regime="fraction", frac_observed=[frac], sketch_dims=list(dims))
    return run_experiment(swept, **kwargs)


def sweep_fraction(
    cfg: ExperimentConfig,
    fracs: Optional[Sequence[float]] = None,
    dim: Union[int, str] = 300,
    **kwargs,
) -> ExperimentResult:
    """Vary the observed fraction at a fixed sketch dimension."""
    fracs = list(FRACTION_GRID if fracs is None else fracs)
    swept = replace(cfg, regime="fraction", frac_observed=fracs, sketch_dims=[dim])
    return run_experiment(swept, **kwargs)


def _feature_dim(entry, datasets) -> int:
    if datasets and entry in datasets:
        return datasets[entry].n_features
    meta = json.loads((Path(entry) / "meta.json").read_text(encoding="utf-8"))
    return int(meta["n_features"])


def curve_rows(result: ExperimentResult, dataset: str, sweep: str) -> List[list]:
    """Rows of ``sweep_value, model, mean_acc, ci95, n`` for one dataset."""
    rows = []
    for key, stat in result.summary.items():
        if key[0] != dataset:
            continue
        value = key[2] if sweep == "features" else key[3]
        rows.append([value, key[1], stat])
    rows.sort(key=lambda r: (-1 if r[0] == RAW else float(r[0]), r[1]))
    return [[_fmt_value(v), m, _fmt_acc(s.mean), _fmt_acc(s.ci95), s.n] for v, m, s in rows]


# ----------------------------------------------------------------------- CSV io


def _fmt_acc(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.4f}"


def _fmt_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def summary_rows(result: ExperimentResult) -> List[list]:
    rows = []
    for key in sorted(result.summary, key=_sort_key):
        stat = result.summary[key]
        dataset, model, dim, frac, n_pc = key
        rows.append([dataset, model, _fmt_value(dim), _fmt_value(frac), _fmt_value(n_pc),
                     stat.n, _fmt_acc(stat.mean), _fmt_acc(stat.ci95)])
    return rows


def raw_rows(result: ExperimentResult) -> List[list]:
    recs = sorted(result.records, key=lambda r: (_sort_key(r.key), r.trial))
    return [
        [r.dataset, r.model, _fmt_value(r.sketch_dim), _fmt_value(r.frac_observed),
         _fmt_value(r.n_per_class), r.trial, r.seed, r.n_observed, r.feature_dim,
         f"{r.ratio:.4f}", "" if r.accuracy is None else f"{r.accuracy:.6f}", r.error]
        for r in recs
    ]


def write_results(result: ExperimentResult, out_dir, curves: Optional[str] = None) -> List[Path]:
    """Write ``summary.csv`` and ``raw_trials.csv`` (plus curve files for sweeps)."""
    if not result.summary:
        raise ValueError("nothing to write: empty result table")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "summary.csv", out / "raw_trials.csv"]
    _write_csv(written[0], SUMMARY_HEADER, summary_rows(result))
    _write_csv(written[1], RAW_HEADER, raw_rows(result))
    if curves:
        for dataset in sorted({k[0] for k in result.summary}):
            path = out / f"curve_{dataset}_{curves}.csv"
            _write_csv(path, CURVE_HEADER, curve_rows(result, dataset, curves))
            written.append(path)
    return written


def read_summary(path) -> List[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SUMMARY_HEADER:
            raise ValueError(f"unexpected summary header {reader.fieldnames}")
        return list(reader)


def write_summary_rows(rows: List[dict], path) -> None:
    _write_csv(Path(path), SUMMARY_HEADER, [[row[h] for h in SUMMARY_HEADER] for row in rows])


def ratio_table(result: ExperimentResult) -> Dict[tuple, float]:
    """Mean ``n_observed / feature_dim`` per (dataset, sketch_dim, frac_observed)."""
    acc: Dict[tuple, List[float]] = {}
    for r in result.records:
        acc.setdefault((r.dataset, r.sketch_dim, r.frac_observed), []).append(r.ratio)
    return {k: float(np.mean(v)) for k, v in acc.items()}


__all__ = [
    "APPNP", "APPNP_MLP", "GCN", "SGC", "SGC_MLP", "RAW",
    "ConfigError", "ExperimentConfig", "ExperimentError", "ExperimentResult",
    "NamedModel", "Regime", "SummaryStat", "TrialRecord",
    "child_seed", "ci95", "curve_rows", "read_summary", "ratio_table", "run_experiment",
    "run_trial", "run_trial_models", "summarize", "sweep_features", "sweep_fraction",
    "write_results", "write_summary_rows",
]
