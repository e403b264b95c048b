"""Datasets, on-disk format, random feature sketching and train/val/test splits."""

from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .graph import SparseGraph, as_dense, from_arrays, largest_component, subgraph

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

# (nodes, features) of the citation benchmarks, largest-connected-component versions
KNOWN_STATISTICS = {
    "cora": (2485, 1433),
    "citeseer": (2110, 3703),
    "pubmed": (19717, 500),
}


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    graph: SparseGraph
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        features = as_dense(self.features, "features")
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        n = self.graph.n_nodes
        if features.shape[0] != n or labels.shape != (n,):
            raise DatasetFormatError(
                f"graph has {n} nodes but features have {features.shape[0]} rows "
                f"and labels have {labels.shape[0]} entries"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise DatasetFormatError(f"labels must lie in [0, {self.n_classes})")
        absent = np.setdiff1d(np.arange(self.n_classes), labels)
        if absent.size:
            raise DatasetFormatError(f"classes {absent.tolist()} have no nodes")

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(self.name, self.graph, features, self.labels, self.n_classes)


@dataclass(frozen=True, eq=False)
class Split:
    """Disjoint node index sets; ``train`` and ``val`` together are the observed nodes."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if self.train.size == 0:
            raise ValueError("train set is empty")
        parts = np.concatenate([self.train, self.val, self.test])
        if np.unique(parts).size != parts.size:
            raise ValueError("split parts overlap")
        if parts.min() < 0:
            raise ValueError("negative node index in split")

    @property
    def n_observed(self) -> int:
        return int(self.train.size + self.val.size)


@dataclass(frozen=True)
class SketchConfig:
    target_dim: int
    seed: int = 0

    def __post_init__(self):
        if self.target_dim < 1:
            raise ValueError("target_dim must be at least 1")


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


# --------------------------------------------------------------------------- io


def _read_lines(path: Path):
    if not path.exists():
        raise FileNotFoundError(f"missing dataset file: {path}")
    with open(path, encoding="utf-8") as fh:
        return fh.read().split("\n")


def _content_lines(lines):
    # tolerate a single trailing newline, nothing else
    if lines and lines[-1] == "":
        lines = lines[:-1]
    return lines


def load_dataset(directory: PathLike, check_statistics: bool = True) -> Dataset:
    root = Path(directory)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"missing dataset file: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    try:
        name = str(meta["name"])
        n = int(meta["n_nodes"])
        d = int(meta["n_features"])
        c = int(meta["n_classes"])
    except KeyError as exc:
        raise DatasetFormatError(f"meta.json lacks key {exc}") from None

    src, dst, wts = [], [], []
    for lineno, line in enumerate(_content_lines(_read_lines(root / "graph.tsv")), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        try:
            if len(fields) not in (2, 3):
                raise ValueError
            i, j = int(fields[0]), int(fields[1])
            w = float(fields[2]) if len(fields) == 3 else 1.0
        except ValueError:
            raise DatasetFormatError(f"graph.tsv line {lineno}: malformed edge {line!r}") from None
        if not (0 <= i < n and 0 <= j < n):
            raise DatasetFormatError(f"graph.tsv line {lineno}: node index out of range")
        if not w > 0:
            raise DatasetFormatError(f"graph.tsv line {lineno}: nonpositive weight")
        src.append(i)
        dst.append(j)
        wts.append(w)
    graph = from_arrays(src, dst, wts, n)

    feat_lines = _content_lines(_read_lines(root / "features.tsv"))
    if len(feat_lines) != n:
        raise DatasetFormatError(f"features.tsv has {len(feat_lines)} rows, expected {n}")
    features = np.empty((n, d))
    for lineno, line in enumerate(feat_lines, 1):
        try:
            row = np.array(line.split(" "), dtype=np.float64) if d else np.empty(0)
        except ValueError:
            raise DatasetFormatError(f"features.tsv line {lineno}: malformed number") from None
        if row.size != d:
            raise DatasetFormatError(
                f"features.tsv line {lineno}: {row.size} values, expected {d}"
            )
        features[lineno - 1] = row

    label_lines = _content_lines(_read_lines(root / "labels.tsv"))
    if len(label_lines) != n:
        raise DatasetFormatError(f"labels.tsv has {len(label_lines)} rows, expected {n}")
    labels = np.empty(n, dtype=np.int64)
    for lineno, line in enumerate(label_lines, 1):
        try:
            labels[lineno - 1] = int(line)
        except ValueError:
            raise DatasetFormatError(f"labels.tsv line {lineno}: malformed label {line!r}") from None
        if not 0 <= labels[lineno - 1] < c:
            raise DatasetFormatError(f"labels.tsv line {lineno}: label out of range [0, {c})")

    ds = Dataset(name, graph, features, labels, c)
    if check_statistics:
        check_known_statistics(ds)
    return ds


def check_known_statistics(ds: Dataset) -> bool:
    """Warn when a citation benchmark's size differs from the usual LCC version."""
    expected = KNOWN_STATISTICS.get(ds.name.lower())
    if expected is None:
        return True
    if (ds.n_nodes, ds.n_features) != expected:
        warnings.warn(
            f"{ds.name}: found N={ds.n_nodes}, D={ds.n_features}; "
            f"expected N={expected[0]}, D={expected[1]}",
            UserWarning,
        )
        return False
    return True


def save_dataset(ds: Dataset, directory: PathLike) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": ds.name,
        "n_nodes": ds.n_nodes,
        "n_features": ds.n_features,
        "n_classes": ds.n_classes,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    with open(root / "graph.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for i, j, w in ds.graph.edges().tolist():
            if w == 1.0:
                fh.write(f"{int(i)}\t{int(j)}\n")
            else:
                fh.write(f"{int(i)}\t{int(j)}\t{w!r}\n")
    with open(root / "features.tsv", "w", encoding="utf-8", newline="\n") as fh:
        # repr gives the shortest string that round-trips exactly
        for row in ds.features.tolist():
            fh.write(" ".join(map(repr, row)) + "\n")
    with open(root / "labels.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{y}\n" for y in ds.labels.tolist())


def convert_npz(path: PathLike, name: Optional[str] = None, largest_cc: bool = True) -> Dataset:
    """Read a citation graph stored as CSR arrays in an ``.npz`` archive.

    Expects the ``adj_*``, ``attr_*`` and ``labels`` keys used by the public
    GNN benchmark archives.  By default keeps only the largest connected
    component, which is how the usual node counts are obtained.
    """
    path = Path(path)
    with np.load(path, allow_pickle=True) as z:
        adj = sp.csr_matrix(
            (z["adj_data"], z["adj_indices"], z["adj_indptr"]), shape=tuple(z["adj_shape"])
        )
        if "attr_data" in z:
            attr = sp.csr_matrix(
                (z["attr_data"], z["attr_indices"], z["attr_indptr"]),
                shape=tuple(z["attr_shape"]),
            ).toarray()
        else:
            attr = np.asarray(z["attr_matrix"])
        labels = np.asarray(z["labels"], dtype=np.int64)
    # undirected: keep the union of both directions with unit weight
    sym = ((adj + adj.T) > 0).astype(np.float64)
    graph = from_arrays(*sp.find(sp.triu(sym, k=1)), n_nodes=sym.shape[0])
    if largest_cc:
        keep = largest_component(graph)
        graph = subgraph(graph, keep)
        attr, labels = attr[keep], labels[keep]
    classes, labels = np.unique(labels, return_inverse=True)
    return Dataset(name or path.stem, graph, attr.astype(np.float64), labels, len(classes))


# ------------------------------------------------------------------- sketching


def sketch_features(x, cfg: Union[SketchConfig, int], rng=None) -> np.ndarray:
    """Project features to ``target_dim`` columns with a scaled Gaussian matrix.

    ``rng`` takes precedence over ``cfg.seed`` when given.
    """
    if not isinstance(cfg, SketchConfig):
        cfg = SketchConfig(int(cfg))
    x = as_dense(x)
    gen = _rng(cfg.seed if rng is None else rng)
    projection = gen.standard_normal((x.shape[1], cfg.target_dim))
    return (x @ projection) / np.sqrt(cfg.target_dim)


# ---------------------------------------------------------------------- splits


def split_per_class(labels, n_per_class: int, n_val: int = 500, rng=None) -> Split:
    """``n_per_class`` training nodes per class, ``n_val`` validation, rest test."""
    labels = np.asarray(labels, dtype=np.int64)
    gen = _rng(rng)
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    train = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size < n_per_class:
            raise ValueError(
                f"class {c} has {members.size} nodes, fewer than n_per_class={n_per_class}"
            )
        train.append(gen.choice(members, n_per_class, replace=False))
    train = np.sort(np.concatenate(train))
    rest = gen.permutation(np.setdiff1d(np.arange(labels.size), train))
    if n_val > rest.size:
        raise ValueError(f"only {rest.size} nodes left for n_val={n_val}")
    return Split(train, np.sort(rest[:n_val]), np.sort(rest[n_val:]))


def split_fraction(
    labels, frac_observed: float, val_frac_of_observed: float = 0.2, rng=None
) -> Split:
    """Observe ``floor(frac_observed * N)`` random nodes; validation is carved from them."""
    labels = np.asarray(labels)
    n = labels.size
    if not 0.0 < frac_observed < 1.0:
        raise ValueError("frac_observed must lie in (0, 1)")
    if not 0.0 <= val_frac_of_observed < 1.0:
        raise ValueError("val_frac_of_observed must lie in [0, 1)")
    gen = _rng(rng)
    n_obs = int(np.floor(frac_observed * n))
    n_val = int(np.floor(val_frac_of_observed * n_obs))
    if n_obs - n_val < 1:
        raise ValueError(f"frac_observed={frac_observed} leaves no training nodes")
    if n_obs >= n:
        raise ValueError("no test nodes left")
    perm = gen.permutation(n)
    observed = perm[:n_obs]
    return Split(
        np.sort(observed[n_val:]), np.sort(observed[:n_val]), np.sort(perm[n_obs:])
    )


# ------------------------------------------------------------------- synthetic


_DENSE_SBM_MAX_NODES = 4000


def _triu_pair(t: np.ndarray, n: int):
    """Map linear indices of the strict upper triangle of an n x n matrix to (i, j)."""
    t = t.astype(np.float64)
    i = n - 2 - np.floor(np.sqrt(-8.0 * t + 4.0 * n * (n - 1) - 7.0) / 2.0 - 0.5)
    i = i.astype(np.int64)
    j = (t + i + 1 - n * (n - 1) // 2 + (n - i) * (n - i - 1) // 2).astype(np.int64)
    return i, j


def _sample_sbm_edges(block: int, n_blocks: int, intra_p, inter_p, gen):
    # exact per-block sampling: binomial edge count, then distinct pair indices
    src, dst = [], []
    for a in range(n_blocks):
        for b in range(a, n_blocks):
            p = intra_p if a == b else inter_p
            m = block * (block - 1) // 2 if a == b else block * block
            k = gen.binomial(m, p) if m else 0
            if k == 0:
                continue
            idx = gen.choice(m, size=k, replace=False)
            if a == b:
                i, j = _triu_pair(idx, block)
            else:
                i, j = np.divmod(idx, block)
            src.append(a * block + i)
            dst.append(b * block + j)
    if not src:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(src), np.concatenate(dst)


def generate_synthetic(
    n_per_class: int = 500,
    n_classes: int = 3,
    feature_dim: int = 16,
    intra_p: float = 0.02,
    inter_p: float = 0.0005,
    feature_separation: float = 10.0,
    rng=None,
    name: str = "synthetic",
) -> Dataset:
    """Stochastic-block-model graph with Gaussian class-mean features.

    Class means are random directions scaled to norm ``feature_separation``;
    each node adds unit-variance Gaussian noise to its class mean.  The
    defaults leave 150 validation nodes when half the graph is observed, so
    validation accuracy does not saturate within the first few epochs.
    """
    if not (0.0 <= inter_p < intra_p <= 1.0):
        raise ValueError("need 0 <= inter_p < intra_p <= 1")
    if n_per_class < 1 or n_classes < 1 or feature_dim < 1:
        raise ValueError("sizes must be positive")
    gen = _rng(rng)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    n = labels.size
    if n <= _DENSE_SBM_MAX_NODES:
        probs = np.where(labels[:, None] == labels[None, :], intra_p, inter_p)
        src, dst = np.nonzero(np.triu(gen.random((n, n)) < probs, k=1))
    else:
        src, dst = _sample_sbm_edges(n_per_class, n_classes, intra_p, inter_p, gen)
    graph = from_arrays(src, dst, np.ones(src.size), n)
    directions = gen.standard_normal((n_classes, feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = feature_separation * directions
    features = means[labels] + gen.standard_normal((n, feature_dim))
    return Dataset(name, graph, features, labels, n_classes)
