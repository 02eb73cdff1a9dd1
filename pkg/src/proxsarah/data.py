"""Sparse datasets: LIBSVM text I/O, label handling, normalization, splits."""

import gzip
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, ParseError, UnsupportedOperationError
from .rng import RngStream

log = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-12


@dataclass(frozen=True)
class SparseSample:
    """One data row: 0-based strictly increasing ``indices`` and their ``values``."""

    indices: np.ndarray
    values: np.ndarray
    label: float | None = None

    def dense(self, d):
        out = np.zeros(d)
        out[self.indices] = self.values
        return out


@dataclass
class Dataset:
    """``n`` sparse rows of dimension ``d`` stored as a CSR matrix."""

    matrix: sp.csr_matrix
    labels: np.ndarray | None = None
    source: str = "memory"
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix, dtype=np.float64)
        self.matrix.sort_indices()
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64)
            if self.labels.shape != (self.n,):
                raise InvalidArgumentError("need one label per row")

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def d(self):
        return self.matrix.shape[1]

    def sample(self, i):
        lo, hi = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        label = None if self.labels is None else float(self.labels[i])
        return SparseSample(
            self.matrix.indices[lo:hi].copy(), self.matrix.data[lo:hi].copy(), label
        )

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        labels = None if self.labels is None else self.labels[rows]
        return replace(self, matrix=self.matrix[rows], labels=labels, meta=dict(self.meta))

    def row_norms(self):
        return np.sqrt(np.asarray(self.matrix.multiply(self.matrix).sum(axis=1)).ravel())


def _open_text(path):
    path = str(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if path.endswith(".gz") or magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def parse_libsvm(stream, n_features=None, source="stream"):
    """Parse ``<label> <idx>:<val> ...`` lines (1-based indices) into a Dataset.

    ``stream`` is any iterable of text lines or a path. Blank lines and ``#``
    comments are skipped. ``d`` is the largest index seen unless
    ``n_features`` is given, in which case every index must fit in it.
    """
    if isinstance(stream, (str, bytes)) or hasattr(stream, "__fspath__"):
        with _open_text(stream) as fh:
            return parse_libsvm(fh, n_features=n_features, source=str(stream))

    labels = []
    indptr = [0]
    indices = []
    values = []
    max_index = 0
    for lineno, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        prev = 0
        for tok in tokens[1:]:
            idx_text, sep, val_text = tok.partition(":")
            if not sep:
                raise ParseError(f"malformed token {tok!r}", lineno)
            try:
                idx = int(idx_text)
                val = float(val_text)
            except ValueError:
                raise ParseError(f"malformed token {tok!r}", lineno) from None
            if idx < 1:
                raise ParseError(f"indices are 1-based, got {idx}", lineno)
            if idx <= prev:
                raise ParseError(f"indices not strictly increasing at {tok!r}", lineno)
            if not math.isfinite(val):
                raise ParseError(f"non-finite value in {tok!r}", lineno)
            prev = idx
            indices.append(idx - 1)
            values.append(val)
        max_index = max(max_index, prev)
        indptr.append(len(indices))

    if not labels:
        raise ParseError("no samples", 0)
    d = max_index
    if n_features is not None:
        if max_index > n_features:
            raise ParseError(f"index {max_index} exceeds declared dimension {n_features}", 0)
        d = int(n_features)
    matrix = sp.csr_matrix(
        (np.array(values, dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr)),
        shape=(len(labels), max(d, 1)),
    )
    return Dataset(matrix, np.array(labels), source=source)


def load_libsvm(path, n_features=None):
    return parse_libsvm(path, n_features=n_features, source=str(path))


def _format_label(x):
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def serialize_libsvm(ds, out=None):
    """Write ``ds`` in LIBSVM format; returns the text when ``out`` is None."""
    buf = io.StringIO() if out is None else out
    m = ds.matrix
    for i in range(ds.n):
        lo, hi = m.indptr[i], m.indptr[i + 1]
        label = _format_label(ds.labels[i]) if ds.labels is not None else "0"
        entries = " ".join(f"{j + 1}:{v!r}" for j, v in zip(m.indices[lo:hi], m.data[lo:hi].tolist()))
        buf.write(f"{label} {entries}".rstrip() + "\n")
    if out is None:
        return buf.getvalue()
    return None


def canonicalize_labels(ds):
    """Map a two-valued label set onto {-1, +1} (smaller value -> -1)."""
    if ds.labels is None:
        raise UnsupportedOperationError("dataset has no labels")
    distinct = np.unique(ds.labels)
    if distinct.size > 2:
        raise UnsupportedOperationError(
            f"expected at most two distinct labels, found {distinct.size}"
        )
    if set(distinct.tolist()) <= {-1.0, 1.0}:
        return replace(ds, labels=ds.labels.copy())
    if distinct.size == 1:
        raise UnsupportedOperationError(f"cannot infer the label pair from {distinct.tolist()}")
    labels = np.where(ds.labels == distinct[0], -1.0, 1.0)
    return replace(ds, labels=labels)


def normalize_rows(ds):
    """Scale every row to unit norm; all-zero rows are dropped."""
    norms = ds.row_norms()
    keep = norms > 0
    dropped = int((~keep).sum())
    if dropped:
        log.info("normalize_rows: dropped %d zero rows", dropped)
    m = ds.matrix[np.flatnonzero(keep)]
    norms = norms[keep]
    already = np.abs(norms - 1.0) <= UNIT_NORM_TOL
    scale = np.where(already, 1.0, 1.0 / norms)
    m = sp.csr_matrix(sp.diags(scale) @ m)
    labels = None if ds.labels is None else ds.labels[keep]
    meta = dict(ds.meta, dropped_zero_rows=ds.meta.get("dropped_zero_rows", 0) + dropped)
    return replace(ds, matrix=m, labels=labels, normalized=True, meta=meta)


def split(ds, test_fraction, seed):
    """Seeded shuffle; the first ``floor(n * test_fraction)`` rows form the test set."""
    if not 0 <= test_fraction < 1:
        raise InvalidArgumentError("test_fraction must lie in [0, 1)")
    perm = RngStream(seed).spawn("split").permutation(ds.n)
    n_test = int(math.floor(ds.n * test_fraction))
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


def _sparse_rows(rng, n, d, density):
    nnz = max(1, int(round(density * d)))
    indptr = np.arange(n + 1) * nnz
    indices = np.concatenate([rng.sample_without_replacement(d, nnz) for _ in range(n)])
    return indptr, indices, nnz


def synth_nnpca(n, d, seed, density=0.1):
    """Nonnegative sparse rows (uniform values on a random support), normalized."""
    if n < 1 or d < 1:
        raise InvalidArgumentError("need n, d >= 1")
    rng = RngStream(seed).spawn("synth-nnpca")
    indptr, indices, nnz = _sparse_rows(rng, n, d, density)
    values = 1.0 - rng.uniform(n * nnz)  # in (0, 1]: no zero rows
    m = sp.csr_matrix((values, indices, indptr), shape=(n, d))
    ds = Dataset(m, None, source=f"synth-nnpca(n={n},d={d},seed={seed})")
    return normalize_rows(ds)


def synth_binclass(n, d, seed, separability=1.0, density=0.1):
    """Rows with Gaussian values labelled by a planted hyperplane.

    Each label is flipped with probability ``(1 - separability) / 2``, so
    ``separability=1`` is noise free and ``0`` gives random labels.
    """
    if n < 1 or d < 1:
        raise InvalidArgumentError("need n, d >= 1")
    if not 0 <= separability <= 1:
        raise InvalidArgumentError("separability must lie in [0, 1]")
    rng = RngStream(seed).spawn("synth-binclass")
    indptr, indices, nnz = _sparse_rows(rng, n, d, density)
    values = rng.normal(n * nnz)
    values[values == 0.0] = 1.0
    m = sp.csr_matrix((values, indices, indptr), shape=(n, d))
    planted = rng.normal(d)
    scores = m @ planted
    labels = np.where(scores >= 0, 1.0, -1.0)
    flips = rng.uniform(n) < (1.0 - separability) / 2.0
    labels[flips] *= -1.0
    ds = Dataset(
        m,
        labels,
        source=f"synth-binclass(n={n},d={d},seed={seed},sep={separability})",
        meta={"planted": planted},
    )
    return normalize_rows(ds)
