"""Oracle abstraction, deterministic reductions and the gradient mapping."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, UnsupportedOperationError
from .prox import prox

FINITE_SUM = "finite-sum"
EXPECTATION = "expectation"

#: Leaf-block size of the reduction tree. Part of the numerical contract:
#: changing it changes the rounding of every full gradient.
TREE_BLOCK = 64


@dataclass
class Counters:
    """Oracle work done by one solver run."""

    sfo: int = 0
    prox_calls: int = 0

    def copy(self):
        return Counters(self.sfo, self.prox_calls)


class FiniteSumOracle:
    """Smooth part ``f(w) = (1/n) sum_i f_i(w)``.

    Subclasses implement :meth:`gradients` and :meth:`values` for a batch of
    component indices; row ``k`` of the result must depend only on ``ids[k]``
    and ``w`` so that batched and single evaluations agree bit for bit.
    """

    mode = FINITE_SUM

    def __init__(self, n, d, lipschitz):
        if n < 1 or d < 1:
            raise InvalidArgumentError("need n >= 1 and d >= 1")
        if not lipschitz > 0:
            raise InvalidArgumentError("smoothness constant must be positive")
        self.n = int(n)
        self.d = int(d)
        self.L = float(lipschitz)

    def gradients(self, w, ids):
        raise NotImplementedError

    def values(self, w, ids):
        raise NotImplementedError

    def objective(self, w):
        vals = self.values(w, np.arange(self.n))
        return float(tree_sum(vals[:, None])[0] / self.n)

    def check_ids(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n):
            raise InvalidArgumentError(f"component index out of range [0, {self.n})")
        return ids


class ExpectationOracle:
    """Smooth part ``f(w) = E[f(w; xi)]``.

    Sample ids are draw counters; the sample for id ``k`` is synthesized from
    ``(seed, k)`` so streams never need to be stored.
    """

    mode = EXPECTATION

    def __init__(self, d, lipschitz, seed=0):
        if not lipschitz > 0:
            raise InvalidArgumentError("smoothness constant must be positive")
        self.d = int(d)
        self.L = float(lipschitz)
        self.seed = int(seed)

    def gradients(self, w, ids):
        raise NotImplementedError

    def values(self, w, ids):
        raise NotImplementedError

    def exact_gradient(self, w):
        """True gradient when the law of xi can be enumerated, else ``None``."""
        return None

    def exact_objective(self, w):
        return None


def _pairwise(rows):
    while rows.shape[0] > 1:
        half = rows.shape[0] // 2
        paired = rows[0 : 2 * half : 2] + rows[1 : 2 * half : 2]
        if rows.shape[0] % 2:
            paired = np.concatenate([paired, rows[-1:]])
        rows = paired
    return rows[0]


def tree_sum(rows):
    """Sum the rows of a 2-D array with a fixed-shape pairwise tree.

    Rows are grouped into consecutive blocks of :data:`TREE_BLOCK`; each block
    is reduced pairwise, then the block sums are reduced pairwise. The shape
    depends only on the number of rows.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] == 0:
        return np.zeros(rows.shape[1:])
    partial = np.stack(
        [_pairwise(rows[i : i + TREE_BLOCK]) for i in range(0, rows.shape[0], TREE_BLOCK)]
    )
    return _pairwise(partial)


def tree_mean(rows):
    rows = np.asarray(rows, dtype=np.float64)
    return tree_sum(rows) / rows.shape[0]


def _check_w(oracle, w):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (oracle.d,):
        raise InvalidArgumentError(f"expected a vector of length {oracle.d}, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidArgumentError("weight vector has non-finite entries")
    return w


def component_gradient(oracle, w, i, counters=None):
    """Gradient of one component (finite sum) or one draw (expectation)."""
    w = _check_w(oracle, w)
    if oracle.mode == FINITE_SUM:
        if not 0 <= int(i) < oracle.n:
            raise InvalidArgumentError(f"component index {i} out of range [0, {oracle.n})")
    elif int(i) < 0:
        raise InvalidArgumentError("draw ids are nonnegative")
    g = oracle.gradients(w, np.array([int(i)], dtype=np.int64))[0]
    if counters is not None:
        counters.sfo += 1
    return g


def batch_mean_gradient(oracle, w, ids, counters=None):
    """Mini-batch gradient ``(1/|B|) sum_{i in B} grad f_i(w)``."""
    ids = np.asarray(ids, dtype=np.int64)
    g = tree_sum(oracle.gradients(w, ids)) / ids.size
    if counters is not None:
        counters.sfo += ids.size
    return g


def full_gradient(oracle, w, counters=None, workers=1):
    """Exact mean of all ``n`` component gradients.

    Blocks of the reduction tree may be evaluated on ``workers`` threads; the
    result is bit-identical for every worker count.
    """
    if oracle.mode != FINITE_SUM:
        raise UnsupportedOperationError(
            "full gradient needs a finite-sum oracle; use a snapshot mini-batch instead"
        )
    w = _check_w(oracle, w)
    starts = range(0, oracle.n, TREE_BLOCK)

    def block(start):
        ids = np.arange(start, min(start + TREE_BLOCK, oracle.n))
        return _pairwise(oracle.gradients(w, ids))

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(block, starts))
    else:
        partial = [block(s) for s in starts]
    g = _pairwise(np.stack(partial)) / oracle.n
    if counters is not None:
        counters.sfo += oracle.n
    return g


def gradient_mapping(w, grad, eta, reg):
    """``(w - prox_{eta psi}(w - eta grad)) / eta``; never touches counters."""
    if not eta > 0:
        raise InvalidArgumentError("eta must be positive")
    w = np.asarray(w, dtype=np.float64)
    return (w - prox(reg, w - eta * np.asarray(grad, dtype=np.float64), eta)) / eta
