"""SARAH and SVRG gradient estimators, mini-batch sampling, and exact
enumeration of their expectations on small instances."""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import FINITE_SUM, batch_mean_gradient, full_gradient, tree_sum
from .errors import EnumerationTooLargeError, InvalidArgumentError

ENUMERATION_MAX_N = 12


@dataclass
class SarahState:
    v: np.ndarray
    w_prev: np.ndarray


class BatchSampler:
    """Draws mini-batches for one oracle from one random stream.

    Finite sums get uniform subsets without replacement; expectation oracles
    get i.i.d. draw ids (63-bit values from the stream, which the oracle maps
    to samples).
    """

    def __init__(self, oracle, rng):
        self.oracle = oracle
        self.rng = rng

    def __call__(self, size):
        if self.oracle.mode == FINITE_SUM:
            return sample_minibatch(self.rng, self.oracle.n, size)
        if size < 1:
            raise InvalidArgumentError("batch size must be positive")
        return (self.rng.raw(size) >> np.uint64(1)).astype(np.int64)


def sample_minibatch(rng, n, b_hat):
    """Uniform ``b_hat``-subset of ``range(n)``, sorted."""
    if not 1 <= b_hat <= n:
        raise InvalidArgumentError(f"batch size {b_hat} outside [1, {n}]")
    return rng.sample_without_replacement(n, b_hat)


def sarah_snapshot(oracle, w0, b_s, sampler=None, counters=None, workers=1):
    """Snapshot estimator at ``w0``: exact full gradient when ``b_s == n``,
    otherwise the mean gradient of a fresh mini-batch of size ``b_s``."""
    w0 = np.asarray(w0, dtype=np.float64)
    if oracle.mode == FINITE_SUM:
        if not 1 <= b_s <= oracle.n:
            raise InvalidArgumentError(f"snapshot batch {b_s} outside [1, {oracle.n}]")
        if b_s == oracle.n:
            return SarahState(full_gradient(oracle, w0, counters, workers), w0.copy())
    elif b_s < 1:
        raise InvalidArgumentError("snapshot batch must be positive")
    ids = sampler(b_s)
    return SarahState(batch_mean_gradient(oracle, w0, ids, counters), w0.copy())


def sarah_update(state, oracle, w_t, batch, counters=None):
    """``v + (1/|B|) sum_{i in B} (grad f_i(w_t) - grad f_i(w_prev))``."""
    w_t = np.asarray(w_t, dtype=np.float64)
    batch = np.asarray(batch, dtype=np.int64)
    diff = oracle.gradients(w_t, batch) - oracle.gradients(state.w_prev, batch)
    if counters is not None:
        counters.sfo += 2 * batch.size
    return SarahState(state.v + tree_sum(diff) / batch.size, w_t.copy())


def svrg_estimator(oracle, w_t, snapshot_w, snapshot_grad, batch, counters=None):
    """``grad f(w~) + (1/|B|) sum_{i in B} (grad f_i(w_t) - grad f_i(w~))``."""
    batch = np.asarray(batch, dtype=np.int64)
    diff = oracle.gradients(w_t, batch) - oracle.gradients(snapshot_w, batch)
    if counters is not None:
        counters.sfo += 2 * batch.size
    return snapshot_grad + tree_sum(diff) / batch.size


# exact enumeration --------------------------------------------------------


def _guard(oracle):
    if oracle.mode != FINITE_SUM:
        raise InvalidArgumentError("enumeration needs a finite-sum oracle")
    if oracle.n > ENUMERATION_MAX_N:
        raise EnumerationTooLargeError(
            f"n = {oracle.n} exceeds the enumeration limit {ENUMERATION_MAX_N}"
        )


def all_subsets(n, b):
    return [np.array(c, dtype=np.int64) for c in itertools.combinations(range(n), b)]


def sq(x):
    return float(np.dot(x, x))


def brute_force_variance(oracle, w_t, w_prev, b_hat):
    """``E ||v_t - v_{t-1}||^2`` over every ``b_hat``-subset, and its closed form.

    Returns ``(enumerated, closed_form)`` with the closed form
    ``n(b-1)/(b(n-1)) ||D||^2 + (n-b)/(b(n-1)) (1/n) sum_i ||D_i||^2`` where
    ``D_i = grad f_i(w_t) - grad f_i(w_prev)`` and ``D`` is their mean.
    """
    _guard(oracle)
    n = oracle.n
    if not 1 <= b_hat <= n:
        raise InvalidArgumentError(f"b_hat outside [1, {n}]")
    ids = np.arange(n)
    diffs = oracle.gradients(np.asarray(w_t, float), ids) - oracle.gradients(
        np.asarray(w_prev, float), ids
    )
    subsets = all_subsets(n, b_hat)
    enumerated = math.fsum(sq(diffs[s].mean(axis=0)) for s in subsets) / len(subsets)
    mean_diff = diffs.mean(axis=0)
    avg_sq = math.fsum(sq(row) for row in diffs) / n
    if n == 1:
        return enumerated, sq(mean_diff)
    closed = (n * (b_hat - 1)) / (b_hat * (n - 1)) * sq(mean_diff) + (n - b_hat) / (
        b_hat * (n - 1)
    ) * avg_sq
    return enumerated, closed


def snapshot_variance(oracle, w, b):
    """Enumerated ``E ||mean_B grad f_i(w) - grad f(w)||^2`` over all ``b``-subsets
    and the finite-population value ``(1/b)((n-b)/(n-1)) sigma_n^2``."""
    _guard(oracle)
    n = oracle.n
    grads = oracle.gradients(np.asarray(w, float), np.arange(n))
    full = grads.mean(axis=0)
    subsets = all_subsets(n, b)
    enumerated = math.fsum(sq(grads[s].mean(axis=0) - full) for s in subsets) / len(subsets)
    sigma_n = math.fsum(sq(g) for g in grads) / n - sq(full)
    closed = 0.0 if n == 1 else (n - b) / (b * (n - 1)) * sigma_n
    return enumerated, closed


def enumerate_snapshot_means(oracle, w, b):
    """Mean gradient of every ``b``-subset, stacked (each subset equally likely)."""
    _guard(oracle)
    grads = oracle.gradients(np.asarray(w, float), np.arange(oracle.n))
    return np.stack([grads[s].mean(axis=0) for s in all_subsets(oracle.n, b)])


def enumerate_sarah_paths(oracle, w0, b_s, b_hat, steps, step):
    """Every realization of ``steps`` SARAH updates started from a snapshot.

    ``step(t, w_t, v_t)`` returns ``w_{t+1}``. Yields
    ``(probability, ws, vs)`` for every combination of snapshot subset and
    inner subsets; ``ws`` and ``vs`` have ``steps + 1`` entries.
    """
    _guard(oracle)
    n = oracle.n
    ids = np.arange(n)
    w0 = np.asarray(w0, dtype=np.float64)
    snap = all_subsets(n, b_s)
    inner = all_subsets(n, b_hat)
    p0 = 1.0 / len(snap)
    p_inner = 1.0 / len(inner)
    g0 = oracle.gradients(w0, ids)

    def extend(prob, ws, vs, t):
        if t == steps:
            yield prob, ws, vs
            return
        w_next = step(t, ws[-1], vs[-1])
        g_next = oracle.gradients(w_next, ids)
        g_prev = oracle.gradients(ws[-1], ids)
        for batch in inner:
            v_next = vs[-1] + (g_next[batch] - g_prev[batch]).mean(axis=0)
            yield from extend(prob * p_inner, ws + [w_next], vs + [v_next], t + 1)

    for batch in snap:
        yield from extend(p0, [w0], [g0[batch].mean(axis=0)], 0)


def expectation_variance(oracle, w_t, w_prev, b):
    """For a finite-outcome expectation oracle: ``E ||v_t - v_{t-1}||^2`` over all
    ``K^b`` i.i.d. outcome tuples, and ``(1 - 1/b)||D||^2 + (1/b) E||D(xi)||^2``."""
    k = oracle.n_outcomes
    if k**b > 10**6:
        raise EnumerationTooLargeError(f"{k}^{b} outcome tuples")
    outcomes = np.arange(k)
    diffs = oracle.outcome_gradients(np.asarray(w_t, float), outcomes) - oracle.outcome_gradients(
        np.asarray(w_prev, float), outcomes
    )
    p = oracle.probs
    terms = []
    for tup in itertools.product(range(k), repeat=b):
        prob = math.prod(p[j] for j in tup)
        terms.append(prob * sq(diffs[list(tup)].mean(axis=0)))
    enumerated = math.fsum(terms)
    mean_diff = p @ diffs
    closed = (1 - 1 / b) * sq(mean_diff) + (1 / b) * math.fsum(
        p[j] * sq(diffs[j]) for j in range(k)
    )
    return enumerated, closed


def expectation_snapshot_variance(oracle, w, b):
    """``E ||mean of b i.i.d. gradients - grad f(w)||^2`` by enumeration, and
    ``(1/b) E ||grad f(w; xi) - grad f(w)||^2``."""
    k = oracle.n_outcomes
    if k**b > 10**6:
        raise EnumerationTooLargeError(f"{k}^{b} outcome tuples")
    grads = oracle.outcome_gradients(np.asarray(w, float), np.arange(k))
    p = oracle.probs
    full = p @ grads
    terms = []
    for tup in itertools.product(range(k), repeat=b):
        prob = math.prod(p[j] for j in tup)
        terms.append(prob * sq(grads[list(tup)].mean(axis=0) - full))
    return math.fsum(terms), oracle.variance(w) / b
