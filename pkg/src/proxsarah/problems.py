"""Benchmark objectives: NN-PCA, sparse classification with nonconvex losses,
dense quadratic toys and a finite-outcome expectation oracle."""

import math

import numpy as np
from scipy import optimize
from scipy.special import expit, log1p

from .core import ExpectationOracle, FiniteSumOracle
from .errors import InvalidArgumentError
from .prox import Regularizer
from .rng import hashed_uniform

SIGMOID = "l1"
TWO_LAYER = "l2"
LOGISTIC_DIFF = "l3"
LOSSES = (SIGMOID, TWO_LAYER, LOGISTIC_DIFF)

#: Curvature bounds sup_s |l''(s)| at omega = 1; the sigmoid loss scales as
#: omega^2. 2 sech^2(x) tanh(x) peaks at tanh(x) = 1/sqrt(3).
SIGMOID_CURVATURE = 4.0 / (3.0 * math.sqrt(3.0))
TWO_LAYER_CURVATURE = 0.15405
LOGISTIC_DIFF_CURVATURE = 0.092372


# losses -------------------------------------------------------------------


def _sech2(x):
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def _softplus_diff(x, omega):
    """``log(1 + e^x) - log(1 + e^(x - omega))`` without overflow."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    hi = x - omega > 0
    mid = (x > 0) & ~hi
    lo = x <= 0
    out[hi] = omega + log1p(np.exp(-x[hi])) - log1p(np.exp(omega - x[hi]))
    out[mid] = x[mid] + log1p(np.exp(-x[mid])) - log1p(np.exp(x[mid] - omega))
    out[lo] = log1p(np.exp(x[lo])) - log1p(np.exp(x[lo] - omega))
    return out


def loss_value(kind, s, tau, omega=1.0):
    s = np.asarray(s, dtype=np.float64)
    z = tau * s
    if kind == SIGMOID:
        return 1.0 - np.tanh(omega * z)
    if kind == TWO_LAYER:
        return expit(-z) ** 2
    if kind == LOGISTIC_DIFF:
        return _softplus_diff(-z, omega)
    raise InvalidArgumentError(f"unknown loss {kind!r}")


def loss_derivative(kind, s, tau, omega=1.0):
    """Derivative with respect to the score ``s``.

    sigmoid:        -omega tau sech^2(omega tau s)
    two-layer:      -2 tau sigma(-tau s)^2 sigma(tau s)
    logistic diff:   tau (sigma(-tau s - omega) - sigma(-tau s))
    """
    s = np.asarray(s, dtype=np.float64)
    z = tau * s
    if kind == SIGMOID:
        return -omega * tau * _sech2(omega * z)
    if kind == TWO_LAYER:
        return -2.0 * tau * expit(-z) ** 2 * expit(z)
    if kind == LOGISTIC_DIFF:
        return tau * (expit(-z - omega) - expit(-z))
    raise InvalidArgumentError(f"unknown loss {kind!r}")


def loss_second_derivative(kind, s, tau, omega=1.0):
    s = np.asarray(s, dtype=np.float64)
    z = tau * s
    if kind == SIGMOID:
        t = np.tanh(omega * z)
        return 2.0 * omega**2 * t * _sech2(omega * z)
    if kind == TWO_LAYER:
        p, q = expit(z), expit(-z)
        # d/ds of -2 tau q^2 p, with dq/ds = -tau p q and dp/ds = tau p q
        return 2.0 * p * q**2 * (2.0 * p - q)
    if kind == LOGISTIC_DIFF:
        a, b = expit(-z - omega), expit(-z)
        return -(a * (1 - a)) + b * (1 - b)
    raise InvalidArgumentError(f"unknown loss {kind!r}")


def loss_smoothness(kind, omega=1.0):
    """Smoothness constant of ``l(., tau)`` for ``|tau| = 1``."""
    if kind == SIGMOID:
        return SIGMOID_CURVATURE * omega**2
    if kind == TWO_LAYER:
        return TWO_LAYER_CURVATURE
    if kind == LOGISTIC_DIFF:
        if omega == 1.0:
            return LOGISTIC_DIFF_CURVATURE
        return _numeric_curvature(kind, omega)
    raise InvalidArgumentError(f"unknown loss {kind!r}")


def _numeric_curvature(kind, omega):
    grid = np.linspace(-40, 40, 80001)
    vals = np.abs(loss_second_derivative(kind, grid, 1.0, omega))
    s0 = grid[np.argmax(vals)]
    res = optimize.minimize_scalar(
        lambda s: -abs(float(loss_second_derivative(kind, s, 1.0, omega))),
        bracket=(s0 - 1e-3, s0, s0 + 1e-3),
    )
    return max(float(vals.max()), -float(res.fun)) * (1 + 1e-9)


# sparse linear-model oracles ------------------------------------------------


class LinearModelOracle(FiniteSumOracle):
    """Components ``f_i(w) = phi(a_i^T w, b_i)`` over the rows of a CSR matrix.

    The gradient of a component is ``phi'(a_i^T w, b_i) a_i``. Scores are
    accumulated with ``bincount`` (sequential in storage order) so a row's
    result never depends on which other rows share the batch.
    """

    def __init__(self, dataset, lipschitz):
        super().__init__(dataset.n, dataset.d, lipschitz)
        self.dataset = dataset
        m = dataset.matrix
        self._indptr = m.indptr
        self._indices = m.indices
        self._data = m.data
        self._labels = dataset.labels

    def _gather(self, ids):
        starts = self._indptr[ids]
        lengths = self._indptr[ids + 1] - starts
        total = int(lengths.sum())
        row_of = np.repeat(np.arange(ids.size), lengths)
        offsets = np.arange(total) - np.repeat(np.cumsum(lengths) - lengths, lengths)
        pos = np.repeat(starts, lengths) + offsets
        return row_of, self._indices[pos], self._data[pos]

    def scores(self, w, ids):
        ids = np.asarray(ids, dtype=np.int64)
        row_of, cols, vals = self._gather(ids)
        return np.bincount(row_of, weights=vals * w[cols], minlength=ids.size)

    def _labels_of(self, ids):
        return None if self._labels is None else self._labels[ids]

    def phi(self, s, labels):
        raise NotImplementedError

    def dphi(self, s, labels):
        raise NotImplementedError

    def gradients(self, w, ids):
        ids = np.asarray(ids, dtype=np.int64)
        row_of, cols, vals = self._gather(ids)
        s = np.bincount(row_of, weights=vals * w[cols], minlength=ids.size)
        coef = self.dphi(s, self._labels_of(ids))
        out = np.zeros((ids.size, self.d))
        out[row_of, cols] = vals * coef[row_of]
        return out

    def values(self, w, ids):
        ids = np.asarray(ids, dtype=np.int64)
        return self.phi(self.scores(w, ids), self._labels_of(ids))


def _unit_rows(dataset):
    return bool(np.all(np.abs(dataset.row_norms() - 1.0) <= 1e-12))


class NnPcaProblem(LinearModelOracle):
    """``f_i(w) = -(1/2)(z_i^T w)^2`` over the unit ball of the nonnegative orthant."""

    def __init__(self, dataset):
        if not _unit_rows(dataset):
            raise InvalidArgumentError("NN-PCA needs unit-norm samples (normalize_rows first)")
        super().__init__(dataset, 1.0)
        self.regularizer = Regularizer.nonneg_ball(1.0)

    def phi(self, s, labels):
        return -0.5 * s * s

    def dphi(self, s, labels):
        return -s

    def initial_point(self):
        # w = 0 is stationary for this objective
        return np.full(self.d, 1.0 / math.sqrt(self.d))


class BinClassProblem(LinearModelOracle):
    """``f_i(w) = l(a_i^T w, b_i)`` with ``psi = lam ||w||_1``."""

    def __init__(self, dataset, loss=TWO_LAYER, omega=1.0, lam=None):
        if loss not in LOSSES:
            raise InvalidArgumentError(f"unknown loss {loss!r}; expected one of {LOSSES}")
        if dataset.labels is None or not np.all(np.isin(dataset.labels, (-1.0, 1.0))):
            raise InvalidArgumentError("labels must be in {-1, +1} (canonicalize_labels first)")
        if not omega > 0:
            raise InvalidArgumentError("omega must be positive")
        scale = 1.0 if _unit_rows(dataset) else float(np.max(dataset.row_norms()) ** 2)
        super().__init__(dataset, loss_smoothness(loss, omega) * scale)
        self.loss = loss
        self.omega = float(omega)
        self.lam = 1.0 / dataset.n if lam is None else float(lam)
        self.regularizer = Regularizer.l1(self.lam)

    def phi(self, s, labels):
        return loss_value(self.loss, s, labels, self.omega)

    def dphi(self, s, labels):
        return loss_derivative(self.loss, s, labels, self.omega)

    def initial_point(self):
        return np.zeros(self.d)


def accuracy(w, dataset):
    """Share of rows with ``sign(a_i^T w) == b_i``; a zero score predicts +1."""
    if dataset.labels is None:
        raise InvalidArgumentError("accuracy needs labels")
    if dataset.n == 0:
        return float("nan")
    pred = np.where(dataset.matrix @ w >= 0, 1.0, -1.0)
    return float(np.mean(pred == dataset.labels))


# dense toys -------------------------------------------------------------------


def _avg_smoothness(hessians, probs=None):
    k = hessians.shape[0]
    probs = np.full(k, 1.0 / k) if probs is None else probs
    m = np.einsum("k,kji,kjl->il", probs, hessians, hessians)
    return math.sqrt(max(float(np.linalg.eigvalsh(m)[-1]), 0.0))


class QuadraticOracle(FiniteSumOracle):
    """``f_i(w) = (1/2) w^T H_i w + g_i^T w`` with dense ``H_i``.

    The smoothness constant is the exact average-smoothness constant
    ``sqrt(lambda_max((1/n) sum H_i^T H_i))`` unless one is given.
    """

    def __init__(self, hessians, offsets, lipschitz=None):
        hessians = np.asarray(hessians, dtype=np.float64)
        offsets = np.asarray(offsets, dtype=np.float64)
        if hessians.ndim == 1:
            hessians = hessians[:, None, None]
        if offsets.ndim == 1:
            offsets = offsets[:, None]
        n, d = offsets.shape
        if hessians.shape != (n, d, d):
            raise InvalidArgumentError("hessians must have shape (n, d, d)")
        L = _avg_smoothness(hessians) if lipschitz is None else lipschitz
        super().__init__(n, d, max(L, 1e-300))
        self.H = hessians
        self.g = offsets

    @classmethod
    def random(cls, n, d, seed, scale=1.0):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(n, d, d)) * scale
        return cls(0.5 * (a + a.transpose(0, 2, 1)), rng.normal(size=(n, d)) * scale)

    def gradients(self, w, ids):
        ids = np.asarray(ids, dtype=np.int64)
        return (self.H[ids] * w[None, None, :]).sum(axis=2) + self.g[ids]

    def values(self, w, ids):
        ids = np.asarray(ids, dtype=np.int64)
        hw = (self.H[ids] * w[None, None, :]).sum(axis=2)
        return 0.5 * (hw * w).sum(axis=1) + (self.g[ids] * w).sum(axis=1)


class SyntheticExpectation(ExpectationOracle):
    """Expectation oracle over at most 8 quadratic outcomes.

    Outcome ``k`` (probability ``probs[k]``) contributes
    ``f(w; k) = (1/2) w^T H_k w + g_k^T w``. Draw ``id`` selects its outcome
    from a stateless uniform keyed by ``(seed, id)``. ``sigma_sq`` is the
    exact maximum of the gradient variance over the ball ``||w|| <= radius``.
    """

    MAX_OUTCOMES = 8

    def __init__(self, hessians, offsets, probs, seed=0, radius=1.0):
        hessians = np.asarray(hessians, dtype=np.float64)
        offsets = np.asarray(offsets, dtype=np.float64)
        probs = np.asarray(probs, dtype=np.float64)
        k, d = offsets.shape
        if k > self.MAX_OUTCOMES:
            raise InvalidArgumentError(f"at most {self.MAX_OUTCOMES} outcomes")
        if hessians.shape != (k, d, d) or probs.shape != (k,):
            raise InvalidArgumentError("inconsistent outcome shapes")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("probabilities must be positive and sum to 1")
        super().__init__(d, max(_avg_smoothness(hessians, probs), 1e-300), seed)
        self.H = hessians
        self.g = offsets
        self.probs = probs
        self.radius = float(radius)
        self._cdf = np.cumsum(probs)
        self._cdf[-1] = 1.0
        self.sigma_sq = self._max_variance()

    @classmethod
    def random(cls, k, d, seed, radius=1.0):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(k, d, d))
        probs = rng.uniform(0.5, 1.5, size=k)
        return cls(
            0.5 * (a + a.transpose(0, 2, 1)),
            rng.normal(size=(k, d)),
            probs / probs.sum(),
            seed=seed,
            radius=radius,
        )

    @property
    def n_outcomes(self):
        return self.probs.size

    def outcomes(self, ids):
        u = hashed_uniform(self.seed, ids)
        return np.minimum(np.searchsorted(self._cdf, u, side="right"), self.n_outcomes - 1)

    def outcome_gradients(self, w, outcomes):
        outcomes = np.asarray(outcomes, dtype=np.int64)
        return (self.H[outcomes] * w[None, None, :]).sum(axis=2) + self.g[outcomes]

    def gradients(self, w, ids):
        return self.outcome_gradients(w, self.outcomes(ids))

    def values(self, w, ids):
        k = self.outcomes(ids)
        hw = (self.H[k] * w[None, None, :]).sum(axis=2)
        return 0.5 * (hw * w).sum(axis=1) + (self.g[k] * w).sum(axis=1)

    def exact_gradient(self, w):
        return self.probs @ self.outcome_gradients(w, np.arange(self.n_outcomes))

    def exact_objective(self, w):
        hw = (self.H * w[None, None, :]).sum(axis=2)
        vals = 0.5 * (hw * w).sum(axis=1) + self.g @ w
        return float(self.probs @ vals)

    def variance(self, w):
        """``E ||grad f(w; xi) - grad f(w)||^2`` by enumeration."""
        grads = self.outcome_gradients(w, np.arange(self.n_outcomes))
        dev = grads - self.probs @ grads
        return float(self.probs @ (dev * dev).sum(axis=1))

    def _max_variance(self):
        # variance(w) = w^T Q w + 2 q^T w + c with Q PSD; maximize on the sphere
        h_bar = np.tensordot(self.probs, self.H, axes=1)
        g_bar = self.probs @ self.g
        a = self.H - h_bar
        e = self.g - g_bar
        Q = np.einsum("k,kji,kjl->il", self.probs, a, a)
        q = np.einsum("k,kji,kj->i", self.probs, a, e)
        c = float(self.probs @ (e * e).sum(axis=1))
        lam, V = np.linalg.eigh(Q)
        qt = V.T @ q
        R = self.radius
        top = lam[-1]
        scale = max(abs(top), 1.0)
        on_top = np.abs(lam - top) <= 1e-12 * scale

        def value(w):
            return float(w @ Q @ w + 2 * q @ w + c)

        rest = ~on_top
        if np.linalg.norm(qt[on_top]) <= 1e-14 * max(np.linalg.norm(qt), 1.0):
            # possible hard case: mu = top
            y = np.zeros_like(qt)
            y[rest] = qt[rest] / (top - lam[rest])
            ny = np.linalg.norm(y)
            if ny <= R:
                y[np.flatnonzero(on_top)[0]] = math.sqrt(R * R - ny * ny)
                return value(V @ y)

        def norm_gap(mu):
            return np.linalg.norm(qt / (mu - lam)) - R

        lo = top + 1e-15 * scale
        hi = top + np.linalg.norm(q) / R + scale
        while norm_gap(hi) > 0:
            hi = top + 2 * (hi - top)
        while norm_gap(lo) < 0 and lo > top:
            lo = top + (lo - top) / 2
            if lo - top < 1e-300:
                break
        mu = optimize.brentq(norm_gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        w = V @ (qt / (mu - lam))
        return value(w * (R / np.linalg.norm(w)))


def empirical_smoothness_check(problem, trials=100, seed=0, scale=1.0):
    """Largest observed ``(1/n) sum ||grad f_i(w) - grad f_i(w')||^2 / ||w - w'||^2``."""
    rng = np.random.default_rng(seed)
    ids = np.arange(problem.n)
    worst = 0.0
    for _ in range(trials):
        w = rng.normal(size=problem.d) * scale
        v = rng.normal(size=problem.d) * scale
        diff = problem.gradients(w, ids) - problem.gradients(v, ids)
        ratio = float(np.mean((diff * diff).sum(axis=1))) / float(np.sum((w - v) ** 2))
        worst = max(worst, ratio)
    return worst
