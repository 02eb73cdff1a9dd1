"""Brute-force property checks behind ``proxsarah verify``.

Every check compares a library quantity against an independent computation
(exact enumeration or a formula written out here) and reports the largest
residual seen. Closed forms are deliberately re-derived inline so that a
perturbed library formula cannot agree with itself.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import stepsize
from .core import full_gradient
from .estimators import (
    all_subsets,
    brute_force_variance,
    enumerate_sarah_paths,
    enumerate_snapshot_means,
    expectation_snapshot_variance,
    expectation_variance,
    snapshot_variance,
)
from .problems import QuadraticOracle, SyntheticExpectation
from .rng import RngStream

IDENTITY_TOL = 1e-12
RECURSION_TOL = 1e-10


@dataclass
class CheckResult:
    name: str
    max_residual: float
    tol: float
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures and self.max_residual <= self.tol


class _Tracker:
    def __init__(self, name, tol):
        self.result = CheckResult(name, 0.0, tol)

    def see(self, got, want, **inputs):
        got = np.asarray(got, dtype=float)
        want = np.asarray(want, dtype=float)
        scale = max(1.0, float(np.max(np.abs(want))) if want.size else 1.0)
        r = float(np.max(np.abs(got - want))) / scale if got.size else 0.0
        if not math.isfinite(r):
            r = math.inf
        self.result.max_residual = max(self.result.max_residual, r)
        if r > self.result.tol:
            self.result.failures.append({**inputs, "got": got.tolist(), "want": want.tolist()})

    def require(self, ok, **inputs):
        if not ok:
            self.result.failures.append(inputs)


def _sq(x):
    return float(np.dot(x, x))


def _quad(n, d, seed):
    return QuadraticOracle.random(n, d, seed)


def _points(d, seed, count=2):
    rng = RngStream(seed).spawn("points")
    return [rng.normal(d) for _ in range(count)]


# estimator identities ------------------------------------------------------


def check_minibatch_variance(seeds=range(3)):
    tr = _Tracker("mini-batch variance (finite sum)", IDENTITY_TOL)
    for seed in seeds:
        oracle = _quad(5, 3, seed)
        w_t, w_prev = _points(3, seed)
        for b in range(1, 5):
            enum, closed = brute_force_variance(oracle, w_t, w_prev, b)
            n = 5
            ids = np.arange(n)
            D = oracle.gradients(w_t, ids) - oracle.gradients(w_prev, ids)
            own = n * (b - 1) / (b * (n - 1)) * _sq(D.mean(0)) + (n - b) / (b * (n - 1)) * np.mean(
                [_sq(r) for r in D]
            )
            tr.see(enum, own, seed=seed, b_hat=b)
            tr.see(closed, own, seed=seed, b_hat=b)
    return tr.result


def check_expectation_variance(seeds=range(3)):
    tr = _Tracker("mini-batch variance (expectation)", IDENTITY_TOL)
    for seed in seeds:
        oracle = SyntheticExpectation.random(3, 2, seed)
        w_t, w_prev = _points(2, seed)
        for b in (1, 2, 3):
            enum, closed = expectation_variance(oracle, w_t, w_prev, b)
            tr.see(enum, closed, seed=seed, b=b)
    return tr.result


def check_snapshot_unbiased(seeds=range(3)):
    tr = _Tracker("snapshot unbiasedness", IDENTITY_TOL)
    for seed in seeds:
        for n in (2, 4, 6):
            oracle = _quad(n, 3, seed)
            (w,) = _points(3, seed, 1)
            full = full_gradient(oracle, w)
            for b in range(1, n + 1):
                tr.see(enumerate_snapshot_means(oracle, w, b).mean(0), full, seed=seed, n=n, b=b)
    return tr.result


def check_snapshot_variance(seeds=range(3)):
    tr = _Tracker("snapshot variance", IDENTITY_TOL)
    for seed in seeds:
        for n in (3, 6):
            oracle = _quad(n, 3, seed)
            (w,) = _points(3, seed, 1)
            for b in range(1, n + 1):
                enum, closed = snapshot_variance(oracle, w, b)
                tr.see(enum, closed, seed=seed, n=n, b=b)
        oracle = SyntheticExpectation.random(3, 2, seed)
        (w,) = _points(2, seed, 1)
        for b in (1, 2, 3):
            enum, closed = expectation_snapshot_variance(oracle, w, b)
            tr.see(enum, closed, seed=seed, b=b)
    return tr.result


def check_sarah_conditional_bias(seeds=range(3)):
    tr = _Tracker("SARAH conditional mean", IDENTITY_TOL)
    for seed in seeds:
        oracle = _quad(5, 3, seed)
        w_prev, w_t = _points(3, seed)
        v_prev = RngStream(seed).spawn("v").normal(3)
        ids = np.arange(5)
        D = oracle.gradients(w_t, ids) - oracle.gradients(w_prev, ids)
        for b in range(1, 6):
            mean = np.mean([v_prev + D[s].mean(0) for s in all_subsets(5, b)], axis=0)
            want = full_gradient(oracle, w_t) + (v_prev - full_gradient(oracle, w_prev))
            tr.see(mean, want, seed=seed, b_hat=b)
    return tr.result


def check_sarah_error_decomposition(seeds=range(2)):
    """Expected squared estimator error along every SARAH path equals the
    snapshot error plus accumulated increments minus gradient changes."""
    tr = _Tracker("SARAH error decomposition", IDENTITY_TOL)
    for seed in seeds:
        for n, b_s, b_hat, steps in ((4, 2, 1, 2), (5, 5, 2, 2), (5, 3, 2, 1), (3, 1, 1, 2)):
            oracle = _quad(n, 2, seed)
            (w0,) = _points(2, seed, 1)
            eta = 0.3

            def step(t, w, v):
                return w - eta * v

            lhs = np.zeros(steps + 1)
            inc = np.zeros(steps + 1)
            gchg = np.zeros(steps + 1)
            err0 = 0.0
            for prob, ws, vs in enumerate_sarah_paths(oracle, w0, b_s, b_hat, steps, step):
                grads = [full_gradient(oracle, w) for w in ws]
                err0 += prob * _sq(vs[0] - grads[0])
                for t in range(steps + 1):
                    lhs[t] += prob * _sq(vs[t] - grads[t])
                    if t:
                        inc[t] += prob * _sq(vs[t] - vs[t - 1])
                        gchg[t] += prob * _sq(grads[t] - grads[t - 1])
            for t in range(steps + 1):
                rhs = err0 + inc[1 : t + 1].sum() - gchg[1 : t + 1].sum()
                tr.see(lhs[t], rhs, seed=seed, n=n, b_s=b_s, b_hat=b_hat, t=t)
    return tr.result


# step-size rules -----------------------------------------------------------


def check_constant_composite():
    tr = _Tracker("constant composite steps", IDENTITY_TOL)
    s = stepsize.constant_composite(1.0, 6, 1, 101)
    tr.see([s.gammas[0], s.etas[0]], [1.0 / 3.0, 6.0 / 13.0], case="L=1 m=6 b=1 n=101")
    s = stepsize.constant_composite(1.0, 4, 6)
    tr.see([s.gammas[0], s.etas[0]], [1.0, 0.4], case="expectation L=1 m=4 b=6")
    rng = RngStream(11).spawn("constant")
    for _ in range(200):
        n = 2 + rng.randbelow(5000)
        b = 1 + rng.randbelow(n - 1)
        m = 1 + rng.randbelow(500)
        L = 0.1 + 10 * rng.uniform()
        omega = 3.0 * (n - b) / (2.0 * b * (n - 1))
        root = math.sqrt(omega * m)
        s = stepsize.constant_composite(L, m, b, n)
        tr.see(
            [s.gammas[0], s.etas[0]],
            [min(1.0 / (L * root), 1.0), 2.0 * root / (4.0 * root + 1.0)],
            n=n, b_hat=b, m=m, L=L,
        )
        # eta < 1/2 always; eta >= 2/5 exactly when omega * m >= 1
        tr.require(s.etas[0] < 0.5, n=n, b_hat=b, m=m, eta=float(s.etas[0]))
        if omega * m >= 1.0:
            tr.require(s.etas[0] >= 0.4, n=n, b_hat=b, m=m, eta=float(s.etas[0]))
    return tr.result


def _own_backward(L, delta, nu, m, base):
    g = [0.0] * (m + 1)
    g[m] = delta / L
    tail = 0.0
    for t in range(m - 1, -1, -1):
        tail += g[t + 1]
        g[t] = delta / (L * (base + nu * L * tail))
    return g


def check_adaptive_composite():
    tr = _Tracker("adaptive composite recursion", IDENTITY_TOL)
    s = stepsize.adaptive_composite(1.0, 0.5, 2, 1, 101)
    tr.see(s.gammas, [1.0 / 2.75, 0.5, 1.0], case="L=1 eta=1/2 m=2 b=1 n=101")
    rng = RngStream(12).spawn("adaptive")
    for _ in range(200):
        n = 3 + rng.randbelow(3000)
        b = 1 + rng.randbelow(n - 1)
        m = 1 + rng.randbelow(256)
        L = 0.1 + 10 * rng.uniform()
        eta = 0.05 + 0.6 * rng.uniform()
        delta = 2.0 / eta - 3.0
        nu = (1.0 + 2.0 * eta * eta) * (n - b) / (b * (n - 1))
        for form, base in (("eta-base", eta), ("unit-base", 1.0)):
            g, _, _ = stepsize.adaptive_composite_weights(L, eta, m, b, n, form)
            tr.see(g, _own_backward(L, delta, nu, m, base), n=n, b_hat=b, m=m, L=L, eta=eta, form=form)
            bound = 2.0 * delta * (m + 1) / (L * (math.sqrt(1.0 + 2.0 * delta * nu * m) + 1.0))
            tr.require(g.sum() >= bound * (1 - 1e-12), n=n, b_hat=b, m=m, L=L, eta=eta, form=form)
    return tr.result


def check_noncomposite():
    tr = _Tracker("non-composite adaptive recursion", IDENTITY_TOL)
    s = stepsize.adaptive_noncomposite(1.0, 2, 1.0)
    tr.see(s.etas, [0.4, 0.5, 1.0], case="L=1 m=2 rho=1")
    rng = RngStream(13).spawn("noncomposite")
    for _ in range(200):
        m = rng.randbelow(257)
        L = 0.1 + 10 * rng.uniform()
        rho = 0.01 + 2 * rng.uniform()
        s = stepsize.adaptive_noncomposite(L, m, rho)
        tr.see(s.etas, _own_backward(L, 1.0, rho, m, 1.0), m=m, L=L, rho=rho)
        bound = 2.0 * (m + 1) / ((math.sqrt(2.0 * rho * m + 1.0) + 1.0) * L)
        tr.require(s.etas.sum() >= bound * (1 - 1e-12), m=m, L=L, rho=rho)
    return tr.result


def check_tight_recursion():
    tr = _Tracker("generic recursion tightness", RECURSION_TOL)
    tr.see(stepsize.tight_recursion(1.0, 1.0, 1.0, 1), [0.5, 1.0], case="L=delta=nu=1 m=1")
    rng = RngStream(14).spawn("tight-recursion")
    for _ in range(200):
        m = rng.randbelow(257)
        L = 0.1 + 10 * rng.uniform()
        delta = 0.01 + 5 * rng.uniform()
        nu = 0.01 + 5 * rng.uniform()
        g = stepsize.tight_recursion(L, delta, nu, m)
        res = stepsize.step_condition_residuals(g, L, delta, nu)
        tr.see(res, np.zeros_like(res), m=m, L=L, delta=delta, nu=nu)
        bound = 2.0 * delta * (m + 1) / (L * (math.sqrt(1.0 + 2.0 * delta * nu * m) + 1.0))
        tr.require(g.sum() >= bound * (1 - 1e-12), m=m, L=L, delta=delta, nu=nu)
    return tr.result


def check_tradeoff():
    tr = _Tracker("trade-off configuration", IDENTITY_TOL)
    b_hat, eta = stepsize.tradeoff_config(1.0, 1.0, 10, 100)
    tr.see([b_hat, eta], [13, 0.4], case="gamma=1 L=1 m=10 n=100")
    return tr.result


CHECKS = (
    check_minibatch_variance,
    check_expectation_variance,
    check_snapshot_unbiased,
    check_snapshot_variance,
    check_sarah_conditional_bias,
    check_sarah_error_decomposition,
    check_constant_composite,
    check_adaptive_composite,
    check_noncomposite,
    check_tight_recursion,
    check_tradeoff,
)


def run_all():
    return [check() for check in CHECKS]


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  {'max residual':>12}  {'tol':>7}  result"]
    for r in results:
        lines.append(
            f"{r.name:<{width}}  {r.max_residual:12.3e}  {r.tol:7.0e}  {'PASS' if r.passed else 'FAIL'}"
        )
    return "\n".join(lines)
