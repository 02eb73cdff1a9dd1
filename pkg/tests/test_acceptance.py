"""Acceptance criteria, one group of tests per criterion.

The terminal summary (see conftest.py) prints a PASS/FAIL line for each
criterion. Tolerances and time limits are pinned as module constants.
"""

import itertools
import math
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy import stats

from proxsarah import presets, solvers, stepsize
from proxsarah.core import full_gradient
from proxsarah.data import synth_binclass, synth_nnpca
from proxsarah.estimators import BatchSampler
from proxsarah.problems import (
    LOGISTIC_DIFF,
    LOSSES,
    SIGMOID,
    TWO_LAYER,
    BinClassProblem,
    NnPcaProblem,
    QuadraticOracle,
    empirical_smoothness_check,
    loss_derivative,
    loss_value,
)
from proxsarah.prox import Regularizer
from proxsarah.rng import RngStream
from proxsarah.solvers import ProxSARAH, ProxSpiderBoost, SolverConfig

from helpers import ScalarOracle

IDENTITY_TOL = 1e-12
EXAMPLE_TOL = 1e-12
TIGHTNESS_TOL = 1e-10
FD_STEP = 1e-6
FD_TOL = 1e-6
SMOOTHNESS_SLACK = 1e-6
REDUCTION_TOL = 1e-12
GD_TOL = 1e-10
TARGET_G2 = 1e-6
SVRG_FACTOR = 10.0
CHI2_ALPHA = 1e-3

#: constants the smoothness ratios are checked against, with omega = 1
REFERENCE_L = {"nnpca": 1.0, SIGMOID: 0.7698, TWO_LAYER: 0.15405, LOGISTIC_DIFF: 0.092372}


@contextmanager
def within(seconds):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, f"took {elapsed:.1f} s (limit {seconds} s)"


def _sq(x):
    return float(np.dot(x, x))


def _scalar_quadratics(n, seed):
    rng = np.random.default_rng(seed)
    return QuadraticOracle(rng.normal(size=(n, 1, 1)), rng.normal(size=(n, 1)), lipschitz=1.0)


# 1. estimator identities ---------------------------------------------------


@pytest.mark.acceptance(1)
def test_minibatch_increment_variance_matches_enumeration():
    worst = 0.0
    with within(5):
        for seed in range(5):
            oracle = _scalar_quadratics(5, seed)
            w_t, w_prev = np.array([0.7]), np.array([-0.4])
            ids = np.arange(5)
            D = oracle.gradients(w_t, ids) - oracle.gradients(w_prev, ids)
            Dbar = D.mean(axis=0)
            for b in (1, 2, 3, 4):
                subsets = list(itertools.combinations(range(5), b))
                enum = math.fsum(_sq(D[list(s)].mean(axis=0)) for s in subsets) / len(subsets)
                closed = (5 * (b - 1)) / (b * 4) * _sq(Dbar) + (5 - b) / (b * 4) * np.mean((D * D).sum(1))
                worst = max(worst, abs(enum - closed) / max(1.0, abs(closed)))
    assert worst <= IDENTITY_TOL


def _paths(oracle, w0, b_s, b_hat, steps, eta):
    """Every SARAH path with its probability, enumerated directly."""
    n = oracle.n
    ids = np.arange(n)
    snaps = list(itertools.combinations(range(n), b_s))
    inner = list(itertools.combinations(range(n), b_hat))
    for s in snaps:
        for choice in itertools.product(inner, repeat=steps):
            ws = [w0]
            vs = [oracle.gradients(w0, ids)[list(s)].mean(axis=0)]
            for batch in choice:
                w = ws[-1] - eta * vs[-1]
                diff = oracle.gradients(w, ids)[list(batch)] - oracle.gradients(ws[-1], ids)[list(batch)]
                vs.append(vs[-1] + diff.mean(axis=0))
                ws.append(w)
            yield 1.0 / (len(snaps) * len(inner) ** steps), ws, vs


@pytest.mark.acceptance(1)
def test_sarah_bias_and_error_decomposition_on_paths():
    worst = 0.0
    with within(5):
        for seed, (n, b_s, b_hat, steps) in itertools.product(
            range(2), ((5, 5, 2, 2), (4, 2, 1, 2), (5, 3, 2, 1), (3, 1, 1, 2))
        ):
            oracle = QuadraticOracle.random(n, 2, seed=seed)
            w0 = np.array([0.5, -0.3])
            err = np.zeros(steps + 1)
            inc = np.zeros(steps + 1)
            chg = np.zeros(steps + 1)
            for p, ws, vs in _paths(oracle, w0, b_s, b_hat, steps, 0.3):
                grads = [full_gradient(oracle, w) for w in ws]
                for t in range(steps + 1):
                    err[t] += p * _sq(vs[t] - grads[t])
                    if t:
                        inc[t] += p * _sq(vs[t] - vs[t - 1])
                        chg[t] += p * _sq(grads[t] - grads[t - 1])
            for t in range(steps + 1):
                rhs = err[0] + inc[1:t + 1].sum() - chg[1:t + 1].sum()
                worst = max(worst, abs(err[t] - rhs) / max(1.0, rhs))

            # conditional mean: average over the last batch with the path prefix fixed
            ids = np.arange(n)
            w_prev, w_t = w0, w0 - 0.3 * full_gradient(oracle, w0)
            v_prev = np.array([0.2, 0.9])
            D = oracle.gradients(w_t, ids) - oracle.gradients(w_prev, ids)
            mean = np.mean([v_prev + D[list(s)].mean(0) for s in itertools.combinations(range(n), b_hat)], 0)
            want = full_gradient(oracle, w_t) + v_prev - full_gradient(oracle, w_prev)
            worst = max(worst, float(np.max(np.abs(mean - want))))
    assert worst <= IDENTITY_TOL


@pytest.mark.acceptance(1)
def test_snapshot_is_unbiased():
    worst = 0.0
    with within(5):
        for n in range(1, 7):
            oracle = QuadraticOracle.random(n, 3, seed=n)
            w = np.array([0.1, -1.0, 2.0])
            grads = oracle.gradients(w, np.arange(n))
            full = full_gradient(oracle, w)
            for b in range(1, n + 1):
                means = [grads[list(s)].mean(0) for s in itertools.combinations(range(n), b)]
                worst = max(worst, float(np.max(np.abs(np.mean(means, 0) - full))))
    assert worst <= IDENTITY_TOL


# 2. step-size rules ------------------------------------------------------


def _sigma_bound(L, delta, nu, m):
    return 2 * delta * (m + 1) / (L * (math.sqrt(1 + 2 * delta * nu * m) + 1))


@pytest.mark.acceptance(2)
def test_hand_derived_schedules():
    with within(5):
        adaptive = stepsize.adaptive_composite(1.0, 0.5, 2, 1, 101)
        np.testing.assert_allclose(adaptive.gammas, [1 / 2.75, 0.5, 1.0], rtol=0, atol=EXAMPLE_TOL)
        assert adaptive.sigma_m >= 6 / (math.sqrt(7) + 1)
        nonc = stepsize.adaptive_noncomposite(1.0, 2, 1.0)
        np.testing.assert_allclose(nonc.etas, [0.4, 0.5, 1.0], rtol=0, atol=EXAMPLE_TOL)
        assert nonc.sigma_m >= 6 / (math.sqrt(5) + 1)
        rec = stepsize.tight_recursion(1.0, 1.0, 1.0, 1)
        np.testing.assert_allclose(rec, [0.5, 1.0], rtol=0, atol=EXAMPLE_TOL)
        assert rec.sum() >= 4 / (math.sqrt(3) + 1)
        np.testing.assert_allclose(stepsize.tight_recursion(1.0, 1.0, 1.0, 2, constant=True), 0.5,
                                   rtol=0, atol=EXAMPLE_TOL)
        const = stepsize.constant_composite(1.0, 6, 1, 101)
        assert abs(const.gammas[0] - 1 / 3) <= EXAMPLE_TOL and abs(const.etas[0] - 6 / 13) <= EXAMPLE_TOL
        expct = stepsize.constant_composite(1.0, 4, 6)
        assert abs(expct.gammas[0] - 1) <= EXAMPLE_TOL and abs(expct.etas[0] - 0.4) <= EXAMPLE_TOL
        assert stepsize.tradeoff_config(1.0, 1.0, 10, 100) == (13, 0.4)


@pytest.mark.acceptance(2)
def test_tightness_and_sum_bounds_random():
    rng = np.random.default_rng(2024)
    worst = 0.0
    with within(5):
        for _ in range(200):
            L = float(rng.uniform(0.1, 10))
            delta, nu = rng.uniform(0.05, 5, size=2)
            m = int(rng.integers(0, 257))
            g = stepsize.tight_recursion(L, delta, nu, m)
            tails = np.concatenate([np.cumsum(g[::-1])[::-1][1:], [0.0]])
            res = nu * L * L * g * tails - delta + L * g
            res[-1] = L * g[-1] - delta
            worst = max(worst, float(np.max(np.abs(res))))
            assert g.sum() >= _sigma_bound(L, delta, nu, m) * (1 - 1e-12)

            n = int(rng.integers(3, 5000))
            b = int(rng.integers(1, n))
            eta = float(rng.uniform(0.05, 0.66))
            g, d_, w_ = stepsize.adaptive_composite_weights(L, eta, m, b, n)
            assert d_ == pytest.approx(2 / eta - 3, rel=1e-15)
            assert g.sum() >= _sigma_bound(L, d_, w_, m) * (1 - 1e-12)

            rho = float(rng.uniform(0.01, 3))
            steps = stepsize.adaptive_noncomposite(L, m, rho).etas
            assert steps.sum() >= 2 * (m + 1) / ((math.sqrt(2 * rho * m + 1) + 1) * L) * (1 - 1e-12)
    assert worst <= TIGHTNESS_TOL


def _finite_sum_sweep():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(2, 5000))
        b = int(rng.integers(1, n))
        m = int(rng.integers(1, 257))
        yield n, b, m, stepsize.constant_composite(1.0, m, b, n).etas[0]


@pytest.mark.acceptance(2)
def test_constant_eta_interval_where_it_is_attainable():
    # eta = 2r/(4r + 1) with r = sqrt(omega m): always below 1/2, and at
    # least 2/5 exactly when omega m >= 1
    cases = 0
    for n, b, m, eta in _finite_sum_sweep():
        assert eta < 0.5
        if stepsize.omega_finite_sum(n, b) * m >= 1:
            assert eta >= 0.4
            cases += 1
    assert cases >= 20


@pytest.mark.acceptance(2)
@pytest.mark.xfail(strict=True, reason="eta drops below 2/5 whenever omega m < 1; see the decisions ledger")
def test_constant_eta_interval_over_every_finite_sum_sweep():
    low = [(n, b, m, eta) for n, b, m, eta in _finite_sum_sweep() if not 0.4 <= eta < 0.5]
    assert not low, f"{len(low)} of 200 cases below 2/5, e.g. {low[0]}"


# 3. gradients ---------------------------------------------------------------


def _rel(num, ana):
    return abs(num - ana) / max(1.0, abs(ana))


@pytest.mark.acceptance(3)
def test_loss_derivatives_against_finite_differences():
    rng = np.random.default_rng(31)
    worst = 0.0
    with within(30):
        for kind in LOSSES:
            for _ in range(1000):
                s, tau = float(rng.uniform(-8, 8)), float(rng.choice([-1.0, 1.0]))
                num = (float(loss_value(kind, s + FD_STEP, tau)) - float(loss_value(kind, s - FD_STEP, tau))) / (2 * FD_STEP)
                worst = max(worst, _rel(num, float(loss_derivative(kind, s, tau))))
    assert worst <= FD_TOL


def _acceptance_problems():
    nn = NnPcaProblem(synth_nnpca(200, 30, 3))
    bc = synth_binclass(200, 30, 3, separability=0.8)
    return {"nnpca": nn, **{kind: BinClassProblem(bc, kind) for kind in LOSSES}}


@pytest.mark.acceptance(3)
def test_component_gradients_against_finite_differences():
    rng = np.random.default_rng(32)
    worst = 0.0
    with within(30):
        probs = list(_acceptance_problems().values())
        for k in range(1000):
            prob = probs[k % len(probs)]
            w = rng.normal(size=prob.d)
            i = int(rng.integers(prob.n))
            g = prob.gradients(w, [i])[0]
            j = int(rng.choice(prob.dataset.sample(i).indices))
            e = np.zeros(prob.d)
            e[j] = FD_STEP
            num = (prob.values(w + e, [i])[0] - prob.values(w - e, [i])[0]) / (2 * FD_STEP)
            worst = max(worst, _rel(num, g[j]))
            off = np.setdiff1d(np.arange(prob.d), prob.dataset.sample(i).indices)
            assert not np.any(g[off])
    assert worst <= FD_TOL


@pytest.mark.acceptance(3)
def test_average_smoothness_ratios():
    with within(30):
        for key, prob in _acceptance_problems().items():
            for scale in (0.1, 1.0, 10.0):
                ratio = empirical_smoothness_check(prob, trials=100, seed=5, scale=scale)
                assert ratio <= REFERENCE_L[key] ** 2 + SMOOTHNESS_SLACK, (key, scale, ratio)


# 4. reductions ---------------------------------------------------------------


class _Capture:
    def __init__(self):
        self.ws = []
        self.trace = None

    def start(self, unit, validation_ids=None):
        pass

    def __call__(self, w, counters):
        self.ws.append(np.array(w, copy=True))


@pytest.mark.acceptance(4)
def test_unit_weights_reproduce_spiderboost():
    prob = BinClassProblem(synth_binclass(80, 15, 6, separability=0.9), LOGISTIC_DIFF)
    m, b, eta = 8, 4, 0.9
    a, c = _Capture(), _Capture()
    sarah = ProxSARAH(stepsize.StepSchedule.constant(1.0, eta, m), b_hat=b)
    solvers.run(prob, prob.regularizer, SolverConfig(sarah, epochs=5, seed=2, trace_stride=1), a)
    solvers.run(prob, prob.regularizer, SolverConfig(ProxSpiderBoost(m, b, eta), epochs=5, seed=2, trace_stride=1), c)
    assert len(a.ws) == len(c.ws) == 1 + 3 * (m + 1)
    assert max(float(np.max(np.abs(x - y))) for x, y in zip(a.ws, c.ws)) <= REDUCTION_TOL


@pytest.mark.acceptance(4)
def test_unit_weights_without_regularizer_reproduce_sarah():
    oracle = QuadraticOracle.random(9, 4, seed=12)
    m, b, eta, seed = 6, 3, 0.05, 4
    cap = _Capture()
    cfg = SolverConfig(ProxSARAH(stepsize.StepSchedule.constant(1.0, eta, m), b_hat=b),
                       epochs=3, seed=seed, trace_stride=1)
    w0 = np.linspace(-1, 1, 4)
    res = solvers.run(oracle, Regularizer.zero(), cfg, cap, w0=w0)
    root, w, ref = RngStream(seed), w0, []
    for s in range(res.outer_iterations):
        draw = BatchSampler(oracle, root.spawn("inner", s))
        v = full_gradient(oracle, w)
        w_prev, w = w, w - eta * v
        for _ in range(m):
            batch = draw(b)
            v = v + (oracle.gradients(w, batch) - oracle.gradients(w_prev, batch)).mean(0)
            w_prev, w = w, w - eta * v
            ref.append(w)
        ref.append(w)
    assert float(np.max(np.abs(np.array(cap.ws[1:]) - np.array(ref)))) <= REDUCTION_TOL


@pytest.mark.acceptance(4)
def test_full_inner_batch_tracks_true_gradient():
    oracle = QuadraticOracle.random(7, 3, seed=3)
    m, eta = 10, 0.1
    cfg = SolverConfig(ProxSARAH(stepsize.StepSchedule.constant(0.7, eta, m), b_hat=7),
                       epochs=1, trace_stride=1)
    seen = []
    orig = solvers.sarah_update

    def spy(state, oracle_, w_t, batch, counters=None):
        out = orig(state, oracle_, w_t, batch, counters)
        seen.append(float(np.max(np.abs(out.v - full_gradient(oracle_, w_t)))))
        return out

    solvers.sarah_update = spy
    try:
        solvers.run(oracle, Regularizer.l1(0.05), cfg)
    finally:
        solvers.sarah_update = orig
    assert len(seen) == m
    assert max(seen) <= REDUCTION_TOL


@pytest.mark.acceptance(4)
def test_full_batch_matches_gradient_descent_on_half_square():
    half_square = (lambda w: 0.5 * w * w, lambda w: w)
    oracle = ScalarOracle([half_square, half_square, half_square])
    gamma, eta, steps = 0.8, 0.6, 50
    cap = _Capture()
    cfg = SolverConfig(ProxSARAH(stepsize.StepSchedule.constant(gamma, eta, steps - 1), b_hat=3),
                       epochs=1, trace_stride=1)
    res = solvers.run(oracle, Regularizer.zero(), cfg, cap, w0=np.array([2.0]))
    got = np.array([w[0] for w in cap.ws[1:-1]] + [res.final_w[0]])
    want = 2.0 * (1 - gamma * eta) ** np.arange(2, steps + 2)
    want[-1] = want[-2]
    assert np.max(np.abs(got - want)) <= GD_TOL


# 5. convergence --------------------------------------------------------------


def _last_within(trace, epochs):
    ep = trace.column("epoch_fraction")
    g = trace.column("grad_map_norm_sq")
    return g[ep <= epochs + 1e-9]


@pytest.mark.acceptance(5)
def test_desk_scale_nnpca_ordering():
    with within(60):
        prob = NnPcaProblem(synth_nnpca(1000, 50, 42))
        out = {}
        for name in ("v1", "A-v1", "svrg"):
            meth = presets.get(name)(prob.n, prob.L)
            res = solvers.run(prob, prob.regularizer, SolverConfig(meth, epochs=20, seed=42))
            out[name] = _last_within(res.trace, 20)
    print(f"\n  final G^2 at 20 epochs: v1 {out['v1'][-1]:.3g}, A-v1 {out['A-v1'][-1]:.3g}, "
          f"svrg {out['svrg'][-1]:.3g}")
    assert out["v1"].min() <= TARGET_G2
    assert out["A-v1"].min() <= TARGET_G2
    assert out["svrg"][-1] >= SVRG_FACTOR * out["v1"][-1]


# 6. accounting ---------------------------------------------------------------


@pytest.mark.acceptance(6)
@pytest.mark.parametrize("preset", ["v1", "v3", "v5", "A-v1", "A-v2", "A-v3"])
def test_counters_follow_the_cost_formula(preset):
    prob = BinClassProblem(synth_binclass(150, 20, 1), TWO_LAYER)
    meth = presets.get(preset)(prob.n, prob.L)
    for epochs in (1, 3.3, 7):
        res = solvers.run(prob, prob.regularizer, SolverConfig(meth, epochs=epochs))
        S, m, b, n = res.outer_iterations, meth.m, meth.b_hat, prob.n
        assert S == max(math.ceil(epochs * n / (n + 2 * m * b) - 1e-9), 1)
        assert res.counters.sfo == S * (n + 2 * m * b)
        assert res.counters.prox_calls == S * (m + 1)


# 7. determinism --------------------------------------------------------------

CONFIG = """\
[experiment]
epochs = 3
seed = 11
output_rule = uniform

[problem]
kind = binclass
n = 400
d = 30
loss = l1
test_fraction = 0.1
separability = 0.8

[solver v2]
[solver A-v3]
[solver svrg]
[solver spiderboost]
[solver sgd]
[solver gd]
"""


@pytest.mark.acceptance(7)
def test_csv_outputs_are_byte_identical(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(CONFIG)
    runs = {"a": "1", "b": "1", "c": "4"}
    for out, threads in runs.items():
        subprocess.run([sys.executable, "-m", "proxsarah", "run", str(cfg), "--out", str(tmp_path / out),
                        "--threads", threads], check=True, capture_output=True)
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert len(names) == 6
    for name in names:
        ref = (tmp_path / "a" / name).read_bytes()
        assert (tmp_path / "b" / name).read_bytes() == ref
        assert (tmp_path / "c" / name).read_bytes() == ref


# 8. output law ---------------------------------------------------------------


def _chi2_pvalue(counts, probs):
    expected = probs * counts.sum()
    stat = float(np.sum((counts - expected) ** 2 / expected))
    return stats.chi2.sf(stat, df=counts.size - 1)


@pytest.mark.acceptance(8)
@pytest.mark.parametrize("rule", ["weighted", "uniform"])
def test_output_selection_frequencies(rule):
    m, S, reps = 3, 2, 100_000
    weights = stepsize.adaptive_composite(1.0, 0.5, m, 1, 101).gammas
    root = RngStream(8).spawn("acceptance", rule)
    counts = np.zeros(S * (m + 1))
    for k in range(reps):
        counts[solvers.draw_output_index(weights, S, rule, root.spawn(k))] += 1
    if rule == "weighted":
        probs = np.tile(weights, S) / (S * weights.sum())
    else:
        probs = np.full(S * (m + 1), 1.0 / (S * (m + 1)))
    assert _chi2_pvalue(counts, probs) > CHI2_ALPHA


@pytest.mark.acceptance(8)
def test_solver_uses_the_drawn_index():
    oracle = QuadraticOracle.random(6, 2, seed=0)
    sched = stepsize.adaptive_composite(oracle.L, 0.5, 3, 1, 6)
    for seed in range(20):
        cfg = SolverConfig(ProxSARAH(sched, b_hat=1), epochs=3, seed=seed, output_rule="weighted")
        res = solvers.run(oracle, Regularizer.l1(0.1), cfg)
        assert res.outer_iterations == 2
        want = solvers.draw_output_index(sched.gammas, 2, "weighted", RngStream(seed).spawn("output"))
        assert res.meta["output_index"] == want
