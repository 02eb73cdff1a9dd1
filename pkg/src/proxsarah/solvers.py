"""ProxSARAH and the baseline stochastic proximal methods.

All solvers share the conventions below.

* Epoch budget: one epoch is ``n`` component-gradient evaluations (``b_s``
  draws in the expectation setting). A run of ``epochs`` epochs performs
  ``S = ceil(epochs * unit / cost_per_outer_iteration)`` outer iterations.
* Random streams: snapshot batches of outer iteration ``s`` come from
  ``spawn("snapshot", s)``, inner batches from ``spawn("inner", s)``, so
  methods with the same batching consume identical randomness.
* Accounting for ProxSARAH: each outer iteration costs ``b_s`` gradient
  evaluations for the snapshot, ``2 * b_hat`` for each of the ``m`` inner
  updates, and ``m + 1`` prox calls (the snapshot step counts as one). No
  extra first-step constant.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import FINITE_SUM, Counters, full_gradient, tree_sum
from .errors import ConfigurationError, StateError
from .estimators import BatchSampler, sarah_snapshot, sarah_update, svrg_estimator
from .metrics import TraceRecorder
from .prox import ZERO, project_feasible, prox
from .rng import RngStream
from .stepsize import StepSchedule

log = logging.getLogger(__name__)

LAST = "last"
UNIFORM = "uniform"
WEIGHTED = "weighted"
OUTPUT_RULES = (LAST, UNIFORM, WEIGHTED)


@dataclass
class ProxSARAH:
    schedule: StepSchedule
    b_hat: int
    b_s: int | None = None  # None: full snapshot (finite sum only)
    name: str = "ProxSARAH"

    @property
    def m(self):
        return self.schedule.m


@dataclass
class ProxSVRG:
    m: int
    b_hat: int
    eta: float
    name: str = "ProxSVRG"


@dataclass
class ProxSpiderBoost:
    m: int
    b_hat: int
    eta: float
    name: str = "ProxSpiderBoost"


@dataclass
class ProxSGD:
    eta0: float
    eta_tilde: float
    b_hat: int = 1
    epoch_size: int | None = None  # expectation setting only
    name: str = "ProxSGD"


@dataclass
class ProxGD:
    eta: float
    name: str = "ProxGD"


@dataclass
class SolverConfig:
    method: object
    epochs: float = 1.0
    seed: int = 0
    output_rule: str = LAST
    trace_stride: int | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.epochs > 0:
            raise ConfigurationError("epochs must be positive")
        if self.output_rule not in OUTPUT_RULES:
            raise ConfigurationError(f"output_rule must be one of {OUTPUT_RULES}")


@dataclass
class RunResult:
    final_w: np.ndarray
    selected_w: np.ndarray
    trace: object
    counters: Counters
    outer_iterations: int = 0
    name: str = ""
    meta: dict = field(default_factory=dict)


# output iterate -----------------------------------------------------------


def output_probabilities(weights, S, rule):
    """Law of the returned iterate over the ``S (m + 1)`` stored iterates."""
    weights = np.asarray(weights, dtype=np.float64)
    if rule == UNIFORM:
        p = np.ones(weights.size)
    elif rule == WEIGHTED:
        p = weights.copy()
    else:
        raise ConfigurationError(f"rule {rule!r} has no sampling law")
    p = np.tile(p, S)
    return p / p.sum()


def draw_output_index(weights, S, rule, rng):
    """Index ``(s - 1)(m + 1) + t`` of the selected ``w_t^{(s)}``; ``Last`` gives ``None``."""
    if rule == LAST:
        return None
    cdf = np.cumsum(output_probabilities(weights, S, rule))
    cdf[-1] = 1.0
    return rng.categorical(cdf)


def select_output(iterates, weights, S, rule, rng):
    """Pick one of ``iterates`` (ordered by ``(s, t)``) according to ``rule``.

    ``Last`` returns the final entry. With a single stored iterate, that
    iterate is returned under every rule.
    """
    if len(iterates) == 0:
        raise StateError("no iterates to select from")
    if rule == LAST or len(iterates) == 1:
        return iterates[-1]
    if len(iterates) != S * len(weights):
        raise StateError("iterate count does not match S (m + 1)")
    return iterates[draw_output_index(weights, S, rule, rng)]


# helpers ------------------------------------------------------------------


def _start_point(oracle, reg, w0):
    if w0 is None:
        init = getattr(oracle, "initial_point", None)
        w0 = init() if init is not None else np.zeros(oracle.d)
    return project_feasible(reg, w0)


def _recorder(oracle, reg, recorder):
    return TraceRecorder(oracle, reg) if recorder is None else recorder


def _validation_ids(oracle, root, size):
    if oracle.mode == FINITE_SUM or oracle.exact_gradient(np.zeros(oracle.d)) is not None:
        return None
    return BatchSampler(oracle, root.spawn("validation"))(size)


def _snapshot_size(oracle, b_s):
    if oracle.mode == FINITE_SUM:
        b_s = oracle.n if b_s is None else b_s
        if not 1 <= b_s <= oracle.n:
            raise ConfigurationError(f"b_s = {b_s} outside [1, {oracle.n}]")
        return b_s
    if b_s is None or b_s < 1:
        raise ConfigurationError("the expectation setting needs an explicit snapshot size b_s >= 1")
    return b_s


def _check_batch(oracle, b_hat):
    if b_hat < 1 or (oracle.mode == FINITE_SUM and b_hat > oracle.n):
        raise ConfigurationError(f"inner batch b_hat = {b_hat} out of range")


def _stride(cfg, unit, b_hat):
    if cfg.trace_stride is not None:
        return max(int(cfg.trace_stride), 1)
    return max(math.ceil(unit / (10 * b_hat * 2)), 1)


def outer_iterations(epochs, unit, per_outer):
    return max(math.ceil(epochs * unit / per_outer - 1e-9), 1)


# ProxSARAH ----------------------------------------------------------------


def prox_sarah(oracle, reg, cfg, recorder=None, w0=None):
    """Proximal SARAH with averaging.

    Each outer iteration takes a snapshot ``v_0`` at ``w_0 = w~``, then for
    ``t = 0..m`` sets ``w^_{t+1} = prox_{eta_t psi}(w_t - eta_t v_t)`` and
    ``w_{t+1} = (1 - gamma_t) w_t + gamma_t w^_{t+1}``, refreshing ``v_t``
    with a SARAH update before every step after the first. The last inner
    iterate ``w_{m+1}`` becomes the next ``w~``.
    """
    meth = cfg.method
    if not isinstance(meth, ProxSARAH):
        raise ConfigurationError("prox_sarah needs a ProxSARAH method")
    sched = meth.schedule
    if sched.noncomposite and reg.kind != ZERO:
        raise ConfigurationError("the non-composite schedule requires a zero regularizer")
    m, b_hat = sched.m, meth.b_hat
    if m < 1:
        raise ConfigurationError("epoch length m must be at least 1")
    _check_batch(oracle, b_hat)
    b_s = _snapshot_size(oracle, meth.b_s)
    if cfg.output_rule == WEIGHTED and not sched.rule.startswith("adaptive"):
        raise ConfigurationError("weighted output selection requires an adaptive schedule")
    unit = oracle.n if oracle.mode == FINITE_SUM else b_s
    S = outer_iterations(cfg.epochs, unit, b_s + 2 * m * b_hat)
    stride = _stride(cfg, unit, b_hat)

    root = RngStream(cfg.seed)
    rec = _recorder(oracle, reg, recorder)
    rec.start(unit, _validation_ids(oracle, root, 10 * b_s))
    counters = Counters()
    gammas, etas = sched.gammas, sched.etas
    target = draw_output_index(sched.weights, S, cfg.output_rule, root.spawn("output"))
    selected = None

    def step(w, v, t):
        if sched.noncomposite:
            return w - etas[t] * v
        w_hat = prox(reg, w - etas[t] * v, etas[t], counters)
        return (1.0 - gammas[t]) * w + gammas[t] * w_hat

    w_tilde = _start_point(oracle, reg, w0)
    rec(w_tilde, counters)
    for s in range(S):
        snap = BatchSampler(oracle, root.spawn("snapshot", s))
        inner = BatchSampler(oracle, root.spawn("inner", s))
        state = sarah_snapshot(oracle, w_tilde, b_s, snap, counters, cfg.workers)
        w = w_tilde
        if target == s * (m + 1):
            selected = w
        w_next = step(w, state.v, 0)
        for t in range(1, m + 1):
            state = sarah_update(state, oracle, w_next, inner(b_hat), counters)
            w = w_next
            if target == s * (m + 1) + t:
                selected = w
            w_next = step(w, state.v, t)
            if t % stride == 0:
                rec(w_next, counters)
        w_tilde = w_next
        rec(w_tilde, counters)

    return RunResult(
        final_w=w_tilde,
        selected_w=w_tilde if selected is None else selected,
        trace=rec.trace,
        counters=counters,
        outer_iterations=S,
        name=meth.name,
        meta={"m": m, "b_hat": b_hat, "b_s": b_s, "output_index": target},
    )


# baselines ----------------------------------------------------------------


def prox_spiderboost(oracle, reg, cfg, recorder=None, w0=None):
    """SARAH estimator with a plain prox step ``w_{t+1} = prox_{eta psi}(w_t - eta v_t)``."""
    meth = cfg.method
    if oracle.mode != FINITE_SUM:
        raise ConfigurationError("ProxSpiderBoost is implemented for finite sums")
    m, b_hat, eta = meth.m, meth.b_hat, meth.eta
    _check_batch(oracle, b_hat)
    _no_weighted(cfg)
    n = oracle.n
    S = outer_iterations(cfg.epochs, n, n + 2 * m * b_hat)
    stride = _stride(cfg, n, b_hat)
    root = RngStream(cfg.seed)
    rec = _recorder(oracle, reg, recorder)
    rec.start(n)
    counters = Counters()
    target = draw_output_index(np.ones(m + 1), S, cfg.output_rule, root.spawn("output"))
    selected = None

    w = _start_point(oracle, reg, w0)
    rec(w, counters)
    for s in range(S):
        inner = BatchSampler(oracle, root.spawn("inner", s))
        v = full_gradient(oracle, w, counters, cfg.workers)
        w_prev = w
        if target == s * (m + 1):
            selected = w
        w = prox(reg, w - eta * v, eta, counters)
        for t in range(1, m + 1):
            batch = inner(b_hat)
            diff = oracle.gradients(w, batch) - oracle.gradients(w_prev, batch)
            counters.sfo += 2 * b_hat
            v = v + tree_sum(diff) / b_hat
            w_prev = w
            if target == s * (m + 1) + t:
                selected = w
            w = prox(reg, w - eta * v, eta, counters)
            if t % stride == 0:
                rec(w, counters)
        rec(w, counters)
    return RunResult(w, w if selected is None else selected, rec.trace, counters, S, meth.name)


def prox_svrg(oracle, reg, cfg, recorder=None, w0=None):
    """Proximal SVRG: ``m`` prox steps per snapshot along the SVRG estimator."""
    meth = cfg.method
    if oracle.mode != FINITE_SUM:
        raise ConfigurationError("ProxSVRG needs a finite-sum oracle")
    m, b_hat, eta = meth.m, meth.b_hat, meth.eta
    _check_batch(oracle, b_hat)
    _no_weighted(cfg)
    n = oracle.n
    S = outer_iterations(cfg.epochs, n, n + 2 * m * b_hat)
    stride = _stride(cfg, n, b_hat)
    root = RngStream(cfg.seed)
    rec = _recorder(oracle, reg, recorder)
    rec.start(n)
    counters = Counters()
    target = draw_output_index(np.ones(m), S, cfg.output_rule, root.spawn("output"))
    selected = None

    w_tilde = _start_point(oracle, reg, w0)
    rec(w_tilde, counters)
    for s in range(S):
        inner = BatchSampler(oracle, root.spawn("inner", s))
        g_tilde = full_gradient(oracle, w_tilde, counters, cfg.workers)
        w = w_tilde
        for t in range(m):
            if target == s * m + t:
                selected = w
            v = svrg_estimator(oracle, w, w_tilde, g_tilde, inner(b_hat), counters)
            w = prox(reg, w - eta * v, eta, counters)
            if (t + 1) % stride == 0:
                rec(w, counters)
        w_tilde = w
        rec(w_tilde, counters)
    return RunResult(
        w_tilde, w_tilde if selected is None else selected, rec.trace, counters, S, meth.name
    )


def sgd_step_size(eta0, eta_tilde, t, n):
    """``eta0 / (1 + eta_tilde floor(t / n))`` with ``t`` counting gradient draws."""
    return eta0 / (1.0 + eta_tilde * (t // n))


def prox_sgd(oracle, reg, cfg, recorder=None, w0=None):
    """Mini-batch proximal SGD with the diminishing rule of :func:`sgd_step_size`."""
    meth = cfg.method
    _check_batch(oracle, meth.b_hat)
    _no_weighted(cfg)
    if oracle.mode == FINITE_SUM:
        unit = oracle.n
    elif meth.epoch_size:
        unit = int(meth.epoch_size)
    else:
        raise ConfigurationError("ProxSGD in the expectation setting needs epoch_size")
    b_hat = meth.b_hat
    steps = outer_iterations(cfg.epochs, unit, b_hat)
    stride = cfg.trace_stride or max(math.ceil(unit / (10 * b_hat)), 1)
    root = RngStream(cfg.seed)
    rec = _recorder(oracle, reg, recorder)
    rec.start(unit, _validation_ids(oracle, root, 10 * unit))
    counters = Counters()
    draw = BatchSampler(oracle, root.spawn("sgd"))
    target = draw_output_index(np.ones(steps), 1, cfg.output_rule, root.spawn("output"))
    selected = None

    w = _start_point(oracle, reg, w0)
    rec(w, counters)
    for k in range(steps):
        if target == k:
            selected = w
        eta = sgd_step_size(meth.eta0, meth.eta_tilde, counters.sfo, unit)
        batch = draw(b_hat)
        g = tree_sum(oracle.gradients(w, batch)) / b_hat
        counters.sfo += b_hat
        w = prox(reg, w - eta * g, eta, counters)
        if (k + 1) % stride == 0 or k + 1 == steps:
            rec(w, counters)
    return RunResult(w, w if selected is None else selected, rec.trace, counters, steps, meth.name)


def prox_gd(oracle, reg, cfg, recorder=None, w0=None):
    """Proximal gradient descent; one full gradient (one epoch) per iteration."""
    meth = cfg.method
    if oracle.mode != FINITE_SUM:
        raise ConfigurationError("ProxGD needs a finite-sum oracle")
    _no_weighted(cfg)
    iters = outer_iterations(cfg.epochs, 1, 1)
    root = RngStream(cfg.seed)
    rec = _recorder(oracle, reg, recorder)
    rec.start(oracle.n)
    counters = Counters()
    target = draw_output_index(np.ones(iters), 1, cfg.output_rule, root.spawn("output"))
    selected = None

    w = _start_point(oracle, reg, w0)
    rec(w, counters)
    for k in range(iters):
        if target == k:
            selected = w
        g = full_gradient(oracle, w, counters, cfg.workers)
        w = prox(reg, w - meth.eta * g, meth.eta, counters)
        rec(w, counters)
    return RunResult(w, w if selected is None else selected, rec.trace, counters, iters, meth.name)


def _no_weighted(cfg):
    if cfg.output_rule == WEIGHTED:
        raise ConfigurationError("weighted output selection applies to ProxSARAH only")


_DISPATCH = {
    ProxSARAH: prox_sarah,
    ProxSVRG: prox_svrg,
    ProxSpiderBoost: prox_spiderboost,
    ProxSGD: prox_sgd,
    ProxGD: prox_gd,
}


def run(oracle, reg, cfg, recorder=None, w0=None):
    """Dispatch on the type of ``cfg.method``."""
    try:
        fn = _DISPATCH[type(cfg.method)]
    except KeyError:
        raise ConfigurationError(f"unknown method {cfg.method!r}") from None
    return fn(oracle, reg, cfg, recorder=recorder, w0=w0)
