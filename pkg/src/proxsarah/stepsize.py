"""Step-size schedules for the inner loop.

A schedule holds ``m + 1`` pairs ``(gamma_t, eta_t)``: ``eta_t`` is the prox
step and ``gamma_t`` the averaging weight of
``w_{t+1} = (1 - gamma_t) w_t + gamma_t prox_{eta_t psi}(w_t - eta_t v_t)``.

Backward recursions accumulate the tail sum ``sum_{j>t} gamma_j`` in a single
pass from ``t = m`` down to ``0``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError, ProxSarahError

log = logging.getLogger(__name__)

ETA_BASE_FORM = "eta-base"
UNIT_BASE_FORM = "unit-base"
BOUND_RTOL = 1e-12


class ScheduleInvariantError(ProxSarahError):
    """A computed schedule violates one of its guaranteed properties."""


@dataclass(frozen=True)
class StepSchedule:
    gammas: np.ndarray
    etas: np.ndarray
    rule: str = "custom"
    #: True for the non-composite rule, whose combined step is eta_t (gamma_t = 1)
    noncomposite: bool = False
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=np.float64)
        e = np.asarray(self.etas, dtype=np.float64)
        if g.ndim != 1 or g.shape != e.shape or g.size == 0:
            raise InvalidArgumentError("gammas and etas must be nonempty vectors of equal length")
        if np.any(g <= 0) or np.any(g > 1) or np.any(e <= 0):
            raise InvalidArgumentError("need gamma_t in (0, 1] and eta_t > 0")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "etas", e)

    @property
    def m(self):
        return self.gammas.size - 1

    @property
    def weights(self):
        """Output-iterate weights: ``gamma_t``, or ``eta_t`` for the non-composite rule."""
        return self.etas if self.noncomposite else self.gammas

    @property
    def sigma_m(self):
        return float(np.sum(self.weights))

    @classmethod
    def constant(cls, gamma, eta, m, rule="constant", **params):
        return cls(np.full(m + 1, float(gamma)), np.full(m + 1, float(eta)), rule, params=params)


# batch-dependent constants ------------------------------------------------


def omega_finite_sum(n, b_hat):
    return 3.0 * (n - b_hat) / (2.0 * b_hat * (n - 1))


def omega_expectation(b_hat):
    return 3.0 / (2.0 * b_hat)


def omega_eta(eta, n, b_hat):
    return (1.0 + 2.0 * eta * eta) * (n - b_hat) / (b_hat * (n - 1))


def rho_finite_sum(n, b_hat):
    return (n - b_hat) / (b_hat * (n - 1))


def rho_expectation(b_hat):
    return 1.0 / b_hat


def _clamp(gammas, rule):
    if np.any(gammas > 1.0):
        log.warning(
            "%s: %d averaging weights exceed 1 (max %.6g); clamped to 1",
            rule,
            int(np.sum(gammas > 1.0)),
            float(gammas.max()),
        )
        return np.minimum(gammas, 1.0)
    return gammas


def _require(cond, message):
    if not cond:
        raise ScheduleInvariantError(message)


def _backward(L, delta, nu, m, base):
    """gamma_m = delta/L, gamma_t = delta / (L [base + nu L sum_{j>t} gamma_j])."""
    g = np.empty(m + 1)
    g[m] = delta / L
    tail = g[m]
    for t in range(m - 1, -1, -1):
        g[t] = delta / (L * (base + nu * L * tail))
        tail += g[t]
    return g


def sigma_lower_bound(L, delta, nu, m):
    """``2 delta (m + 1) / (L [sqrt(1 + 2 delta nu m) + 1])``."""
    return 2.0 * delta * (m + 1) / (L * (math.sqrt(1.0 + 2.0 * delta * nu * m) + 1.0))


# rules --------------------------------------------------------------------


def constant_composite(L, m, b_hat, n=None):
    """Constant ``gamma = 1/(L sqrt(omega m))``, ``eta = 2 sqrt(omega m)/(4 sqrt(omega m) + 1)``.

    ``n=None`` selects the expectation setting (``omega = 3/(2 b_hat)``);
    otherwise ``omega = 3(n - b_hat)/(2 b_hat (n - 1))`` and ``b_hat <= n - 1``.
    """
    if not L > 0 or m < 1 or b_hat < 1:
        raise InvalidArgumentError("need L > 0, m >= 1 and b_hat >= 1")
    if n is None:
        omega = omega_expectation(b_hat)
    else:
        if b_hat > n - 1:
            raise InvalidArgumentError(
                f"b_hat must lie in [1, n-1] = [1, {n - 1}] (omega vanishes at b_hat = n)"
            )
        omega = omega_finite_sum(n, b_hat)
    root = math.sqrt(omega * m)
    gamma = 1.0 / (L * root)
    eta = 2.0 * root / (4.0 * root + 1.0)
    if gamma > 1.0:
        log.warning("constant_composite: gamma = %.6g exceeds 1; clamped to 1", gamma)
        gamma = 1.0
    return StepSchedule.constant(gamma, eta, m, rule="constant-composite", omega=omega)


def adaptive_composite_weights(L, eta, m, b_hat, n, form=ETA_BASE_FORM):
    """Raw averaging weights from a backward recursion at fixed ``eta``.

    With ``delta = 2/eta - 3`` and ``omega_eta = (1 + 2 eta^2)(n - b_hat)/(b_hat (n - 1))``::

        gamma_m = delta / L
        gamma_t = delta / (L [c + omega_eta L sum_{j>t} gamma_j])

    where ``c = eta`` for ``form="eta-base"`` and ``c = 1`` for
    ``form="unit-base"``. Both forms guarantee the lower bounds on ``gamma_0``
    and on ``Sigma_m``; these are checked before returning. The unit-base form
    is strictly increasing; in the eta-base form ``gamma_0 < ... < gamma_{m-1}``
    always holds and the last step ``gamma_{m-1} < gamma_m`` holds exactly when
    ``eta + omega_eta delta > 1``.

    Returns ``(gammas, delta, omega_eta)``; entries may exceed 1.
    """
    if not 0 < eta < 2.0 / 3.0:
        raise InvalidArgumentError("eta must lie in (0, 2/3) so that delta = 2/eta - 3 > 0")
    if not L > 0 or m < 0:
        raise InvalidArgumentError("need L > 0 and m >= 0")
    if not 1 <= b_hat <= n - 1:
        raise InvalidArgumentError(f"b_hat must lie in [1, n-1] = [1, {n - 1}]")
    if form not in (ETA_BASE_FORM, UNIT_BASE_FORM):
        raise InvalidArgumentError(f"unknown form {form!r}")
    delta = 2.0 / eta - 3.0
    nu = omega_eta(eta, n, b_hat)
    g = _backward(L, delta, nu, m, eta if form == ETA_BASE_FORM else 1.0)

    lower0 = delta / (L * (1.0 + delta * nu * m))
    _require(g[0] >= lower0 * (1 - BOUND_RTOL), f"gamma_0 = {g[0]!r} below {lower0!r}")
    bound = sigma_lower_bound(L, delta, nu, m)
    _require(g.sum() >= bound * (1 - BOUND_RTOL), f"Sigma_m = {g.sum()!r} below {bound!r}")
    if m >= 1:
        inc = np.diff(g) > 0
        _require(np.all(inc[:-1]), "gamma_0..gamma_{m-1} not strictly increasing")
        if form == UNIT_BASE_FORM:
            _require(inc[-1], "gamma_{m-1} >= gamma_m")
        elif abs(eta + nu * delta - 1.0) > 1e-12:
            _require(bool(inc[-1]) == (eta + nu * delta > 1.0),
                     "last-step monotonicity disagrees with eta + omega_eta delta > 1")

    return g, delta, nu


def adaptive_composite(L, eta, m, b_hat, n, form=ETA_BASE_FORM):
    """Schedule from :func:`adaptive_composite_weights`, weights clamped to at most 1."""
    g, delta, nu = adaptive_composite_weights(L, eta, m, b_hat, n, form)
    return StepSchedule(
        _clamp(g, "adaptive_composite"), np.full(m + 1, eta), rule=f"adaptive-composite-{form}",
        params={"delta": delta, "omega_eta": nu},
    )


def adaptive_noncomposite(L, m, rho):
    """Combined steps ``eta_m = 1/L``, ``eta_t = 1/(L (1 + rho L sum_{j>t} eta_j))``.

    The schedule uses ``gamma_t = 1`` so one step is ``w - eta_t v_t``.
    """
    if not L > 0 or not rho > 0 or m < 0:
        raise InvalidArgumentError("need L > 0, rho > 0 and m >= 0")
    steps = _backward(L, 1.0, rho, m, 1.0)
    bound = 2.0 * (m + 1) / ((math.sqrt(2.0 * rho * m + 1.0) + 1.0) * L)
    _require(steps.sum() >= bound * (1 - BOUND_RTOL), f"Sigma_m = {steps.sum()!r} below {bound!r}")
    return StepSchedule(np.ones(m + 1), steps, rule="adaptive-noncomposite",
                        noncomposite=True, params={"rho": rho})


def constant_noncomposite(L, m):
    """Fixed combined step ``2 / (L (1 + sqrt(4 m + 1)))``."""
    if not L > 0 or m < 0:
        raise InvalidArgumentError("need L > 0 and m >= 0")
    step = 2.0 / (L * (1.0 + math.sqrt(4.0 * m + 1.0)))
    return StepSchedule(np.ones(m + 1), np.full(m + 1, step), rule="constant-noncomposite",
                        noncomposite=True)


def tight_recursion(L, delta, nu, m, constant=False):
    """Weights that satisfy ``L g_m <= delta`` and
    ``nu L^2 g_t sum_{j>t} g_j - delta + L g_t <= 0``.

    The recursive choice makes every condition tight; ``constant=True``
    returns ``2 delta / (L (sqrt(1 + 4 delta nu m) + 1))`` for all ``t``.
    Returns the raw weight vector (it may exceed 1).
    """
    if not (L > 0 and delta > 0 and nu > 0) or m < 0:
        raise InvalidArgumentError("need L, delta, nu > 0 and m >= 0")
    if constant:
        return np.full(m + 1, 2.0 * delta / (L * (math.sqrt(1.0 + 4.0 * delta * nu * m) + 1.0)))
    return _backward(L, delta, nu, m, 1.0)


def step_condition_residuals(gammas, L, delta, nu):
    """Left-hand sides of the step conditions; zero everywhere for the recursive choice."""
    g = np.asarray(gammas, dtype=np.float64)
    tails = np.concatenate([np.cumsum(g[::-1])[::-1][1:], [0.0]])
    res = nu * L * L * g * tails - delta + L * g
    res[-1] = L * g[-1] - delta
    return res


def tradeoff_config(gamma_bar, L, m, n, strict=True):
    """Mini-batch size and prox step for a fixed averaging weight ``gamma_bar``.

    With ``C = 2/(3 L^2 gamma_bar^2)``: ``b_hat = floor(m n / (C n + m - C))``
    clamped to ``[1, n - 1]`` and ``eta = 2/(4 + L gamma_bar)``. The formula
    needs ``m >= C``; ``strict=False`` skips that check and relies on the clamp.
    """
    if not 0 < gamma_bar <= 1:
        raise InvalidArgumentError("gamma_bar must lie in (0, 1]")
    if m < 1 or n < 2 or not L > 0:
        raise InvalidArgumentError("need m >= 1, n >= 2 and L > 0")
    C = 2.0 / (3.0 * L * L * gamma_bar * gamma_bar)
    if m < C and strict:
        raise ConfigurationError(
            f"epoch length m = {m} is below C = 2/(3 L^2 gamma_bar^2) = {C:.6g}; "
            "increase m or gamma_bar"
        )
    raw = m * n / (C * n + m - C)
    b_hat = int(math.floor(raw)) if raw > 0 else 0
    if not 1 <= b_hat <= n - 1:
        log.warning("tradeoff_config: b_hat = %d clamped into [1, %d]", b_hat, n - 1)
        b_hat = min(max(b_hat, 1), n - 1)
    return b_hat, 2.0 / (4.0 + L * gamma_bar)


def expectation_sizes(sigma, eps, b_hat):
    """Outer batch ``floor(75 sigma^2/eps^2)`` and epoch length ``floor(sigma^2/(b_hat eps^2))``."""
    if not (sigma > 0 and eps > 0) or b_hat < 1:
        raise InvalidArgumentError("need sigma, eps > 0 and b_hat >= 1")
    ratio = sigma * sigma / (eps * eps)
    return max(int(75 * ratio), 1), max(int(ratio / b_hat), 1)
