"""Regularizers and their proximal operators.

Three kinds are supported: the zero function, ``lam * ||w||_1`` and the
indicator of ``{w : w >= 0, ||w|| <= radius}``.

For the last one the Euclidean projection is clip-then-scale: after clipping
to the orthant, scaling a nonnegative vector towards the origin keeps it
nonnegative, so the radial projection of the clipped point onto the ball is
the projection onto the intersection.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

ZERO = "zero"
L1 = "l1"
NONNEG_BALL = "nonneg-ball"

#: Value of an indicator outside its set. Compared by identity, never computed.
INFEASIBLE = math.inf

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class Regularizer:
    kind: str = ZERO
    lam: float = 0.0
    radius: float = 1.0

    def __post_init__(self):
        if self.kind not in (ZERO, L1, NONNEG_BALL):
            raise InvalidArgumentError(f"unknown regularizer kind {self.kind!r}")
        if self.lam < 0:
            raise InvalidArgumentError("lambda must be nonnegative")
        if not self.radius > 0:
            raise InvalidArgumentError("radius must be positive")

    @classmethod
    def zero(cls):
        return cls(ZERO)

    @classmethod
    def l1(cls, lam):
        return cls(L1, lam=float(lam))

    @classmethod
    def nonneg_ball(cls, radius=1.0):
        return cls(NONNEG_BALL, radius=float(radius))

    @property
    def is_indicator(self):
        return self.kind == NONNEG_BALL


def soft_threshold(w, thresh):
    return np.sign(w) * np.maximum(np.abs(w) - thresh, 0.0)


_BALL_SLACK = 4 * np.finfo(float).eps


def project_nonneg_ball(w, radius=1.0):
    z = np.maximum(w, 0.0)
    norm = np.linalg.norm(z)
    # a rescaled vector can land a few ulps outside; leaving those alone
    # keeps the projection exactly idempotent
    if norm > radius * (1.0 + _BALL_SLACK):
        z = z * (radius / norm)
    return z


def prox(reg, w, t, counters=None):
    """``prox_{t psi}(w)``; counts one prox call when ``counters`` is given."""
    if t < 0:
        raise InvalidArgumentError("prox step must be nonnegative")
    w = np.asarray(w, dtype=np.float64)
    if reg.kind == ZERO:
        out = w.copy()
    elif reg.kind == L1:
        out = soft_threshold(w, t * reg.lam)
    else:
        out = project_nonneg_ball(w, reg.radius)
    if counters is not None:
        counters.prox_calls += 1
    return out


def objective_term(reg, w):
    """Value of ``psi(w)``; :data:`INFEASIBLE` outside an indicator's set."""
    w = np.asarray(w, dtype=np.float64)
    if reg.kind == ZERO:
        return 0.0
    if reg.kind == L1:
        return reg.lam * float(np.sum(np.abs(w)))
    if np.min(w, initial=0.0) < -FEASIBILITY_TOL or np.linalg.norm(w) > reg.radius + FEASIBILITY_TOL:
        return INFEASIBLE
    return 0.0


def project_feasible(reg, w):
    """Projection onto the domain of ``psi`` (identity for finite-valued kinds)."""
    if reg.kind == NONNEG_BALL:
        return project_nonneg_ball(np.asarray(w, dtype=np.float64), reg.radius)
    return np.array(w, dtype=np.float64)
