"""Evaluation quantities and trace recording.

Metrics are pure observations: they use the oracle without counters and
never touch a solver's random streams.
"""

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import FINITE_SUM, full_gradient, gradient_mapping, tree_mean
from .errors import InvalidArgumentError
from .problems import accuracy
from .prox import objective_term

log = logging.getLogger(__name__)

ETA_REF = 0.5
CSV_HEADER = (
    "epoch_fraction",
    "objective",
    "rel_residual",
    "grad_map_norm_sq",
    "train_acc",
    "test_acc",
    "wall_ms",
)


def true_gradient(oracle, w, validation_ids=None):
    if oracle.mode == FINITE_SUM:
        return full_gradient(oracle, w)
    exact = oracle.exact_gradient(w)
    if exact is not None:
        return exact
    if validation_ids is None:
        raise InvalidArgumentError("expectation oracle without enumeration needs validation ids")
    return tree_mean(oracle.gradients(w, validation_ids))


def objective_value(oracle, reg, w, validation_ids=None):
    """``F(w) = f(w) + psi(w)``."""
    if oracle.mode == FINITE_SUM:
        f = oracle.objective(w)
    else:
        f = oracle.exact_objective(w)
        if f is None:
            f = float(np.mean(oracle.values(w, validation_ids)))
    return f + objective_term(reg, w)


def grad_mapping_norm_sq(oracle, reg, w, eta_ref=ETA_REF, validation_ids=None):
    """``||G_eta(w)||^2`` built from the true gradient at a fixed ``eta``."""
    if not eta_ref > 0:
        raise InvalidArgumentError("eta_ref must be positive")
    g = gradient_mapping(w, true_gradient(oracle, w, validation_ids), eta_ref, reg)
    return float(np.dot(g, g))


def rel_residual(F_w, F_star):
    """``(F_w - F*)/|F*|``; falls back to ``F_w - F*`` when ``F* == 0``
    (see :func:`residual_is_absolute`)."""
    if not math.isfinite(F_star):
        raise InvalidArgumentError("F* must be finite")
    if F_star == 0:
        return F_w - F_star
    return (F_w - F_star) / abs(F_star)


def residual_is_absolute(F_star):
    return F_star == 0


@dataclass
class TraceRow:
    epoch_fraction: float
    objective: float
    grad_map_norm_sq: float
    train_acc: float | None = None
    test_acc: float | None = None
    wall_ms: int = 0


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)
    eta_ref: float = ETA_REF
    meta: dict = field(default_factory=dict)

    def append(self, row):
        if self.rows and not row.epoch_fraction > self.rows[-1].epoch_fraction:
            raise InvalidArgumentError("epoch_fraction must be strictly increasing")
        if row.grad_map_norm_sq < 0:
            raise InvalidArgumentError("negative gradient-mapping norm")
        self.rows.append(row)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def min_objective(self):
        finite = [r.objective for r in self.rows if math.isfinite(r.objective)]
        return min(finite) if finite else math.inf

    def write_csv(self, fh, F_star):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow(
                [
                    _fmt(r.epoch_fraction),
                    _fmt(r.objective),
                    _fmt(rel_residual(r.objective, F_star)),
                    _fmt(r.grad_map_norm_sq),
                    _fmt(r.train_acc),
                    _fmt(r.test_acc),
                    str(int(r.wall_ms)),
                ]
            )


def _fmt(x):
    if x is None:
        return ""
    return format(float(x), ".17g")


class TraceRecorder:
    """Evaluates metrics at iterates handed over by a solver.

    ``train``/``test`` datasets enable accuracy columns. Wall-clock time is
    only recorded when ``wall_clock=True`` so that traces stay reproducible.
    """

    def __init__(self, oracle, reg, train=None, test=None, eta_ref=ETA_REF, wall_clock=False):
        self.oracle = oracle
        self.reg = reg
        self.train = train
        self.test = test
        self.eta_ref = eta_ref
        self.wall_clock = wall_clock
        self.trace = RunTrace(eta_ref=eta_ref)
        self.unit = getattr(oracle, "n", 1)
        self.validation_ids = None
        self._t0 = None

    def start(self, unit, validation_ids=None):
        self.unit = unit
        self.validation_ids = validation_ids
        if validation_ids is not None:
            log.info("gradient-mapping metric uses a validation batch of %d draws", len(validation_ids))
            self.trace.meta["validation_batch"] = int(len(validation_ids))
        self._t0 = time.perf_counter()

    def __call__(self, w, counters):
        epoch = counters.sfo / self.unit
        if self.trace.rows and epoch <= self.trace.rows[-1].epoch_fraction:
            return
        wall = 0
        if self.wall_clock and self._t0 is not None:
            wall = int(round(1000 * (time.perf_counter() - self._t0)))
        self.trace.append(
            TraceRow(
                epoch_fraction=epoch,
                objective=objective_value(self.oracle, self.reg, w, self.validation_ids),
                grad_map_norm_sq=grad_mapping_norm_sq(
                    self.oracle, self.reg, w, self.eta_ref, self.validation_ids
                ),
                train_acc=None if self.train is None else accuracy(w, self.train),
                test_acc=None if self.test is None or self.test.n == 0 else accuracy(w, self.test),
                wall_ms=wall,
            )
        )
