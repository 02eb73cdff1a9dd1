"""Named solver configurations: eight ProxSARAH variants and four baselines.

Every preset is a function of the problem size ``n`` and smoothness ``L``.
"""

import math
from dataclasses import dataclass

from . import stepsize
from .errors import ConfigurationError
from .solvers import ProxGD, ProxSARAH, ProxSGD, ProxSpiderBoost, ProxSVRG

ADAPTIVE_ETA = 0.5
LAST_WEIGHT = 0.99


@dataclass(frozen=True)
class Preset:
    name: str
    summary: str
    build: object  # (n, L) -> method config

    def __call__(self, n, L, **options):
        if int(n) != n or n < 2:
            raise ConfigurationError(f"preset {self.name} needs an integer n >= 2 (got {n})")
        if not L > 0:
            raise ConfigurationError("L must be positive")
        return self.build(int(n), float(L), **options)


def _isqrt(n):
    return max(math.isqrt(n), 1)


def _icbrt(n):
    r = int(round(n ** (1.0 / 3.0)))
    while r**3 > n:
        r -= 1
    while (r + 1) ** 3 <= n:
        r += 1
    return max(r, 1)


def _v1(n, L):
    return ProxSARAH(stepsize.constant_composite(L, n, 1, n), b_hat=1, name="ProxSARAH-v1")


def _tradeoff(gamma_bar, size, name):
    def build(n, L):
        m = size(n)
        b_hat, eta = stepsize.tradeoff_config(gamma_bar, L, m, n, strict=False)
        sched = stepsize.StepSchedule.constant(
            gamma_bar, eta, m, rule="constant-tradeoff", gamma_bar=gamma_bar
        )
        return ProxSARAH(sched, b_hat=b_hat, name=name)

    return build


def _a_v1(n, L):
    sched = stepsize.adaptive_composite(L, ADAPTIVE_ETA, n, 1, n)
    return ProxSARAH(sched, b_hat=1, name="ProxSARAH-A-v1")


def _adaptive_sized(size, name):
    def build(n, L):
        m = size(n)
        b_hat = min(m, n - 1)
        # gamma_m = delta / L fixes delta, hence eta = 2 / (delta + 3)
        eta = 2.0 / (LAST_WEIGHT * L + 3.0)
        return ProxSARAH(stepsize.adaptive_composite(L, eta, m, b_hat, n), b_hat=b_hat, name=name)

    return build


def _svrg(n, L, batch="single"):
    if batch == "single":
        return ProxSVRG(m=n, b_hat=1, eta=1.0 / (3.0 * n * L))
    if batch != "mini":
        raise ConfigurationError(f"ProxSVRG batch must be 'single' or 'mini' (got {batch!r})")
    b_hat = max(int(round(n ** (2.0 / 3.0))), 1)
    while b_hat**3 > n * n:
        b_hat -= 1
    while (b_hat + 1) ** 3 <= n * n:
        b_hat += 1
    return ProxSVRG(m=_icbrt(n), b_hat=b_hat, eta=1.0 / (3.0 * L), name="ProxSVRG-mini")


def _spiderboost(n, L):
    r = _isqrt(n)
    return ProxSpiderBoost(m=r, b_hat=r, eta=1.0 / (2.0 * L))


def _sgd(n, L):
    return ProxSGD(eta0=0.1, eta_tilde=1.0, b_hat=1)


def _gd(n, L):
    return ProxGD(eta=1.0 / L)


PRESETS = {
    p.name: p
    for p in (
        Preset("v1", "single sample, constant steps, m = n", _v1),
        Preset("v2", "gamma = 0.95, m = floor(sqrt n), trade-off batch", _tradeoff(0.95, _isqrt, "ProxSARAH-v2")),
        Preset("v3", "gamma = 0.99, m = floor(sqrt n), trade-off batch", _tradeoff(0.99, _isqrt, "ProxSARAH-v3")),
        Preset("v4", "gamma = 0.95, m = floor(n^(1/3)), trade-off batch", _tradeoff(0.95, _icbrt, "ProxSARAH-v4")),
        Preset("v5", "gamma = 0.99, m = floor(n^(1/3)), trade-off batch", _tradeoff(0.99, _icbrt, "ProxSARAH-v5")),
        Preset("A-v1", "single sample, adaptive steps, eta = 1/2, m = n", _a_v1),
        Preset("A-v2", "adaptive, gamma_m = 0.99, b_hat = m = floor(sqrt n)", _adaptive_sized(_isqrt, "ProxSARAH-A-v2")),
        Preset("A-v3", "adaptive, gamma_m = 0.99, b_hat = m = floor(n^(1/3))", _adaptive_sized(_icbrt, "ProxSARAH-A-v3")),
        Preset("svrg", "ProxSVRG; batch=single: eta = 1/(3nL), m = n; "
               "batch=mini: b_hat = floor(n^(2/3)), m = floor(n^(1/3)), eta = 1/(3L)", _svrg),
        Preset("spiderboost", "ProxSpiderBoost, b_hat = m = floor(sqrt n), eta = 1/(2L)", _spiderboost),
        Preset("sgd", "ProxSGD, eta0 = 0.1, eta_tilde = 1, single sample", _sgd),
        Preset("gd", "ProxGD, eta = 1/L", _gd),
    )
}

SARAH_PRESETS = ("v1", "v2", "v3", "v4", "v5", "A-v1", "A-v2", "A-v3")
BASELINE_PRESETS = ("svrg", "spiderboost", "sgd", "gd")


def get(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; known: {', '.join(PRESETS)}"
        ) from None


def describe(name, n, L, **options):
    """Derived parameters of a preset as an ordered dict."""
    meth = get(name)(n, L, **options)
    out = {"preset": name, "solver": meth.name, "n": n, "L": L}
    if isinstance(meth, ProxSARAH):
        s = meth.schedule
        out.update(rule=s.rule, m=s.m, b_hat=meth.b_hat)
        if len(set(s.gammas.tolist())) == 1:
            out["gamma"] = float(s.gammas[0])
        else:
            out.update(gamma_0=float(s.gammas[0]), gamma_m=float(s.gammas[-1]),
                       sigma_m=float(s.sigma_m))
        out["eta"] = float(s.etas[0])
    else:
        for key in ("m", "b_hat", "eta", "eta0", "eta_tilde"):
            if hasattr(meth, key):
                out[key] = getattr(meth, key)
    return out
