"""Logistic map iteration, orbit divergence and Lyapunov exponents."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "MapSpec",
    "DivergenceTrace",
    "LyapunovResult",
    "logistic_iterate",
    "orbit_divergence",
    "lyapunov",
    "lyapunov_estimate",
    "divergence_rate",
]

DEFAULT_BURN_IN = 1000
# nudge applied when an orbit lands exactly on 0.5 or on the 0/1 absorbing pair
_GUARD_NUDGE = 1e-12


@dataclass(frozen=True)
class MapSpec:
    r: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and 0.0 <= self.r <= 4.0):
            raise InvalidArgumentError(f"r must lie in [0, 4], got {self.r!r}")


@dataclass(frozen=True)
class DivergenceTrace:
    epsilon0: float
    distances: np.ndarray


@dataclass(frozen=True)
class LyapunovResult:
    value: float
    skipped: int
    nudged: int


def _check_x(x, name="x0"):
    if not (math.isfinite(x) and 0.0 <= x <= 1.0):
        raise InvalidArgumentError(f"{name} must lie in [0, 1], got {x!r}")


def logistic_iterate(spec, x0, n):
    """Return ``[x0, x1, ..., xn]`` for ``x_{k+1} = r x_k (1 - x_k)``."""
    _check_x(x0)
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    r = spec.r
    out = [0.0] * (n + 1)
    x = float(x0)
    out[0] = x
    for k in range(1, n + 1):
        x = r * x * (1.0 - x)
        out[k] = x
    return np.array(out)


def orbit_divergence(spec, x0, epsilon0, n):
    """Distances ``|f^k(x0 + eps) - f^k(x0)|`` for ``k = 0..n``."""
    if not epsilon0 > 0.0:
        raise InvalidArgumentError("epsilon0 must be positive")
    _check_x(x0)
    _check_x(x0 + epsilon0, "x0 + epsilon0")
    a = logistic_iterate(spec, x0, n)
    b = logistic_iterate(spec, x0 + epsilon0, n)
    d = np.abs(b - a)
    d[0] = epsilon0
    return DivergenceTrace(epsilon0=epsilon0, distances=d)


def lyapunov_estimate(spec, x0, n, burn_in=DEFAULT_BURN_IN):
    """Average log-derivative along the orbit, with guard bookkeeping.

    Iterates that land exactly on 0.5 (zero derivative) are skipped and
    counted.  An orbit that started elsewhere but lands exactly on 0 or 1 (a
    preimage of the repelling origin) is nudged by ``1e-12`` so the estimate
    is not captured by the fixed point.
    """
    _check_x(x0)
    if n < 1000:
        raise InvalidArgumentError("n must be >= 1000")
    if burn_in < 0:
        raise InvalidArgumentError("burn_in must be >= 0")
    r = spec.r
    x = float(x0)
    on_origin = x0 in (0.0, 1.0)
    nudged = 0
    for _ in range(burn_in):
        x = r * x * (1.0 - x)
        if not on_origin and r > 1.0 and (x == 0.0 or x == 1.0):
            x = _GUARD_NUDGE
            nudged += 1
    xs = np.empty(n)
    for k in range(n):
        xs[k] = x
        x = r * x * (1.0 - x)
        if not on_origin and r > 1.0 and (x == 0.0 or x == 1.0):
            x = _GUARD_NUDGE
            nudged += 1
    deriv = np.abs(r * (1.0 - 2.0 * xs))
    ok = deriv > 0.0
    skipped = int(n - np.count_nonzero(ok))
    if skipped == n:
        return LyapunovResult(value=-math.inf, skipped=skipped, nudged=nudged)
    value = float(np.sum(np.log(deriv[ok])) / (n - skipped))
    return LyapunovResult(value=value, skipped=skipped, nudged=nudged)


def lyapunov(spec, x0, n, burn_in=DEFAULT_BURN_IN):
    """Lyapunov exponent of the logistic map.

    ``lambda = (1/n) sum ln|r (1 - 2 x_k)|`` over ``n`` post-burn-in iterates;
    ``exp(lambda)`` is the geometric-mean per-step expansion factor.
    """
    return lyapunov_estimate(spec, x0, n, burn_in).value


def divergence_rate(trace, saturation=1e-3):
    """Least-squares slope of ``ln d_k`` before the distance saturates.

    Independent of :func:`lyapunov`: it only uses the separation of two
    orbits.  Points after the first distance above ``saturation`` and any
    zero distances are excluded.
    """
    d = np.asarray(trace.distances, dtype=float)
    stop = np.argmax(d > saturation) if np.any(d > saturation) else d.size
    k = np.arange(d.size)[:stop]
    d = d[:stop]
    keep = d > 0
    k, d = k[keep], d[keep]
    if k.size < 2:
        raise InvalidArgumentError("not enough unsaturated distances to fit a rate")
    return float(np.polyfit(k, np.log(d), 1)[0])
