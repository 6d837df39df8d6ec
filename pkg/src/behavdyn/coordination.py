"""Relative-phase coordination dynamics under circadian temperature forcing.

Covers the damped mass-spring point attractor, the HKB potential and its
symmetry-broken relative-phase SDE, fixed-point analysis, the circadian
core-temperature protocol and a generator of synthetic experiment data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RandomStream
from .errors import IntegrationDivergedError, InvalidArgumentError

__all__ = [
    "SpringParams",
    "HkbParams",
    "PhaseSeries",
    "TemperatureProtocol",
    "ExperimentDesign",
    "ExperimentTrial",
    "CONDITIONS",
    "spring_accel",
    "spring_energy",
    "simulate_spring",
    "hkb_potential",
    "hkb_drift",
    "integrate_phase",
    "integrate_phase_batch",
    "fixed_points",
    "antiphase_boundary",
    "circadian_T0",
    "epsilon",
    "condition_epsilon",
    "thermo_coefficients",
    "synthetic_experiment",
]

CONDITIONS = ("NORMAL", "HEAT", "ICE")
DEFAULT_DT = 0.005
TRIAL_SECONDS = 60.0
FIXED_POINT_SCAN = 721
_ROOT_ATOL = 1e-12


# -- mass-spring -------------------------------------------------------------


@dataclass(frozen=True)
class SpringParams:
    m: float = 1.0
    b: float = 0.0
    k: float = 1.0

    def __post_init__(self):
        if not self.m > 0 or not self.k > 0 or not self.b >= 0:
            raise InvalidArgumentError("spring needs m > 0, k > 0, b >= 0")


def spring_accel(x, v, p, f=0.0):
    """Acceleration ``(f - b v - k x) / m`` of the forced mass-spring."""
    return (f - p.b * v - p.k * x) / p.m


def spring_energy(x, v, p):
    return 0.5 * p.m * v * v + 0.5 * p.k * x * x


def simulate_spring(p, x0, v0, dt, n):
    """Integrate the unforced spring with classical fixed-step RK4.

    Returns an ``(n + 1, 2)`` array of ``(x, v)`` starting at ``(x0, v0)``.
    """
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    out = np.empty((n + 1, 2))
    x, v = float(x0), float(v0)
    out[0] = x, v
    h2 = 0.5 * dt
    for i in range(1, n + 1):
        k1x, k1v = v, spring_accel(x, v, p)
        k2x, k2v = v + h2 * k1v, spring_accel(x + h2 * k1x, v + h2 * k1v, p)
        k3x, k3v = v + h2 * k2v, spring_accel(x + h2 * k2x, v + h2 * k2v, p)
        k4x, k4v = v + dt * k3v, spring_accel(x + dt * k3x, v + dt * k3v, p)
        x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (math.isfinite(x) and math.isfinite(v)):
            raise IntegrationDivergedError(f"spring integration diverged at step {i}", step=i)
        out[i] = x, v
    return out


# -- HKB relative phase ------------------------------------------------------


@dataclass(frozen=True)
class HkbParams:
    """Coupling coefficients of the relative-phase equation.

    ``a``, ``b`` are the symmetric coupling, ``c``, ``d`` the asymmetric
    (symmetry-breaking) coupling, ``delta_omega`` the detuning in rad/s and
    ``Q`` the noise strength.
    """

    a: float = 1.0
    b: float = 0.5
    c: float = 0.0
    d: float = 0.0
    delta_omega: float = 0.0
    Q: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "c", "d", "delta_omega", "Q"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"{name} must be finite")
        for name in ("a", "b", "Q"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")


@dataclass(frozen=True)
class PhaseSeries:
    """Relative phase sampled every ``dt`` seconds, stored unwrapped."""

    dt: float
    samples: np.ndarray
    seed: int = 0

    @property
    def times(self):
        return self.dt * np.arange(len(self.samples))

    def wrapped(self):
        return np.mod(self.samples + np.pi, 2.0 * np.pi) - np.pi


def hkb_potential(phi, a, b):
    return -a * np.cos(phi) - b * np.cos(2.0 * phi)


def hkb_drift(phi, p):
    """Deterministic part of the relative-phase rate (rad/s)."""
    return (p.delta_omega
            - (p.a * np.sin(phi) + 2.0 * p.b * np.sin(2.0 * phi))
            - (p.c * np.sin(phi) + 2.0 * p.d * np.sin(2.0 * phi)))


def integrate_phase_batch(phi0, dt, n, a, b, c, d, delta_omega, Q, noise=None):
    """Euler-Maruyama for a batch of independent relative-phase equations.

    ``c``, ``d``, ``delta_omega`` and ``phi0`` broadcast over the batch.
    ``noise`` is a ``(batch, n)`` array of standard normals or None for the
    deterministic case.  Returns the ``(batch, n + 1)`` sample array.
    """
    phi0 = np.atleast_1d(np.asarray(phi0, dtype=float))
    c = np.broadcast_to(np.asarray(c, dtype=float), phi0.shape)
    d = np.broadcast_to(np.asarray(d, dtype=float), phi0.shape)
    dw = np.broadcast_to(np.asarray(delta_omega, dtype=float), phi0.shape)
    B = phi0.shape[0]
    out = np.empty((n + 1, B))
    out[0] = phi0
    phi = phi0.copy()
    two_b = 2.0 * b
    two_d = 2.0 * d
    scale = math.sqrt(Q * dt)
    if noise is not None:
        steps = np.ascontiguousarray(np.asarray(noise, dtype=float).reshape(B, n).T)
    for k in range(n):
        s1 = np.sin(phi)
        s2 = np.sin(2.0 * phi)
        drift = dw - (a * s1 + two_b * s2) - (c * s1 + two_d * s2)
        phi = phi + drift * dt
        if noise is not None:
            phi = phi + scale * steps[k]
        out[k + 1] = phi
    bad = ~np.isfinite(out)
    if bad.any():
        step = int(np.argmax(bad.any(axis=1)))
        raise IntegrationDivergedError(f"phase integration diverged at step {step}", step=step)
    return np.ascontiguousarray(out.T)


def integrate_phase(p, phi0, dt, n, rng):
    """Integrate the relative-phase SDE with Euler-Maruyama.

    ``phi_{k+1} = phi_k + drift(phi_k) dt + sqrt(Q dt) g_k`` where the
    ``g_k`` are standard normals drawn from ``rng``.  With ``Q = 0`` no draws
    are made and the result does not depend on the stream.
    """
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    noise = None
    if p.Q > 0:
        noise, _ = rng.normals(n)
    out = integrate_phase_batch(phi0, dt, n, p.a, p.b, p.c, p.d, p.delta_omega, p.Q,
                                None if noise is None else noise[None, :])
    return PhaseSeries(dt=dt, samples=out[0], seed=int(rng.seed))


def _bisect(f, lo, hi, flo, tol):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fixed_points(p, tol=1e-10):
    """Roots of the drift on [-pi, pi) with their stability.

    Sign-change scan on 721 equally spaced points followed by bisection.
    A root is stable when the central-difference derivative of the drift is
    negative.  Returns a list of ``(phi_star, stable)`` sorted by angle.
    """
    def f(x):
        return float(hkb_drift(x, p))

    grid = np.linspace(-math.pi, math.pi, FIXED_POINT_SCAN)
    vals = [f(x) for x in grid]
    # grid points where the drift is zero up to rounding (e.g. sin(pi) ~ 1e-16)
    # are roots in their own right and must not depend on a sign change
    on_grid = [abs(v) <= _ROOT_ATOL for v in vals]
    roots = [float(x) for x, hit in zip(grid, on_grid) if hit]
    for j in range(FIXED_POINT_SCAN - 1):
        if on_grid[j] or on_grid[j + 1]:
            continue
        lo, hi, flo, fhi = grid[j], grid[j + 1], vals[j], vals[j + 1]
        if flo * fhi < 0.0:
            roots.append(_bisect(f, float(lo), float(hi), flo, tol))
    wrapped = []
    for r in roots:
        r = (r + math.pi) % (2.0 * math.pi) - math.pi
        if all(abs((r - q + math.pi) % (2.0 * math.pi) - math.pi) > 1e-8 for q in wrapped):
            wrapped.append(r)
    h = 1e-6
    out = []
    for r in sorted(wrapped):
        slope = (f(r + h) - f(r - h)) / (2.0 * h)
        out.append((r, slope < 0.0))
    return out


def antiphase_boundary(a=1.0, lo=0.05, hi=1.0, tol=1e-4):
    """Locate the ``b`` at which anti-phase (``phi = pi``) becomes stable.

    Bisection on ``b`` using :func:`fixed_points`; the analytic answer is
    ``a / 4``.
    """
    def stable_at(b):
        pts = fixed_points(HkbParams(a=a, b=b))
        return any(s and abs(abs(r) - math.pi) < 0.05 for r, s in pts)

    if stable_at(lo) or not stable_at(hi):
        raise InvalidArgumentError("bracket does not contain the anti-phase stability flip")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stable_at(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# -- temperature protocol ----------------------------------------------------


def _default_offsets():
    return {"NORMAL": 0.0, "HEAT": 1.0, "ICE": -1.0}


@dataclass(frozen=True)
class TemperatureProtocol:
    """Circadian core-temperature protocol and its coupling gains.

    ``perturbation`` maps a condition name to the vest offset in Celsius.
    ``gain_d`` (per Celsius) converts the control parameter into a change
    of the asymmetric coupling ``d``; ``gain_c`` does the same for ``c`` and
    defaults to zero, which keeps ``c`` at its base value.
    """

    T_mean: float = 36.8
    amplitude: float = 0.5
    perturbation: dict = field(default_factory=_default_offsets)
    gain_c: float = 0.0
    gain_d: float = -0.2

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise InvalidArgumentError("amplitude must be >= 0")

    def offset(self, condition):
        try:
            return float(self.perturbation[condition])
        except KeyError:
            raise InvalidArgumentError(f"unknown condition {condition!r}") from None


def _check_hour(hour):
    if not (math.isfinite(hour) and 0.0 <= hour < 24.0):
        raise InvalidArgumentError(f"hour must lie in [0, 24), got {hour!r}")


def circadian_T0(hour, proto=None):
    """Core temperature at ``hour``: minimum at 5:00, maximum at 17:00."""
    proto = proto or TemperatureProtocol()
    _check_hour(hour)
    return proto.T_mean + proto.amplitude * math.sin(2.0 * math.pi * (hour - 11.0) / 24.0)


def epsilon(T, T0):
    """Temperature control parameter ``T - T0``."""
    return T - T0


def condition_epsilon(hour, condition, proto=None):
    """Control parameter seen by the dynamics at ``hour`` under ``condition``.

    The reference ``T`` is the fixed set-point ``T_mean``; ``T0`` is the
    circadian core temperature.  A vest offset of magnitude ``|dT|`` widens
    the circadian swing to ``amplitude + |dT|``, so heat and ice both push
    the control parameter further from zero: up at dawn, down at dusk.
    """
    proto = proto or TemperatureProtocol()
    _check_hour(hour)
    swing = proto.amplitude + abs(proto.offset(condition))
    t0 = proto.T_mean + swing * math.sin(2.0 * math.pi * (hour - 11.0) / 24.0)
    return epsilon(proto.T_mean, t0)


def thermo_coefficients(eps, base_c, base_d, proto=None):
    """Asymmetric coupling ``(c, d)`` under control parameter ``eps``."""
    proto = proto or TemperatureProtocol()
    return base_c + proto.gain_c * eps, base_d + proto.gain_d * eps


# -- synthetic experiment ----------------------------------------------------


@dataclass(frozen=True)
class ExperimentDesign:
    circadian_points: tuple = (5.0, 12.0, 17.0, 0.0)
    participants: int = 8
    trials_per_point: int = 6
    condition: str = "NORMAL"

    def __post_init__(self):
        object.__setattr__(self, "circadian_points", tuple(float(h) for h in self.circadian_points))
        if self.participants < 1 or self.trials_per_point < 1:
            raise InvalidArgumentError("participants and trials_per_point must be >= 1")
        if not self.circadian_points:
            raise InvalidArgumentError("at least one circadian point is required")
        for h in self.circadian_points:
            _check_hour(h)
        if self.condition not in CONDITIONS:
            raise InvalidArgumentError(f"condition must be one of {CONDITIONS}")


@dataclass(frozen=True)
class ExperimentTrial:
    participant: int
    hour: float
    trial: int
    condition: str
    epsilon: float
    c: float
    d: float
    delta_omega: float
    series: PhaseSeries


def synthetic_experiment(design, p, proto, seed, *, duration=TRIAL_SECONDS, dt=DEFAULT_DT,
                         jitter=0.1, phi0=0.0):
    """Simulate every (participant, circadian point, trial) of a design.

    Each participant gets a detuning offset uniform in ``[-jitter, jitter]``
    from its own substream; each trial draws its noise from a substream
    keyed by (participant, hour, trial), so the condition does not change
    the noise and conditions can be compared pairwise.  Rows come back in
    lexicographic (participant, point, trial) order; participants and trials
    are numbered from 1.
    """
    n = int(round(duration / dt))
    if n < 1:
        raise InvalidArgumentError("duration must cover at least one step")
    root = RandomStream(int(seed))
    rows = []
    c_list, d_list, dw_list, noises = [], [], [], []
    for pi in range(1, design.participants + 1):
        u, _ = root.spawn("participant", pi).draw()
        dw = p.delta_omega + (2.0 * u - 1.0) * jitter
        for hour in design.circadian_points:
            eps = condition_epsilon(hour, design.condition, proto)
            c, d = thermo_coefficients(eps, p.c, p.d, proto)
            for trial in range(1, design.trials_per_point + 1):
                stream = root.spawn("trial", pi, f"{hour:g}", trial)
                rows.append((pi, hour, trial, eps, c, d, dw, stream.seed))
                c_list.append(c)
                d_list.append(d)
                dw_list.append(dw)
                if p.Q > 0:
                    noises.append(stream.normals(n)[0])
    noise = np.vstack(noises) if noises else None
    try:
        samples = integrate_phase_batch(np.full(len(rows), phi0, dtype=float), dt, n, p.a, p.b,
                                        np.array(c_list), np.array(d_list), np.array(dw_list),
                                        p.Q, noise)
    except IntegrationDivergedError as exc:
        raise IntegrationDivergedError(
            f"synthetic experiment ({design.condition}): {exc}", step=exc.step) from exc
    out = []
    for i, (pi, hour, trial, eps, c, d, dw, s) in enumerate(rows):
        out.append(ExperimentTrial(pi, hour, trial, design.condition, eps, c, d, dw,
                                   PhaseSeries(dt=dt, samples=samples[i], seed=s)))
    return out
