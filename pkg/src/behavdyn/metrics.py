"""Entropy, circular statistics, z-scores, correlation and two-way ANOVA."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError

__all__ = [
    "Histogram",
    "EntropyReport",
    "CircularStats",
    "AnovaTable",
    "shannon_entropy",
    "histogram_probs",
    "circular_stats",
    "zscore",
    "pearson_r",
    "anova_two_way",
    "wrap_phase",
    "DEFAULT_BINS",
    "PROB_SUM_TOLERANCE",
    "SD_SENTINEL",
]

DEFAULT_BINS = 36
PROB_SUM_TOLERANCE = 0.05
# reported as SDphi when the resultant length vanishes
SD_SENTINEL = 1.0e9
_R_DEGENERATE = 1e-12


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    probs: np.ndarray


@dataclass(frozen=True)
class EntropyReport:
    h_bits: float
    prob_sum: float
    renormalized: bool

    def to_dict(self):
        return {
            "h_bits": self.h_bits,
            "prob_sum": self.prob_sum,
            "renormalized": self.renormalized,
        }


@dataclass(frozen=True)
class CircularStats:
    mean_shift: float
    sd_phi: float
    resultant_R: float
    degenerate: bool = False


@dataclass(frozen=True)
class AnovaTable:
    """Fixed-effects two-way ANOVA with interaction.

    ``ss`` and ``dof`` are keyed by ``"alpha"``, ``"beta"``, ``"interaction"``,
    ``"error"`` and ``"total"``; ``dof`` of an effect is its numerator degrees
    of freedom (the denominator is always ``dof["error"]``).
    """

    f_alpha: float
    f_beta: float
    f_interaction: float
    ss: dict = field(default_factory=dict)
    dof: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "f_alpha": self.f_alpha,
            "f_beta": self.f_beta,
            "f_interaction": self.f_interaction,
            "ss": dict(self.ss),
            "dof": {k: [v, self.dof["error"]] for k, v in self.dof.items()
                    if k in ("alpha", "beta", "interaction")},
        }


def wrap_phase(phi):
    """Wrap angles into [-pi, pi)."""
    return np.mod(np.asarray(phi, dtype=float) + np.pi, 2.0 * np.pi) - np.pi


def shannon_entropy(probs, renormalize=False):
    """Shannon entropy in bits of a probability list.

    Zero entries contribute nothing.  The list is used as given when its sum
    is within ``PROB_SUM_TOLERANCE`` of one (so a rounded set such as six
    entries of 0.16 is accepted); beyond that ``renormalize=True`` is
    required.

    Parameters
    ----------
    probs : sequence of float
        Non-negative weights, at least one positive.
    renormalize : bool
        Divide by the sum before computing the entropy.

    Returns
    -------
    EntropyReport

    Examples
    --------
    >>> shannon_entropy([0.5, 0.5]).h_bits
    1.0
    """
    p = np.asarray(probs, dtype=float).ravel()
    if p.size == 0:
        raise InvalidArgumentError("probability list is empty")
    if not np.all(np.isfinite(p)):
        raise InvalidArgumentError("probabilities must be finite")
    if np.any(p < 0):
        raise InvalidArgumentError("negative probability")
    total = float(math.fsum(p.tolist()))
    if total <= 0.0:
        raise InvalidArgumentError("all probabilities are zero")
    if renormalize:
        p = p / total
    elif abs(total - 1.0) > PROB_SUM_TOLERANCE:
        raise InvalidArgumentError(
            f"probabilities sum to {total:.6g}; pass renormalize=True to rescale"
        )
    nz = p[p > 0]
    # -p log2 p rather than p log2(1/p): 1/p overflows for subnormal p
    h = math.fsum((-nz * np.log2(nz)).tolist()) + 0.0
    return EntropyReport(h_bits=max(h, 0.0), prob_sum=total, renormalized=bool(renormalize))


def histogram_probs(series, bins=DEFAULT_BINS, range=(-math.pi, math.pi)):
    """Relative frequencies of a phase series over equal-width bins.

    Samples are wrapped into ``range`` before binning.
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.size == 0:
        raise InvalidArgumentError("empty series")
    if bins < 2:
        raise InvalidArgumentError("bins must be >= 2")
    lo, hi = float(range[0]), float(range[1])
    if not hi > lo:
        raise InvalidArgumentError("range must be increasing")
    width = hi - lo
    w = np.mod(x - lo, width)
    idx = np.floor(w / width * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    counts = np.bincount(idx, minlength=bins)
    edges = lo + width * np.arange(bins + 1) / bins
    return Histogram(bin_edges=edges, probs=counts / x.size)


def circular_stats(series, phi0=0.0):
    """Mean shift from ``phi0``, circular SD and resultant length."""
    x = np.asarray(series, dtype=float).ravel()
    if x.size == 0:
        raise InvalidArgumentError("empty series")
    c = float(np.mean(np.cos(x)))
    s = float(np.mean(np.sin(x)))
    R = min(math.hypot(c, s), 1.0)
    if R < _R_DEGENERATE:
        return CircularStats(mean_shift=0.0, sd_phi=SD_SENTINEL, resultant_R=R, degenerate=True)
    shift = math.atan2(s, c) - phi0
    shift -= 2.0 * math.pi * math.ceil((shift - math.pi) / (2.0 * math.pi))
    shift += 0.0  # no negative zero
    sd = math.sqrt(max(0.0, -2.0 * math.log(R)))
    return CircularStats(mean_shift=shift, sd_phi=sd, resultant_R=R)


def zscore(series):
    """Standard scores ``(x - mean) / sigma`` with the population sigma."""
    x = np.asarray(series, dtype=float).ravel()
    if x.size < 2:
        raise InvalidArgumentError("zscore needs at least two values")
    mu = x.mean()
    sigma = math.sqrt(float(np.mean((x - mu) ** 2)))
    if sigma == 0.0 or sigma < 1e-300:
        raise DegenerateInputError("zero standard deviation")
    return (x - mu) / sigma


def pearson_r(x, y):
    """Sample Pearson correlation coefficient, clipped to [-1, 1]."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise InvalidArgumentError("x and y differ in length")
    if x.size < 3:
        raise InvalidArgumentError("need at least three pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("constant input")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _as_cell_array(values):
    """Turn ``{(a, b, rep): value}`` or an (I, J, n) array into an array."""
    if isinstance(values, dict):
        a_levels = sorted({k[0] for k in values}, key=str)
        b_levels = sorted({k[1] for k in values}, key=str)
        cells = {}
        for (a, b, _rep), v in values.items():
            cells.setdefault((a, b), []).append(float(v))
        sizes = {len(cells.get((a, b), [])) for a in a_levels for b in b_levels}
        if len(sizes) != 1 or 0 in sizes:
            raise InvalidArgumentError("unbalanced design: every cell needs the same replicate count")
        n = sizes.pop()
        arr = np.empty((len(a_levels), len(b_levels), n))
        for i, a in enumerate(a_levels):
            for j, b in enumerate(b_levels):
                arr[i, j, :] = cells[(a, b)]
        return arr
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 3:
        raise InvalidArgumentError("expected an (levels_A, levels_B, replicates) array")
    return arr


def anova_two_way(values):
    """Balanced two-way fixed-effects ANOVA with interaction.

    Parameters
    ----------
    values : dict or array_like
        Either a mapping ``(level_A, level_B, replicate) -> value`` or an
        array of shape ``(I, J, n)``.

    Returns
    -------
    AnovaTable
        F statistics for factor A (``alpha``), factor B (``beta``) and the
        interaction, with sums of squares and degrees of freedom.  When the
        error mean square is zero an F is reported as 0 if its effect sum of
        squares is also zero and as ``inf`` otherwise.
    """
    y = _as_cell_array(values)
    I, J, n = y.shape
    if I < 2 or J < 2:
        raise InvalidArgumentError("each factor needs at least two levels")
    if n < 2:
        raise InvalidArgumentError("need at least two replicates per cell")
    grand = y.mean()
    cell = y.mean(axis=2)
    a_mean = y.mean(axis=(1, 2))
    b_mean = y.mean(axis=(0, 2))

    ss_a = J * n * float(np.sum((a_mean - grand) ** 2))
    ss_b = I * n * float(np.sum((b_mean - grand) ** 2))
    inter = cell - a_mean[:, None] - b_mean[None, :] + grand
    ss_ab = n * float(np.sum(inter ** 2))
    ss_e = float(np.sum((y - cell[:, :, None]) ** 2))
    ss_t = float(np.sum((y - grand) ** 2))

    df_a, df_b = I - 1, J - 1
    df_ab = df_a * df_b
    df_e = I * J * (n - 1)
    ms_e = ss_e / df_e
    # sums of squares below this are rounding noise of a constant table
    tiny = 1e-24 * max(ss_t, grand * grand * y.size, 1e-300)

    def _f(ss, df):
        if ss_e <= tiny:
            return 0.0 if ss <= tiny else math.inf
        return (ss / df) / ms_e

    return AnovaTable(
        f_alpha=_f(ss_a, df_a),
        f_beta=_f(ss_b, df_b),
        f_interaction=_f(ss_ab, df_ab),
        ss={"alpha": ss_a, "beta": ss_b, "interaction": ss_ab, "error": ss_e, "total": ss_t},
        dof={"alpha": df_a, "beta": df_b, "interaction": df_ab, "error": df_e, "total": I * J * n - 1},
    )
