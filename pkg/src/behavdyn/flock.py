"""Evolutionary flocking model with social-network coupling.

Agents move on a bounded plane.  Each step every agent reads the previous
state (synchronous update) and computes

    new velocity = u +/- inner

where ``u = group heading + unit vector toward the centroid of neighbours
within radius E``, the sign is ``-`` when the agent is faster than the group
heading and ``+`` otherwise, and ``inner`` depends on the payoff mode:

* ``PI1``: ``(1 - k) v_i + k v_avg``
* ``PI2``: ``PI1 + v_ss * unit(v_i)`` (network density times mutation)
* ``PI3``: ``PI1 * (id / v_ss)`` (index of difficulty over network term)

Speeds are capped at ``max_speed``.  After moving, each agent imitates the
velocity of its nearest neighbour with the Fermi probability of their payoff
(speed) difference.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .core import RandomStream, Vec2, derive_seed, vec_combine, vec_norm_dir
from .errors import DegenerateDenominatorError, InvalidArgumentError
from .metrics import DEFAULT_BINS, histogram_probs, shannon_entropy

__all__ = [
    "MODES",
    "FlockParams",
    "AgentState",
    "FlockState",
    "FlockMetrics",
    "SweepReport",
    "group_heading",
    "conditional_flip",
    "tradeoff_update",
    "network_density",
    "mutation_scalar",
    "index_of_difficulty",
    "agent_update",
    "fermi_probability",
    "imitation_step",
    "pursuit_step",
    "init_flock",
    "step_flock",
    "flock_metrics",
    "alignment",
    "run_flock",
    "summarize_sweep",
    "sweep_social_ties",
    "METRIC_COLUMNS",
]

MODES = ("PI1", "PI2", "PI3")
EPS_DIV = 1e-9
METRIC_COLUMNS = ("step", "avg_displacement", "cluster_var_min", "cluster_var_max",
                  "sd_displacement", "entropy_bits")


@dataclass(frozen=True)
class FlockParams:
    """Scalar knobs of the flocking model.

    Defaults follow the model parameter table: 1000 individuals, trade-off
    ``k = 0.1`` (index of difficulty 0.8), mutation rate 0.5, social ties
    0.55 and the interconnected mode ``PI3``.  ``D`` is the link distance
    used by the clustering metric, ``E`` the vision radius, ``V`` the
    initial speed and ``nodes`` the node count entering the network
    density.
    """

    M: int = 1000
    D: float = 2.0
    E: float = 5.0
    V: float = 1.0
    max_speed: float = 10.0
    k: float = 0.1
    k_prime: float = 0.5
    t_ties: float = 0.55
    W: float = 1.0
    omega_sel: float = 1.0
    nodes: int = 10
    mode: str = "PI3"
    width: float = 100.0
    height: float = 100.0
    boundary: str = "wrap"
    flip: bool = True

    def __post_init__(self):
        if self.M < 2:
            raise InvalidArgumentError("M must be >= 2")
        if not 0.0 <= self.k <= 1.0:
            raise InvalidArgumentError("k must lie in [0, 1]")
        if not 0.0 <= self.k_prime <= 1.0:
            raise InvalidArgumentError("k_prime must lie in [0, 1]")
        if not 0.1 <= self.t_ties <= 0.9:
            raise InvalidArgumentError("t_ties must lie in [0.1, 0.9]")
        if not 0.0 < self.W <= 1.0:
            raise InvalidArgumentError("W must lie in (0, 1]")
        if not self.omega_sel >= 0.0:
            raise InvalidArgumentError("omega_sel must be >= 0")
        if self.nodes < 2:
            raise InvalidArgumentError("nodes must be >= 2")
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}")
        if self.mode == "PI3" and self.k > 0.5:
            raise InvalidArgumentError("mode PI3 needs k in [0, 0.5]")
        if self.boundary not in ("wrap", "clamp"):
            raise InvalidArgumentError("boundary must be 'wrap' or 'clamp'")
        for name in ("D", "E", "V", "max_speed", "width", "height"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")

    @property
    def box(self):
        return np.array([self.width, self.height])


@dataclass(frozen=True)
class AgentState:
    pos: Vec2
    vel: Vec2
    payoff: float


@dataclass(frozen=True, eq=False)
class FlockState:
    """Population snapshot stored as arrays.

    ``disp`` is each agent's accumulated (unwrapped) displacement since the
    start of the run.
    """

    pos: np.ndarray
    vel: np.ndarray
    payoff: np.ndarray
    disp: np.ndarray
    step_index: int = 0
    rng: RandomStream = field(default_factory=lambda: RandomStream(0))

    @property
    def agents(self):
        return [AgentState(Vec2(float(p[0]), float(p[1])), Vec2(float(v[0]), float(v[1])), float(q))
                for p, v, q in zip(self.pos, self.vel, self.payoff)]

    @classmethod
    def from_agents(cls, agents, rng=None, step_index=0):
        pos = np.array([[a.pos.x, a.pos.y] for a in agents], dtype=float)
        vel = np.array([[a.vel.x, a.vel.y] for a in agents], dtype=float)
        payoff = np.array([a.payoff for a in agents], dtype=float)
        return cls(pos, vel, payoff, np.zeros_like(pos), step_index, rng or RandomStream(0))


@dataclass(frozen=True)
class FlockMetrics:
    avg_displacement: float
    cluster_var_min: float
    cluster_var_max: float
    sd_displacement: float
    entropy_bits: float


@dataclass(frozen=True)
class SweepReport:
    ties_grid: list
    metric_per_tie: list
    decay_rate: float
    threshold_estimate: float
    degenerate_fit: bool = False

    def to_dict(self):
        return {
            "ties_grid": list(self.ties_grid),
            "metric_per_tie": list(self.metric_per_tie),
            "decay_rate": self.decay_rate,
            "threshold_estimate": self.threshold_estimate,
            "degenerate_fit": self.degenerate_fit,
        }


# -- scalar rules ------------------------------------------------------------


def _fsum_mean(values):
    return math.fsum(values) / len(values)


def group_heading(agents):
    """Mean velocity of the population."""
    if not agents:
        raise InvalidArgumentError("empty agent list")
    return Vec2(_fsum_mean([a.vel.x for a in agents]), _fsum_mean([a.vel.y for a in agents]))


def _flip_sign(v_i, v_avg):
    return -1.0 if v_i.norm() > v_avg.norm() else 1.0


def conditional_flip(v_i, v_avg):
    """``+v_i`` unless the agent is faster than the group heading."""
    return vec_combine(_flip_sign(v_i, v_avg), v_i, 0.0, v_avg)


def tradeoff_update(v_i, v_avg, k):
    """Individual/group trade-off ``(1 - k) v_i + k v_avg``."""
    if not 0.0 <= k <= 1.0:
        raise InvalidArgumentError("k must lie in [0, 1]")
    return vec_combine(1.0 - k, v_i, k, v_avg)


def network_density(t_ties, N):
    """Actual over potential connections: ``(2 t / N) / (N (N - 1) / 2)``."""
    if N < 2:
        raise InvalidArgumentError("network density needs N >= 2")
    if t_ties < 0:
        raise InvalidArgumentError("t_ties must be >= 0")
    actual = 2.0 * t_ties / N
    potential = N * (N - 1) / 2.0
    return actual / potential


def mutation_scalar(k_prime, v_s):
    """Network term ``k' (1 - v_s) - 2 k' v_s``; negative above ``v_s = 1/3``."""
    if not 0.0 <= k_prime <= 1.0:
        raise InvalidArgumentError("k_prime must lie in [0, 1]")
    return k_prime * (1.0 - v_s) - 2.0 * k_prime * v_s


def index_of_difficulty(k, W):
    """``(1 - 2k) / W``: 0.8 at ``k = 0.1`` and 0.2 at ``k = 0.4`` for ``W = 1``."""
    if not W > 0:
        raise InvalidArgumentError("W must be positive")
    if not 0.0 <= k <= 0.5:
        raise InvalidArgumentError("index of difficulty needs k in [0, 0.5]")
    return (1.0 - 2.0 * k) / W


def _network_term(params):
    return mutation_scalar(params.k_prime, network_density(params.t_ties, params.nodes))


def _pi3_factor(params):
    v_ss = _network_term(params)
    if abs(v_ss) < EPS_DIV:
        raise DegenerateDenominatorError(f"network term {v_ss!r} too close to zero for mode PI3")
    return index_of_difficulty(params.k, params.W) / v_ss


def _min_image(dx, extent, wrap):
    if wrap:
        dx = dx - extent * np.round(dx / extent)
    return dx


def _cap_speed(v, cap):
    n = v.norm()
    if n > cap:
        return Vec2(v.x * (cap / n), v.y * (cap / n))
    return v


def _place(x, extent, wrap):
    if wrap:
        x = x % extent
        return 0.0 if x >= extent else x
    return min(max(x, 0.0), extent)


def agent_update(agent, flock, params, index):
    """New state of agent ``index`` from the previous population state.

    Reference (per-agent) implementation of the movement rule; the
    vectorized :func:`step_flock` must agree with it.
    """
    agents = flock.agents
    wrap = params.boundary == "wrap"
    v_avg = group_heading(agents)
    offsets = []
    for j, other in enumerate(agents):
        if j == index:
            continue
        dx = float(_min_image(other.pos.x - agent.pos.x, params.width, wrap))
        dy = float(_min_image(other.pos.y - agent.pos.y, params.height, wrap))
        if math.hypot(dx, dy) <= params.E:
            offsets.append((dx, dy))
    if offsets:
        centre = Vec2(_fsum_mean([o[0] for o in offsets]), _fsum_mean([o[1] for o in offsets]))
        b_i = vec_norm_dir(centre)[1]
    else:
        b_i = Vec2(0.0, 0.0)
    u = vec_combine(1.0, v_avg, 1.0, b_i)

    inner = tradeoff_update(agent.vel, v_avg, params.k)
    if params.mode == "PI2":
        inner = vec_combine(1.0, inner, _network_term(params), vec_norm_dir(agent.vel)[1])
    elif params.mode == "PI3":
        inner = inner * _pi3_factor(params)
    sign = _flip_sign(agent.vel, v_avg) if params.flip else 1.0
    vel = _cap_speed(vec_combine(1.0, u, sign, inner), params.max_speed)
    pos = Vec2(_place(agent.pos.x + vel.x, params.width, wrap),
               _place(agent.pos.y + vel.y, params.height, wrap))
    return AgentState(pos, vel, vel.norm())


def fermi_probability(delta_pi, omega_sel):
    """Imitation probability ``1 / (1 + exp(-omega * delta_pi))``."""
    if omega_sel < 0:
        raise InvalidArgumentError("omega_sel must be >= 0")
    z = omega_sel * delta_pi
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def imitation_step(focal, role, params, rng):
    """Focal adopts the role model's velocity with the Fermi probability."""
    u, rng = rng.draw()
    p = fermi_probability(role.payoff - focal.payoff, params.omega_sel)
    vel = role.vel if u < p else focal.vel
    return AgentState(focal.pos, vel, vel.norm()), rng


def pursuit_step(S_l, alpha, d):
    """Observed displacement ``S_l + alpha d**2``."""
    if d < 0:
        raise InvalidArgumentError("d must be >= 0")
    return S_l + alpha * d * d


# -- vectorized population step ----------------------------------------------


def _tree(pos, params):
    if params.boundary == "wrap":
        return cKDTree(pos, boxsize=params.box)
    return cKDTree(pos)


def _pairs_within(pos, params, radius):
    """Unordered pairs ``(i, j, dx, dy, dist)`` with ``dist <= radius``."""
    wrap = params.boundary == "wrap"
    tree = _tree(pos, params)
    pairs = tree.query_pairs(radius * (1.0 + 1e-9) + 1e-12, output_type="ndarray")
    if pairs.size == 0:
        empty = np.empty(0)
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), empty, empty, empty
    i, j = pairs[:, 0], pairs[:, 1]
    dx = _min_image(pos[j, 0] - pos[i, 0], params.width, wrap)
    dy = _min_image(pos[j, 1] - pos[i, 1], params.height, wrap)
    dist = np.hypot(dx, dy)
    keep = dist <= radius
    return i[keep], j[keep], dx[keep], dy[keep], dist[keep]


def _nearest(M, i, j, dist):
    """Nearest neighbour index per agent (-1 if none); ties by lowest index."""
    src = np.concatenate([i, j])
    dst = np.concatenate([j, i])
    d = np.concatenate([dist, dist])
    nn = np.full(M, -1, dtype=np.int64)
    if src.size == 0:
        return nn
    order = np.lexsort((dst, d, src))
    src, dst = src[order], dst[order]
    first = np.ones(src.size, dtype=bool)
    first[1:] = src[1:] != src[:-1]
    nn[src[first]] = dst[first]
    return nn


def _wrap_positions(pos, params):
    if params.boundary == "wrap":
        box = params.box
        pos = np.mod(pos, box)
        return np.where(pos >= box, 0.0, pos)
    return np.clip(pos, 0.0, params.box)


def init_flock(params, seed):
    """Uniform random positions and headings, all at speed ``V``."""
    root = RandomStream(int(seed))
    u, _ = root.spawn("init").uniforms(3 * params.M)
    pos = np.column_stack([u[0::3] * params.width, u[1::3] * params.height])
    pos = _wrap_positions(pos, params)
    theta = 2.0 * np.pi * u[2::3]
    vel = params.V * np.column_stack([np.cos(theta), np.sin(theta)])
    payoff = np.hypot(vel[:, 0], vel[:, 1])
    return FlockState(pos, vel, payoff, np.zeros_like(pos), 0, root.spawn("dynamics"))


def step_flock(state, params):
    """One synchronous movement + imitation step for the whole population."""
    pos, vel = state.pos, state.vel
    M = pos.shape[0]
    wrap = params.boundary == "wrap"
    v_avg = np.array([_fsum_mean(vel[:, 0].tolist()), _fsum_mean(vel[:, 1].tolist())])

    i, j, dx, dy, _ = _pairs_within(pos, params, params.E)
    sx = np.zeros(M)
    sy = np.zeros(M)
    cnt = np.zeros(M)
    np.add.at(sx, i, dx)
    np.add.at(sy, i, dy)
    np.add.at(sx, j, -dx)
    np.add.at(sy, j, -dy)
    np.add.at(cnt, i, 1.0)
    np.add.at(cnt, j, 1.0)
    has = cnt > 0
    cx = np.where(has, sx / np.where(has, cnt, 1.0), 0.0)
    cy = np.where(has, sy / np.where(has, cnt, 1.0), 0.0)
    cn = np.hypot(cx, cy)
    nz = cn > 0
    bx = np.where(nz, cx / np.where(nz, cn, 1.0), 0.0)
    by = np.where(nz, cy / np.where(nz, cn, 1.0), 0.0)

    inner_x = (1.0 - params.k) * vel[:, 0] + params.k * v_avg[0]
    inner_y = (1.0 - params.k) * vel[:, 1] + params.k * v_avg[1]
    if params.mode == "PI2":
        v_ss = _network_term(params)
        sp = np.hypot(vel[:, 0], vel[:, 1])
        ok = sp > 0
        inner_x = inner_x + v_ss * np.where(ok, vel[:, 0] / np.where(ok, sp, 1.0), 0.0)
        inner_y = inner_y + v_ss * np.where(ok, vel[:, 1] / np.where(ok, sp, 1.0), 0.0)
    elif params.mode == "PI3":
        c4 = _pi3_factor(params)
        inner_x = c4 * inner_x
        inner_y = c4 * inner_y
    if params.flip:
        sign = np.where(np.hypot(vel[:, 0], vel[:, 1]) > math.hypot(v_avg[0], v_avg[1]), -1.0, 1.0)
    else:
        sign = np.ones(M)
    ux = v_avg[0] + bx
    uy = v_avg[1] + by
    nvx = ux + sign * inner_x
    nvy = uy + sign * inner_y
    sp = np.hypot(nvx, nvy)
    over = sp > params.max_speed
    scale = np.where(over, params.max_speed / np.where(over, sp, 1.0), 1.0)
    nvx = np.where(over, nvx * scale, nvx)
    nvy = np.where(over, nvy * scale, nvy)
    new_vel = np.column_stack([nvx, nvy])
    new_pos = _wrap_positions(pos + new_vel, params)
    if wrap:
        moved = new_vel
    else:
        moved = new_pos - pos
    disp = state.disp + moved

    # imitation against nearest neighbour in the moved population
    payoff = np.hypot(new_vel[:, 0], new_vel[:, 1])
    u, rng = state.rng.uniforms(M)
    i, j, _, _, dist = _pairs_within(new_pos, params, params.E)
    nn = _nearest(M, i, j, dist)
    adopted = new_vel.copy()
    for a in np.flatnonzero(nn >= 0):
        p = fermi_probability(payoff[nn[a]] - payoff[a], params.omega_sel)
        if u[a] < p:
            adopted[a] = new_vel[nn[a]]
    final_payoff = np.hypot(adopted[:, 0], adopted[:, 1])
    return FlockState(new_pos, adopted, final_payoff, disp, state.step_index + 1, rng)


# -- metrics -----------------------------------------------------------------


def alignment(state):
    """Norm of the mean unit velocity (1 = perfectly aligned)."""
    sp = np.hypot(state.vel[:, 0], state.vel[:, 1])
    ok = sp > 0
    ux = np.where(ok, state.vel[:, 0] / np.where(ok, sp, 1.0), 0.0)
    uy = np.where(ok, state.vel[:, 1] / np.where(ok, sp, 1.0), 0.0)
    return float(math.hypot(ux.mean(), uy.mean()))


def _cluster_variances(state, params):
    """Positional variance of every linked cluster with two or more members."""
    M = state.pos.shape[0]
    i, j, _, _, _ = _pairs_within(state.pos, params, params.D)
    if i.size == 0:
        return np.empty(0)
    graph = coo_matrix((np.ones(i.size), (i, j)), shape=(M, M))
    ncomp, labels = connected_components(graph, directed=False)
    sizes = np.bincount(labels, minlength=ncomp)
    wrap = params.boundary == "wrap"
    centre = np.empty((ncomp, 2))
    for ax, extent in enumerate((params.width, params.height)):
        x = state.pos[:, ax]
        if wrap:
            ang = 2.0 * np.pi * x / extent
            s = np.bincount(labels, np.sin(ang), ncomp)
            c = np.bincount(labels, np.cos(ang), ncomp)
            centre[:, ax] = np.mod(np.arctan2(s, c), 2.0 * np.pi) * extent / (2.0 * np.pi)
        else:
            centre[:, ax] = np.bincount(labels, x, ncomp) / sizes
    ox = _min_image(state.pos[:, 0] - centre[labels, 0], params.width, wrap)
    oy = _min_image(state.pos[:, 1] - centre[labels, 1], params.height, wrap)
    var = np.bincount(labels, ox * ox + oy * oy, ncomp) / sizes
    return var[sizes >= 2]


def flock_metrics(state, params):
    """Displacement, clustering and heading-entropy summary of a state."""
    dist = np.hypot(state.disp[:, 0], state.disp[:, 1])
    var = _cluster_variances(state, params)
    heading = np.arctan2(state.vel[:, 1], state.vel[:, 0])
    h = shannon_entropy(histogram_probs(heading, DEFAULT_BINS).probs).h_bits
    return FlockMetrics(
        avg_displacement=float(dist.mean()),
        cluster_var_min=float(var.min()) if var.size else 0.0,
        cluster_var_max=float(var.max()) if var.size else 0.0,
        sd_displacement=float(dist.std()),
        entropy_bits=float(h),
    )


def run_flock(params, steps, seed, initial=None):
    """Run ``steps`` synchronous steps; metrics are recorded after each.

    Returns ``(trajectory, metrics)`` with one snapshot and one
    :class:`FlockMetrics` per step.
    """
    if steps < 1:
        raise InvalidArgumentError("steps must be >= 1")
    state = initial if initial is not None else init_flock(params, seed)
    if state.pos.shape[0] != params.M:
        raise InvalidArgumentError("initial state size differs from M")
    trajectory, metrics = [], []
    for s in range(steps):
        try:
            state = step_flock(state, params)
        except DegenerateDenominatorError as exc:
            raise DegenerateDenominatorError(f"step {s + 1}: {exc}") from exc
        trajectory.append(state)
        metrics.append(flock_metrics(state, params))
    return trajectory, metrics


# -- social-ties sweep -------------------------------------------------------


def summarize_sweep(grid, metric):
    """Fit exponential decay after the peak and locate the sharpest change.

    The decay rate comes from least squares on ``log(metric)`` against
    ``grid - grid[peak]`` over the post-peak points.  The threshold is the
    left grid point of the interval with the largest absolute slope.
    """
    x = np.asarray(grid, dtype=float)
    m = np.asarray(metric, dtype=float)
    if x.size != m.size or x.size == 0:
        raise InvalidArgumentError("grid and metric must be non-empty and equal length")
    if x.size >= 2:
        slope = np.diff(m) / np.diff(x)
        threshold = float(x[int(np.argmax(np.abs(slope)))])
    else:
        threshold = float(x[0])
    peak = int(np.argmax(m))
    xs, ms = x[peak:], m[peak:]
    keep = ms > 0
    xs, ms = xs[keep], ms[keep]
    spread = float(np.ptp(m)) if m.size else 0.0
    if xs.size < 2 or spread <= 1e-12 * max(float(np.max(np.abs(m))), 1e-300):
        return SweepReport(x.tolist(), m.tolist(), 0.0, threshold, degenerate_fit=True)
    rate = -float(np.polyfit(xs - x[peak], np.log(ms), 1)[0])
    return SweepReport(x.tolist(), m.tolist(), rate, threshold)


def _sweep_point(args):
    params, steps, seed = args
    _, metrics = run_flock(params, steps, seed)
    return metrics[-1].avg_displacement


def sweep_social_ties(params, grid, steps, replicates, seed, jobs=1):
    """Final mean displacement across a grid of social-ties values.

    Run ``(i, r)`` uses the seed ``derive_seed(seed, i, r)``; results are
    merged in grid order so ``jobs`` never changes the output.
    """
    grid = [float(g) for g in grid]
    if not grid or any(b < a for a, b in zip(grid, grid[1:])):
        raise InvalidArgumentError("grid must be non-empty and ascending")
    if replicates < 1:
        raise InvalidArgumentError("replicates must be >= 1")
    tasks = [(replace(params, t_ties=t), steps, derive_seed(seed, i, r))
             for i, t in enumerate(grid) for r in range(replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            finals = list(pool.map(_sweep_point, tasks))
    else:
        finals = [_sweep_point(t) for t in tasks]
    per_tie = [float(np.mean(finals[i * replicates:(i + 1) * replicates])) for i in range(len(grid))]
    return summarize_sweep(grid, per_tie)
