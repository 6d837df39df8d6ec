"""Command dispatch, parameter sweeps and run manifests.

Every command writes its tables into ``cfg.output_dir`` followed by a
``manifest.json`` that records the full config, the package version, start
and end timestamps, and the SHA-256 of every emitted file.  All output
bytes are a function of the config alone, so re-running a manifest's config
reproduces its digests.
"""

from __future__ import annotations

import json
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .. import __version__
from ..chaos import MapSpec, divergence_rate, lyapunov_estimate, orbit_divergence
from ..coordination import fixed_points, integrate_phase, synthetic_experiment
from ..core import RandomStream, derive_seed
from ..errors import (
    BehavdynError,
    DegenerateDenominatorError,
    DegenerateInputError,
    IntegrationDivergedError,
    InvalidArgumentError,
)
from ..flock import METRIC_COLUMNS, alignment, flock_metrics, init_flock, step_flock, summarize_sweep
from ..metrics import anova_two_way, circular_stats, histogram_probs, shannon_entropy
from .config import ConfigError, FlockSection, HkbSection, RunConfig, parse_config
from .io import read_table, sha256_file, write_json, write_table

__all__ = [
    "RunManifest",
    "RunError",
    "run_command",
    "orchestrate_sweep",
    "verify_manifest",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_NUMERIC",
    "EXIT_IO",
    "FLOCK_COLUMNS",
    "HKB_COLUMNS",
    "CHAOS_COLUMNS",
    "SERIES_INDEX_COLUMNS",
    "SERIES_COLUMNS",
]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

FLOCK_COLUMNS = METRIC_COLUMNS + ("alignment",)
FLOCK_STATE_COLUMNS = ("agent", "x", "y", "vx", "vy", "payoff")
HKB_COLUMNS = ("entropy_bits", "sd_phi", "mean_shift", "resultant_R")
CHAOS_COLUMNS = ("r", "lambda", "skipped", "nudged", "divergence_rate", "final_distance",
                 "expanding")
SERIES_INDEX_COLUMNS = ("participant", "hour", "trial", "condition", "epsilon", "c", "d",
                        "delta_omega", "seed", "entropy_bits", "sd_phi", "mean_shift",
                        "resultant_R")
SERIES_COLUMNS = ("participant", "hour", "trial", "t_seconds", "phi_radians")
_ENTROPY_GROUP_KEYS = ("condition", "participant", "hour", "trial")
MANIFEST_NAME = "manifest.json"


class RunError(BehavdynError):
    """A command failed; ``category`` selects the process exit code."""

    def __init__(self, message, category):
        super().__init__(message)
        self.category = category

    @property
    def exit_code(self):
        return {"config": EXIT_CONFIG, "numeric": EXIT_NUMERIC, "io": EXIT_IO}[self.category]


@dataclass
class RunManifest:
    config: dict
    version: str
    started_at: str
    finished_at: str
    outputs: list = field(default_factory=list)

    def to_dict(self):
        return {
            "config": self.config,
            "version": self.version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outputs": list(self.outputs),
        }

    def digests(self):
        return {o["path"]: o["sha256"] for o in self.outputs}


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def _classify(exc, where):
    """Wrap a module exception with its origin and exit category."""
    if isinstance(exc, RunError):
        return exc
    if isinstance(exc, (ConfigError, InvalidArgumentError)):
        category = "config"
    elif isinstance(exc, (DegenerateInputError, DegenerateDenominatorError,
                          IntegrationDivergedError, ArithmeticError)):
        category = "numeric"
    elif isinstance(exc, OSError):
        category = "io"
    else:
        return None
    return RunError(f"{where}: {exc}", category)


# -- per-command computations (pure; no file output) --------------------------


def _flock_run(section: FlockSection, seed):
    params = section.to_params()
    state = init_flock(params, seed)
    rows = []
    for s in range(1, section.steps + 1):
        try:
            state = step_flock(state, params)
        except DegenerateDenominatorError as exc:
            raise DegenerateDenominatorError(f"step {s}: {exc}") from exc
        m = flock_metrics(state, params)
        rows.append((s, m.avg_displacement, m.cluster_var_min, m.cluster_var_max,
                     m.sd_displacement, m.entropy_bits, alignment(state)))
    return rows, state


def _phase_summary(samples, phi0, bins):
    report = shannon_entropy(histogram_probs(samples, bins).probs)
    circ = circular_stats(samples, phi0)
    return report, circ


def _hkb_run(section: HkbSection, seed):
    p = section.to_params()
    n = int(round(section.duration / section.dt))
    if n < 1:
        raise InvalidArgumentError("hkb.duration must cover at least one dt")
    series = integrate_phase(p, section.phi0, section.dt, n, RandomStream(int(seed)))
    report, circ = _phase_summary(series.samples, section.phi0, section.bins)
    return series, report, circ


def _chaos_row(r, section):
    spec = MapSpec(r)
    est = lyapunov_estimate(spec, section.x0, section.n, section.burn_in)
    try:
        trace = orbit_divergence(spec, section.x0, section.epsilon0, section.divergence_steps)
    except InvalidArgumentError:
        # x0 + epsilon0 leaves [0, 1]; perturb downwards instead
        trace = orbit_divergence(spec, section.x0 - section.epsilon0, section.epsilon0,
                                 section.divergence_steps)
    try:
        rate = divergence_rate(trace)
    except InvalidArgumentError:
        rate = math.nan
    final = float(trace.distances[-1])
    return (float(r), est.value, est.skipped, est.nudged, rate, final,
            bool(final > section.epsilon0))


# -- command handlers ---------------------------------------------------------


def _cmd_flock(cfg, out):
    rows, state = _flock_run(cfg.flock, cfg.seed)
    files = [write_table(out, "flock_metrics", FLOCK_COLUMNS, rows, cfg.format)]
    final = [(a, x, y, vx, vy, q) for a, ((x, y), (vx, vy), q)
             in enumerate(zip(state.pos.tolist(), state.vel.tolist(), state.payoff.tolist()))]
    files.append(write_table(out, "flock_final", FLOCK_STATE_COLUMNS, final, cfg.format))
    return files


def _cmd_hkb(cfg, out):
    sec = cfg.hkb
    series, report, circ = _hkb_run(sec, cfg.seed)
    rows = zip(series.times.tolist(), series.samples.tolist())
    files = [write_table(out, "phase_series", ("t_seconds", "phi_radians"), rows, cfg.format)]
    fps = fixed_points(sec.to_params())
    files.append(write_table(out, "fixed_points", ("phi_star", "stable"), fps, cfg.format))
    summary = {
        "entropy": report.to_dict(),
        "mean_shift": circ.mean_shift,
        "sd_phi": circ.sd_phi,
        "resultant_R": circ.resultant_R,
        "sd_degenerate": circ.degenerate,
        "samples": int(series.samples.size),
    }
    files.append(write_json(os.path.join(out, "hkb_summary.json"), summary))
    return files


def _cmd_experiment(cfg, out):
    exp, hk = cfg.experiment, cfg.hkb
    p = hk.to_params()
    proto = exp.protocol.to_protocol()
    index_rows = []
    files = []
    cell_values = defaultdict(list)
    for cond in exp.conditions:
        series_rows = []
        trials = synthetic_experiment(exp.design(cond), p, proto, cfg.seed,
                                      duration=hk.duration, dt=hk.dt, jitter=exp.jitter,
                                      phi0=hk.phi0)
        for tr in trials:
            report, circ = _phase_summary(tr.series.samples, hk.phi0, hk.bins)
            index_rows.append((tr.participant, tr.hour, tr.trial, cond, tr.epsilon, tr.c, tr.d,
                               tr.delta_omega, tr.series.seed, report.h_bits, circ.sd_phi,
                               circ.mean_shift, circ.resultant_R))
            cell_values[(cond, tr.hour, tr.participant)].append(report.h_bits)
            if exp.write_samples:
                t = tr.series.times[::exp.sample_stride].tolist()
                phi = tr.series.samples[::exp.sample_stride].tolist()
                series_rows.extend((tr.participant, tr.hour, tr.trial, ti, x)
                                   for ti, x in zip(t, phi))
        if exp.write_samples:
            files.append(write_table(out, f"series_{cond}", SERIES_COLUMNS, series_rows,
                                     cfg.format))
    files.append(write_table(out, "series_index", SERIES_INDEX_COLUMNS, index_rows, cfg.format))

    summary_rows = []
    for cond in exp.conditions:
        for hour in exp.circadian_points:
            hs = [r[9] for r in index_rows if r[3] == cond and r[1] == hour]
            sds = [r[10] for r in index_rows if r[3] == cond and r[1] == hour]
            summary_rows.append((cond, float(hour), len(hs), float(np.mean(hs)),
                                 float(np.std(hs)), float(np.mean(sds))))
    files.append(write_table(out, "experiment_summary",
                             ("condition", "hour", "n", "mean_entropy_bits", "sd_entropy_bits",
                              "mean_sd_phi"), summary_rows, cfg.format))

    if len(exp.conditions) >= 2 and len(exp.circadian_points) >= 2 and exp.participants >= 2:
        # participant means are the replicates of each (hour, condition) cell
        values = {(hour, cond, pi): float(np.mean(v)) for (cond, hour, pi), v in cell_values.items()}
        table = anova_two_way(values)
        doc = {"factor_a": "hour", "factor_b": "condition",
               "levels_a": sorted({k[0] for k in values}, key=str),
               "levels_b": sorted({k[1] for k in values}, key=str),
               "replicate": "participant mean", **table.to_dict()}
        files.append(write_json(os.path.join(out, "anova.json"), doc))
    return files


def _cmd_entropy(cfg, out):
    sec = cfg.entropy
    if (sec.probs is None) == (sec.series_csv is None):
        raise InvalidArgumentError("entropy needs exactly one of entropy.probs or entropy.series_csv")
    if sec.probs is not None:
        rep = shannon_entropy(sec.probs, renormalize=sec.renormalize)
        rows = [(rep.h_bits, rep.prob_sum, rep.renormalized)]
        return [write_table(out, "entropy", ("h_bits", "prob_sum", "renormalized"), rows,
                            cfg.format)]
    columns, rows = read_table(sec.series_csv)
    if sec.column not in columns:
        raise InvalidArgumentError(f"column {sec.column!r} not found in {sec.series_csv}")
    keys = [k for k in _ENTROPY_GROUP_KEYS if k in columns]
    kidx = [columns.index(k) for k in keys]
    vidx = columns.index(sec.column)
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[i] for i in kidx), []).append(float(row[vidx]))
    out_rows = []
    for key, vals in groups.items():  # first-appearance order of the input file
        rep = shannon_entropy(histogram_probs(vals, sec.bins).probs)
        out_rows.append((*key, len(vals), rep.h_bits))
    return [write_table(out, "entropy", (*keys, "n_samples", "h_bits"), out_rows, cfg.format)]


def _cmd_chaos(cfg, out):
    rows = [_chaos_row(r, cfg.chaos) for r in cfg.chaos.r_values]
    return [write_table(out, "chaos", CHAOS_COLUMNS, rows, cfg.format)]


# -- sweeps -------------------------------------------------------------------


def _numeric_fields(model_cls):
    out = []
    for name, info in model_cls.model_fields.items():
        if info.annotation in (int, float):
            out.append(name)
    return tuple(out)


_SWEEP_AXES = {
    "flock": _numeric_fields(FlockSection),
    "hkb": _numeric_fields(HkbSection),
    "chaos": ("r", "x0"),
}


def _point_config(base, target, axis, value, seed):
    data = base.model_dump()
    data["command"] = target
    data["seed"] = seed
    if target == "chaos":
        if axis == "r":
            data["chaos"]["r_values"] = [value]
        else:
            data["chaos"][axis] = value
    else:
        sec = data[target]
        sec[axis] = int(value) if isinstance(sec[axis], int) and float(value).is_integer() else value
    return parse_config(data)


def _sweep_point(task):
    doc, target, axis, value, seed, gi, rep = task
    try:
        cfg = _point_config(RunConfig.model_validate(doc), target, axis, value, seed)
        if target == "flock":
            rows, _ = _flock_run(cfg.flock, seed)
            return tuple(rows[-1])
        if target == "hkb":
            _, report, circ = _hkb_run(cfg.hkb, seed)
            return (report.h_bits, circ.sd_phi, circ.mean_shift, circ.resultant_R)
        return _chaos_row(cfg.chaos.r_values[0], cfg.chaos)[1:]
    except Exception as exc:  # re-raised in the parent with grid context
        wrapped = _classify(exc, f"sweep point grid_index={gi} replicate={rep}")
        if wrapped is None:
            raise
        raise wrapped from None


def _sweep_rows(cfg, target, axis, grid, replicates, jobs):
    doc = cfg.model_dump()
    tasks = [(doc, target, axis, float(v), derive_seed(cfg.seed, gi, rep), gi, rep)
             for gi, v in enumerate(grid) for rep in range(replicates)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    return [(t[5], t[6], t[3], t[4], *res) for t, res in zip(tasks, results)]


def _run_with_manifest(cfg, produce):
    out = cfg.output_dir
    started = _now()
    try:
        os.makedirs(out, exist_ok=True)
        files = produce(out)
        outputs = [{"path": os.path.relpath(f, out).replace(os.sep, "/"),
                    "sha256": sha256_file(f), "bytes": os.path.getsize(f)} for f in files]
        outputs.sort(key=lambda o: o["path"])
        manifest = RunManifest(config=cfg.model_dump(mode="json"), version=__version__,
                               started_at=started, finished_at=_now(), outputs=outputs)
        write_json(os.path.join(out, MANIFEST_NAME), manifest.to_dict())
    except Exception as exc:
        wrapped = _classify(exc, f"{cfg.command}")
        if wrapped is None:
            raise
        raise wrapped from exc
    return manifest


def orchestrate_sweep(cfg, axis=None, grid=None, replicates=None):
    """Run ``grid x replicates`` simulations of ``cfg.sweep.target``.

    Run ``(grid_index, replicate)`` uses seed ``derive_seed(cfg.seed,
    grid_index, replicate)``.  The aggregated ``sweep`` table is ordered by
    grid index then replicate and is byte-identical for any ``cfg.jobs``.
    For a flock sweep over ``t_ties`` a ``sweep_report.json`` with the
    fitted decay rate and threshold of the mean final displacement is also
    written.

    Raises
    ------
    RunError
        ``config`` category when ``axis`` is not a numeric parameter of the
        target.
    """
    target = cfg.sweep.target
    axis = cfg.sweep.axis if axis is None else axis
    grid = list(cfg.sweep.grid if grid is None else grid)
    replicates = cfg.sweep.replicates if replicates is None else int(replicates)
    if axis not in _SWEEP_AXES[target]:
        raise RunError(f"sweep: axis {axis!r} is not a numeric parameter of {target} "
                       f"(choose from {', '.join(_SWEEP_AXES[target])})", "config")
    if not grid or replicates < 1:
        raise RunError("sweep: grid must be non-empty and replicates >= 1", "config")
    metric_cols = {"flock": FLOCK_COLUMNS, "hkb": HKB_COLUMNS, "chaos": CHAOS_COLUMNS[1:]}[target]
    columns = ("grid_index", "replicate", axis, "seed", *metric_cols)

    def produce(out):
        rows = _sweep_rows(cfg, target, axis, grid, replicates, cfg.jobs)
        files = [write_table(out, "sweep", columns, rows, cfg.format)]
        if target == "flock" and axis == "t_ties":
            col = 4 + FLOCK_COLUMNS.index("avg_displacement")
            per = [float(np.mean([r[col] for r in rows if r[0] == gi])) for gi in range(len(grid))]
            report = summarize_sweep(grid, per)
            files.append(write_json(os.path.join(out, "sweep_report.json"), report.to_dict()))
        return files

    return _run_with_manifest(cfg, produce)


_HANDLERS = {
    "flock": _cmd_flock,
    "hkb": _cmd_hkb,
    "experiment": _cmd_experiment,
    "entropy": _cmd_entropy,
    "chaos": _cmd_chaos,
}


def run_command(cfg: RunConfig):
    """Execute ``cfg.command``, write its tables and ``manifest.json``.

    Returns
    -------
    RunManifest

    Raises
    ------
    RunError
        With ``category`` ``config``, ``numeric`` or ``io`` and a message
        naming the command (and step or grid point where available).
    """
    if cfg.command == "sweep":
        return orchestrate_sweep(cfg)
    handler = _HANDLERS[cfg.command]
    return _run_with_manifest(cfg, lambda out: handler(cfg, out))


def verify_manifest(out_dir):
    """Return the list of output paths whose current digest differs from the manifest."""
    with open(os.path.join(out_dir, MANIFEST_NAME), encoding="utf-8") as fh:
        doc = json.load(fh)
    bad = []
    for o in doc["outputs"]:
        path = os.path.join(out_dir, o["path"])
        if not os.path.exists(path) or sha256_file(path) != o["sha256"]:
            bad.append(o["path"])
    return bad
