"""Scenario orchestration: benchmark schemes, Monte Carlo trials, sweeps, CSV.

Five schemes share each trial's channel realization: the grouped surface with
statistically optimized groups (ieg), adjacent-block groups (aeg), an
ungrouped surface restricted to Q controlled elements (uirs_q), a surface
with one fixed random reflection draw (random_rcv), and no surface at all
(no_irs). Every scheme exposes exactly Q (or 0) real-time reflection
dimensions, keeping the pilot budget comparable.
"""

import csv
import io

import time
from dataclasses import dataclass, field

import numpy as np

from . import beamforming as bf
from . import grouping as grp
from .channel import build_scenario
from .config import trial_seed_sequence

CSV_HEADER = ("scheme", "axis", "axis_value", "N", "Q", "trial", "seed",
              "wsr_bits_per_hz", "iterations", "runtime_ms")

REALTIME_DIMS = {"ieg": "Q", "aeg": "Q", "uirs_q": "Q", "random_rcv": 0, "no_irs": 0}


@dataclass
class TrialResult:
    """One scheme's outcome on one channel realization, plus audit artifacts."""

    scheme: str
    axis: str
    axis_value: float
    N: int
    Q: int
    trial: int
    seed: int
    wsr_bits: float
    iterations: int
    runtime_ms: float
    realtime_dims: int
    grouping: list | None = None
    artifacts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.wsr_bits < 0:
            raise ValueError("weighted sum rate cannot be negative")


def _solve_fixed_reflection(channels, c_hat, h_bu_eff, p_max, weights, opts):
    """Precoder-plus-reflection loop on prepared grouped cascades."""
    k_users = channels.num_users
    if c_hat.shape[1] > 0:
        v0 = bf.ReflectionVector(phases=np.zeros(c_hat.shape[1]))
    else:
        v0 = bf.ReflectionVector(phases=np.zeros(0))
    w0 = bf.matched_precoder(bf.effective_channels(v0.values, c_hat, h_bu_eff), p_max)
    pm, v, aux, trace, trace_steps, iterations, converged = bf.solve_fp(
        c_hat, h_bu_eff, channels.noise_power, p_max, weights, v0, w0, opts)
    h = bf.effective_channels(v.values, c_hat, h_bu_eff)
    rate = bf.wsr(bf.sinr_all(h, pm.w, channels.noise_power), weights)
    return bf.SolveResult(grouping=None, precoder=pm, rcv=v, wsr_bits=rate, trace=trace,
                          trace_steps=trace_steps, iterations=iterations, converged=converged)


def run_scheme(scheme, channels, config, rng, opts=None):
    """Solve one scheme on one channel realization and package the result.

    rng drives only scheme-internal randomness (the fixed reflection draws of
    uirs_q and random_rcv); the channels are produced by the caller so every
    scheme in a trial sees the same realization.
    """
    opts = opts or bf.SolverOptions()
    weights = np.asarray(config.weights, dtype=float)
    p_max = config.power_watts
    q = config.Q
    t0 = time.perf_counter()
    grouping_ser = None
    artifacts = {}

    if scheme in ("ieg", "aeg"):
        scheme_opts = opts if scheme == "ieg" else _with_grouping(opts, "adjacent")
        res = bf.two_stage_solve(channels, q, opts=scheme_opts, p_max=p_max, weights=weights)
        grouping_ser = res.grouping.assignment.tolist()
        realtime = q
    elif scheme == "uirs_q":
        n = channels.num_elements
        fixed = rng.uniform(0.0, 2.0 * np.pi, size=n - q)
        cascades = [channels.cascade(k) for k in range(channels.num_users)]
        c_hat = np.stack([c[:q] for c in cascades])
        vu = np.exp(1j * fixed)
        h_bu_eff = np.stack([channels.h_bu[k] + cascades[k][q:].conj().T @ vu
                             for k in range(channels.num_users)])
        res = _solve_fixed_reflection(channels, c_hat, h_bu_eff, p_max, weights, opts)
        artifacts["uncontrolled_phases"] = fixed
        realtime = q
    elif scheme == "random_rcv":
        n = channels.num_elements
        fixed = rng.uniform(0.0, 2.0 * np.pi, size=n)
        va = np.exp(1j * fixed)
        h_bu_eff = np.stack([channels.h_bu[k] + channels.cascade(k).conj().T @ va
                             for k in range(channels.num_users)])
        c_hat = np.zeros((channels.num_users, 0, config.M), dtype=complex)
        res = _solve_fixed_reflection(channels, c_hat, h_bu_eff, p_max, weights, opts)
        artifacts["all_phases"] = fixed
        realtime = 0
    elif scheme == "no_irs":
        c_hat = np.zeros((channels.num_users, 0, config.M), dtype=complex)
        res = _solve_fixed_reflection(channels, c_hat, channels.h_bu, p_max, weights, opts)
        realtime = 0
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    expected = q if REALTIME_DIMS[scheme] == "Q" else REALTIME_DIMS[scheme]
    assert realtime == expected, f"{scheme} exposes {realtime} real-time dims, expected {expected}"

    runtime_ms = (time.perf_counter() - t0) * 1e3
    artifacts["w"] = res.precoder.w
    artifacts["rcv_phases"] = res.rcv.phases
    return TrialResult(
        scheme=scheme, axis="", axis_value=0.0, N=config.N, Q=q, trial=0, seed=0,
        wsr_bits=res.wsr_bits, iterations=res.iterations, runtime_ms=runtime_ms,
        realtime_dims=realtime, grouping=grouping_ser, artifacts=artifacts,
    )


def _with_grouping(opts, grouping):
    return bf.SolverOptions(tol=opts.tol, max_outer=opts.max_outer, mm_iters=opts.mm_iters,
                            mm_tol=opts.mm_tol, grouping=grouping, qp_rho=opts.qp_rho,
                            qp_rounds=opts.qp_rounds, qp_pg_steps=opts.qp_pg_steps,
                            regroup=opts.regroup, random_init=opts.random_init,
                            init_seed=opts.init_seed)


def recompute_wsr(channels, result, config):
    """Re-derive the weighted sum rate from the stored solution artifacts."""
    weights = np.asarray(config.weights, dtype=float)
    w = result.artifacts["w"]
    v = np.exp(1j * np.asarray(result.artifacts["rcv_phases"]))
    if result.scheme in ("ieg", "aeg"):
        g = grp.GroupingMatrix(assignment=np.asarray(result.grouping), num_groups=result.Q)
        c_hat = np.stack([grp.combine_cascade(g, channels.cascade(k))
                          for k in range(channels.num_users)])
        h_bu = channels.h_bu
    elif result.scheme == "uirs_q":
        cascades = [channels.cascade(k) for k in range(channels.num_users)]
        c_hat = np.stack([c[:result.Q] for c in cascades])
        vu = np.exp(1j * result.artifacts["uncontrolled_phases"])
        h_bu = np.stack([channels.h_bu[k] + cascades[k][result.Q:].conj().T @ vu
                         for k in range(channels.num_users)])
    elif result.scheme == "random_rcv":
        va = np.exp(1j * result.artifacts["all_phases"])
        c_hat = np.zeros((channels.num_users, 0, w.shape[0]), dtype=complex)
        h_bu = np.stack([channels.h_bu[k] + channels.cascade(k).conj().T @ va
                         for k in range(channels.num_users)])
    else:
        c_hat = np.zeros((channels.num_users, 0, w.shape[0]), dtype=complex)
        h_bu = channels.h_bu
    h = bf.effective_channels(v, c_hat, h_bu)
    return bf.wsr(bf.sinr_all(h, w, channels.noise_power), weights)


def run_monte_carlo(config, axis="single", axis_value=None, opts=None, out=None,
                    record_timings=False, log=None):
    """Run all configured schemes over seeded trials.

    Per-trial randomness descends from (config.seed, trial index), so results
    are independent of the trial count and bitwise reproducible. Channels are
    drawn once per trial and shared by every scheme. If out is given the CSV
    is written there (partial rows are flushed if a trial raises).
    """
    if not config.schemes:
        raise ValueError("scheme list is empty")
    axis_value = float(config.Q if axis_value is None else axis_value)
    rows = []
    start = time.perf_counter()
    try:
        for trial in range(config.trials):
            ss = trial_seed_sequence(config.seed, trial)
            trial_seed = int(ss.generate_state(1)[0])
            children = ss.spawn(1 + len(config.schemes))
            channels = build_scenario(config, np.random.default_rng(children[0]))
            for i, scheme in enumerate(config.schemes):
                res = run_scheme(scheme, channels, config, np.random.default_rng(children[1 + i]),
                                 opts=opts)
                res.axis = axis
                res.axis_value = axis_value
                res.trial = trial
                res.seed = trial_seed
                rows.append(res)
    finally:
        if out is not None and rows:
            write_csv(rows, out, timings=record_timings)
    if log is not None:
        elapsed = time.perf_counter() - start
        print(f"{len(rows)} rows in {elapsed:.1f} s "
              f"({config.trials} trials x {len(config.schemes)} schemes)", file=log)
    return rows


def sweep(axis, values, config, opts=None, out=None, record_timings=False, log=None):
    """Monte Carlo runs across one swept axis; returns all trial rows."""
    if axis not in ("groups", "elements", "distance", "power"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    if not len(values):
        raise ValueError("sweep needs at least one axis value")
    rows = []
    for value in values:
        if axis == "groups":
            cfg = config.replace(Q=int(value), Q0=int(value))
        elif axis == "elements":
            cfg = config.replace(N=int(value))
        elif axis == "distance":
            irs = (float(value), config.irs_pos[1], config.irs_pos[2])
            cfg = config.replace(irs_pos=irs)
        else:
            cfg = config.replace(power_dbm=float(value))
        rows.extend(run_monte_carlo(cfg, axis=axis, axis_value=float(value), opts=opts, log=log))
    if out is not None:
        write_csv(rows, out, timings=record_timings)
        write_csv_aggregate(rows, _aggregate_path(out))
    return rows


def aggregate(rows):
    """Mean and standard error of wsr_bits per (scheme, axis_value)."""
    groups = {}
    for r in rows:
        groups.setdefault((r.scheme, r.axis, r.axis_value), []).append(r.wsr_bits)
    out = []
    for (scheme, axis, value), vals in sorted(groups.items()):
        arr = np.asarray(vals)
        stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        out.append({"scheme": scheme, "axis": axis, "axis_value": value,
                    "n_trials": arr.size, "wsr_mean": float(arr.mean()), "wsr_stderr": stderr})
    return out


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def rows_to_csv_text(rows, timings=False):
    """Render trial rows as CSV text with the pinned schema.

    Rows are sorted by (scheme, axis_value, trial); runtime_ms is written as
    0 unless timings is requested, keeping the output byte-reproducible.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in sorted(rows, key=lambda r: (r.scheme, r.axis_value, r.trial)):
        runtime = r.runtime_ms if timings else 0.0
        writer.writerow([r.scheme, r.axis, _fmt(r.axis_value), r.N, r.Q, r.trial, r.seed,
                         _fmt(float(r.wsr_bits)), r.iterations, _fmt(float(runtime))])
    return buf.getvalue()


def write_csv(rows, path, timings=False):
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv_text(rows, timings=timings))


def _aggregate_path(path):
    path = str(path)
    return path[:-4] + "_agg.csv" if path.endswith(".csv") else path + "_agg.csv"


def write_csv_aggregate(rows, path):
    aggs = aggregate(rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("scheme", "axis", "axis_value", "n_trials", "wsr_mean", "wsr_stderr"))
        for a in aggs:
            writer.writerow([a["scheme"], a["axis"], _fmt(a["axis_value"]), a["n_trials"],
                             _fmt(a["wsr_mean"]), _fmt(a["wsr_stderr"])])
