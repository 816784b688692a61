"""Monte-Carlo orchestration, smoothing, confidence bands, benchmarks and output.

Runs are split into fixed-size chunks (set by the experiment, never by the
worker count).  Each chunk is simulated as one lockstep batch, possibly in a
separate process, and chunks are reduced in index order, so the emitted bytes
depend only on the master seed and the configuration.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
from scipy import stats

from . import wmmse
from .catalog import Experiment, synthetic_scenario
from .channel import ChannelModel
from .network import IrsLayout, UtilitySpec, effective_channel
from .optimizer import (
    ZosgaConfig,
    decay_factor,
    estimate_gradient,
    final_rate,
    run_streams,
    sample_direction,
    simulate,
)
from .scenario import db_to_linear

DEFAULT_BETAS_DB = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)


class ShortTraceWarning(UserWarning):
    """Trace too short for the requested smoothing; returned unchanged."""


# ---------------------------------------------------------------- smoothing


def savgol_coefficients(window, order, position=None):
    """Least-squares weights that evaluate a local polynomial fit.

    The fit uses ``window`` consecutive samples; the weights evaluate the
    fitted polynomial at sample ``position`` (default: the centre).  Offsets
    are scaled to ``[-1, 1]`` before forming the normal equations, which keeps
    the Vandermonde matrix well conditioned for wide windows.
    """
    if window < 1 or order < 0:
        raise ValueError("window must be >= 1 and order >= 0")
    order = min(order, window - 1)
    half = (window - 1) / 2.0
    if position is None:
        position = half
    x = (np.arange(window) - half) / max(half, 1.0)
    X = np.vander(x, order + 1, increasing=True)
    x0 = (position - half) / max(half, 1.0)
    v = x0 ** np.arange(order + 1)
    return v @ np.linalg.pinv(X)


def smooth_savgol(trace, window=500, order=4):
    """Savitzky-Golay smoothing with shrinking windows at the ends.

    An even ``window`` is bumped to the next odd length so the filter stays
    centred (500 becomes 501).  A window longer than the trace is cut to the
    longest odd length that fits.  Near the ends each output sample uses the
    truncated window that still fits, with the polynomial order capped by
    the number of available samples.
    """
    y = np.asarray(trace, dtype=float)
    n = y.shape[-1]
    if n < 2 * order + 1:
        warnings.warn(f"trace of length {n} is shorter than 2*order+1 = {2 * order + 1}", ShortTraceWarning)
        return y.copy()
    if window % 2 == 0:
        window += 1
    if window > n:
        window = n if n % 2 else n - 1
    half = window // 2
    out = np.empty_like(y)
    if n > 2 * half:
        c = savgol_coefficients(window, order)
        # correlate: out[i] = sum_j c[j] * y[i - half + j]
        out[..., half : n - half] = np.apply_along_axis(lambda r: np.convolve(r, c[::-1], mode="valid"), -1, y)
    for i in list(range(min(half, n))) + list(range(max(n - half, half), n)):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        w = savgol_coefficients(hi - lo, order, position=i - lo)
        out[..., i] = y[..., lo:hi] @ w
    return out


# ---------------------------------------------------------------- aggregation


@dataclass
class AggregateResult:
    mean: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    smoothed: np.ndarray
    n_runs: int
    final_mean: float
    final_lo95: float
    final_hi95: float


def t_interval(samples, axis=0, level=0.95):
    """Mean and two-sided t confidence half-width along ``axis``."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[axis]
    if n < 2:
        raise ValueError("confidence intervals need at least two runs")
    m = x.mean(axis=axis)
    half = stats.t.ppf(0.5 + level / 2, n - 1) * x.std(axis=axis, ddof=1) / np.sqrt(n)
    return m, half


def aggregate(traces, window=500, order=4, final_fraction=0.05):
    """Mean trace, 95% t band and Savitzky-Golay smoothed mean over runs."""
    X = np.asarray(traces, dtype=float)
    m, h = t_interval(X)
    fm, fh = t_interval(final_rate(X, final_fraction))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ShortTraceWarning)
        sm = smooth_savgol(m, window, order)
    return AggregateResult(m, m - h, m + h, sm, X.shape[0], float(fm), float(fm - fh), float(fm + fh))


# ---------------------------------------------------------------- repetition


@dataclass
class ExperimentResult:
    experiment: Experiment
    algorithms: tuple
    traces: dict  # algorithm -> list[RunTrace], ordered by run index
    aggregates: dict = field(default_factory=dict)

    def rates(self, algorithm):
        return np.array([t.rates for t in self.traces[algorithm]])

    def final_rates(self, algorithm):
        return final_rate(self.rates(algorithm), self.experiment.harness.final_fraction)


def _run_chunk(args):
    scenario, zcfg, wcfg, jobs = args
    return simulate(scenario, zcfg, wcfg, jobs)


def repeat(experiment, algorithms=("zosga", "random-irs"), n_runs=None, master_seed=None, workers=1, chunk_size=None):
    """Independent runs of each algorithm, with common channel draws per run index."""
    h = experiment.harness
    n_runs = h.runs if n_runs is None else int(n_runs)
    chunk = h.chunk_size if chunk_size is None else int(chunk_size)
    zcfg = experiment.zosga if master_seed is None else dataclasses.replace(experiment.zosga, seed=int(master_seed))
    algorithms = tuple(algorithms)
    tasks = []
    for start in range(0, n_runs, chunk):
        runs = range(start, min(start + chunk, n_runs))
        tasks.append((experiment.scenario, zcfg, experiment.wmmse, [(r, a) for a in algorithms for r in runs]))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, tasks))
    else:
        chunks = [_run_chunk(t) for t in tasks]
    traces = {a: [] for a in algorithms}
    for part in chunks:
        for tr in part:
            traces[tr.algorithm].append(tr)
    exp = dataclasses.replace(experiment, zosga=zcfg, harness=dataclasses.replace(h, runs=n_runs, chunk_size=chunk))
    result = ExperimentResult(exp, algorithms, traces)
    if n_runs >= 2:
        for a in algorithms:
            result.aggregates[a] = aggregate(result.rates(a), h.smoothing_window, h.smoothing_order, h.final_fraction)
    return result


def sweep_rician(experiment, betas_db=DEFAULT_BETAS_DB, n_runs=None, workers=1, uncorrelated=True):
    """ZoSGA versus random IRS while the IRS-side Rician factors move together.

    ``beta_irs_user`` and ``beta_ap_irs`` are set to each grid value; the
    direct-link factor stays as configured.  Spatial correlation is switched
    off by default.
    """
    base = experiment.scenario.uncorrelated() if uncorrelated else experiment.scenario
    rows = []
    for b in betas_db:
        lin = float(db_to_linear(b))
        exp = dataclasses.replace(experiment, scenario=base.with_rician(beta_irs_user=lin, beta_ap_irs=lin))
        res = repeat(exp, n_runs=n_runs, workers=workers)
        z = res.final_rates("zosga")
        r = res.final_rates("random-irs")
        rows.append(
            {
                "beta_db": float(b),
                "zosga": float(z.mean()),
                "random_irs": float(r.mean()),
                "gain": float(z.mean() / r.mean() - 1.0),
                "runs": int(len(z)),
            }
        )
    return rows


# ---------------------------------------------------------------- benchmark


def _slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def bench_point(scenario, iterations=1000, wmmse_iterations=20, seed=0, clock=time.perf_counter):
    """Median wall time of one ZoSGA iteration for a single run, split by stage."""
    model = ChannelModel(scenario)
    layout = IrsLayout(scenario)
    spec = UtilitySpec.from_scenario(scenario)
    wcfg = wmmse.WmmseConfig(iterations=wmmse_iterations)
    zcfg = ZosgaConfig()
    st = run_streams(seed, 0)
    scsi = model.draw_scsi(st["scsi"])
    theta = layout.initial()
    scales = layout.step_scales(zcfg.eta_phase, zcfg.eta_amplitude, zcfg.eta_capacitance)
    total, solve, rest = [], [], []
    for t in range(iterations):
        t0 = clock()
        real = model.draw_realization(scsi, st["icsi"])
        H = effective_channel(real, theta, layout)
        t1 = clock()
        W = wmmse.solve(H, spec, scenario.power_budget, wcfg)
        t2 = clock()
        U = sample_direction(st["direction"], layout.size)
        g = estimate_gradient(lambda th: effective_channel(real, th, layout, strict=False), theta, W, U, zcfg.mu, spec, H=H)
        theta = layout.project(theta + decay_factor(t, zcfg.decay, zcfg.decay_horizon) * scales * g.D)
        t3 = clock()
        total.append(t3 - t0)
        solve.append(t2 - t1)
        rest.append((t1 - t0) + (t3 - t2))
    return {
        "K": scenario.n_users,
        "M": scenario.n_antennas,
        "S": layout.size,
        "T2": wmmse_iterations,
        "iterations": iterations,
        "median_s": float(np.median(total)),
        "wmmse_median_s": float(np.median(solve)),
        "other_median_s": float(np.median(rest)),
    }


def bench_complexity(
    iterations=1000,
    users=4,
    antennas=6,
    elements=(10, 20, 40, 80, 160),
    antenna_grid=(8, 16, 32, 64, 128),
    t2_grid=(5, 10, 20, 40),
    m_sweep_t2=5,
    m_sweep_elements=10,
):
    """Timing table over S, M and T2 plus log-log slope fits.

    Three one-dimensional sweeps share a base point: S = 2N with N from
    ``elements``; M from ``antenna_grid`` (with a short WMMSE budget so the
    large-M points stay quick); T2 from ``t2_grid``.
    """
    rows = []
    for n in elements:
        rows.append({"sweep": "S", **bench_point(synthetic_scenario(users, antennas, n), iterations)})
    for m in antenna_grid:
        rows.append(
            {"sweep": "M", **bench_point(synthetic_scenario(users, m, m_sweep_elements), iterations, m_sweep_t2)}
        )
    for t2 in t2_grid:
        rows.append({"sweep": "T2", **bench_point(synthetic_scenario(users, antennas, 40), iterations, t2)})
    return rows, fit_bench(rows)


# Shape tolerances for the fitted slopes.  Python overhead flattens the small-M
# end of the grid, so superlinearity in M is judged on the top two points.
BENCH_TOLERANCES = {"slope_S_max": 1.3, "slope_M_top_min": 1.0, "t2_ratio_range": (1.5, 2.5)}


def check_bench(fits, tol=BENCH_TOLERANCES):
    """Named pass/fail flags for a bench fit."""
    lo, hi = tol["t2_ratio_range"]
    return {
        "additive_in_S": fits["slope_S"] < tol["slope_S_max"],
        "superlinear_in_M": fits["slope_M_top"] > tol["slope_M_top_min"],
        "wmmse_linear_in_T2": all(lo <= r <= hi for r in fits["t2_doubling_ratios"]) and bool(fits["t2_doubling_ratios"]),
        "monotone_T2": fits["monotone_T2"],
    }


def fit_bench(rows):
    """Log-log slopes of the sweeps in a bench table."""

    def pick(sweep):
        return [r for r in rows if r["sweep"] == sweep]

    s_rows, m_rows, t_rows = pick("S"), pick("M"), pick("T2")
    fits = {}
    if len(s_rows) >= 2:
        fits["slope_S"] = _slope([r["S"] for r in s_rows], [r["median_s"] for r in s_rows])
    if len(m_rows) >= 2:
        fits["slope_M"] = _slope([r["M"] for r in m_rows], [r["median_s"] for r in m_rows])
        top = m_rows[-2:]
        fits["slope_M_top"] = _slope([r["M"] for r in top], [r["median_s"] for r in top])
    if len(t_rows) >= 2:
        fits["slope_T2_wmmse"] = _slope([r["T2"] for r in t_rows], [r["wmmse_median_s"] for r in t_rows])
        ratios = [b["wmmse_median_s"] / a["wmmse_median_s"] for a, b in zip(t_rows, t_rows[1:]) if b["T2"] == 2 * a["T2"]]
        fits["t2_doubling_ratios"] = ratios
        fits["monotone_T2"] = all(b["median_s"] > a["median_s"] for a, b in zip(t_rows, t_rows[1:]))
    return fits


# ---------------------------------------------------------------- output


def _fmt(x):
    return format(float(x), ".17g")


def _csv_text(header, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([str(row[0])] + [_fmt(v) for v in row[1:]])
    return buf.getvalue()


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def manifest(result, files=None):
    exp = result.experiment
    runs = {}
    for a in result.algorithms:
        runs[a] = [
            {
                "run_index": t.run_index,
                "scsi_digest": t.scsi_digest,
                "channel_evaluations": t.channel_evaluations,
                "t_star": t.t_star,
                "final_rate": _fmt(final_rate(t.rates, exp.harness.final_fraction)),
                "rates_sha256": hashlib.sha256(np.ascontiguousarray(t.rates).tobytes()).hexdigest(),
            }
            for t in result.traces[a]
        ]
    out = {
        "scenario": exp.name,
        "scenario_hash": exp.scenario.digest(),
        "source_sha256": exp.source_hash,
        "config_hash": result.traces[result.algorithms[0]][0].config_hash,
        "master_seed": exp.zosga.seed,
        "runs": exp.harness.runs,
        "iterations": exp.zosga.iterations,
        "algorithms": list(result.algorithms),
        "zosga": dataclasses.asdict(exp.zosga),
        "wmmse": dataclasses.asdict(exp.wmmse),
        # chunking only trades memory for speed, so it stays out of the record
        "harness": {k: v for k, v in dataclasses.asdict(exp.harness).items() if k != "chunk_size"},
        "software": {"artifact": _version(), "numpy": np.__version__},
        "per_run": runs,
        "summary": {
            a: {
                "final_mean": _fmt(g.final_mean),
                "final_lo95": _fmt(g.final_lo95),
                "final_hi95": _fmt(g.final_hi95),
            }
            for a, g in result.aggregates.items()
        },
    }
    if files is not None:
        out["files"] = files
    return out


def emit(result, path):
    """Write raw traces, aggregate tables and a manifest under ``path``.

    Wall-clock timings are left out on purpose so the files are a pure
    function of seed and configuration.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for a in result.algorithms:
        tag = a.replace("-", "_")
        R = result.rates(a)
        it = np.arange(R.shape[1])
        text = _csv_text(["iter"] + [f"run{t.run_index}" for t in result.traces[a]], [it, *R])
        files[f"traces_{tag}.csv"] = text
        if a in result.aggregates:
            g = result.aggregates[a]
            files[f"aggregate_{tag}.csv"] = _csv_text(
                ["iter", "mean", "lo95", "hi95", "smoothed"], [it, g.mean, g.lo95, g.hi95, g.smoothed]
            )
    digests = {}
    for name, text in files.items():
        (out / name).write_text(text)
        digests[name] = hashlib.sha256(text.encode()).hexdigest()
    (out / "manifest.json").write_text(json.dumps(manifest(result, digests), indent=2, sort_keys=True) + "\n")
    return sorted([*files, "manifest.json"])


def load_manifest(path):
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    return json.loads(p.read_text())


def write_table(rows, path=None):
    """Rows of dicts as CSV text (and to ``path`` when given)."""
    if not rows:
        return ""
    keys = list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow([_fmt(r[k]) if isinstance(r[k], float) else r[k] for k in keys])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
