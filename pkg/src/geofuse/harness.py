"""Synthetic scenario runs: data generation, tracking, CSI evaluation, metrics."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import filter as pf
from .beamform import EfficiencyReport, future_csi, path_gain, perfect_path_gain, to_db
from .channel import complex_noise, noise_var_for_snr, select_subcarriers, true_channel
from .config import ScenarioConfig
from .csi import csi_triple
from .filter import SceneState
from .geometry import same_side
from .likelihood import batch_loglik

log = logging.getLogger(__name__)

STEPS_HEADER = ["run", "step", "px", "py", "pz", "ex", "ey", "ez", "ess", "pg_meas_db",
                "pg_pred_db", "pg_fused_db", "pg_outdated_db", "pg_future_db"]

# stream tags for seed derivation
_INIT, _OBS, _RESAMPLE, _PREDICT, _CARRIER = range(5)


def _rng(seed: int, run: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, run, *key]))


def trajectory(waypoints, speed: float, dt: float, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Constant-speed walk along a polyline; positions and horizontal velocities.

    The agent stops at the last waypoint.
    """
    w = np.asarray(waypoints, dtype=float)
    seg = np.diff(w, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    pos = np.empty((n_steps, 3))
    vel = np.zeros((n_steps, 2))
    for n in range(n_steps):
        s = n * speed * dt
        if len(seg) == 0 or s >= cum[-1]:
            pos[n] = w[-1]
            continue
        i = int(np.searchsorted(cum, s, side="right") - 1)
        u = seg[i] / seg_len[i]
        pos[n] = w[i] + (s - cum[i]) * u
        vel[n] = speed * u[:2]
    return pos, vel


def true_states(cfg: ScenarioConfig) -> list[SceneState]:
    pos, vel = trajectory(cfg.trajectory.waypoints, cfg.trajectory.speed, cfg.dt, cfg.n_steps)
    mvas = np.asarray(cfg.surfaces, dtype=float).ravel()
    return [SceneState(p, v, mvas) for p, v in zip(pos, vel)]


def carrier_truth(cfg: ScenarioConfig, states: Sequence[SceneState]) -> list[list[np.ndarray]]:
    scene = cfg.true_scene()
    scene = scene.with_radio(scene.radio.at_carrier())
    amps = cfg.amplitude_model()
    return [[true_channel(scene, s.position, j, amps) for j in range(scene.n_anchors)] for s in states]


def noise_variance(cfg: ScenarioConfig, truth_first: Sequence[np.ndarray]) -> float:
    """Common noise power giving the configured SNR at the first step."""
    return noise_var_for_snr(truth_first, 10.0 ** (cfg.snr_at_start_db / 10.0))


@dataclass
class SimulatedRun:
    run: int
    states: list
    noise_var: float
    observations: np.ndarray  # (n_steps, J, K_f_obs * M)


def simulate(cfg: ScenarioConfig, run: int, seed: int | None = None) -> SimulatedRun:
    """Noisy wideband snapshots of every anchor along the true trajectory."""
    seed = cfg.seed if seed is None else seed
    states = true_states(cfg)
    noise_var = noise_variance(cfg, carrier_truth(cfg, states[:1])[0])
    scene = cfg.true_scene()
    amps = cfg.amplitude_model()
    obs = []
    for n, st in enumerate(states):
        rng = _rng(seed, run, _OBS, n)
        row = []
        for j in range(scene.n_anchors):
            h = true_channel(scene, st.position, j, amps)
            row.append(h + complex_noise(rng, h.shape, noise_var))
        obs.append(row)
    return SimulatedRun(run=run, states=states, noise_var=noise_var, observations=np.asarray(obs))


@dataclass
class RunRecord:
    run: int
    step: int
    truth: SceneState
    estimate: SceneState
    cov_diag: np.ndarray
    ess: float
    clamped: int
    report: EfficiencyReport | None = None

    def position_error(self) -> np.ndarray:
        return self.estimate.position - self.truth.position


def make_loglik(cfg: ScenarioConfig):
    scene = cfg.inference_scene()
    kind = cfg.likelihood
    n_surf = scene.n_surfaces
    counter = {"clamped": 0}

    centers = np.array([a.center for a in scene.anchors])

    def loglik(states, observations):
        agents = states[:, pf.POS]
        mvas = states[:, 5:5 + 3 * n_surf].reshape(len(states), n_surf, 3)
        value, clamped = batch_loglik(scene, agents, mvas, observations, kind)
        counter["clamped"] = int(np.count_nonzero(clamped))
        # the agent must see every surface from the anchors' side
        ok = np.ones(len(states), dtype=bool)
        for s in range(n_surf):
            m = mvas[:, s, None, :]
            ok &= np.all(same_side(agents[:, None, :], centers[None], m), axis=1)
        return np.where(ok, value, -np.inf)

    return loglik, counter


def track(cfg: ScenarioConfig, run: int, seed: int | None = None,
          sim: SimulatedRun | None = None) -> tuple[list[SceneState], list[pf.StepDiagnostics], SimulatedRun]:
    """Run the particle filter on one simulated trajectory.

    Per step: update with the step's snapshots, estimate, resample, predict.
    """
    seed = cfg.seed if seed is None else seed
    sim = simulate(cfg, run, seed) if sim is None else sim
    motion = cfg.motion_model()
    loglik, counter = make_loglik(cfg)
    obs_radio, inf_radio = cfg.observation_radio(), cfg.radio
    m = cfg.array.rows * cfg.array.cols
    lo, hi = cfg.init_bounds()
    ps = pf.init_uniform(lo, hi, cfg.filter.n_particles, _rng(seed, run, _INIT))
    estimates, diags = [], []
    for n in range(cfg.n_steps):
        ys = sim.observations[n]
        if obs_radio.n_freq != inf_radio.n_freq:
            ys = select_subcarriers(ys, obs_radio, inf_radio, m)
        ps = pf.update(ps, list(ys), loglik)
        est, cov = pf.estimate(ps)
        estimates.append(est)
        diags.append(pf.StepDiagnostics(step=n, ess=ps.ess(), estimate=est.to_vector(),
                                        cov_diag=np.diag(cov).copy(), clamped=counter["clamped"]))
        ps = pf.resample_regularized(ps, ess_threshold=cfg.filter.ess_threshold,
                                     seed=_rng(seed, run, _RESAMPLE, n),
                                     shrink=pf.MVA if cfg.filter.mva_shrinkage else None)
        ps = pf.predict(ps, motion, _rng(seed, run, _PREDICT, n))
    return estimates, diags, sim


def evaluate_csi(cfg: ScenarioConfig, run: int, states: Sequence[SceneState],
                 estimates: Sequence[SceneState], noise_var: float,
                 bf_seed: int | None = None) -> list[EfficiencyReport]:
    """Beamforming efficiencies of measured, predicted, fused, outdated and
    future-predicted CSI at the carrier. Uses its own noise stream, so it never
    influences tracking."""
    bf_seed = cfg.bf_seed if bf_seed is None else bf_seed
    scene = cfg.inference_scene()
    motion = cfg.motion_model()
    truth = carrier_truth(cfg, states)
    reports, prev_meas = [], None
    for n, (h, est) in enumerate(zip(truth, estimates)):
        rng = _rng(bf_seed, run, _CARRIER, n)
        meas = [x + complex_noise(rng, x.shape, noise_var) for x in h]
        trip = [csi_triple(scene, est.position, est.mva_points(), meas[j], j)
                for j in range(len(h))]
        rep = EfficiencyReport(
            time_index=n,
            pg_perfect=perfect_path_gain(h),
            pg_measured=path_gain(meas, h),
            pg_predicted=path_gain([t.predicted for t in trip], h),
            pg_fused=path_gain([t.fused for t in trip], h),
            snr=float(np.mean([np.vdot(x, x).real / len(x) for x in h]) / noise_var),
        )
        if n > 0:
            rep.pg_outdated = path_gain(prev_meas, h)
            rep.pg_future_predicted = path_gain(future_csi(scene, estimates[n - 1], prev_meas, motion), h)
        reports.append(rep)
        prev_meas = meas
    return reports


def run_tracking(cfg: ScenarioConfig, runs: int = 1, seed: int | None = None,
                 bf_seed: int | None = None, evaluate: bool = True) -> list[RunRecord]:
    """Full pipeline for ``runs`` independent Monte Carlo runs."""
    records = []
    for r in range(runs):
        estimates, diags, sim = track(cfg, r, seed)
        reports = evaluate_csi(cfg, r, sim.states, estimates, sim.noise_var, bf_seed) if evaluate \
            else [None] * len(estimates)
        for n, (st, est, d, rep) in enumerate(zip(sim.states, estimates, diags, reports)):
            records.append(RunRecord(run=r, step=n + 1, truth=st, estimate=est, cov_diag=d.cov_diag,
                                     ess=d.ess, clamped=d.clamped, report=rep))
        log.info("run %d done", r)
    return records


# -- metrics ---------------------------------------------------------------

def _window(steps: np.ndarray, fraction: float) -> np.ndarray:
    n_max = steps.max()
    return steps > int(np.floor(fraction * n_max))


def rmse(err: np.ndarray) -> float:
    err = np.asarray(err, dtype=float)
    return float(np.sqrt(np.mean(err**2))) if err.size else float("nan")


def error_cdf(err: Iterable[float], resolution: float = 0.01) -> tuple[list, list]:
    """Empirical CDF of absolute errors on a grid with ``resolution`` spacing."""
    e = np.sort(np.abs(np.asarray(list(err), dtype=float)))
    if e.size == 0:
        return [], []
    n_bins = int(np.ceil(e[-1] / resolution)) + 1
    grid = np.arange(n_bins + 1) * resolution
    frac = np.searchsorted(e, grid, side="right") / e.size
    return [float(g) for g in grid], [float(f) for f in frac]


def summarize(records: Sequence[RunRecord] | Sequence[dict], convergence_fraction: float = 0.2) -> dict:
    """Horizontal/vertical RMSE after convergence, per run and overall, plus CDFs.

    Accepts :class:`RunRecord` objects or rows of ``steps.csv`` (dicts).
    """
    rows = [_row(r) for r in records]
    if not rows:
        raise ValueError("no records to summarize")
    run = np.array([r["run"] for r in rows], dtype=int)
    step = np.array([r["step"] for r in rows], dtype=int)
    p = np.array([[r["px"], r["py"], r["pz"]] for r in rows], dtype=float)
    e = np.array([[r["ex"], r["ey"], r["ez"]] for r in rows], dtype=float)
    h_err = np.linalg.norm(e[:, :2] - p[:, :2], axis=1)
    v_err = np.abs(e[:, 2] - p[:, 2])
    keep = _window(step, convergence_fraction)
    out = {
        "n_runs": int(np.unique(run).size),
        "n_steps": int(step.max()),
        "convergence_fraction": convergence_fraction,
        "rmse_horizontal": rmse(h_err[keep]),
        "rmse_vertical": rmse(v_err[keep]),
        "rmse_horizontal_per_run": [rmse(h_err[keep & (run == r)]) for r in np.unique(run)],
        "rmse_vertical_per_run": [rmse(v_err[keep & (run == r)]) for r in np.unique(run)],
    }
    out["cdf_horizontal_m"], out["cdf_horizontal"] = error_cdf(h_err)
    out["cdf_vertical_m"], out["cdf_vertical"] = error_cdf(v_err)
    for key in ("pg_meas_db", "pg_pred_db", "pg_fused_db", "pg_outdated_db", "pg_future_db"):
        vals = np.array([r[key] for r in rows], dtype=float)[keep]
        vals = vals[np.isfinite(vals)]
        # mean of linear efficiencies, reported in dB
        out[f"mean_{key}"] = float(to_db(np.mean(10 ** (vals / 10)))) if vals.size else float("nan")
    return out


def _row(r) -> dict:
    if isinstance(r, dict):
        return {k: (float(v) if k not in ("run", "step") else int(v)) for k, v in r.items()}
    return record_row(r)


def record_row(r: RunRecord) -> dict:
    db = r.report.relative_db() if r.report is not None else {}
    nan = float("nan")
    return {
        "run": r.run, "step": r.step,
        "px": float(r.truth.position[0]), "py": float(r.truth.position[1]), "pz": float(r.truth.position[2]),
        "ex": float(r.estimate.position[0]), "ey": float(r.estimate.position[1]),
        "ez": float(r.estimate.position[2]), "ess": float(r.ess),
        "pg_meas_db": db.get("pg_measured", nan), "pg_pred_db": db.get("pg_predicted", nan),
        "pg_fused_db": db.get("pg_fused", nan), "pg_outdated_db": db.get("pg_outdated", nan),
        "pg_future_db": db.get("pg_future_predicted", nan),
    }


# -- file output -------------------------------------------------------------

def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def steps_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STEPS_HEADER)
    for row in rows:
        w.writerow([_fmt(row[k]) for k in STEPS_HEADER])
    return buf.getvalue()


def write_steps(rows: Sequence[dict], path) -> None:
    Path(path).write_text(steps_csv(rows), encoding="utf-8")


def read_steps(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != STEPS_HEADER:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [_row(r) for r in reader]


def write_summary(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def save_estimates(records: Sequence[RunRecord], path) -> None:
    runs = sorted({r.run for r in records})
    arrays = {}
    for r in runs:
        rs = sorted((x for x in records if x.run == r), key=lambda x: x.step)
        arrays[f"run{r}_estimates"] = np.array([x.estimate.to_vector() for x in rs])
        arrays[f"run{r}_ess"] = np.array([x.ess for x in rs])
    np.savez(path, runs=np.array(runs), **arrays)


def load_estimates(path) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    with np.load(path) as data:
        return {int(r): (data[f"run{r}_estimates"], data[f"run{r}_ess"]) for r in data["runs"]}
