"""Conjugate-beamforming efficiency (path gain) for coherent joint transmission."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import AmplitudeModel, Scene, complex_noise, true_channel
from .csi import carrier_dictionary, full_rank_pinv, predict_csi
from .filter import MotionModel, SceneState


def path_gain(weights: Sequence[np.ndarray], truth: Sequence[np.ndarray]) -> float:
    """``|sum_j w_j^H h_j / |w_j||^2``; anchors with a zero weight vector are skipped."""
    acc = 0j
    for w, h in zip(weights, truth):
        norm = np.linalg.norm(w)
        if norm > 0:
            acc += np.vdot(w, h) / norm
    return float(abs(acc) ** 2)


def perfect_path_gain(truth: Sequence[np.ndarray]) -> float:
    return float(sum(np.linalg.norm(h) for h in truth) ** 2)


def expected_reciprocity_loss(snr: float) -> float:
    if snr < 0:
        raise ValueError("snr must be non-negative")
    if np.isinf(snr):
        return 1.0
    return snr / (1.0 + snr)


def to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def symmetric_interval(samples, level: float = 0.98, n_boot: int = 200, seed=0) -> tuple[float, float]:
    """Mean and half-width ``U`` so that ``level`` of realizations lie within ``mean +- U``.

    ``U`` is the percentile of ``|x - mean|``, bootstrapped (median over resamples).
    """
    x = np.asarray(samples, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    boot = x[idx]
    dev = np.abs(boot - boot.mean(axis=1, keepdims=True))
    u = np.quantile(dev, level, axis=1)
    return float(x.mean()), float(np.median(u))


@dataclass
class EfficiencyReport:
    time_index: int
    pg_perfect: float
    pg_measured: float = np.nan
    pg_predicted: float = np.nan
    pg_fused: float = np.nan
    pg_outdated: float = np.nan
    pg_future_predicted: float = np.nan
    snr: float = np.nan

    def relative_db(self) -> dict[str, float]:
        keys = ("pg_measured", "pg_predicted", "pg_fused", "pg_outdated", "pg_future_predicted")
        return {k: float(to_db(getattr(self, k) / self.pg_perfect)) for k in keys}


def future_csi(scene: Scene, prev_state: SceneState, prev_meas: Sequence[np.ndarray],
               motion: MotionModel) -> list[np.ndarray]:
    """Propagate the previous state estimate one step (no process noise) and
    predict CSI there with amplitudes concentrated on the previous snapshots."""
    nxt = SceneState.from_vector(motion.propagate(prev_state.to_vector()))
    out = []
    for j, h_prev in enumerate(prev_meas):
        out.append(_future_one(scene, prev_state, nxt, h_prev, j))
    return out


def _future_one(scene, prev_state, nxt, h_prev, j):
    psi_prev = carrier_dictionary(scene, prev_state.position, prev_state.mva_points(), j)
    alpha = full_rank_pinv(psi_prev).apply(h_prev)
    psi_next = carrier_dictionary(scene, nxt.position, nxt.mva_points(), j)
    return psi_next @ alpha


def aging_comparison(trajectory: Sequence[SceneState], scene: Scene, amps: AmplitudeModel,
                     noise_var: float, seed=0, estimates: Sequence[SceneState] | None = None,
                     motion: MotionModel | None = None) -> list[EfficiencyReport]:
    """Outdated versus future-predicted CSI along a trajectory.

    ``trajectory`` holds the true states (velocity included). Without
    ``estimates`` the true states stand in for the state estimates. One report
    per step from the second step on.
    """
    if len(trajectory) < 2:
        raise ValueError("aging comparison needs at least two time steps")
    motion = motion or MotionModel()
    estimates = trajectory if estimates is None else estimates
    carrier = scene.with_radio(scene.radio.at_carrier())
    rng = np.random.default_rng(seed)
    truths, meas = [], []
    for st in trajectory:
        h = [true_channel(carrier, st.position, j, amps) for j in range(scene.n_anchors)]
        truths.append(h)
        if noise_var > 0:
            meas.append([x + complex_noise(rng, x.shape, noise_var) for x in h])
        else:
            meas.append([x.copy() for x in h])
    reports = []
    for n in range(1, len(trajectory)):
        h = truths[n]
        est = estimates[n]
        pred = [predict_csi(scene, est.position, est.mva_points(), meas[n][j], j)
                for j in range(scene.n_anchors)]
        fut = future_csi(scene, estimates[n - 1], meas[n - 1], motion)
        reports.append(EfficiencyReport(
            time_index=n,
            pg_perfect=perfect_path_gain(h),
            pg_measured=path_gain(meas[n], h),
            pg_predicted=path_gain(pred, h),
            pg_outdated=path_gain(meas[n - 1], h),
            pg_future_predicted=path_gain(fut, h),
            snr=float(np.mean([np.vdot(x, x).real / len(x) for x in h]) / noise_var) if noise_var > 0 else np.inf,
        ))
    return reports
