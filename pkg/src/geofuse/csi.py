"""Estimated, predicted and fused CSI at the carrier frequency."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Scene, dictionary_columns
from .likelihood import (PseudoInverse, RankDeficientDictionary, SIGMA2_FLOOR,
                         concentrate_source_cov, floor_psd, noise_subspace_energy)


class DegenerateFusionError(np.linalg.LinAlgError):
    """Zero measurement noise together with a rank-deficient prior."""


@dataclass
class CsiTriple:
    measured: np.ndarray
    predicted: np.ndarray
    fused: np.ndarray
    r_meas_var: float
    psi: np.ndarray
    p_hat: np.ndarray
    clamped: bool = False

    @property
    def r_pred(self) -> np.ndarray:
        """Prediction covariance ``Psi P Psi^H`` (dense, ``M x M``)."""
        return self.psi @ self.p_hat @ self.psi.conj().T


def carrier_dictionary(scene: Scene, position, mvas, anchor_id: int) -> np.ndarray:
    radio = scene.radio.at_carrier()
    mvas = np.asarray(mvas, dtype=float).reshape(-1, 3)
    return dictionary_columns(radio, scene.anchors[anchor_id], scene.template,
                              np.asarray(position, dtype=float), mvas, scene.enabled_paths)


def full_rank_pinv(psi) -> PseudoInverse:
    pinv = PseudoInverse.of(psi)
    if not pinv.full_rank():
        raise RankDeficientDictionary("dictionary at the state estimate is rank deficient")
    return pinv


def predict_csi(scene: Scene, position, mvas, h_meas, anchor_id: int) -> np.ndarray:
    """``Psi(x) Psi(x)^+ h_meas``: the geometry model evaluated at ``x``."""
    psi = carrier_dictionary(scene, position, mvas, anchor_id)
    return psi @ full_rank_pinv(psi).apply(np.asarray(h_meas))


def fuse_csi(h_meas, h_pred, psi, p_hat, sigma2) -> np.ndarray:
    """LMMSE fusion ``h_p + R_p (s2 I + R_p)^{-1} (h_m - h_p)`` with ``R_p = Psi P Psi^H``.

    The ``M x M`` inverse is pushed through to a ``K x K`` solve, so ``R_p``
    may be singular as long as ``s2 > 0``.
    """
    h_meas = np.asarray(h_meas)
    h_pred = np.asarray(h_pred)
    psi = np.asarray(psi)
    p_hat = np.asarray(p_hat)
    m, k = psi.shape
    if sigma2 <= 0:
        r_rank = np.linalg.matrix_rank(psi @ p_hat @ psi.conj().T) if k else 0
        if r_rank < m:
            raise DegenerateFusionError("sigma2 = 0 with rank-deficient prediction covariance")
    core = sigma2 * np.eye(k) + psi.conj().T @ psi @ p_hat
    b = psi.conj().T @ (h_meas - h_pred)
    return h_pred + psi @ (p_hat @ np.linalg.solve(core, b))


def csi_triple(scene: Scene, position, mvas, h_meas, anchor_id: int) -> CsiTriple:
    """Predicted and fused CSI from one carrier snapshot at a state estimate.

    Amplitudes, noise variance and source covariance are concentrated on the
    carrier snapshot with the stochastic-model estimators.
    """
    h_meas = np.asarray(h_meas)
    psi = carrier_dictionary(scene, position, mvas, anchor_id)
    m, k = psi.shape
    if m <= k:
        raise ValueError(f"need more antennas than paths (M={m}, K={k})")
    pinv = full_rank_pinv(psi)
    alpha = pinv.apply(h_meas)
    h_pred = psi @ alpha
    s2 = noise_subspace_energy(psi, h_meas, pinv) / (m - k)
    s2 = max(float(s2), SIGMA2_FLOOR * float(np.vdot(h_meas, h_meas).real) / m)
    p_hat, clamped = floor_psd(concentrate_source_cov(psi, h_meas, s2, pinv))
    fused = fuse_csi(h_meas, h_pred, psi, p_hat, s2)
    return CsiTriple(measured=h_meas, predicted=h_pred, fused=fused, r_meas_var=s2,
                     psi=psi, p_hat=p_hat, clamped=bool(clamped))
