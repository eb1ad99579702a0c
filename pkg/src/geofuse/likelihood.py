"""Concentrated (profile) likelihoods of anchor observations.

Nuisance parameters (path amplitudes, noise variance and, for the stochastic
model, the source covariance) are replaced by their ML estimates conditional
on the geometry. Everything is evaluated in the log domain and broadcasts over
leading batch dimensions, so one call scores a whole particle set.

Large ``(K_f M) x (K_f M)`` matrices are never formed: the noise-subspace
energy uses ``|y|^2 - (y^H Psi)(Psi^+ y)``, the determinant of the refined
covariance is reduced to a ``K x K`` determinant, and its inverse is applied
through the Woodbury identity.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import Dictionary, Observation, Scene, dictionary_columns

RANK_RTOL = 1e-8
SIGMA2_FLOOR = 1e-12


class RankDeficientDictionary(np.linalg.LinAlgError):
    """Dictionary columns are (numerically) linearly dependent."""


def _matrix(d) -> np.ndarray:
    if isinstance(d, Dictionary):
        return d.active
    return np.asarray(d)


def _vector(y) -> np.ndarray:
    if isinstance(y, Observation):
        return y.y
    return np.asarray(y)


def _herm(a):
    return np.conj(np.swapaxes(a, -1, -2))


@dataclass
class PseudoInverse:
    """Thin SVD ``Psi = U diag(s) V^H`` with small singular values truncated."""

    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray
    inv_s: np.ndarray
    rank: np.ndarray

    @classmethod
    def of(cls, psi, rtol: float = RANK_RTOL) -> "PseudoInverse":
        u, s, vh = np.linalg.svd(psi, full_matrices=False)
        keep = s > rtol * s[..., :1]
        inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
        return cls(u=u, s=s, vh=vh, inv_s=inv_s, rank=keep.sum(axis=-1))

    def full_rank(self) -> np.ndarray:
        """Full column rank: every dictionary column is linearly independent."""
        return self.rank == self.vh.shape[-1]

    def apply(self, y) -> np.ndarray:
        """``Psi^+ y`` for ``y`` of shape ``(..., N)``."""
        c = np.einsum("...nk,...n->...k", self.u.conj(), y)
        return np.einsum("...kl,...k->...l", self.vh.conj(), c * self.inv_s)

    def gram_inverse(self) -> np.ndarray:
        """``Psi^+ Psi^+H``, i.e. ``(Psi^H Psi)^{-1}`` when full rank."""
        v = _herm(self.vh)
        return (v * self.inv_s[..., None, :] ** 2) @ self.vh


@dataclass
class ConcentratedEstimates:
    alpha_hat: np.ndarray
    sigma2_hat: np.ndarray
    p_hat: np.ndarray


@dataclass
class LogLikelihood:
    value: float
    clamped: bool = False

    def __float__(self) -> float:
        return float(self.value)


def _pinv_checked(psi) -> PseudoInverse:
    pinv = PseudoInverse.of(psi)
    if not np.all(pinv.full_rank()):
        raise RankDeficientDictionary(
            f"dictionary rank {pinv.rank.min()} < {psi.shape[-1]} columns")
    return pinv


def concentrate_amplitudes(dictionary, y) -> np.ndarray:
    """Least-squares amplitudes ``Psi^+ y``."""
    psi = _matrix(dictionary)
    return _pinv_checked(psi).apply(_vector(y))


def noise_subspace_energy(dictionary, y, pinv: PseudoInverse | None = None) -> np.ndarray:
    """``tr(Pi_perp y y^H)`` computed as ``|y|^2 - (y^H Psi)(Psi^+ y)``."""
    psi = _matrix(dictionary)
    y = _vector(y)
    if pinv is None:
        pinv = _pinv_checked(psi)
    y_psi = np.einsum("...n,...nk->...k", y.conj(), psi)
    proj = np.einsum("...k,...k->...", y_psi, pinv.apply(y)).real
    energy = np.einsum("...n,...n->...", y.conj(), y).real - proj
    return np.maximum(energy, 0.0)


def _dims(psi):
    n, k = psi.shape[-2:]
    if n <= k:
        raise ValueError(f"need more observations than paths (N={n}, K={k})")
    return n, k


def concentrate_noise_det(dictionary, y) -> np.ndarray:
    psi = _matrix(dictionary)
    n, _ = _dims(psi)
    return noise_subspace_energy(psi, y) / n


def concentrate_noise_sto(dictionary, y) -> np.ndarray:
    psi = _matrix(dictionary)
    n, k = _dims(psi)
    return noise_subspace_energy(psi, y) / (n - k)


def concentrate_source_cov(dictionary, y, sigma2_hat, pinv: PseudoInverse | None = None) -> np.ndarray:
    """``Psi^+ (y y^H - sigma2 I) Psi^+H`` using only ``K``-sized products."""
    psi = _matrix(dictionary)
    if pinv is None:
        pinv = _pinv_checked(psi)
    a = pinv.apply(_vector(y))
    s2 = np.asarray(sigma2_hat)[..., None, None]
    return a[..., :, None] * a[..., None, :].conj() - s2 * pinv.gram_inverse()


def floor_psd(p) -> tuple[np.ndarray, np.ndarray]:
    """Clip negative eigenvalues of Hermitian ``p`` to zero.

    Returns the floored matrix and a mask of the batch entries that changed.
    """
    w, v = np.linalg.eigh(p)
    clamped = np.any(w < 0.0, axis=-1)
    w = np.maximum(w, 0.0)
    return (v * w[..., None, :]) @ _herm(v), clamped


def sylvester_logdet(dictionary, p, sigma2) -> np.ndarray:
    """``ln|sigma2 I_N + Psi P Psi^H|`` via a ``K x K`` determinant."""
    psi = _matrix(dictionary)
    n, k = psi.shape[-2:]
    s2 = np.asarray(sigma2, dtype=float)
    gram = _herm(psi) @ psi
    core = np.eye(k) + (p @ gram) / s2[..., None, None]
    sign, logabs = np.linalg.slogdet(core)
    return n * np.log(s2) + logabs


def _woodbury_core(psi, p, s2):
    k = psi.shape[-1]
    gram = _herm(psi) @ psi
    return np.eye(k) + (gram @ p) / s2[..., None, None]


def woodbury_inverse(dictionary, p, sigma2) -> np.ndarray:
    """Dense ``(sigma2 I + Psi P Psi^H)^{-1}`` assembled from a ``K x K`` solve.

    Uses ``I/s2 - Psi P (I + Psi^H Psi P / s2)^{-1} Psi^H / s2^2``, which
    stays valid for singular ``P``.
    """
    psi = _matrix(dictionary)
    n = psi.shape[-2]
    s2 = np.asarray(sigma2, dtype=float)
    core = _woodbury_core(psi, p, s2)
    inner = p @ np.linalg.solve(core, _herm(psi))
    return np.eye(n) / s2[..., None, None] - (psi @ inner) / s2[..., None, None] ** 2


def woodbury_quadratic(dictionary, p, sigma2, r) -> np.ndarray:
    """``r^H (sigma2 I + Psi P Psi^H)^{-1} r`` without any ``N x N`` matrix."""
    psi = _matrix(dictionary)
    s2 = np.asarray(sigma2, dtype=float)
    r = _vector(r)
    b = np.einsum("...nk,...n->...k", psi.conj(), r)
    core = _woodbury_core(psi, p, s2)
    t = np.einsum("...kl,...l->...k", p, np.linalg.solve(core, b[..., None])[..., 0])
    rr = np.einsum("...n,...n->...", r.conj(), r).real
    corr = np.einsum("...k,...k->...", b.conj(), t).real
    return rr / s2 - corr / s2**2


@dataclass
class AnchorTerms:
    """Per-anchor log-likelihood terms for a batch of hypotheses."""

    value: np.ndarray
    clamped: np.ndarray
    estimates: ConcentratedEstimates


def _sigma2_floor(y, n):
    return SIGMA2_FLOOR * np.einsum("...n,...n->...", y.conj(), y).real / n


def anchor_loglik_det(psi, y) -> AnchorTerms:
    """``-N ln(pi s2) - |Pi_perp y|^2 / s2`` with ``s2 = |Pi_perp y|^2 / N``."""
    n, k = _dims(psi)
    pinv = PseudoInverse.of(psi)
    energy = noise_subspace_energy(psi, y, pinv)
    s2 = np.maximum(energy / n, _sigma2_floor(y, n))
    value = -n * np.log(np.pi * s2) - energy / s2
    alpha = pinv.apply(y)
    est = ConcentratedEstimates(alpha_hat=alpha, sigma2_hat=s2, p_hat=None)
    return AnchorTerms(value=value, clamped=np.zeros(value.shape, dtype=bool), estimates=est)


def anchor_loglik_sto(psi, y) -> AnchorTerms:
    """Stochastic profile log-likelihood of one anchor.

    ``R = Psi P Psi^H + s2 I`` with ``s2 = |Pi_perp y|^2 / (N - K)`` and the
    floored source covariance ``P``; the determinant goes through Sylvester and
    the quadratic form of ``y - Psi alpha`` through Woodbury.
    """
    n, _ = _dims(psi)
    pinv = PseudoInverse.of(psi)
    rank = pinv.rank
    energy = noise_subspace_energy(psi, y, pinv)
    s2 = np.maximum(energy / (n - rank), _sigma2_floor(y, n))
    p_raw = concentrate_source_cov(psi, y, s2, pinv)
    p_hat, clamped = floor_psd(p_raw)
    alpha = pinv.apply(y)
    resid = y - np.einsum("...nk,...k->...n", psi, alpha)
    value = (-n * np.log(np.pi) - sylvester_logdet(psi, p_hat, s2)
             - woodbury_quadratic(psi, p_hat, s2, resid))
    est = ConcentratedEstimates(alpha_hat=alpha, sigma2_hat=s2, p_hat=p_hat)
    return AnchorTerms(value=value, clamped=clamped, estimates=est)


ANCHOR_LOGLIK = {"det": anchor_loglik_det, "sto": anchor_loglik_sto}


def batch_loglik(scene: Scene, agents, mvas, observations: Sequence, kind: str = "sto"):
    """Joint log-likelihood of all anchors for a batch of hypotheses.

    ``agents`` is ``(B, 3)``, ``mvas`` is ``(B, S, 3)`` and ``observations``
    holds one vector (or :class:`Observation`) per anchor of ``scene``.
    Returns ``(values, clamped)`` arrays of shape ``(B,)``.
    """
    fn = ANCHOR_LOGLIK[kind]
    agents = np.asarray(agents, dtype=float)
    mvas = np.asarray(mvas, dtype=float)
    paths = scene.enabled_paths
    total = np.zeros(agents.shape[:-1])
    clamped = np.zeros(agents.shape[:-1], dtype=bool)
    for j, obs in enumerate(observations):
        y = _vector(obs)
        psi = dictionary_columns(scene.radio, scene.anchors[j], scene.template, agents, mvas, paths)
        terms = fn(psi, y)
        total = total + terms.value
        clamped |= terms.clamped
    return total, clamped


def _single(scene, agent, observations, mvas, kind) -> LogLikelihood:
    mvas = scene.mvas if mvas is None else np.asarray(mvas, dtype=float)
    value, clamped = batch_loglik(scene, np.asarray(agent, dtype=float)[None],
                                  mvas.reshape(1, -1, 3), observations, kind)
    return LogLikelihood(value=float(value[0]), clamped=bool(clamped[0]))


def loglik_deterministic(scene: Scene, agent, observations, mvas=None) -> LogLikelihood:
    return _single(scene, agent, observations, mvas, "det")


def loglik_stochastic(scene: Scene, agent, observations, mvas=None) -> LogLikelihood:
    return _single(scene, agent, observations, mvas, "sto")
