"""Regularized particle filter over the joint agent + map state.

State layout (length ``5 + 3S``): position ``[0:3]``, horizontal velocity
``[3:5]``, stacked MVA positions ``[5:]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

POS = slice(0, 3)
VEL = slice(3, 5)
MVA = slice(5, None)


@dataclass
class SceneState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    mvas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(2)
        self.mvas = np.asarray(self.mvas, dtype=float).ravel()
        if self.mvas.size % 3:
            raise ValueError("MVA block must hold 3 coordinates per surface")

    @property
    def n_surfaces(self) -> int:
        return self.mvas.size // 3

    @property
    def dim(self) -> int:
        return 5 + self.mvas.size

    def mva_points(self) -> np.ndarray:
        return self.mvas.reshape(-1, 3)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity, self.mvas])

    @classmethod
    def from_vector(cls, x) -> "SceneState":
        x = np.asarray(x, dtype=float)
        if x.size < 5 or (x.size - 5) % 3:
            raise ValueError(f"state length {x.size} is not 5 + 3S")
        return cls(position=x[POS], velocity=x[VEL], mvas=x[MVA])


@dataclass(frozen=True)
class MotionModel:
    dt: float = 1.0
    sigma_p: float = 0.01
    sigma_v: float = 0.05
    sigma_mva: float = 0.001

    def transition(self, dim: int) -> np.ndarray:
        F = np.eye(dim)
        F[0, 3] = F[1, 4] = self.dt
        return F

    def process_std(self, dim: int) -> np.ndarray:
        std = np.full(dim, self.sigma_mva)
        std[POS] = self.sigma_p
        std[VEL] = self.sigma_v
        return std

    def process_cov(self, dim: int) -> np.ndarray:
        return np.diag(self.process_std(dim) ** 2)

    def propagate(self, x) -> np.ndarray:
        """Noise-free state propagation ``F x`` (works on ``(..., D)``)."""
        x = np.asarray(x, dtype=float)
        return x @ self.transition(x.shape[-1]).T


@dataclass
class ParticleSet:
    states: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.log_weights = np.asarray(self.log_weights, dtype=float)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def weights(self) -> np.ndarray:
        lw = self.log_weights - np.max(self.log_weights)
        w = np.exp(lw)
        return w / w.sum()

    def ess(self) -> float:
        w = self.weights
        return float(1.0 / np.sum(w**2))

    def state(self, i: int) -> SceneState:
        return SceneState.from_vector(self.states[i])


def _as_vector(b) -> np.ndarray:
    return b.to_vector() if isinstance(b, SceneState) else np.asarray(b, dtype=float)


def init_uniform(bounds_min, bounds_max, n_particles: int, seed) -> ParticleSet:
    lo, hi = _as_vector(bounds_min), _as_vector(bounds_max)
    if lo.shape != hi.shape:
        raise ValueError("bounds must have equal dimension")
    if np.any(lo > hi):
        raise ValueError("empty box: some lower bound exceeds its upper bound")
    rng = np.random.default_rng(seed)
    states = rng.uniform(lo, hi, size=(n_particles, lo.size))
    return ParticleSet(states, np.full(n_particles, -np.log(n_particles)))


def predict(ps: ParticleSet, mm: MotionModel, seed) -> ParticleSet:
    rng = np.random.default_rng(seed)
    std = mm.process_std(ps.dim)
    noise = rng.standard_normal(ps.states.shape) * std
    return ParticleSet(mm.propagate(ps.states) + noise, ps.log_weights.copy())


def _normalize(lw) -> np.ndarray:
    m = np.max(lw)
    return lw - (m + np.log(np.sum(np.exp(lw - m))))


def update(ps: ParticleSet, observations, loglik_fn: Callable) -> ParticleSet:
    """Bayes update in the log domain.

    ``loglik_fn(states, observations)`` returns one log-likelihood per row of
    ``states``. NaNs are treated as impossible hypotheses; if no hypothesis is
    possible the weights fall back to uniform.
    """
    ll = np.asarray(loglik_fn(ps.states, observations), dtype=float)
    ll = np.where(np.isnan(ll), -np.inf, ll)
    lw = ps.log_weights + ll
    if not np.any(np.isfinite(lw)):
        log.warning("all particle weights degenerate; resetting to uniform")
        lw = np.zeros(len(ps))
    return ParticleSet(ps.states.copy(), _normalize(lw))


def silverman_factor(n: int, dim: int) -> float:
    """Gaussian-kernel bandwidth factor ``(4 / (N (d + 2)))^(1 / (d + 4))``."""
    return (4.0 / (n * (dim + 2.0))) ** (1.0 / (dim + 4.0))


def systematic_resample(weights, rng: np.random.Generator) -> np.ndarray:
    n = len(weights)
    positions = (rng.uniform() + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right")


def resample_regularized(ps: ParticleSet, kernel_bandwidth_rule=silverman_factor,
                         ess_threshold: float = 0.5, seed=None, shrink=None) -> ParticleSet:
    """Systematic resampling plus Gaussian kernel jitter when ESS is low.

    The jitter std per dimension is the bandwidth factor ``b`` times the
    unweighted std of the incoming cloud. ``shrink`` selects state dimensions
    (index, slice or mask) whose resampled values are first pulled toward the
    weighted mean by ``sqrt(1 - b^2)``. Meant for static parameters: repeated
    resampling then keeps their spread instead of inflating it along
    directions the likelihood leaves unconstrained.
    """
    n = len(ps)
    if ps.ess() >= ess_threshold * n:
        return ParticleSet(ps.states.copy(), ps.log_weights.copy())
    rng = np.random.default_rng(seed)
    idx = systematic_resample(ps.weights, rng)
    b = min(float(kernel_bandwidth_rule(n, ps.dim)), 1.0)
    h = b * ps.states.std(axis=0)
    states = ps.states[idx]
    if shrink is not None:
        mean = ps.weights @ ps.states[:, shrink]
        states[:, shrink] = mean + np.sqrt(1.0 - b * b) * (states[:, shrink] - mean)
    states = states + rng.standard_normal((n, ps.dim)) * h
    return ParticleSet(states, np.full(n, -np.log(n)))


def estimate(ps: ParticleSet) -> tuple[SceneState, np.ndarray]:
    """Weighted mean and weighted outer-product covariance."""
    w = ps.weights
    mean = w @ ps.states
    dev = ps.states - mean
    cov = (dev * w[:, None]).T @ dev
    return SceneState.from_vector(mean), cov


@dataclass
class StepDiagnostics:
    step: int
    ess: float
    estimate: np.ndarray
    cov_diag: np.ndarray
    clamped: int = 0
