"""Spatiotemporal array manifold, per-anchor dictionaries and synthetic data.

Vectors stacking an anchor's ``K_f x M`` frequency/antenna samples are ordered
frequency-fastest: element ``m * K_f + k`` holds subcarrier ``k`` at antenna ``m``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import PathId, build_layout, path_lengths, path_ids

SPEED_OF_LIGHT = 299792458.0


@dataclass(frozen=True)
class RadioConfig:
    fc: float = 6.175e9
    bandwidth: float = 500e6
    n_freq: int = 6
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.n_freq < 1:
            raise ValueError("n_freq must be >= 1")

    @property
    def delta_f(self) -> float:
        return self.bandwidth / self.n_freq

    @property
    def freq_offsets(self) -> np.ndarray:
        kappa = np.arange(self.n_freq) - (self.n_freq - 1) / 2.0
        return self.delta_f * kappa

    @property
    def wavelength(self) -> float:
        return self.c / self.fc

    def at_carrier(self) -> "RadioConfig":
        return replace(self, n_freq=1)


def subcarrier_subset(source: RadioConfig, target: RadioConfig, rtol: float = 1e-9) -> np.ndarray:
    """Indices of ``source`` subcarriers that form the grid of ``target``."""
    src = source.fc + source.freq_offsets
    idx = []
    for f in target.fc + target.freq_offsets:
        k = int(np.argmin(np.abs(src - f)))
        if abs(src[k] - f) > rtol * f:
            raise ValueError(f"subcarrier {f} Hz not present in source grid")
        idx.append(k)
    return np.asarray(idx)


def select_subcarriers(y, source: RadioConfig, target: RadioConfig, n_antennas: int) -> np.ndarray:
    y = np.asarray(y)
    idx = subcarrier_subset(source, target)
    grid = y.reshape(y.shape[:-1] + (n_antennas, source.n_freq))
    return grid[..., idx].reshape(y.shape[:-1] + (n_antennas * len(idx),))


def manifold_column(radio: RadioConfig, lengths) -> np.ndarray:
    """Unit-modulus phasors ``exp(-j 2 pi (fc + f_k) d_m / c)``, frequency-fastest.

    ``lengths`` has shape ``(..., M)``; the result has shape ``(..., M * K_f)``.
    """
    d = np.asarray(lengths, dtype=float)
    freqs = radio.fc + radio.freq_offsets
    phase = (-2.0 * np.pi / radio.c) * d[..., :, None] * freqs
    col = np.exp(1j * phase)
    return col.reshape(d.shape[:-1] + (d.shape[-1] * radio.n_freq,))


@dataclass(frozen=True)
class Anchor:
    center: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))


@dataclass
class Scene:
    """Radio setup, anchors, array template and surfaces (as MVA points)."""

    radio: RadioConfig
    anchors: list[Anchor]
    template: np.ndarray
    mvas: np.ndarray
    path_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.template = np.asarray(self.template, dtype=float)
        self.mvas = np.asarray(self.mvas, dtype=float).reshape(-1, 3)
        if self.path_mask is None:
            self.path_mask = np.ones(self.n_surfaces**2 + 1, dtype=bool)
        self.path_mask = np.asarray(self.path_mask, dtype=bool)
        if self.path_mask.shape != (self.n_surfaces**2 + 1,):
            raise ValueError("path_mask must have S**2 + 1 entries")

    @property
    def n_surfaces(self) -> int:
        return self.mvas.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.template.shape[1]

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)

    @property
    def paths(self) -> list[PathId]:
        return path_ids(self.n_surfaces)

    @property
    def enabled_paths(self) -> list[PathId]:
        return [p for p, on in zip(self.paths, self.path_mask) if on]

    def with_radio(self, radio: RadioConfig) -> "Scene":
        return replace(self, radio=radio)

    def los_only(self) -> "Scene":
        return replace(self, mvas=np.zeros((0, 3)), path_mask=None)


@dataclass
class Dictionary:
    columns: np.ndarray
    path_ids: list[PathId]
    enabled: np.ndarray

    @property
    def active(self) -> np.ndarray:
        """Columns of the enabled paths only."""
        return self.columns[..., self.enabled]

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.enabled))


def dictionary_columns(radio: RadioConfig, anchor: Anchor, template, agent, mvas,
                       paths: Sequence[PathId]) -> np.ndarray:
    """Batched dictionary: shape ``(..., K_f*M, len(paths))``.

    ``agent`` is ``(..., 3)`` and ``mvas`` is ``(..., S, 3)``.
    """
    agent = np.asarray(agent, dtype=float)
    cols = []
    for path in paths:
        arr = build_layout(anchor.center, anchor.rotation, template, path, mvas)
        cols.append(manifold_column(radio, path_lengths(arr.layout, agent)))
    return np.stack(cols, axis=-1)


def build_dictionary(scene: Scene, agent, anchor_id: int, mvas=None) -> Dictionary:
    """Dictionary of one anchor with all ``S**2 + 1`` paths in canonical order."""
    mvas = scene.mvas if mvas is None else np.asarray(mvas, dtype=float)
    cols = dictionary_columns(scene.radio, scene.anchors[anchor_id], scene.template,
                              agent, mvas, scene.paths)
    return Dictionary(columns=cols, path_ids=scene.paths, enabled=scene.path_mask.copy())


@dataclass(frozen=True)
class Observation:
    y: np.ndarray
    anchor_id: int
    time_index: int = 0


@dataclass(frozen=True)
class ShadowBox:
    """Axis-aligned region in which the agent has no LoS to any anchor."""

    lo: np.ndarray
    hi: np.ndarray

    def __call__(self, agent) -> bool:
        p = np.asarray(agent, dtype=float)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))


def _never(_agent) -> bool:
    return False


@dataclass(frozen=True)
class AmplitudeModel:
    """Free-space ``1/d`` decay with a per-bounce reflection loss."""

    reflection_loss: float = 0.5
    reference_gain: float = 1.0
    los_blocked: Callable[[np.ndarray], bool] = _never

    def __post_init__(self):
        if not 0.0 < self.reflection_loss <= 1.0:
            raise ValueError("reflection_loss must lie in (0, 1]")

    def amplitudes(self, scene: Scene, agent, anchor_id: int) -> np.ndarray:
        anchor = scene.anchors[anchor_id]
        agent = np.asarray(agent, dtype=float)
        blocked = self.los_blocked(agent)
        out = np.zeros(len(scene.paths), dtype=complex)
        for k, path in enumerate(scene.paths):
            if not scene.path_mask[k] or (path.is_los and blocked):
                continue
            arr = build_layout(anchor.center, anchor.rotation, scene.template, path, scene.mvas)
            d = np.linalg.norm(arr.center - agent)
            out[k] = self.reference_gain / d * self.reflection_loss**path.bounces
        return out


def true_channel(scene: Scene, agent, anchor_id: int, amps: AmplitudeModel) -> np.ndarray:
    D = build_dictionary(scene, agent, anchor_id)
    return D.columns @ amps.amplitudes(scene, agent, anchor_id)


def complex_noise(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    """Circular Gaussian samples with ``E|w|^2 = variance``."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_observation(scene: Scene, agent, anchor_id: int, amps: AmplitudeModel,
                           noise_var: float, rng_seed, time_index: int = 0) -> Observation:
    """Noisy snapshot ``y = Psi alpha + w`` for one anchor.

    ``rng_seed`` may be an int, a SeedSequence or a Generator.
    """
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    rng = np.random.default_rng(rng_seed)
    h = true_channel(scene, agent, anchor_id, amps)
    y = h + complex_noise(rng, h.shape, noise_var) if noise_var > 0 else h.copy()
    return Observation(y=y, anchor_id=anchor_id, time_index=time_index)


def channel_snr(truth: Sequence[np.ndarray], noise_vars: Sequence[float]) -> float:
    """Anchor-averaged input SNR, ``mean_j (|h_j|^2 / M) / sigma_j^2`` (linear)."""
    if len(truth) != len(noise_vars):
        raise ValueError("one noise variance per anchor required")
    terms = [np.vdot(h, h).real / len(h) / s2 for h, s2 in zip(truth, noise_vars)]
    return float(np.mean(terms))


def noise_var_for_snr(truth: Sequence[np.ndarray], snr_linear: float) -> float:
    """Common noise variance that makes :func:`channel_snr` equal ``snr_linear``."""
    return channel_snr(truth, [1.0] * len(truth)) / snr_linear
