"""Scenario configuration: dataclasses, YAML round-trip and validation.

All physical quantities are SI (m, s, Hz). A config file looks like::

    radio: {fc: 6.175e9, bandwidth: 5.0e8, n_freq: 6}
    observe_n_freq: null        # generation grid; null -> same as radio.n_freq
    array: {rows: 8, cols: 8, spacing: null}   # null -> half carrier wavelength
    anchors:
      - {center: [2.0, 1.0, 1.5], rotation: [1, 0, 0, 0, 1, 0, 0, 0, 1]}
    surfaces: [[0.0, -9.0, 0.0]]   # MVA points (origin mirrored across each wall)
    disabled_paths: [[2, 2]]       # paths removed from the inference dictionary
    amplitude: {reflection_loss: 0.5, reference_gain: 1.0}
    shadow: {lo: [x, y, z], hi: [x, y, z]}   # or null; agent inside -> LoS blocked
    trajectory: {waypoints: [[x, y, z], ...], speed: 0.15}
    n_steps: 50
    dt: 1.0
    snr_at_start_db: -6.0
    likelihood: sto               # det | sto
    los_only: false
    convergence_fraction: 0.2
    seed: 0
    bf_seed: 1
    filter:
      n_particles: 1000
      position_min: [4, -4, 0]
      position_max: [12, 0, 3]
      velocity_min: [-0.3, -0.3]
      velocity_max: [0.3, 0.3]
      mva_halfwidth: 0.5          # MVA init box: true MVA +- halfwidth
      sigma_p: 0.01
      sigma_v: 0.05
      sigma_mva: 0.001
      ess_threshold: 0.5
      mva_shrinkage: false        # shrink MVA dims toward the weighted mean on resampling

``rotation`` is a 3x3 matrix in row-major order.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, is_dataclass
from typing import Any, Optional

import numpy as np
import yaml

from .channel import Anchor, AmplitudeModel, RadioConfig, Scene, ShadowBox
from .filter import MotionModel
from .geometry import PathId, rotation_z, template_ura


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ArrayConfig:
    rows: int = 8
    cols: int = 8
    spacing: Optional[float] = None


@dataclass
class AnchorConfig:
    center: list
    rotation: list = field(default_factory=lambda: [1.0, 0, 0, 0, 1.0, 0, 0, 0, 1.0])


@dataclass
class AmplitudeConfig:
    reflection_loss: float = 0.5
    reference_gain: float = 1.0


@dataclass
class BoxConfig:
    lo: list
    hi: list


@dataclass
class TrajectoryConfig:
    waypoints: list
    speed: float = 0.15


@dataclass
class FilterConfig:
    n_particles: int = 1000
    position_min: list = field(default_factory=lambda: [4.0, -4.0, 0.0])
    position_max: list = field(default_factory=lambda: [12.0, 0.0, 3.0])
    velocity_min: list = field(default_factory=lambda: [-0.3, -0.3])
    velocity_max: list = field(default_factory=lambda: [0.3, 0.3])
    mva_halfwidth: float = 0.5
    sigma_p: float = 0.01
    sigma_v: float = 0.05
    sigma_mva: float = 0.001
    ess_threshold: float = 0.5
    mva_shrinkage: bool = False


@dataclass
class ScenarioConfig:
    radio: RadioConfig
    array: ArrayConfig
    anchors: list
    surfaces: list
    trajectory: TrajectoryConfig
    filter: FilterConfig = field(default_factory=FilterConfig)
    amplitude: AmplitudeConfig = field(default_factory=AmplitudeConfig)
    shadow: Optional[BoxConfig] = None
    disabled_paths: list = field(default_factory=list)
    observe_n_freq: Optional[int] = None
    n_steps: int = 50
    dt: float = 1.0
    snr_at_start_db: float = -6.0
    likelihood: str = "sto"
    los_only: bool = False
    convergence_fraction: float = 0.2
    seed: int = 0
    bf_seed: int = 1

    def __post_init__(self):
        self.validate()

    # -- validation -----------------------------------------------------
    def validate(self) -> None:
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(f"{name}: {msg}")

        need(self.radio.fc > 0, "radio.fc", "must be positive")
        need(self.radio.bandwidth > 0, "radio.bandwidth", "must be positive")
        need(self.radio.n_freq >= 1, "radio.n_freq", "must be >= 1")
        need(self.array.rows >= 1 and self.array.cols >= 1, "array", "rows and cols must be >= 1")
        need(self.array.spacing is None or self.array.spacing > 0, "array.spacing", "must be positive")
        need(len(self.anchors) >= 1, "anchors", "at least one anchor required")
        for i, a in enumerate(self.anchors):
            need(len(a.center) == 3, f"anchors[{i}].center", "needs 3 coordinates")
            need(len(a.rotation) == 9, f"anchors[{i}].rotation", "needs 9 entries (row-major 3x3)")
            r = np.asarray(a.rotation, dtype=float).reshape(3, 3)
            need(np.allclose(r.T @ r, np.eye(3), atol=1e-9), f"anchors[{i}].rotation", "not orthogonal")
        for i, m in enumerate(self.surfaces):
            need(len(m) == 3, f"surfaces[{i}]", "needs 3 coordinates")
            need(np.linalg.norm(m) > 1e-9, f"surfaces[{i}]", "MVA too close to the origin")
        s = len(self.surfaces)
        for i, p in enumerate(self.disabled_paths):
            need(len(p) == 2 and all(0 <= v <= s for v in p) and (p[0] == 0) == (p[1] == 0),
                 f"disabled_paths[{i}]", f"invalid path index for S={s}")
            need(tuple(p) != (0, 0), f"disabled_paths[{i}]", "the LoS path cannot be disabled")
        need(len(self.trajectory.waypoints) >= 1, "trajectory.waypoints", "at least one waypoint")
        need(all(len(w) == 3 for w in self.trajectory.waypoints), "trajectory.waypoints", "3 coordinates each")
        need(self.trajectory.speed >= 0, "trajectory.speed", "must be non-negative")
        need(self.n_steps >= 1, "n_steps", "must be >= 1")
        need(self.dt > 0, "dt", "must be positive")
        need(self.likelihood in ("det", "sto"), "likelihood", "must be 'det' or 'sto'")
        need(0.0 <= self.convergence_fraction < 1.0, "convergence_fraction", "must lie in [0, 1)")
        need(0.0 < self.amplitude.reflection_loss <= 1.0, "amplitude.reflection_loss", "must lie in (0, 1]")
        f = self.filter
        need(f.n_particles >= 1, "filter.n_particles", "must be >= 1")
        need(len(f.position_min) == 3 and len(f.position_max) == 3, "filter.position_min/max", "3 entries")
        need(len(f.velocity_min) == 2 and len(f.velocity_max) == 2, "filter.velocity_min/max", "2 entries")
        need(np.all(np.asarray(f.position_min) <= np.asarray(f.position_max)), "filter.position_min",
             "exceeds position_max")
        need(np.all(np.asarray(f.velocity_min) <= np.asarray(f.velocity_max)), "filter.velocity_min",
             "exceeds velocity_max")
        need(f.mva_halfwidth >= 0, "filter.mva_halfwidth", "must be non-negative")
        need(0.0 <= f.ess_threshold <= 1.0, "filter.ess_threshold", "must lie in [0, 1]")
        if self.observe_n_freq is not None:
            try:
                from .channel import subcarrier_subset
                subcarrier_subset(self.observation_radio(), self.radio)
            except ValueError as exc:
                raise ConfigError(f"observe_n_freq: {exc}") from None
        if self.shadow is not None:
            need(len(self.shadow.lo) == 3 and len(self.shadow.hi) == 3, "shadow", "lo/hi need 3 entries")

    # -- derived objects ------------------------------------------------
    def observation_radio(self) -> RadioConfig:
        if self.observe_n_freq is None:
            return self.radio
        return RadioConfig(fc=self.radio.fc, bandwidth=self.radio.bandwidth,
                           n_freq=self.observe_n_freq, c=self.radio.c)

    def template(self) -> np.ndarray:
        spacing = self.array.spacing or self.radio.wavelength / 2.0
        return template_ura(self.array.rows, self.array.cols, spacing)

    def anchor_objects(self) -> list[Anchor]:
        return [Anchor(center=np.asarray(a.center, dtype=float),
                       rotation=np.asarray(a.rotation, dtype=float).reshape(3, 3))
                for a in self.anchors]

    def true_scene(self) -> Scene:
        """Scene used to generate data (all paths present)."""
        return Scene(radio=self.observation_radio(), anchors=self.anchor_objects(),
                     template=self.template(), mvas=np.asarray(self.surfaces, dtype=float).reshape(-1, 3))

    def inference_scene(self) -> Scene:
        """Scene whose dictionary the filter uses (path mask / LoS-only applied)."""
        scene = Scene(radio=self.radio, anchors=self.anchor_objects(), template=self.template(),
                      mvas=np.asarray(self.surfaces, dtype=float).reshape(-1, 3))
        if self.los_only:
            return scene.los_only()
        disabled = {PathId(*p) for p in self.disabled_paths}
        scene.path_mask = np.array([p not in disabled for p in scene.paths])
        return scene

    def amplitude_model(self) -> AmplitudeModel:
        blocked = ShadowBox(np.asarray(self.shadow.lo, float), np.asarray(self.shadow.hi, float)) \
            if self.shadow is not None else AmplitudeModel().los_blocked
        return AmplitudeModel(reflection_loss=self.amplitude.reflection_loss,
                              reference_gain=self.amplitude.reference_gain, los_blocked=blocked)

    def motion_model(self) -> MotionModel:
        f = self.filter
        return MotionModel(dt=self.dt, sigma_p=f.sigma_p, sigma_v=f.sigma_v, sigma_mva=f.sigma_mva)

    def init_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        f = self.filter
        mvas = [] if self.los_only else np.asarray(self.surfaces, dtype=float).ravel().tolist()
        mvas = np.asarray(mvas, dtype=float)
        lo = np.concatenate([f.position_min, f.velocity_min, mvas - f.mva_halfwidth])
        hi = np.concatenate([f.position_max, f.velocity_max, mvas + f.mva_halfwidth])
        return lo.astype(float), hi.astype(float)

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["radio"] = {"fc": self.radio.fc, "bandwidth": self.radio.bandwidth,
                      "n_freq": self.radio.n_freq, "c": self.radio.c}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
        for name in ("radio", "array", "anchors", "surfaces", "trajectory"):
            if name not in d:
                raise ConfigError(f"{name}: missing")
        try:
            d["radio"] = RadioConfig(**d["radio"])
            d["array"] = ArrayConfig(**d["array"])
            d["anchors"] = [AnchorConfig(**a) for a in d["anchors"]]
            d["trajectory"] = TrajectoryConfig(**d["trajectory"])
            if "filter" in d:
                d["filter"] = FilterConfig(**d["filter"])
            if "amplitude" in d:
                d["amplitude"] = AmplitudeConfig(**d["amplitude"])
            if d.get("shadow") is not None:
                d["shadow"] = BoxConfig(**d["shadow"])
        except TypeError as exc:
            raise ConfigError(f"structure: {exc}") from None
        return cls(**d)

    def replace(self, **changes: Any) -> "ScenarioConfig":
        d = self.to_dict()
        for key, value in changes.items():
            node = d
            parts = key.split(".")
            for p in parts[:-1]:
                node = node[p]
            node[parts[-1]] = _plain(value)
        return ScenarioConfig.from_dict(d)


def _plain(value):
    if isinstance(value, RadioConfig):
        return {"fc": value.fc, "bandwidth": value.bandwidth, "n_freq": value.n_freq, "c": value.c}
    if is_dataclass(value):
        return asdict(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    return ScenarioConfig.from_dict(data)


def save_config(cfg: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


# -- stock scenarios -----------------------------------------------------

def _row_major(r) -> list:
    return [float(v) for v in np.asarray(r).ravel()]


def default_config() -> ScenarioConfig:
    """Hallway-like scene: J = 15 anchors with 8x8 arrays, two walls, K_f = 6,
    and a shelf shadowing the final third of the trajectory.

    The walls are perpendicular, so the (1,2) and (2,1) images coincide; the
    duplicate column is removed from the inference dictionary."""
    anchors = []
    for i, x in enumerate(np.linspace(2.0, 14.0, 15)):
        z = 1.4 if i % 2 == 0 else 2.4
        anchors.append(AnchorConfig(center=[float(x), 1.0, z], rotation=_row_major(rotation_z(np.pi))))
    waypoints = [[5.0, -1.5, 1.2], [10.0, -1.5, 1.2], [10.0, -3.0, 1.2]]
    return ScenarioConfig(
        radio=RadioConfig(n_freq=6),
        array=ArrayConfig(rows=8, cols=8),
        anchors=anchors,
        surfaces=[[0.0, -9.0, 0.0], [30.0, 0.0, 0.0]],
        trajectory=TrajectoryConfig(waypoints=waypoints, speed=0.15),
        shadow=BoxConfig(lo=[9.1, -10.0, -10.0], hi=[100.0, 10.0, 10.0]),
        disabled_paths=[[2, 1]],
        n_steps=45,
        snr_at_start_db=-6.0,
        filter=FilterConfig(n_particles=1000),
    )


def desk_config(**changes) -> ScenarioConfig:
    """Desk-scale scene: J = 5 anchors with 4x4 arrays, one wall, K_f = 4."""
    anchors = []
    for i, x in enumerate([3.0, 5.5, 8.0, 10.5, 13.0]):
        z = 1.5 if i % 2 == 0 else 2.5
        anchors.append(AnchorConfig(center=[x, 1.0, z], rotation=_row_major(rotation_z(np.pi))))
    cfg = ScenarioConfig(
        radio=RadioConfig(n_freq=4),
        array=ArrayConfig(rows=4, cols=4),
        anchors=anchors,
        surfaces=[[0.0, -4.4, 0.0]],
        trajectory=TrajectoryConfig(waypoints=[[4.5, -1.5, 1.2], [10.5, -1.5, 1.2], [10.5, -0.3, 1.2]],
                                    speed=0.15),
        n_steps=50,
        snr_at_start_db=0.0,
        filter=FilterConfig(n_particles=500, position_min=[3.5, -2.1, 0.2], position_max=[5.5, -0.5, 2.2],
                            mva_halfwidth=0.2, mva_shrinkage=True),
    )
    return cfg.replace(**changes) if changes else cfg
