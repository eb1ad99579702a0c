"""Mirror-virtual-anchor (MVA) scene geometry.

A planar surface is encoded by a single point: the mirror image of the
coordinate origin across that surface. Its wall point is half that vector and
its unit normal is the normalized vector. Physical anchors (PAs) are mirrored
across one or two surfaces to obtain virtual anchors (VAs), whose array layouts
drive the propagation path lengths.

All functions broadcast over leading dimensions so that particle batches can
be processed without Python loops.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MVA_MIN_NORM = 1e-9


class DegenerateMvaError(ValueError):
    """Raised when an MVA is too close to the origin to define a surface."""


def _check_mva(mva):
    mva = np.asarray(mva, dtype=float)
    norm2 = np.einsum("...i,...i->...", mva, mva)
    if np.any(norm2 < MVA_MIN_NORM**2):
        raise DegenerateMvaError(f"MVA norm below {MVA_MIN_NORM} m")
    return mva, norm2


@dataclass(frozen=True)
class Surface:
    wall_point: np.ndarray
    normal: np.ndarray

    @classmethod
    def from_mva(cls, mva) -> "Surface":
        mva, norm2 = _check_mva(mva)
        return cls(wall_point=0.5 * mva, normal=mva / np.sqrt(norm2))

    def signed_distance(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.wall_point) @ self.normal


def mva_from_plane(wall_point, normal) -> np.ndarray:
    """Mirror the origin across the plane through ``wall_point`` with ``normal``."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    w = np.asarray(wall_point, dtype=float)
    return 2.0 * (w @ n) * n


def mirror_point(p, mva) -> np.ndarray:
    """Reflect ``p`` across the surface encoded by ``mva``.

    Computes ``p - (2 p.m / |m|^2 - 1) m``. Both arguments broadcast.
    """
    mva, norm2 = _check_mva(mva)
    p = np.asarray(p, dtype=float)
    coef = 2.0 * np.einsum("...i,...i->...", p, mva) / norm2 - 1.0
    return p - coef[..., None] * mva


def householder(mva) -> np.ndarray:
    """Reflection matrix ``I - 2 m m^T / |m|^2`` with shape ``(..., 3, 3)``."""
    mva, norm2 = _check_mva(mva)
    outer = mva[..., :, None] * mva[..., None, :]
    return np.eye(3) - 2.0 * outer / norm2[..., None, None]


@dataclass(frozen=True)
class PathId:
    """Propagation path label. ``(0, 0)`` is LoS, ``(s, s)`` a single bounce
    and ``(s, s')`` with ``s != s'`` a double bounce (surfaces are 1-based)."""

    s: int = 0
    s_prime: int = 0

    @property
    def is_los(self) -> bool:
        return self.s == 0 and self.s_prime == 0

    @property
    def bounces(self) -> int:
        if self.is_los:
            return 0
        return 1 if self.s == self.s_prime else 2

    def __str__(self) -> str:
        return f"({self.s},{self.s_prime})"


def path_ids(n_surfaces: int) -> list[PathId]:
    """LoS first, then ``s`` outer and ``s'`` inner; ``S**2 + 1`` paths."""
    paths = [PathId(0, 0)]
    for s in range(1, n_surfaces + 1):
        for sp in range(1, n_surfaces + 1):
            paths.append(PathId(s, sp))
    return paths


def template_ura(rows: int, cols: int, spacing: float) -> np.ndarray:
    """Uniform rectangular array in the local x-z plane, centered at the origin.

    Returns a ``(3, rows*cols)`` matrix. The array broadside is the local y axis.
    """
    ix = (np.arange(cols) - (cols - 1) / 2.0) * spacing
    iz = (np.arange(rows) - (rows - 1) / 2.0) * spacing
    xx, zz = np.meshgrid(ix, iz, indexing="xy")
    return np.stack([xx.ravel(), np.zeros(xx.size), zz.ravel()])


@dataclass(frozen=True)
class AnchorArray:
    center: np.ndarray
    orientation: np.ndarray
    template: np.ndarray
    layout: np.ndarray


def va_pose(pa_center, pa_rotation, path: PathId, mvas):
    """Phase center and orientation of the (virtual) anchor for ``path``.

    ``mvas`` has shape ``(..., S, 3)``; results have shapes ``(..., 3)`` and
    ``(..., 3, 3)``.
    """
    mvas = np.asarray(mvas, dtype=float)
    center = np.asarray(pa_center, dtype=float)
    rot = np.asarray(pa_rotation, dtype=float)
    if path.is_los:
        lead = mvas.shape[:-2]
        return (np.broadcast_to(center, lead + (3,)).copy(),
                np.broadcast_to(rot, lead + (3, 3)).copy())
    m_s = mvas[..., path.s - 1, :]
    center = mirror_point(center, m_s)
    orient = householder(m_s) @ rot
    if path.s != path.s_prime:
        m_sp = mvas[..., path.s_prime - 1, :]
        center = mirror_point(center, m_sp)
        orient = householder(m_sp) @ orient
    return center, orient


def build_layout(pa_center, pa_rotation, template, path: PathId, mvas) -> AnchorArray:
    """Antenna positions of the anchor seen along ``path`` (global frame)."""
    center, orient = va_pose(pa_center, pa_rotation, path, mvas)
    template = np.asarray(template, dtype=float)
    layout = center[..., :, None] + orient @ template
    return AnchorArray(center=center, orientation=orient, template=template, layout=layout)


def path_lengths(layout, agent) -> np.ndarray:
    """Distances from ``agent`` to every antenna column of ``layout``.

    ``layout`` may be an :class:`AnchorArray` or a ``(..., 3, M)`` array;
    ``agent`` has shape ``(..., 3)``.
    """
    if isinstance(layout, AnchorArray):
        layout = layout.layout
    diff = np.asarray(layout, dtype=float) - np.asarray(agent, dtype=float)[..., :, None]
    return np.sqrt(np.einsum("...im,...im->...m", diff, diff))


def same_side(a, b, mva) -> np.ndarray:
    """True where ``a`` and ``b`` lie strictly on the same side of the surface.

    A specular reflection between two points requires this. ``a``, ``b`` and
    ``mva`` broadcast over leading dimensions.
    """
    mva, norm2 = _check_mva(mva)
    half = 0.5 * norm2
    sa = np.einsum("...i,...i->...", np.asarray(a, dtype=float), mva) - half
    sb = np.einsum("...i,...i->...", np.asarray(b, dtype=float), mva) - half
    return sa * sb > 0


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
