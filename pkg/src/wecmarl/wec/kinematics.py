"""Tether lengths and their pose Jacobian."""

from __future__ import annotations

import numpy as np

from . import kernels
from .geometry import WecGeometry


class DegenerateGeometryError(ValueError):
    pass


def _pose(pose) -> np.ndarray:
    e = np.asarray(pose, dtype=float).reshape(6)
    if np.any(np.abs(e[3:]) >= kernels.MAX_ROTATION):
        raise ValueError(f"rotations {e[3:]} outside the small-rotation regime (|angle| < {kernels.MAX_ROTATION})")
    return e


def tether_extension(geometry: WecGeometry, pose) -> np.ndarray:
    """Anchor-to-attachment distance for each leg, in metres."""
    g, _, bad = kernels.tether_kinematics(_pose(pose), geometry.anchors, geometry.attachments)
    if bad:
        raise DegenerateGeometryError("attachment coincident with anchor")
    return g


def tether_jacobian(geometry: WecGeometry, pose) -> np.ndarray:
    """``dg/de`` (3 x 6); rows are leg unit vectors followed by their moment arms."""
    _, jac, bad = kernels.tether_kinematics(_pose(pose), geometry.anchors, geometry.attachments)
    if bad:
        raise DegenerateGeometryError("attachment coincident with anchor")
    return jac
