"""Planar geometry for layered synthetic scenes.

Points are (x, y) pairs with x the column and y the row; pixel centers sit
at integer coordinates, origin at the top-left corner.  Shapes expose an
exact inside test plus a signed distance (negative inside) that is exact
near the boundary, which is all the 1-px antialiasing needs.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import SceneSpecError, ShapeError

__all__ = [
    "AffineMotion",
    "Polygon",
    "Ellipse",
    "affine_flow",
    "grid_points",
    "convex_hull",
]


@dataclass(frozen=True)
class AffineMotion:
    """Point transform x -> A x + b, orientation preserving."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64).reshape(2, 2)
        b = np.asarray(self.b, dtype=np.float64).reshape(2)
        if np.linalg.det(A) <= 0:
            raise SceneSpecError(f"affine matrix must have det > 0, got det={np.linalg.det(A)}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @staticmethod
    def identity():
        return AffineMotion(np.eye(2), np.zeros(2))

    @staticmethod
    def from_params(angle_deg=0.0, scale=1.0, translation=(0.0, 0.0), center=(0.0, 0.0)):
        """Rotation by ``angle_deg`` and isotropic ``scale`` about ``center``,
        then translation."""
        t = np.deg2rad(angle_deg)
        R = scale * np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
        c = np.asarray(center, dtype=np.float64)
        b = c - R @ c + np.asarray(translation, dtype=np.float64)
        return AffineMotion(R, b)

    def apply(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.A.T + self.b

    def inverse(self):
        Ainv = np.linalg.inv(self.A)
        return AffineMotion(Ainv, -Ainv @ self.b)

    def flow_at(self, pts):
        """Displacement (A - Id) x + b at the given points."""
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ (self.A - np.eye(2)).T + self.b


@dataclass(frozen=True)
class Polygon:
    """Convex polygon with counter-clockwise vertices (in image coordinates,
    y down, counter-clockwise means positive signed area)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        if len(v) < 3:
            raise SceneSpecError(f"polygon needs >= 3 vertices, got {len(v)}")
        if self._signed_area(v) < 0:
            v = v[::-1].copy()
        if self._signed_area(v) < 1.0:
            raise SceneSpecError(f"degenerate polygon, area {self._signed_area(v):.3g} < 1 px^2")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if (cross < -1e-9).any():
            raise SceneSpecError("polygon is not convex")
        object.__setattr__(self, "vertices", v)

    @staticmethod
    def _signed_area(v):
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def area(self):
        return self._signed_area(self.vertices)

    def _edge_distances(self, pts):
        # signed distance to each edge line, negative on the interior side
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        n = np.stack([e[:, 1], -e[:, 0]], axis=-1)
        n = n / np.linalg.norm(n, axis=-1, keepdims=True)
        pts = np.asarray(pts, dtype=np.float64)
        return np.einsum("...d,kd->...k", pts, n) - np.einsum("kd,kd->k", v, n)

    def sdf(self, pts):
        """Max over edge-line distances: exact sign everywhere, exact value
        inside and near edges, slightly rounded at outside corners."""
        return self._edge_distances(pts).max(-1)

    def inside(self, pts):
        return self._edge_distances(pts).max(-1) < 0


@dataclass(frozen=True)
class Ellipse:
    """Axis-rotated ellipse: center, semi-axes (rx, ry), rotation angle."""

    center: np.ndarray
    rx: float
    ry: float
    angle_deg: float = 0.0
    _R: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(2)
        if self.rx <= 0.5 or self.ry <= 0.5:
            raise SceneSpecError(f"degenerate ellipse, semi-axes ({self.rx}, {self.ry})")
        t = np.deg2rad(self.angle_deg)
        R = np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "_R", R)

    @property
    def area(self):
        return np.pi * self.rx * self.ry

    def _normalized(self, pts):
        local = (np.asarray(pts, dtype=np.float64) - self.center) @ self._R.T
        return np.sqrt((local[..., 0] / self.rx) ** 2 + (local[..., 1] / self.ry) ** 2)

    def sdf(self, pts):
        # first-order distance approximation; sign is exact, magnitude is
        # within the antialiasing band's needs for mild eccentricity
        return (self._normalized(pts) - 1.0) * min(self.rx, self.ry)

    def inside(self, pts):
        return self._normalized(pts) < 1.0


def convex_hull(points):
    """Convex hull by the monotone-chain scan; (K, 2) vertices, CCW by
    positive signed area, collinear points dropped."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise SceneSpecError(f"hull needs >= 3 distinct points, got {len(pts)}")
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise SceneSpecError("hull is degenerate (collinear points)")
    return hull


def grid_points(h, w):
    """(H, W, 2) array of pixel-center coordinates, channel order (x, y)."""
    ys, xs = np.mgrid[0:h, 0:w]
    return np.stack([xs, ys], axis=-1).astype(np.float64)


def affine_flow(motion, h, w):
    """Flow field of a global affine point transform on an h-by-w grid."""
    if h < 1 or w < 1:
        raise ShapeError(f"grid size must be positive, got {h}x{w}")
    return motion.flow_at(grid_points(h, w))
