"""Affine and thin-plate-spline transforms on normalized 2D point sets.

Point sets are float64 arrays of shape (n, 2) in normalized coordinates
(keypoints ingested from pixel data are divided per-axis by image width and
height, so they start in [0, 1]; warped points are free to leave that range).

All three transform kinds share one duck-typed surface used by the loss and
optimizer layers:

    warp(pts)            -> (n, 2) warped points
    param_jacobian(pts)  -> (n, 2, k) d(out)/d(params)
    point_jacobian(pts)  -> (n, 2, 2) d(out)/d(input point)
    params_vector        -> (k,) flat parameter copy
    with_params(vec)     -> new transform of the same kind
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import (
    EmptySetError,
    NestingTooDeepError,
    NonInvertibleError,
    SingularSystemError,
)

# 3x3 control lattice spanning the unit square, reading order (x fastest).
TPS_CONTROL_GRID = np.array(
    [[x, y] for y in (0.0, 0.5, 1.0) for x in (0.0, 0.5, 1.0)], dtype=np.float64
)
TPS_N_CONTROL = 9
TPS_N_PARAMS = 18

_INVERTIBILITY_TOL = 1e-12


def as_point_set(pts) -> np.ndarray:
    """Validate and convert to a float64 (n, 2) point array.

    Raises EmptySetError for zero points, ValueError for bad shape or
    non-finite entries.
    """
    arr = np.asarray(pts, dtype=np.float64)
    if arr.ndim == 1 and arr.shape == (2,):
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"point set must have shape (n, 2), got {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptySetError("point set must contain at least one point")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point set contains non-finite coordinates")
    return arr


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """(x, y) -> (a11*x + a12*y + tx, a21*x + a22*y + ty).

    params holds [a11, a12, tx, a21, a22, ty].
    """

    params: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.params, dtype=np.float64).reshape(-1)
        if p.shape != (6,):
            raise ValueError(f"affine transform needs 6 parameters, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("affine parameters must be finite")
        object.__setattr__(self, "params", p)

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "AffineTransform":
        return cls(np.array([1.0, 0.0, dx, 0.0, 1.0, dy]))

    @classmethod
    def rotation(cls, angle_rad: float, center=(0.0, 0.0)) -> "AffineTransform":
        """Rotation by angle_rad (counter-clockwise) about center."""
        c, s = np.cos(angle_rad), np.sin(angle_rad)
        return cls.from_matrix(np.array([[c, -s], [s, c]]), center=center)

    @classmethod
    def scaling(cls, factor: float, center=(0.0, 0.0)) -> "AffineTransform":
        return cls.from_matrix(np.array([[factor, 0.0], [0.0, factor]]), center=center)

    @classmethod
    def from_matrix(cls, matrix, translation=(0.0, 0.0), center=(0.0, 0.0)) -> "AffineTransform":
        """Build from a 2x2 linear part applied about center, then translated."""
        m = np.asarray(matrix, dtype=np.float64)
        cx, cy = center
        t = np.asarray(translation, dtype=np.float64) + np.array([cx, cy]) - m @ np.array([cx, cy])
        return cls(np.array([m[0, 0], m[0, 1], t[0], m[1, 0], m[1, 1], t[1]]))

    @property
    def matrix(self) -> np.ndarray:
        """The 2x2 linear part."""
        p = self.params
        return np.array([[p[0], p[1]], [p[3], p[4]]])

    @property
    def offset(self) -> np.ndarray:
        return np.array([self.params[2], self.params[5]])

    @property
    def n_params(self) -> int:
        return 6

    @property
    def params_vector(self) -> np.ndarray:
        return self.params.copy()

    def with_params(self, vec) -> "AffineTransform":
        return AffineTransform(np.asarray(vec, dtype=np.float64))

    def warp(self, pts) -> np.ndarray:
        pts = as_point_set(pts)
        return pts @ self.matrix.T + self.offset

    def param_jacobian(self, pts) -> np.ndarray:
        """d(out)/d(params), shape (n, 2, 6); linear in the inputs."""
        pts = as_point_set(pts)
        n = pts.shape[0]
        jac = np.zeros((n, 2, 6))
        jac[:, 0, 0] = pts[:, 0]
        jac[:, 0, 1] = pts[:, 1]
        jac[:, 0, 2] = 1.0
        jac[:, 1, 3] = pts[:, 0]
        jac[:, 1, 4] = pts[:, 1]
        jac[:, 1, 5] = 1.0
        return jac

    def point_jacobian(self, pts) -> np.ndarray:
        pts = as_point_set(pts)
        return np.broadcast_to(self.matrix, (pts.shape[0], 2, 2)).copy()


def _tps_kernel(r2: np.ndarray) -> np.ndarray:
    """U(r) = r^2 log r^2 expressed in u = r^2, with U(0) = 0 by continuity."""
    out = np.zeros_like(r2)
    nz = r2 > 0.0
    out[nz] = r2[nz] * np.log(r2[nz])
    return out


_TPS_SYSTEM_CACHE: dict[float, np.ndarray] = {}


def _tps_system_inverse(regularization: float) -> np.ndarray:
    """Inverse of the (9+3)x(9+3) TPS system matrix [[K + lam*I, P], [P^T, 0]]."""
    inv = _TPS_SYSTEM_CACHE.get(regularization)
    if inv is not None:
        return inv
    grid = TPS_CONTROL_GRID
    diff = grid[:, None, :] - grid[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    kernel = _tps_kernel(r2) + regularization * np.eye(TPS_N_CONTROL)
    poly = np.hstack([np.ones((TPS_N_CONTROL, 1)), grid])
    system = np.zeros((12, 12))
    system[:9, :9] = kernel
    system[:9, 9:] = poly
    system[9:, :9] = poly.T
    try:
        inv = np.linalg.inv(system)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"TPS system is singular (lambda={regularization})") from exc
    _TPS_SYSTEM_CACHE[regularization] = inv
    return inv


def _tps_basis(pts: np.ndarray, regularization: float) -> np.ndarray:
    """Per-point weights psi (n, 9) such that displacement = psi @ d_axis.

    Row i collapses the solve of the per-axis interpolation system against
    the kernel/polynomial features of point i, so the warp is linear in the
    18 displacement parameters.
    """
    diff = pts[:, None, :] - TPS_CONTROL_GRID[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    features = np.hstack([_tps_kernel(r2), np.ones((pts.shape[0], 1)), pts])
    return features @ _tps_system_inverse(regularization)[:, :TPS_N_CONTROL]


def _tps_basis_point_grad(pts: np.ndarray, regularization: float):
    """Spatial gradients (d psi / dx, d psi / dy), each (n, 9)."""
    diff = pts[:, None, :] - TPS_CONTROL_GRID[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    # dU/dx = 2*(x - cx)*(log r^2 + 1); the limit at r = 0 is 0.
    factor = np.zeros_like(r2)
    nz = r2 > 0.0
    factor[nz] = np.log(r2[nz]) + 1.0
    du_dx = 2.0 * diff[:, :, 0] * factor
    du_dy = 2.0 * diff[:, :, 1] * factor
    n = pts.shape[0]
    feat_dx = np.hstack([du_dx, np.zeros((n, 1)), np.ones((n, 1)), np.zeros((n, 1))])
    feat_dy = np.hstack([du_dy, np.zeros((n, 1)), np.zeros((n, 1)), np.ones((n, 1))])
    inv = _tps_system_inverse(regularization)[:, :TPS_N_CONTROL]
    return feat_dx @ inv, feat_dy @ inv


@dataclass(frozen=True, eq=False)
class TpsTransform:
    """Thin-plate-spline warp parameterized by control-point displacements.

    The control lattice is the fixed 3x3 grid over the unit square; the 18
    parameters are interleaved (dx, dy) per control point in grid reading
    order. All-zero displacements give the exact identity map. With
    regularization = 0 the interpolant passes exactly through the displaced
    control points.
    """

    displacements: np.ndarray
    regularization: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.displacements, dtype=np.float64).reshape(-1)
        if d.shape != (TPS_N_PARAMS,):
            raise ValueError(f"TPS transform needs exactly {TPS_N_PARAMS} displacement values, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("TPS displacements must be finite")
        if self.regularization < 0.0:
            raise ValueError("TPS regularization must be nonnegative")
        object.__setattr__(self, "displacements", d)
        object.__setattr__(self, "regularization", float(self.regularization))

    @classmethod
    def identity(cls, regularization: float = 0.0) -> "TpsTransform":
        return cls(np.zeros(TPS_N_PARAMS), regularization)

    @property
    def n_params(self) -> int:
        return TPS_N_PARAMS

    @property
    def params_vector(self) -> np.ndarray:
        return self.displacements.copy()

    def with_params(self, vec) -> "TpsTransform":
        return TpsTransform(np.asarray(vec, dtype=np.float64), self.regularization)

    def control_targets(self) -> np.ndarray:
        """Displaced control points, shape (9, 2)."""
        return TPS_CONTROL_GRID + self.displacements.reshape(TPS_N_CONTROL, 2)

    def warp(self, pts) -> np.ndarray:
        pts = as_point_set(pts)
        psi = _tps_basis(pts, self.regularization)
        return pts + psi @ self.displacements.reshape(TPS_N_CONTROL, 2)

    def param_jacobian(self, pts) -> np.ndarray:
        """d(out)/d(displacements), shape (n, 2, 18).

        out_x depends only on the dx entries and out_y only on the dy
        entries (coordinate separability of the displacement form).
        """
        pts = as_point_set(pts)
        psi = _tps_basis(pts, self.regularization)
        n = pts.shape[0]
        jac = np.zeros((n, 2, TPS_N_PARAMS))
        jac[:, 0, 0::2] = psi
        jac[:, 1, 1::2] = psi
        return jac

    def point_jacobian(self, pts) -> np.ndarray:
        pts = as_point_set(pts)
        dpsi_dx, dpsi_dy = _tps_basis_point_grad(pts, self.regularization)
        disp = self.displacements.reshape(TPS_N_CONTROL, 2)
        n = pts.shape[0]
        jac = np.empty((n, 2, 2))
        jac[:, 0, 0] = 1.0 + dpsi_dx @ disp[:, 0]
        jac[:, 0, 1] = dpsi_dy @ disp[:, 0]
        jac[:, 1, 0] = dpsi_dx @ disp[:, 1]
        jac[:, 1, 1] = 1.0 + dpsi_dy @ disp[:, 1]
        return jac


@dataclass(frozen=True, eq=False)
class ComposedTransform:
    """outer applied after inner: warp(p) = outer(inner(p)).

    Nesting depth is capped at 2 (a composed transform of two plain ones).
    The parameter vector is the OUTER transform's: the inner transform is
    frozen, which is exactly the staged-refinement use where a TPS refines
    a fixed affine fit.
    """

    outer: Union[AffineTransform, TpsTransform]
    inner: Union[AffineTransform, TpsTransform]

    def __post_init__(self):
        if isinstance(self.outer, ComposedTransform) or isinstance(self.inner, ComposedTransform):
            raise NestingTooDeepError("composed transforms cannot nest beyond depth 2")

    @property
    def n_params(self) -> int:
        return self.outer.n_params

    @property
    def params_vector(self) -> np.ndarray:
        return self.outer.params_vector

    def with_params(self, vec) -> "ComposedTransform":
        return ComposedTransform(self.outer.with_params(vec), self.inner)

    def warp(self, pts) -> np.ndarray:
        return self.outer.warp(self.inner.warp(pts))

    def param_jacobian(self, pts) -> np.ndarray:
        return self.outer.param_jacobian(self.inner.warp(pts))

    def point_jacobian(self, pts) -> np.ndarray:
        pts = as_point_set(pts)
        inner_jac = self.inner.point_jacobian(pts)
        outer_jac = self.outer.point_jacobian(self.inner.warp(pts))
        return np.einsum("nij,njk->nik", outer_jac, inner_jac)


Transform = Union[AffineTransform, TpsTransform, ComposedTransform]


def compose(outer: Transform, inner: Transform) -> ComposedTransform:
    """Chain two transforms, inner first: warp(compose(f, g), p) == f(g(p))."""
    return ComposedTransform(outer, inner)


def invert_affine(transform: AffineTransform) -> AffineTransform:
    """Exact inverse of an affine transform.

    Raises NonInvertibleError when |a11*a22 - a12*a21| <= 1e-12.
    """
    p = transform.params
    det = p[0] * p[4] - p[1] * p[3]
    if abs(det) <= _INVERTIBILITY_TOL:
        raise NonInvertibleError(f"affine transform is not invertible (det={det:g})")
    inv_m = np.array([[p[4], -p[1]], [-p[3], p[0]]]) / det
    inv_t = -inv_m @ transform.offset
    return AffineTransform(
        np.array([inv_m[0, 0], inv_m[0, 1], inv_t[0], inv_m[1, 0], inv_m[1, 1], inv_t[1]])
    )


def affine_warp(params, pts) -> np.ndarray:
    """Warp pts with 6 affine parameters [a11, a12, tx, a21, a22, ty]."""
    return AffineTransform(params).warp(pts)


def tps_warp(displacements, pts, regularization: float = 0.0) -> np.ndarray:
    """Warp pts with 18 TPS control-point displacements."""
    return TpsTransform(displacements, regularization).warp(pts)


def warp_jacobian(transform: Transform, pts) -> np.ndarray:
    """Matrix of partials of warped coordinates w.r.t. transform parameters."""
    return transform.param_jacobian(pts)


def transform_to_dict(transform: Transform) -> dict:
    """JSON-ready description of a transform."""
    if isinstance(transform, AffineTransform):
        return {"kind": "affine", "params": [float(v) for v in transform.params]}
    if isinstance(transform, TpsTransform):
        return {
            "kind": "tps",
            "displacements": [float(v) for v in transform.displacements],
            "regularization": float(transform.regularization),
        }
    if isinstance(transform, ComposedTransform):
        return {
            "kind": "composed",
            "outer": transform_to_dict(transform.outer),
            "inner": transform_to_dict(transform.inner),
        }
    raise TypeError(f"unknown transform type: {type(transform)!r}")


def transform_from_dict(data: dict) -> Transform:
    kind = data.get("kind")
    if kind == "affine":
        return AffineTransform(np.array(data["params"], dtype=np.float64))
    if kind == "tps":
        return TpsTransform(
            np.array(data["displacements"], dtype=np.float64),
            float(data.get("regularization", 0.0)),
        )
    if kind == "composed":
        return ComposedTransform(
            transform_from_dict(data["outer"]), transform_from_dict(data["inner"])
        )
    raise ValueError(f"unknown transform kind: {kind!r}")
