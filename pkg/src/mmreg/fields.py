"""Grids, interpolation and finite-difference operators.

Fields are plain numpy arrays indexed ``[i0, i1(, i2)]``. Vector fields and
deformations carry the component axis first, shape ``(ndim, *dims)``, with
component ``a`` pointing along array axis ``a``. All coordinates are in pixel
units; physical spacing only matters for reporting (see :mod:`mmreg.metrics`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

MIN_AXIS = 4


@dataclass(frozen=True)
class Grid:
    """Rectangular 2D/3D sampling grid."""

    dims: tuple[int, ...]
    spacing: tuple[float, ...] | None = None

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) not in (2, 3):
            raise ValueError(f"grid must be 2D or 3D, got {len(dims)} axes")
        if min(dims) < MIN_AXIS:
            raise ValueError(f"every axis needs at least {MIN_AXIS} samples, got {dims}")
        spacing = (1.0,) * len(dims) if self.spacing is None else tuple(float(s) for s in self.spacing)
        if len(spacing) != len(dims) or min(spacing) <= 0:
            raise ValueError(f"invalid spacing {spacing} for dims {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def volume(self) -> int:
        """|Omega| in pixel units."""
        return int(np.prod(self.dims))

    def identity(self) -> np.ndarray:
        return identity_map(self.dims)


def identity_map(shape) -> np.ndarray:
    """Deformation mapping every grid point to itself, shape ``(ndim, *shape)``."""
    return np.stack(np.meshgrid(*[np.arange(n, dtype=float) for n in shape], indexing="ij"))


def _check_field(values: np.ndarray, min_size: int = 3) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim not in (2, 3):
        raise ValueError(f"expected a 2D or 3D field, got shape {values.shape}")
    if min(values.shape) < min_size:
        raise ValueError(f"every axis needs at least {min_size} samples, got {values.shape}")
    return values


# ---------------------------------------------------------------------------
# Linear interpolation
# ---------------------------------------------------------------------------


@dataclass
class Stencil:
    """Linear interpolation stencil for a batch of points.

    ``index`` and ``weight`` have shape ``(2**ndim, npoints)``; ``dweight``
    has shape ``(ndim, 2**ndim, npoints)`` and holds the derivative of each
    weight with respect to each coordinate (zero where the coordinate was
    clamped).
    """

    shape: tuple[int, ...]
    index: np.ndarray
    weight: np.ndarray
    dweight: np.ndarray

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def sample(self, values: np.ndarray) -> np.ndarray:
        return np.einsum("cm,cm->m", self.weight, values.reshape(-1)[self.index])

    def sample_grad(self, values: np.ndarray) -> np.ndarray:
        """Spatial gradient of the interpolant at the stencil points, shape ``(ndim, npoints)``."""
        return np.einsum("acm,cm->am", self.dweight, values.reshape(-1)[self.index])

    def scatter(self, cotangent: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`sample`: spread per-point cotangents onto the grid."""
        flat = np.bincount(
            self.index.ravel(),
            weights=(self.weight * cotangent[None, :]).ravel(),
            minlength=self.size,
        )
        return flat.reshape(self.shape)


def linear_stencil(shape, points) -> Stencil:
    """Build the bi/trilinear stencil for ``points`` of shape ``(ndim, npoints)``.

    Coordinates outside ``[0, n - 1]`` are clamped to the boundary.
    """
    shape = tuple(shape)
    ndim = len(shape)
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] != ndim:
        raise ValueError(f"points have {pts.shape[0]} coordinates, field has {ndim} axes")
    pts = pts.reshape(ndim, -1)

    strides = np.cumprod((1,) + shape[:0:-1])[::-1]
    npts = pts.shape[1]
    corners = np.array(list(itertools.product((0, 1), repeat=ndim)))  # (2**ndim, ndim)
    flat = np.zeros(npts, dtype=np.intp)
    factors = np.empty((ndim, 2, npts))  # weights of the lower/upper neighbour per axis
    slopes = np.empty((ndim, 2, npts))
    for a, n in enumerate(shape):
        x = pts[a]
        xc = np.clip(x, 0.0, n - 1.0)
        i0 = np.minimum(np.floor(xc).astype(np.intp), n - 2)
        flat += i0 * strides[a]
        frac = xc - i0
        factors[a, 0] = 1.0 - frac
        factors[a, 1] = frac
        inside = ((x >= 0.0) & (x <= n - 1.0)).astype(float)
        slopes[a, 0] = -inside
        slopes[a, 1] = inside

    axes = np.arange(ndim)
    index = flat[None, :] + (corners @ strides)[:, None]
    per_axis = factors[axes[None, :], corners]  # (2**ndim, ndim, npts)
    weight = per_axis.prod(axis=1)
    dweight = np.empty((ndim, len(corners), npts))
    for a in range(ndim):
        dweight[a] = slopes[a, corners[:, a]] * np.delete(per_axis, a, axis=1).prod(axis=1)
    return Stencil(shape, index, weight, dweight)


def interp_linear(field, point):
    """Bi/trilinear interpolation of ``field`` at continuous pixel coordinates.

    ``point`` is either a single coordinate (length ``ndim``) or an array of
    shape ``(ndim, ...)``; the result has the trailing shape of ``point``.
    """
    field = np.asarray(field, dtype=float)
    pts = np.asarray(point, dtype=float)
    if pts.shape[:1] != (field.ndim,):
        raise ValueError(f"point of shape {pts.shape} does not match a {field.ndim}D field")
    out = linear_stencil(field.shape, pts).sample(field)
    if pts.ndim == 1:
        return float(out[0])
    return out.reshape(pts.shape[1:])


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def gradient_central(field) -> np.ndarray:
    """Central differences inside, first-order one-sided differences on the boundary."""
    field = _check_field(field)
    return np.stack([np.gradient(field, axis=a, edge_order=1) for a in range(field.ndim)])


def diff_axis(field: np.ndarray, axis: int) -> np.ndarray:
    return np.gradient(field, axis=axis, edge_order=1)


def diff_axis_adjoint(cotangent: np.ndarray, axis: int) -> np.ndarray:
    """Transpose of :func:`diff_axis` applied to ``cotangent``."""
    g = np.moveaxis(np.asarray(cotangent, dtype=float), axis, 0)
    out = np.zeros_like(g)
    half = 0.5 * g[1:-1]
    out[2:] += half
    out[:-2] -= half
    out[1] += g[0]
    out[0] -= g[0]
    out[-1] += g[-1]
    out[-2] -= g[-1]
    return np.moveaxis(out, 0, axis)


def divergence(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    _check_field(v[0])
    return sum(diff_axis(v[a], a) for a in range(v.shape[0]))


def curl2d(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    _check_field(v[0])
    if v.shape[0] != 2:
        raise ValueError("curl2d needs a 2-component field")
    return diff_axis(v[1], 0) - diff_axis(v[0], 1)


def curl3d(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    _check_field(v[0])
    if v.shape[0] != 3:
        raise ValueError("curl3d needs a 3-component field")
    return np.stack(
        [
            diff_axis(v[2], 1) - diff_axis(v[1], 2),
            diff_axis(v[0], 2) - diff_axis(v[2], 0),
            diff_axis(v[1], 0) - diff_axis(v[0], 1),
        ]
    )


def jacobian_matrix(phi) -> np.ndarray:
    """Partials ``J[a, b] = d phi_a / d xi_b``, shape ``(ndim, ndim, *dims)``."""
    phi = np.asarray(phi, dtype=float)
    return np.stack([gradient_central(phi[a]) for a in range(phi.shape[0])])


def jacobian_determinant(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    ndim = phi.shape[0]
    if ndim != phi.ndim - 1:
        raise ValueError(f"deformation must have shape (ndim, *dims), got {phi.shape}")
    jac = jacobian_matrix(phi)
    if ndim == 2:
        return jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    return (
        jac[0, 0] * (jac[1, 1] * jac[2, 2] - jac[1, 2] * jac[2, 1])
        - jac[0, 1] * (jac[1, 0] * jac[2, 2] - jac[1, 2] * jac[2, 0])
        + jac[0, 2] * (jac[1, 0] * jac[2, 1] - jac[1, 1] * jac[2, 0])
    )


# ---------------------------------------------------------------------------
# Warping
# ---------------------------------------------------------------------------


def _check_warp(img, phi):
    img = np.asarray(img)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (img.ndim,) + img.shape:
        raise ValueError(f"grid mismatch: image {img.shape}, deformation {phi.shape}")
    return img, phi


def warp_image(img, phi) -> np.ndarray:
    """Resample ``img`` at ``phi(xi)`` with linear interpolation (``img o phi``)."""
    img, phi = _check_warp(img, phi)
    img = img.astype(float)
    return linear_stencil(img.shape, phi).sample(img).reshape(img.shape)


def warp_mask(mask, phi) -> np.ndarray:
    """Nearest-neighbour resampling so that label values are preserved."""
    mask, phi = _check_warp(mask, phi)
    idx = tuple(
        np.clip(np.floor(phi[a] + 0.5), 0, n - 1).astype(np.intp) for a, n in enumerate(mask.shape)
    )
    return mask[idx]
