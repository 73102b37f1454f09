"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import itertools

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mmreg.moving_mesh import evaluate


# --- interpolation / stencils -------------------------------------------------


def interp_loop(field, point):
    """Bi/trilinear interpolation of one point by explicit corner enumeration."""
    field = np.asarray(field, dtype=float)
    x = [min(max(float(c), 0.0), n - 1.0) for c, n in zip(point, field.shape)]
    base = [min(int(np.floor(c)), n - 2) for c, n in zip(x, field.shape)]
    total = 0.0
    for corner in itertools.product((0, 1), repeat=field.ndim):
        w = 1.0
        for a, bit in enumerate(corner):
            f = x[a] - base[a]
            w *= f if bit else 1.0 - f
        total += w * field[tuple(b + c for b, c in zip(base, corner))]
    return total


def derivative_loop(field, axis):
    """Central differences inside, first-order one-sided at both ends, one sample at a time."""
    field = np.asarray(field, dtype=float)
    out = np.empty_like(field)
    n = field.shape[axis]
    for idx in np.ndindex(field.shape):
        i = idx[axis]

        def at(j):
            k = list(idx)
            k[axis] = j
            return field[tuple(k)]

        if i == 0:
            out[idx] = at(1) - at(0)
        elif i == n - 1:
            out[idx] = at(n - 1) - at(n - 2)
        else:
            out[idx] = 0.5 * (at(i + 1) - at(i - 1))
    return out


def detj_loop(phi):
    """Per-point determinant of the explicitly assembled stencil matrix."""
    phi = np.asarray(phi, dtype=float)
    ndim = phi.shape[0]
    partials = [[derivative_loop(phi[a], b) for b in range(ndim)] for a in range(ndim)]
    out = np.empty(phi.shape[1:])
    for idx in np.ndindex(out.shape):
        m = np.array([[partials[a][b][idx] for b in range(ndim)] for a in range(ndim)])
        out[idx] = np.linalg.det(m)
    return out


# --- Poisson ------------------------------------------------------------------


def dense_laplacian(interior):
    """Dirichlet Laplacian on ``interior`` assembled row by row (5/7-point, unit spacing)."""
    interior = tuple(interior)
    size = int(np.prod(interior))
    rows, cols, vals = [], [], []
    for flat, idx in enumerate(np.ndindex(interior)):
        rows.append(flat)
        cols.append(flat)
        vals.append(-2.0 * len(interior))
        for a in range(len(interior)):
            for step in (-1, 1):
                nb = list(idx)
                nb[a] += step
                if 0 <= nb[a] < interior[a]:
                    rows.append(flat)
                    cols.append(int(np.ravel_multi_index(nb, interior)))
                    vals.append(1.0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))


def dense_poisson_solve(rhs):
    rhs = np.asarray(rhs, dtype=float)
    inner = (slice(1, -1),) * rhs.ndim
    interior = rhs[inner].shape
    A = dense_laplacian(interior).toarray()
    u = np.zeros_like(rhs)
    u[inner] = np.linalg.solve(A, rhs[inner].ravel()).reshape(interior)
    return u


def sparse_poisson_solve(rhs):
    rhs = np.asarray(rhs, dtype=float)
    inner = (slice(1, -1),) * rhs.ndim
    interior = rhs[inner].shape
    u = np.zeros_like(rhs)
    u[inner] = spla.spsolve(dense_laplacian(interior).tocsc(), rhs[inner].ravel()).reshape(interior)
    return u


# --- metrics ------------------------------------------------------------------


def contour_loop(region):
    """Foreground pixels with a face neighbour that is background or outside the grid."""
    region = np.asarray(region, dtype=bool)
    pts = []
    for idx in zip(*np.nonzero(region)):
        for a in range(region.ndim):
            for step in (-1, 1):
                nb = list(idx)
                nb[a] += step
                if not 0 <= nb[a] < region.shape[a] or not region[tuple(nb)]:
                    pts.append(idx)
                    break
            else:
                continue
            break
    return np.array(pts, dtype=float).reshape(-1, region.ndim)


def hausdorff_brute(a, b, spacing):
    pa = contour_loop(a) * np.asarray(spacing)
    pb = contour_loop(b) * np.asarray(spacing)
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1))
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def dice_loop(a, b):
    inter = sum(1 for x, y in zip(np.ravel(a), np.ravel(b)) if x and y)
    total = int(np.count_nonzero(a)) + int(np.count_nonzero(b))
    return 1.0 if total == 0 else 2.0 * inter / total


def reliability_loop(values, d):
    return sum(1 for v in values if v > d) / len(values)


# --- finite differences --------------------------------------------------------


def _cells(params, steps):
    """Interpolation cell (and clamp state) of every point the pipeline samples at."""
    mesh = evaluate(params, steps, record=True)
    shape = np.array(params.shape, dtype=float)[None, :, None]
    out = []
    for traj in (mesh.forward, mesh.backward):
        pts = traj.points()
        xc = np.clip(pts, 0.0, shape - 1.0)
        cell = np.minimum(np.floor(xc), shape - 2.0)
        inside = (pts >= 0.0) & (pts <= shape - 1.0)
        out.append(cell + 0.5 * inside)
    return np.concatenate(out, axis=0)


def _shifted(params, direction, h):
    d_mu, d_gamma = direction
    return params.with_fields(params.raw_mu + h * d_mu, params.raw_gamma + h * d_gamma)


def fd_direction(fun, params, direction, steps, h=1e-4, h_min=1e-9):
    """Central difference of ``fun`` along ``direction = (d_mu, d_gamma)``.

    The discrete objective is only piecewise smooth: linear interpolation
    has kinks wherever a sampled point crosses a cell face. ``h`` is shrunk
    tenfold until no sample point changes cell across ``p - h, p, p + h``,
    so the difference quotient sees a single smooth piece. Returns the
    quotient and the ``h`` used.
    """
    ref = _cells(params, steps)
    while True:
        lo = _shifted(params, direction, -h)
        hi = _shifted(params, direction, h)
        if h <= h_min or (np.array_equal(_cells(lo, steps), ref) and np.array_equal(_cells(hi, steps), ref)):
            return (fun(hi) - fun(lo)) / (2.0 * h), h
        h /= 10.0


def fd_entry(fun, params, which, idx, steps, **kw):
    """:func:`fd_direction` along one entry of ``raw_mu`` (``which=0``) or ``raw_gamma`` (1)."""
    direction = [np.zeros_like(params.raw_mu), np.zeros_like(params.raw_gamma)]
    direction[which][idx] = 1.0
    return fd_direction(fun, params, direction, steps, **kw)


def relative_error(fd, an, scale):
    """``|fd - an|`` relative to the larger magnitude, floored at ``scale``."""
    return abs(fd - an) / max(abs(fd), abs(an), scale)


# --- random instances ------------------------------------------------------------


def random_params(rng, shape, mu_scale=1.0, gamma_scale=0.05, **bounds):
    """Raw parameters for sweeps: white noise or low-passed noise with random
    smoothness and amplitude, chosen with equal probability."""
    from mmreg.moving_mesh import DeformationParams, gamma_shape
    from mmreg.synth import smooth_noise

    gshape = gamma_shape(shape)
    if rng.random() < 0.5:
        raw_mu = rng.normal(0.0, mu_scale, shape)
        raw_gamma = rng.normal(0.0, gamma_scale, gshape)
    else:
        cutoff = rng.uniform(0.05, 0.5)
        raw_mu = rng.uniform(0.0, mu_scale) * 2.0 * smooth_noise(rng, shape, cutoff)
        ncomp = 1 if len(shape) == 2 else 3
        raw_gamma = rng.uniform(0.0, gamma_scale) * 2.0 * np.stack(
            [smooth_noise(rng, shape, cutoff) for _ in range(ncomp)]
        ).reshape(gshape)
    return DeformationParams(raw_mu, raw_gamma, **bounds)
