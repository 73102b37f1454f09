"""Synthetic registration pairs with known ground-truth transforms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Grid, warp_image, warp_mask
from .moving_mesh import DeformationParams, evaluate, gamma_shape

TEMPLATES = ("annulus", "disc", "phantom")
GROUND_TRUTH_STEPS = 200


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of a synthetic pair.

    ``cutoff`` is the Gaussian low-pass scale in cycles per pixel (Nyquist is
    0.5). ``amplitude`` is the peak magnitude of the raw monitor field and
    ``curl_amplitude`` that of the raw curl field (defaults to
    ``amplitude / 10``, since the curl projection is ten times steeper).
    """

    dims: tuple[int, ...] = (64, 64)
    cutoff: float = 0.05
    amplitude: float = 1.0
    curl_amplitude: float | None = None
    template: str = "annulus"
    seed: int = 0
    tau_lb: float = 0.2
    tau_ub: float = 8.0
    gamma_scale: float = 10.0
    spacing: tuple[float, ...] | None = None

    def __post_init__(self):
        Grid(self.dims, self.spacing)
        if not 0.0 < self.cutoff <= 0.5:
            raise ValueError(f"cutoff must lie in (0, 0.5], got {self.cutoff}")
        if self.amplitude < 0 or (self.curl_amplitude is not None and self.curl_amplitude < 0):
            raise ValueError("amplitudes must be non-negative")
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}; choose from {TEMPLATES}")

    @property
    def grid(self) -> Grid:
        return Grid(self.dims, self.spacing)

    @property
    def gamma_amplitude(self) -> float:
        return self.amplitude / 10.0 if self.curl_amplitude is None else self.curl_amplitude


def smooth_noise(rng: np.random.Generator, shape, cutoff: float) -> np.ndarray:
    """Gaussian low-passed white noise scaled to unit peak magnitude."""
    noise = rng.standard_normal(shape)
    freqs = np.meshgrid(*[np.fft.fftfreq(n) for n in shape], indexing="ij")
    radius2 = sum(f * f for f in freqs)
    out = np.fft.ifftn(np.fft.fftn(noise) * np.exp(-0.5 * radius2 / cutoff**2)).real
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def sample_params(cfg: SynthConfig) -> DeformationParams:
    rng = np.random.default_rng(cfg.seed)
    shape = tuple(cfg.dims)
    raw_mu = cfg.amplitude * smooth_noise(rng, shape, cfg.cutoff)
    gshape = gamma_shape(shape)
    ncomp = 1 if len(shape) == 2 else 3
    raw_gamma = cfg.gamma_amplitude * np.stack(
        [smooth_noise(rng, shape, cfg.cutoff) for _ in range(ncomp)]
    ).reshape(gshape)
    if cfg.amplitude == 0:
        raw_mu = np.zeros(shape)
    if cfg.gamma_amplitude == 0:
        raw_gamma = np.zeros(gshape)
    return DeformationParams(raw_mu, raw_gamma, cfg.tau_lb, cfg.tau_ub, cfg.gamma_scale)


def _smooth_step(signed_distance, width: float = 1.0):
    """Anti-aliased indicator of ``signed_distance < 0``."""
    return 0.5 * (1.0 - np.tanh(signed_distance / width))


def render_template(template: str, shape) -> tuple[np.ndarray, np.ndarray]:
    """Soft-edged intensity image and hard label mask of an analytic shape.

    In 3D the annulus becomes a spherical shell and the disc a ball.
    """
    shape = tuple(shape)
    centre = [(n - 1) / 2.0 for n in shape]
    coords = np.meshgrid(*[np.arange(n, dtype=float) for n in shape], indexing="ij")
    r = np.sqrt(sum((c - m) ** 2 for c, m in zip(coords, centre)))
    half = min(shape) / 2.0
    outer = 0.55 * half
    inner = 0.32 * half
    if template == "disc":
        image = _smooth_step(r - outer)
        mask = (r < outer).astype(np.uint8)
    elif template == "annulus":
        image = _smooth_step(r - outer) * (1.0 - _smooth_step(r - inner))
        mask = ((r < outer) & (r >= inner)).astype(np.uint8)
    elif template == "phantom":
        # bright pool (label 1) inside a darker wall (label 2)
        pool = _smooth_step(r - inner)
        wall = _smooth_step(r - outer) - pool
        image = 1.0 * pool + 0.5 * wall
        mask = np.where(r < inner, 1, np.where(r < outer, 2, 0)).astype(np.uint8)
    else:
        raise ValueError(f"unknown template {template!r}; choose from {TEMPLATES}")
    return image, mask


@dataclass
class SynthPair:
    fixed: np.ndarray
    moving: np.ndarray
    fixed_mask: np.ndarray
    moving_mask: np.ndarray
    phi_f: np.ndarray
    phi_b: np.ndarray
    params: DeformationParams

    def __iter__(self):
        return iter((self.fixed, self.moving, self.fixed_mask, self.moving_mask, self.phi_f, self.phi_b))


def make_pair(cfg: SynthConfig) -> SynthPair:
    """Render the template as the fixed image and pull it back through the inverse map.

    ``moving = fixed o phi_b``, so warping ``moving`` by ``phi_f`` recovers
    ``fixed`` up to interpolation error.
    """
    params = sample_params(cfg)
    mesh = evaluate(params, GROUND_TRUTH_STEPS)
    fixed, fixed_mask = render_template(cfg.template, cfg.dims)
    moving = warp_image(fixed, mesh.phi_b)
    moving_mask = warp_mask(fixed_mask, mesh.phi_b)
    return SynthPair(fixed, moving, fixed_mask, moving_mask, mesh.phi_f, mesh.phi_b, params)


# ---------------------------------------------------------------------------
# Manufactured fields
# ---------------------------------------------------------------------------


def _bump(x, k, order):
    """``sin(k pi x)**2`` and its first two derivatives; all vanish to first order at 0 and 1."""
    w = k * np.pi
    if order == 0:
        return np.sin(w * x) ** 2
    if order == 1:
        return w * np.sin(2 * w * x)
    return 2 * w * w * np.cos(2 * w * x)


def _product(coords, freqs, orders, scales):
    out = 1.0
    for x, k, o, s in zip(coords, freqs, orders, scales):
        out = out * _bump(x, k, o) * s**o
    return out


@dataclass
class Manufactured:
    """Exact ``(mu, gamma, V)`` with ``V = 0`` on the boundary, ``div V = mu - 1`` and ``curl V = gamma``."""

    mu: np.ndarray
    gamma: np.ndarray
    velocity: np.ndarray


def manufactured_fields(shape, div_amplitude: float = 0.006, curl_amplitude: float = 0.0) -> Manufactured:
    """Analytic div-curl data compatible with homogeneous Dirichlet boundaries.

    ``V = grad(p) + rot(s)`` where ``p`` and ``s`` are products of
    ``sin(k pi x)**2`` bumps in normalised coordinates ``x = xi / (n - 1)``.
    Amplitudes are resolution independent: ``mu - 1`` and ``gamma`` sample
    the same continuous functions on every grid.
    """
    shape = tuple(shape)
    ndim = len(shape)
    coords = np.meshgrid(*[np.linspace(0.0, 1.0, n) for n in shape], indexing="ij")
    scales = [1.0 / (n - 1) for n in shape]
    # physical -> pixel derivative factor; potentials carry (n0 - 1)**2
    amp = (shape[0] - 1) ** 2
    pk = (1, 2, 1)[:ndim]
    sk = (2, 1, 1)[:ndim]
    a = div_amplitude * amp
    b = curl_amplitude * amp

    def d(freqs, *axes):
        orders = [0] * ndim
        for ax in axes:
            orders[ax] += 1
        return _product(coords, freqs, orders, scales)

    V = np.stack([a * d(pk, i) for i in range(ndim)])
    lap_p = sum(d(pk, i, i) for i in range(ndim))
    mu = 1.0 + a * lap_p
    if ndim == 2:
        # rot(s) = (s_y, -s_x); curl = -laplacian(s)
        V[0] += b * d(sk, 1)
        V[1] -= b * d(sk, 0)
        gamma = -b * sum(d(sk, i, i) for i in range(ndim))
    else:
        # vector potential (s, 0, 0): curl = (0, s_z, -s_y), curl curl = (-s_yy - s_zz, s_xy, s_xz)
        V[1] += b * d(sk, 2)
        V[2] -= b * d(sk, 1)
        gamma = b * np.stack([-(d(sk, 1, 1) + d(sk, 2, 2)), d(sk, 0, 1), d(sk, 0, 2)])
    return Manufactured(mu, gamma, V)
