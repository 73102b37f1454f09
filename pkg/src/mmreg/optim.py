"""Symmetric registration objective, its exact gradient, and the optimiser loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .fields import linear_stencil
from .metrics import DetJStats, detj_stats
from .moving_mesh import DeformationParams, MovingMesh, check_bounds, evaluate

log = logging.getLogger(__name__)

LOSSES = ("mse", "ncc")


class RegistrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RegistrationConfig:
    """Hyperparameters of :func:`register`.

    ``loss=None`` picks MSE for 2D and NCC for 3D images. ``seed`` is kept
    for provenance; the optimisation itself starts from the identity and
    uses no randomness.
    """

    tau_lb: float = 0.2
    tau_ub: float = 8.0
    gamma_scale: float = 10.0
    weight: float = 0.5
    loss: str | None = None
    learning_rate: float = 5e-4
    iterations: int = 300
    euler_steps: int = 20
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        check_bounds(self.tau_lb, self.tau_ub, self.gamma_scale)
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.euler_steps < 1:
            raise ValueError(f"euler_steps must be >= 1, got {self.euler_steps}")
        if self.loss is not None and self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; choose from {LOSSES}")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0 or self.weight <= 0:
            raise ValueError("learning_rate and weight must be positive")

    def loss_for(self, ndim: int) -> str:
        if self.loss is not None:
            return self.loss
        return "mse" if ndim == 2 else "ncc"

    @classmethod
    def defaults(cls) -> dict:
        return {f.name: f.default for f in fields(cls)}


# ---------------------------------------------------------------------------
# Dissimilarities
# ---------------------------------------------------------------------------


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.shape} vs {b.shape}")
    return a, b


def loss_mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def _mse_grad(a, b):
    """Value and gradient with respect to ``b``."""
    diff = b - a
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def loss_ncc(a, b) -> float:
    """``1 - r`` with ``r`` the global zero-mean normalised cross-correlation."""
    a, b = _pair(a, b)
    return _ncc_grad(a, b)[0]


def _ncc_grad(a, b):
    a0 = a - a.mean()
    b0 = b - b.mean()
    saa = float(np.sum(a0 * a0))
    sbb = float(np.sum(b0 * b0))
    if saa <= 0 or sbb <= 0:
        raise ValueError("NCC is undefined for a constant image")
    norm = np.sqrt(saa * sbb)
    r = float(np.sum(a0 * b0)) / norm
    grad = -(a0 / norm - r * b0 / sbb)
    return 1.0 - r, grad


_LOSS_GRADS = {"mse": _mse_grad, "ncc": _ncc_grad}


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def _check_images(fixed, moving):
    fixed = np.asarray(fixed, dtype=float)
    moving = np.asarray(moving, dtype=float)
    if fixed.shape != moving.shape:
        raise ValueError(f"grid mismatch: fixed {fixed.shape}, moving {moving.shape}")
    if not (np.all(np.isfinite(fixed)) and np.all(np.isfinite(moving))):
        raise ValueError("images contain non-finite intensities")
    return fixed, moving


def _with_bounds(params: DeformationParams, cfg: RegistrationConfig) -> DeformationParams:
    return DeformationParams(params.raw_mu, params.raw_gamma, cfg.tau_lb, cfg.tau_ub, cfg.gamma_scale)


def _objective(params, fixed, moving, cfg, need_grad: bool):
    fixed, moving = _check_images(fixed, moving)
    params = _with_bounds(params, cfg)
    lossfn = _LOSS_GRADS[cfg.loss_for(fixed.ndim)]
    mesh = evaluate(params, cfg.euler_steps, record=need_grad)
    shape = fixed.shape

    st_f = linear_stencil(shape, mesh.phi_f)
    st_b = linear_stencil(shape, mesh.phi_b)
    moved = st_f.sample(moving).reshape(shape)
    fixed_back = st_b.sample(fixed).reshape(shape)
    lf, gf = lossfn(fixed, moved)
    lb, gb = lossfn(moving, fixed_back)
    value = cfg.weight * (lf + lb)
    if not need_grad:
        return value, mesh, None
    g_phi_f = (cfg.weight * gf.reshape(-1)) * st_f.sample_grad(moving)
    g_phi_b = (cfg.weight * gb.reshape(-1)) * st_b.sample_grad(fixed)
    grads = mesh.vjp(g_phi_f.reshape(mesh.phi_f.shape), g_phi_b.reshape(mesh.phi_b.shape))
    return value, mesh, grads


def symmetric_objective(params, fixed, moving, cfg: RegistrationConfig | None = None) -> float:
    """``w L(fixed, moving o phi_f) + w L(moving, fixed o phi_b)``."""
    return _objective(params, fixed, moving, cfg or RegistrationConfig(), need_grad=False)[0]


def objective_and_gradient(params, fixed, moving, cfg: RegistrationConfig | None = None):
    """Objective value and its gradients with respect to ``(raw_mu, raw_gamma)``."""
    value, _, grads = _objective(params, fixed, moving, cfg or RegistrationConfig(), need_grad=True)
    return value, grads[0], grads[1]


def objective_gradient(params, fixed, moving, cfg: RegistrationConfig | None = None):
    return objective_and_gradient(params, fixed, moving, cfg)[1:]


# ---------------------------------------------------------------------------
# Optimiser
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: list, grads: list) -> list:
        if self.m is None:
            self.m = [np.zeros_like(g) for g in grads]
            self.v = [np.zeros_like(g) for g in grads]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        out = []
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            out.append(p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps))
        return out


class GradientDescent:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: list, grads: list) -> list:
        return [p - self.lr * g for p, g in zip(params, grads)]


@dataclass
class RegistrationResult:
    phi_f: np.ndarray
    phi_b: np.ndarray
    mu: np.ndarray
    gamma: np.ndarray
    params: DeformationParams
    loss_trace: np.ndarray
    best_iteration: int
    detj: DetJStats
    detj_backward: DetJStats
    seconds: float
    config: RegistrationConfig = field(repr=False, default=None)

    @property
    def best_loss(self) -> float:
        return float(self.loss_trace[self.best_iteration])

    @property
    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.loss_trace)


def register(fixed, moving, cfg: RegistrationConfig | None = None) -> RegistrationResult:
    """Register ``moving`` onto ``fixed`` by optimising the raw monitor and curl fields.

    Starts from the identity (all-zero raw fields) and returns the iterate
    with the lowest objective seen.
    """
    cfg = cfg or RegistrationConfig()
    fixed, moving = _check_images(fixed, moving)
    start = time.perf_counter()
    params = DeformationParams.zeros(fixed.shape, tau_lb=cfg.tau_lb, tau_ub=cfg.tau_ub, gamma_scale=cfg.gamma_scale)
    opt = Adam(cfg.learning_rate) if cfg.optimizer == "adam" else GradientDescent(cfg.learning_rate)

    trace = np.empty(cfg.iterations)
    best_value, best_iter, best_params = np.inf, 0, params
    for it in range(cfg.iterations):
        value, _, (g_mu, g_gamma) = _objective(params, fixed, moving, cfg, need_grad=True)
        if not np.isfinite(value) or not (np.all(np.isfinite(g_mu)) and np.all(np.isfinite(g_gamma))):
            raise RegistrationError(f"non-finite objective or gradient at iteration {it} (loss={value})")
        trace[it] = value
        if value < best_value:
            best_value, best_iter, best_params = value, it, params
        if it % 50 == 0:
            log.debug("iter %d loss %.6g", it, value)
        if it + 1 < cfg.iterations:
            raw_mu, raw_gamma = opt.step([params.raw_mu, params.raw_gamma], [g_mu, g_gamma])
            params = params.with_fields(raw_mu, raw_gamma)

    mesh: MovingMesh = evaluate(best_params, cfg.euler_steps)
    return RegistrationResult(
        phi_f=mesh.phi_f,
        phi_b=mesh.phi_b,
        mu=mesh.mu,
        gamma=mesh.gamma,
        params=best_params,
        loss_trace=trace,
        best_iteration=best_iter,
        detj=detj_stats(mesh.phi_f),
        detj_backward=detj_stats(mesh.phi_b),
        seconds=time.perf_counter() - start,
        config=cfg,
    )
