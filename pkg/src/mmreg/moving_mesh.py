"""Moving-mesh parameterisation of diffeomorphic transforms.

A transform is described by a positive monitor function ``mu`` (its target
Jacobian determinant) and the curl ``gamma`` of the end velocity field.
``V`` is recovered from ``div V = mu - 1`` and ``curl V = gamma`` by one
Dirichlet Poisson solve per component, and the transform is the time-1 flow
of ``V / (t + (1 - t) mu)`` started from the identity.

Every forward stage here has a hand-written vector-Jacobian product so that
:mod:`mmreg.optim` can differentiate the whole pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import diff_axis, diff_axis_adjoint, identity_map, linear_stencil
from .poisson import PoissonSolver

# (rhs component, source, derivative axis, sign); source 0 is mu, source
# s >= 1 is gamma component s - 1.
_RHS_TERMS = {
    2: [
        (0, 0, 0, 1.0), (0, 1, 1, -1.0),
        (1, 0, 1, 1.0), (1, 1, 0, 1.0),
    ],
    3: [
        (0, 0, 0, 1.0), (0, 2, 2, 1.0), (0, 3, 1, -1.0),
        (1, 0, 1, 1.0), (1, 3, 0, 1.0), (1, 1, 2, -1.0),
        (2, 0, 2, 1.0), (2, 1, 1, 1.0), (2, 2, 0, -1.0),
    ],
}


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def check_bounds(tau_lb: float, tau_ub: float, gamma_scale: float | None = None):
    if not 0.0 < tau_lb < 1.0 < tau_ub:
        raise ValueError(f"bounds must satisfy 0 < tau_lb < 1 < tau_ub, got {tau_lb}, {tau_ub}")
    if gamma_scale is not None:
        if not np.isfinite(gamma_scale) or gamma_scale <= 0:
            raise ValueError(f"gamma scale must be positive and finite, got {gamma_scale}")
        if tau_ub > gamma_scale:
            raise ValueError(f"tau_ub={tau_ub} exceeds gamma scale {gamma_scale}")


def gamma_shape(shape) -> tuple[int, ...]:
    """Shape of the curl field: scalar in 2D, three components in 3D."""
    shape = tuple(shape)
    return shape if len(shape) == 2 else (3,) + shape


@dataclass
class DeformationParams:
    """Unconstrained optimisation variables and their constraint constants."""

    raw_mu: np.ndarray
    raw_gamma: np.ndarray
    tau_lb: float = 0.2
    tau_ub: float = 8.0
    gamma_scale: float = 10.0

    def __post_init__(self):
        self.raw_mu = np.asarray(self.raw_mu, dtype=float)
        self.raw_gamma = np.asarray(self.raw_gamma, dtype=float)
        if self.raw_mu.ndim not in (2, 3):
            raise ValueError(f"raw_mu must be 2D or 3D, got shape {self.raw_mu.shape}")
        if self.raw_gamma.shape != gamma_shape(self.raw_mu.shape):
            raise ValueError(
                f"raw_gamma shape {self.raw_gamma.shape} does not fit grid {self.raw_mu.shape}"
            )
        check_bounds(self.tau_lb, self.tau_ub, self.gamma_scale)

    @classmethod
    def zeros(cls, shape, **bounds) -> DeformationParams:
        shape = tuple(shape)
        return cls(np.zeros(shape), np.zeros(gamma_shape(shape)), **bounds)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.raw_mu.shape

    def with_fields(self, raw_mu, raw_gamma) -> DeformationParams:
        return DeformationParams(raw_mu, raw_gamma, self.tau_lb, self.tau_ub, self.gamma_scale)


@dataclass(frozen=True)
class IntegrationConfig:
    steps: int = 20
    direction: str = "forward"

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ValueError(f"need at least one Euler step, got {self.steps}")
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"direction must be 'forward' or 'backward', got {self.direction!r}")


# ---------------------------------------------------------------------------
# Constraint projections
# ---------------------------------------------------------------------------


def project_monitor(raw_mu, tau_lb: float = 0.2, tau_ub: float = 8.0) -> np.ndarray:
    """Squash into ``(tau_lb, tau_ub)`` with a sigmoid, then rescale to mean 1."""
    check_bounds(tau_lb, tau_ub)
    raw_mu = np.asarray(raw_mu, dtype=float)
    mu_pre = tau_lb + (tau_ub - tau_lb) * _sigmoid(raw_mu)
    return mu_pre * (raw_mu.size / mu_pre.sum())


def project_monitor_vjp(raw_mu, tau_lb, tau_ub, cotangent) -> np.ndarray:
    raw_mu = np.asarray(raw_mu, dtype=float)
    s = _sigmoid(raw_mu)
    mu_pre = tau_lb + (tau_ub - tau_lb) * s
    total = mu_pre.sum()
    g_pre = (raw_mu.size / total) * (cotangent - np.sum(cotangent * mu_pre) / total)
    return g_pre * (tau_ub - tau_lb) * s * (1.0 - s)


def project_curl(raw_gamma, gamma_scale: float = 10.0) -> np.ndarray:
    if gamma_scale <= 0:
        raise ValueError(f"gamma scale must be positive, got {gamma_scale}")
    return gamma_scale * np.tanh(np.asarray(raw_gamma, dtype=float))


def project_curl_vjp(raw_gamma, gamma_scale, cotangent) -> np.ndarray:
    th = np.tanh(np.asarray(raw_gamma, dtype=float))
    return cotangent * gamma_scale * (1.0 - th * th)


# ---------------------------------------------------------------------------
# Div-curl right-hand sides and velocity reconstruction
# ---------------------------------------------------------------------------


def _sources(mu, gamma):
    mu = np.asarray(mu, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != gamma_shape(mu.shape):
        raise ValueError(f"grid mismatch: mu {mu.shape}, gamma {gamma.shape}")
    return [mu] + list(gamma.reshape((-1,) + mu.shape))


def assemble_rhs(mu, gamma) -> np.ndarray:
    """Poisson right-hand sides ``F`` with ``laplacian(V_a) = F_a``.

    In 2D: ``F = (mu_x - gamma_y, mu_y + gamma_x)``. In 3D the curl
    components enter as ``F = grad(mu) - curl(gamma)``. The constant offset
    of ``mu - 1`` vanishes under differentiation.
    """
    src = _sources(mu, gamma)
    ndim = src[0].ndim
    rhs = np.zeros((ndim,) + src[0].shape)
    for comp, s, axis, sign in _RHS_TERMS[ndim]:
        rhs[comp] += sign * diff_axis(src[s], axis)
    return rhs


def assemble_rhs_2d(mu, gamma):
    if np.ndim(mu) != 2:
        raise ValueError("assemble_rhs_2d needs 2D fields")
    f1, f2 = assemble_rhs(mu, gamma)
    return f1, f2


def assemble_rhs_3d(mu, gamma):
    if np.ndim(mu) != 3:
        raise ValueError("assemble_rhs_3d needs 3D fields")
    f1, f2, f3 = assemble_rhs(mu, gamma)
    return f1, f2, f3


def assemble_rhs_vjp(cotangent) -> tuple[np.ndarray, np.ndarray]:
    """Cotangents of ``(mu, gamma)`` given the cotangent of :func:`assemble_rhs`."""
    cotangent = np.asarray(cotangent, dtype=float)
    ndim = cotangent.shape[0]
    shape = cotangent.shape[1:]
    grads = np.zeros((1 + (1 if ndim == 2 else 3),) + shape)
    for comp, s, axis, sign in _RHS_TERMS[ndim]:
        grads[s] += sign * diff_axis_adjoint(cotangent[comp], axis)
    return grads[0], grads[1:].reshape(gamma_shape(shape))


def reconstruct_velocity(rhs) -> np.ndarray:
    """One Dirichlet Poisson solve per component."""
    rhs = np.asarray(rhs, dtype=float)
    solver = PoissonSolver(rhs.shape[1:])
    return np.stack([solver.solve(r) for r in rhs])


# ---------------------------------------------------------------------------
# Artificial-time integration
# ---------------------------------------------------------------------------


@dataclass
class _Step:
    points: np.ndarray
    stencil: object
    denom: np.ndarray
    velocity: np.ndarray
    t: float


@dataclass
class Trajectory:
    """Euler trajectory with the per-step state needed for the reverse pass."""

    velocity: np.ndarray
    mu: np.ndarray
    dt: float
    sign: float
    phi: np.ndarray
    steps: list = field(default_factory=list)

    def points(self) -> np.ndarray:
        """Positions visited by the recorded steps plus the end points, ``(steps + 1, ndim, npoints)``."""
        ndim = self.phi.shape[0]
        return np.stack([s.points for s in self.steps] + [self.phi.reshape(ndim, -1)])

    def vjp(self, cotangent) -> tuple[np.ndarray, np.ndarray]:
        """Cotangents of ``(V, mu)`` given the cotangent of the end map."""
        V, mu = self.velocity, self.mu
        ndim = V.shape[0]
        coef = self.sign * self.dt
        c = np.asarray(cotangent, dtype=float).reshape(ndim, -1).copy()
        g_v = np.zeros_like(V)
        g_mu = np.zeros_like(mu)
        for k in range(len(self.steps) - 1, -1, -1):
            st = self.steps[k]
            inv = 1.0 / st.denom
            for a in range(ndim):
                g_v[a] += st.stencil.scatter(coef * c[a] * inv)
            g_den = -coef * np.einsum("am,am->m", c, st.velocity) * inv * inv
            g_mu += st.stencil.scatter(g_den * (1.0 - st.t))
            if k == 0:
                break  # the start points are fixed grid nodes
            grad_v = np.stack([st.stencil.sample_grad(V[a]) for a in range(ndim)])
            grad_mu = st.stencil.sample_grad(mu)
            c = c + coef * np.einsum("am,abm->bm", c, grad_v) * inv + g_den * (1.0 - st.t) * grad_mu
        return g_v, g_mu


def _integrate(V, mu, steps: int, backward: bool, record: bool) -> Trajectory:
    V = np.asarray(V, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if V.shape != (mu.ndim,) + mu.shape:
        raise ValueError(f"grid mismatch: V {V.shape}, mu {mu.shape}")
    if not np.all(mu > 0):
        raise ValueError("monitor function must be strictly positive everywhere")
    shape = mu.shape
    ndim = mu.ndim
    dt = 1.0 / steps
    sign = -1.0 if backward else 1.0
    psi = identity_map(shape).reshape(ndim, -1)
    traj = Trajectory(V, mu, dt, sign, psi)
    for k in range(steps):
        t = 1.0 - k * dt if backward else k * dt
        st = linear_stencil(shape, psi)
        vel = np.stack([st.sample(V[a]) for a in range(ndim)])
        denom = t + (1.0 - t) * st.sample(mu)
        if record:
            traj.steps.append(_Step(psi, st, denom, vel, t))
        psi = psi + (sign * dt) * vel / denom
    traj.phi = psi.reshape((ndim,) + shape)
    return traj


def integrate_transform(V, mu, cfg: IntegrationConfig | None = None) -> np.ndarray:
    """Explicit Euler flow of ``V / (t + (1 - t) mu)`` over ``t`` in ``[0, 1]``.

    ``direction='backward'`` runs the same field from ``t = 1`` back to
    ``t = 0`` and yields the inverse map.
    """
    cfg = cfg or IntegrationConfig()
    return _integrate(V, mu, int(cfg.steps), cfg.direction == "backward", record=False).phi


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


@dataclass
class MovingMesh:
    """All intermediate fields of one parameter-to-transform evaluation."""

    params: DeformationParams
    mu: np.ndarray
    gamma: np.ndarray
    rhs: np.ndarray
    velocity: np.ndarray
    forward: Trajectory
    backward: Trajectory

    @property
    def phi_f(self) -> np.ndarray:
        return self.forward.phi

    @property
    def phi_b(self) -> np.ndarray:
        return self.backward.phi

    def vjp(self, g_phi_f=None, g_phi_b=None) -> tuple[np.ndarray, np.ndarray]:
        """Cotangents of ``(raw_mu, raw_gamma)`` given cotangents of both maps."""
        p = self.params
        g_v = np.zeros_like(self.velocity)
        g_mu = np.zeros_like(self.mu)
        for traj, g in ((self.forward, g_phi_f), (self.backward, g_phi_b)):
            if g is None:
                continue
            if not traj.steps:
                raise RuntimeError("trajectory was not recorded; build with record=True")
            gv, gm = traj.vjp(g)
            g_v += gv
            g_mu += gm
        solver = PoissonSolver(self.mu.shape)
        g_rhs = np.stack([solver.solve_adjoint(g) for g in g_v])
        g_mu_rhs, g_gamma = assemble_rhs_vjp(g_rhs)
        g_mu += g_mu_rhs
        return (
            project_monitor_vjp(p.raw_mu, p.tau_lb, p.tau_ub, g_mu),
            project_curl_vjp(p.raw_gamma, p.gamma_scale, g_gamma),
        )


def evaluate(params: DeformationParams, steps: int = 20, record: bool = False) -> MovingMesh:
    mu = project_monitor(params.raw_mu, params.tau_lb, params.tau_ub)
    gamma = project_curl(params.raw_gamma, params.gamma_scale)
    rhs = assemble_rhs(mu, gamma)
    V = reconstruct_velocity(rhs)
    fwd = _integrate(V, mu, steps, backward=False, record=record)
    bwd = _integrate(V, mu, steps, backward=True, record=record)
    return MovingMesh(params, mu, gamma, rhs, V, fwd, bwd)


def build_deformation(params: DeformationParams, cfg: IntegrationConfig | int | None = None):
    """Forward and backward transforms ``(phi_f, phi_b)`` for ``params``."""
    if isinstance(cfg, IntegrationConfig):
        steps = cfg.steps
    else:
        steps = 20 if cfg is None else int(cfg)
    mesh = evaluate(params, steps)
    return mesh.phi_f, mesh.phi_b


def compose(outer, inner) -> np.ndarray:
    """``outer(inner(xi))`` for deformations given as target coordinates."""
    outer = np.asarray(outer, dtype=float)
    inner = np.asarray(inner, dtype=float)
    st = linear_stencil(outer.shape[1:], inner)
    return np.stack([st.sample(c) for c in outer]).reshape(inner.shape)
