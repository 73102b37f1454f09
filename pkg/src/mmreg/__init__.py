"""Moving-mesh diffeomorphic image registration.

Deformations are generated by a positive monitor field ``mu`` (the target
Jacobian determinant) and a curl field ``gamma``, reconstructed into a
velocity by a div-curl Poisson solve and integrated over artificial time.
"""

from .fields import (
    Grid,
    identity_map,
    interp_linear,
    jacobian_determinant,
    warp_image,
    warp_mask,
)
from .metrics import detj_stats, dice, evaluate_masks, hausdorff_mm, reliability
from .moving_mesh import (
    DeformationParams,
    IntegrationConfig,
    MovingMesh,
    build_deformation,
    evaluate,
    project_curl,
    project_monitor,
)
from .optim import RegistrationConfig, RegistrationError, RegistrationResult, register
from .poisson import PoissonSolver
from .synth import SynthConfig, make_pair

__version__ = "0.1.0"

__all__ = [
    "DeformationParams",
    "Grid",
    "IntegrationConfig",
    "MovingMesh",
    "PoissonSolver",
    "RegistrationConfig",
    "RegistrationError",
    "RegistrationResult",
    "SynthConfig",
    "build_deformation",
    "detj_stats",
    "dice",
    "evaluate",
    "evaluate_masks",
    "hausdorff_mm",
    "identity_map",
    "interp_linear",
    "jacobian_determinant",
    "make_pair",
    "project_curl",
    "project_monitor",
    "register",
    "reliability",
    "warp_image",
    "warp_mask",
]
