"""Geometric algebra toolkit with equivariant transformer layers.

Modules by theme:

* algebra      multivector arithmetic over three metric signatures
* embeddings   points and planes in and out of the algebras
* groups       versors, rigid motions and representation matrices
* solver       numerically solved spaces of equivariant maps
* layers       equivariant linear, bilinear, norm and attention layers
* transformer  forward-only equivariant transformer variants
* cli          command line verification workflows
"""

from gaeq.algebra import (
    geometric_product,
    get_algebra,
    grade_project,
    inner,
    join,
    sandwich,
    wedge,
)
from gaeq.embeddings import (
    PointAtInfinityError,
    embed_point_cga,
    embed_point_ega,
    embed_point_pga,
    extract_point,
    load_points,
)
from gaeq.groups import EuclideanMotion, Versor, random_motion, rho
from gaeq.layers import (
    EquiLinear,
    GeometricBilinear,
    MvChannels,
    NormConfig,
    attention,
    attn_logits,
    equi_norm,
    gated_nonlinearity,
)
from gaeq.solver import (
    closed_form_basis,
    equivariant_map_family,
    solve_linear_basis,
    verify_conjecture,
)
from gaeq.transformer import (
    ModelConfig,
    TokenBatch,
    build_model,
    equivariance_error,
    forward,
    load_model,
    save_model,
)

__version__ = "0.1.0"

__all__ = [
    "geometric_product",
    "get_algebra",
    "grade_project",
    "inner",
    "join",
    "sandwich",
    "wedge",
    "PointAtInfinityError",
    "embed_point_cga",
    "embed_point_ega",
    "embed_point_pga",
    "extract_point",
    "load_points",
    "EuclideanMotion",
    "Versor",
    "random_motion",
    "rho",
    "EquiLinear",
    "GeometricBilinear",
    "MvChannels",
    "NormConfig",
    "attention",
    "attn_logits",
    "equi_norm",
    "gated_nonlinearity",
    "closed_form_basis",
    "equivariant_map_family",
    "solve_linear_basis",
    "verify_conjecture",
    "ModelConfig",
    "TokenBatch",
    "build_model",
    "equivariance_error",
    "forward",
    "load_model",
    "save_model",
    "__version__",
]
