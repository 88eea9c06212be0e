"""Toy Fock space laboratory for vacuum-adapted quantum stochastic integrals.

Discrete integrals are sums of scaled site operators on a finite tensor
product with a vacuum tail; the continuum side is evaluated in closed form
for step-function probes.  The two paths meet in exact identities (the
subordinate iterated integral, the discrete Ito product formula) and in
mesh -> 0 limits whose rates the experiment runner measures.
"""

from ._kernels import BACKEND as kernel_backend
from .grid import (
    Partition,
    StepFunction,
    coarse_grain,
    cumulative_inner,
    exp_inner,
    l2_inner,
    l2_norm,
    mesh,
    project,
    refines,
)
from .operators import (
    CoupledOperator,
    NoiseBlocks,
    particle_projection,
    preset_operator,
    random_coupled,
    vacuum_slot_projection,
)
from .states import (
    ToyState,
    apply_site_coupled,
    cross_inner,
    embed_exponential,
    inner,
    merge_terms,
    omega,
    site_vector,
)
from .discrete import (
    ScaledOperator,
    discrete_expectation_weight,
    ito_identity_residual,
    ito_residual_apply,
    scale_operator,
    sigma_apply,
    sigma_element,
    triangle_left,
    triangle_right,
)
from .oracle import (
    ElementReport,
    IntegralSpec,
    gradient_norm_sq,
    ito_limit_element,
    lambda1_element,
    lambda2_element,
)
from .tensor import FactorShape, adjoint, kron, permute_factors

__version__ = "0.1.0"
