"""Finite-dimensional Ornstein-Uhlenbeck laboratory.

Derives the invariant covariance and the restricted semigroups of ``dX = AX dt
+ i dW``, evaluates the semigroup through the Mehler formula, and checks the
associated identities and Poincare-type inequalities by exact Gaussian moment
algebra or seeded sampling.
"""

__version__ = "0.1.0"

from .numkit import NotHurwitzError, NotPsdError, SpdFactor, expm, solve_lyapunov, spd_factor  # noqa: E402
from .polynomial import GaussianMoments, Polynomial, hermite_in_form, linear_form, random_polynomial  # noqa: E402
from .sampling import Budget, Estimate, QuadratureOrderError  # noqa: E402
from .model import (  # noqa: E402
    AssumptionFailure,
    DegenerateModelError,
    DerivedModel,
    ModelSpec,
    check_theorem_conditions,
    covariance_at,
    derive,
    random_model,
    semigroup_norm_Hinf,
)
from .calculus import (  # noqa: E402
    SmoothFunction,
    VectorTestFunction,
    adjointness_defect,
    b_form_defect,
    divergence_H,
    form_identity_defect,
    generator_L,
    grad_H,
    grad_H_field,
)
from .semigroup import (  # noqa: E402
    ChaosIndex,
    GaussianMeasure,
    apply_P,
    apply_tensor_P,
    chaos_eigencheck,
    decay_scan,
    invariance_defect,
    mehler_polynomial,
)
from .inequality import (  # noqa: E402
    PoincareReport,
    dhstar_poincare,
    duality_identity_defect,
    gradient_estimate_scan,
    lp_norm,
    poincare_ratio,
    sharpness_search,
    weighted_norm_counterexample,
)
from .sector import (  # noqa: E402
    NotSectorialError,
    SectorContour,
    SectorialMatrix,
    certify_sectorial,
    contour_resolvent,
    convergence_study,
    kron_sum_resolvent_oracle,
)
