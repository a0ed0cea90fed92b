"""Multiplane point-mass gravitational lenses: image-count bounds, the
lensing polynomial, two independent image finders, and caustics."""

from .bipoly import BiPoly, DegreeVector
from .bounds import (
    BoundReport,
    bezout_bound,
    bound_report,
    ek_ok,
    formal_coeffs,
    image_bound,
    linear_conjecture,
)
from .caustics import (
    CausticSample,
    GenericityReport,
    genericity_check,
    trace_critical_and_caustics,
)
from .construct import ClearedSystem, build_cleared_system, degree_ledger, verify_prop1
from .ensemble import Ensemble, Plane, eval_eta_w, forward, jacobian, make_ensemble, trace
from .errors import *  # noqa: F401,F403
from .resultant import Elimination, SylvesterMatrix, resultant_bound, resultant_eliminate
from .solver import (
    CountReport,
    GridSpec,
    ImageSolution,
    Tolerances,
    count_images,
    find_images_newton,
    find_images_resultant,
)

__version__ = "0.1.0"
