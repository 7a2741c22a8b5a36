"""Pointwise slant submanifolds of families of almost Hermitian structures on flat ℝⁿ."""

from .numkit import DEFAULT_TOL, FD_TOL, SPECTRAL_TOL, STRUCT_TOL, Jet2, Tolerances
from .structures import (
    CoefficientFunctions,
    MetricSpec,
    TensorField11,
    build_family,
    build_family_k,
    fn_bracket,
    nabla_J,
    nijenhuis,
    verify_almost_hermitian,
    verify_anticommute,
)
from .immersion import Immersion, frame_at, immersion_from_components, tangential_operator
from .slant import (
    cross_term,
    family_slant_check,
    family_slant_check_k,
    induced_structure,
    kahler_condition_check,
    product_check,
    slant_at,
    slant_function_scan,
    transitivity_chain_check,
    transitivity_check,
)

__version__ = "0.1.0"
