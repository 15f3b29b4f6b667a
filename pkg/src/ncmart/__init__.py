"""Finite-dimensional noncommutative martingales: filtrations, Cuculescu
projections, adapted decompositions and a numerical verification harness."""

from .algebra import (
    DomainError,
    NCMartError,
    Operator,
    StructuralError,
    TracialAlgebra,
    lp_norm,
    mu,
    opnorm,
    proj_meet,
    spectral_projection,
    trace,
    weak_l1_norm,
)
from .cuculescu import dyadic_families, k_max_for, layers, supports
from .decompose import (
    abc_decompose,
    abc_decompose_general,
    positive_split,
    to_martingale_differences,
    yz_decompose,
    yz_decompose_general,
)
from .filtration import (
    Diagonal,
    Martingale,
    Pinching,
    Tensor,
    differences,
    is_k_regular,
    martingale_from_differences,
    martingale_from_terminal,
    random_martingale,
    random_regular_martingale,
)
from .norms import bmo_norms, h_norm, hardy_norm, norm_report

__version__ = "0.1.0"

__all__ = [
    "Diagonal",
    "DomainError",
    "Martingale",
    "NCMartError",
    "Operator",
    "Pinching",
    "StructuralError",
    "Tensor",
    "TracialAlgebra",
    "abc_decompose",
    "abc_decompose_general",
    "bmo_norms",
    "differences",
    "dyadic_families",
    "h_norm",
    "hardy_norm",
    "is_k_regular",
    "k_max_for",
    "layers",
    "lp_norm",
    "martingale_from_differences",
    "martingale_from_terminal",
    "mu",
    "norm_report",
    "opnorm",
    "positive_split",
    "proj_meet",
    "random_martingale",
    "random_regular_martingale",
    "spectral_projection",
    "supports",
    "to_martingale_differences",
    "trace",
    "weak_l1_norm",
    "yz_decompose",
    "yz_decompose_general",
    "__version__",
]
