"""Haar analysis, BMO norms, dyadic shifts and paraproducts."""
from .bmo import (
    DEFAULT_BUDGET,
    BmoResult,
    PartitionSpec,
    frozen_slices,
    little_bmo_norm,
    little_product_bmo_norm,
    mean_oscillation_sup,
    product_bmo_norm,
    rectangle_energy,
)
from .haar import (
    DyadicCube,
    DyadicRectangle,
    HaarBasis,
    HaarTensor,
    haar_analysis,
    haar_basis,
    haar_field,
    haar_synthesis,
)
from .paraproduct import ParaproductResult, paraproduct
from .shift import DyadicShift, ShiftSpec, apply_shift, coefficient_bound, make_shift

__all__ = [
    "DEFAULT_BUDGET",
    "BmoResult",
    "DyadicCube",
    "DyadicRectangle",
    "DyadicShift",
    "HaarBasis",
    "HaarTensor",
    "ParaproductResult",
    "PartitionSpec",
    "ShiftSpec",
    "apply_shift",
    "coefficient_bound",
    "frozen_slices",
    "haar_analysis",
    "haar_basis",
    "haar_field",
    "haar_synthesis",
    "little_bmo_norm",
    "little_product_bmo_norm",
    "make_shift",
    "mean_oscillation_sup",
    "paraproduct",
    "product_bmo_norm",
    "rectangle_energy",
]
