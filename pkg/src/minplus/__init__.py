"""Exact min-plus products and convolutions for monotone / bounded-difference instances."""

from .core import (
    INF,
    MAG_CAP,
    MonotoneProfile,
    Seq,
    SquareMatrix,
    UndoTransform,
    ValidationReport,
    is_inf,
    minplus_conv_oracle,
    minplus_oracle,
    normalize_A_range,
    read_mpm1,
    reconstruct_from_parts,
    reduce_bd_to_monotone,
    split_by_residue,
    split_seq_by_residue,
    validate,
    write_mpm1,
)
from .monotone_conv import (
    approx_conv,
    basic_monotone_conv,
    recursive_monotone_conv,
)
from .monotone_mm import (
    RunResult,
    RunStats,
    approx_minplus_compressed,
    basic_monotone_minplus,
    column_monotone_minplus,
    recursive_monotone_minplus,
)

__version__ = "0.1.0"

__all__ = [
    "INF",
    "MAG_CAP",
    "MonotoneProfile",
    "RunResult",
    "RunStats",
    "Seq",
    "SquareMatrix",
    "UndoTransform",
    "ValidationReport",
    "approx_conv",
    "approx_minplus_compressed",
    "basic_monotone_conv",
    "basic_monotone_minplus",
    "column_monotone_minplus",
    "is_inf",
    "minplus_conv_oracle",
    "minplus_oracle",
    "normalize_A_range",
    "read_mpm1",
    "reconstruct_from_parts",
    "recursive_monotone_conv",
    "recursive_monotone_minplus",
    "reduce_bd_to_monotone",
    "split_by_residue",
    "split_seq_by_residue",
    "validate",
    "write_mpm1",
    "__version__",
]
