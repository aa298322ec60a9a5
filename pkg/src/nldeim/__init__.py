"""Nonlinear DEIM: choose a small set of coordinates that parameterize every
tangent patch of a data manifold, via simultaneously pivoted QR."""

from .errors import NldeimError
from .linalg import CompactPqr, house, pqr, reconstruct_qr, thin_svd, volume
from .simpqr import (
    PatchSet,
    SimPqrConfig,
    SimPqrResult,
    check_guarantees,
    gamma_neighbors,
    gamma_path,
    select_pivot,
    simpqr,
)

__version__ = "0.1.0"

__all__ = [
    "NldeimError",
    "CompactPqr",
    "house",
    "pqr",
    "reconstruct_qr",
    "thin_svd",
    "volume",
    "PatchSet",
    "SimPqrConfig",
    "SimPqrResult",
    "check_guarantees",
    "gamma_neighbors",
    "gamma_path",
    "select_pivot",
    "simpqr",
]
