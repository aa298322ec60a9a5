"""Dense kernels: Householder vectors, column-pivoted QR in compact storage,
thin SVD, and the brute-force matrix volume used as a test oracle.

Matrices are plain ``float64`` numpy arrays. Index lists are 0-based.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, BudgetError

__all__ = [
    "CompactPqr",
    "house",
    "householder_stage",
    "pqr",
    "reconstruct_qr",
    "thin_svd",
    "volume",
]


_UNIT_ROUNDOFF = 2.0**-53
SNAP_SCALE = 2.0**40


def _as_finite(a, name="a", ndim=None):
    a = np.asarray(a, dtype=float)
    if ndim is not None and a.ndim != ndim:
        raise ArgumentError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ArgumentError(f"{name} contains non-finite entries")
    return a


def house(x):
    """Householder vector ``v`` (with ``v[0] == 1``) and coefficient ``beta``
    such that ``(I - beta v v^T) x = ||x|| e_1``.

    Follows Golub & Van Loan, Alg. 5.1.1. When ``x`` is already a negative
    multiple of ``e_1`` the reflection ``I - 2 e_1 e_1^T`` is returned
    (``beta = 2``), which flips the sign as intended.
    """
    x = _as_finite(x, "x", ndim=1)
    if x.size == 0:
        raise ArgumentError("house() needs a vector of length >= 1")
    sigma = float(x[1:] @ x[1:])
    v = x.copy()
    v[0] = 1.0
    x0 = float(x[0])
    if sigma == 0.0 or (x0 > 0.0 and sigma <= (_UNIT_ROUNDOFF * x0) ** 2):
        # tail negligible against x0: ||x|| == x0 already, and the usual
        # formula would underflow v0
        return v, (0.0 if x0 >= 0.0 else 2.0)
    mu = math.sqrt(x0 * x0 + sigma)
    if x0 <= 0.0:
        v0 = x0 - mu
    else:
        v0 = -sigma / (x0 + mu)
    beta = 2.0 * v0 * v0 / (sigma + v0 * v0)
    v[1:] /= v0
    return v, beta


@dataclass(frozen=True)
class CompactPqr:
    """Pivoted QR of an ``r x n`` matrix in overwritten (LAPACK-like) form.

    ``a[:, pivots]`` holds ``R1`` on and above the diagonal and the
    Householder vector tails below it; ``a[:, complement]`` holds ``R2``.
    ``betas`` are kept because ``beta`` cannot be recovered from ``v`` in the
    trivial-reflection case.
    """

    a: np.ndarray
    pivots: tuple
    complement: tuple
    betas: tuple

    @property
    def stage_count(self):
        return len(self.pivots)

    @property
    def r_diagonal(self):
        return np.array([self.a[i, j] for i, j in enumerate(self.pivots)])


def refresh_interval(rank):
    """Stages between exact recomputations of the residual magnitudes."""
    return max(1, math.ceil(rank / 2))


def householder_stage(a, c, i, j, remaining):
    """One in-place elimination stage on a single ``r x n`` matrix.

    Reflects rows ``i:`` of the columns flagged in ``remaining`` (which must
    include ``j``), stores the vector tail under ``a[i, j]``, downdates the
    squared residual magnitudes ``c`` and retires column ``j``. Returns
    ``beta``. Residuals are recomputed from scratch every ``ceil(r/2)``
    stages and zeroed once no rows remain.
    """
    r = a.shape[0]
    v, beta = house(a[i:, j])
    cols = np.flatnonzero(remaining)
    sub = a[i:, cols]
    if beta != 0.0:
        w = beta * (v @ sub)
        sub -= np.outer(v, w)
        a[i:, cols] = sub
    a[i + 1 :, j] = v[1:]
    remaining[j] = False
    c[j] = 0.0
    cols = np.flatnonzero(remaining)
    done = i + 1
    if done >= r:
        c[cols] = 0.0
    elif done % refresh_interval(r) == 0:
        c[cols] = np.einsum("ij,ij->j", a[done:, cols], a[done:, cols])
    else:
        c[cols] -= a[i, cols] ** 2
    return beta


def snap_ratio(c, cmax):
    """``sqrt(c / cmax)`` rounded to a multiple of ``2**-40``.

    Pivot choices compare these snapped ratios, so magnitudes that are equal
    in exact arithmetic but differ by rounding noise tie and fall to the
    lowest index.
    """
    return np.round(np.sqrt(c / cmax) * SNAP_SCALE) / SNAP_SCALE


def pqr(a, eps=0.0):
    """Businger-Golub column-pivoted Householder QR of ``a`` (``r x n``).

    Stages continue while some remaining column has ``sqrt(c(j)) > eps``
    and rows remain; a rank-deficient input yields a partial factorization
    with ``stage_count < r``. Argmax ties go to the lowest column index;
    magnitudes are compared via :func:`snap_ratio`.
    """
    a = _as_finite(a, ndim=2).copy(order="C")
    if eps < 0:
        raise ArgumentError("eps must be >= 0")
    r, n = a.shape
    c = np.einsum("ij,ij->j", a, a)
    remaining = np.ones(n, dtype=bool)
    pivots, betas = [], []
    eps2 = eps * eps
    for i in range(min(r, n)):
        live = remaining & (c > eps2)
        if not live.any():
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            j = int(np.argmax(np.where(live, snap_ratio(c, c[live].max()), -np.inf)))
        betas.append(householder_stage(a, c, i, j, remaining))
        pivots.append(j)
    complement = tuple(int(j) for j in np.flatnonzero(remaining))
    return CompactPqr(a, tuple(pivots), complement, tuple(betas))


def reconstruct_qr(f: CompactPqr):
    """Form ``Q`` (``r x r``) and ``R`` (``r x n``) with
    ``Q @ R == a_input[:, pivots + complement]``."""
    a = f.a
    r = a.shape[0]
    s = f.stage_count
    q = np.eye(r)
    # Q = H_1 H_2 ... H_s, accumulated right to left
    for i in range(s - 1, -1, -1):
        j = f.pivots[i]
        v = np.concatenate(([1.0], a[i + 1 :, j]))
        beta = f.betas[i]
        if beta != 0.0:
            q[i:, :] -= beta * np.outer(v, v @ q[i:, :])
    order = list(f.pivots) + list(f.complement)
    rm = a[:, order].copy()
    for i in range(s):
        rm[i + 1 :, i] = 0.0
    return q, rm


def thin_svd(m):
    """Economy SVD ``m = u @ diag(s) @ v.T`` with ``s`` nonincreasing."""
    m = _as_finite(m, "m", ndim=2)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return u, s, vt.T


def volume(m, budget=200_000):
    """Largest ``|det|`` over the square ``min(p, q)`` submatrices of ``m``.

    Exhaustive: costs ``C(max(p,q), min(p,q))`` determinants, so it is only
    meant as an oracle on small matrices. Raises ``BudgetError`` when the
    number of subsets exceeds ``budget``.
    """
    m = _as_finite(m, "m", ndim=2)
    if m.shape[0] < m.shape[1]:
        m = m.T
    p, q = m.shape
    if q == 0:
        return 1.0
    count = math.comb(p, q)
    if count > budget:
        raise BudgetError(f"volume() would enumerate {count} subsets (budget {budget})")
    best = 0.0
    for rows in itertools.combinations(range(p), q):
        best = max(best, abs(float(np.linalg.det(m[list(rows), :]))))
    return best
