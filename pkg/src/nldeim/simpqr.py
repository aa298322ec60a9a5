"""Simultaneously pivoted Householder QR over a collection of tangent patches.

Each stage picks one coordinate ``j*`` and a subset ``S*`` of patches on
which that coordinate is used as the next Householder pivot, maximizing

    |S| / S_max + gamma * min_{k in S} sqrt(c_k(j) / C_k)

over ``j`` and ``S`` drawn from the patches where column ``j`` is still
active (``c_k(j) > eps``). Small ``gamma`` favours sharing coordinates
across patches; large ``gamma`` recovers Businger-Golub pivoting per patch.

Note that ``eps`` thresholds the *squared* residual magnitude here, whereas
:func:`nldeim.linalg.pqr` thresholds its square root. ``simpqr`` with a
single patch and tolerance ``eps`` therefore matches ``pqr`` with
tolerance ``sqrt(eps)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ArgumentError, BudgetError, RankDeficientPatchError
from .linalg import CompactPqr, householder_stage, snap_ratio

logger = logging.getLogger(__name__)

__all__ = [
    "PatchSet",
    "SimPqrConfig",
    "PivotChoice",
    "StageRecord",
    "SimPqrResult",
    "GammaNeighbors",
    "PathSegment",
    "select_pivot",
    "simpqr",
    "gamma_neighbors",
    "gamma_path",
    "check_guarantees",
    "businger_golub_consistent",
]

ORTHONORMAL_TOL = 1e-8
BREAK_RTOL = 1e-12


@dataclass(frozen=True)
class PatchSet:
    """Orthonormal tangent bases ``U_k`` (``n x r_k``) and optional base points.

    The bases normally share one intrinsic dimension ``r``; ragged ranks are
    accepted so that branch-separating bases of differing rank can be fed
    through the same machinery.
    """

    bases: tuple
    base_points: Optional[np.ndarray] = None

    def __post_init__(self):
        bases = tuple(np.array(u, dtype=float) for u in self.bases)
        if not bases:
            raise ArgumentError("PatchSet needs at least one basis")
        n = bases[0].shape[0]
        for k, u in enumerate(bases):
            if u.ndim != 2 or u.shape[0] != n:
                raise ArgumentError(f"basis {k} has shape {u.shape}, expected ({n}, r)")
            if not np.all(np.isfinite(u)):
                raise ArgumentError(f"basis {k} has non-finite entries")
            err = np.linalg.norm(u.T @ u - np.eye(u.shape[1]))
            if err > ORTHONORMAL_TOL:
                raise ArgumentError(f"basis {k} is not orthonormal (|U^T U - I| = {err:.2e})")
        for u in bases:
            u.setflags(write=False)
        object.__setattr__(self, "bases", bases)
        if self.base_points is not None:
            bp = np.asarray(self.base_points, dtype=float)
            if bp.shape != (len(bases), n):
                raise ArgumentError(f"base_points shape {bp.shape} != ({len(bases)}, {n})")
            object.__setattr__(self, "base_points", bp)

    @classmethod
    def from_array(cls, stacked, base_points=None):
        """Build from a ``K x n x r`` array."""
        stacked = np.asarray(stacked, dtype=float)
        return cls(tuple(stacked), base_points)

    @property
    def n(self):
        return self.bases[0].shape[0]

    @property
    def K(self):
        return len(self.bases)

    @property
    def ranks(self):
        return tuple(u.shape[1] for u in self.bases)

    @property
    def r(self):
        ranks = set(self.ranks)
        if len(ranks) != 1:
            raise ArgumentError("patches have differing ranks")
        return ranks.pop()

    def stacked(self):
        return np.stack(self.bases)

    def subset(self, indices):
        bp = None if self.base_points is None else self.base_points[list(indices)]
        return PatchSet(tuple(self.bases[k] for k in indices), bp)


@dataclass(frozen=True)
class SimPqrConfig:
    gamma: float
    eps: float = 1e-4
    allow_partial: bool = False

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ArgumentError(f"gamma must be a positive finite number, got {self.gamma}")
        if not self.eps >= 0:
            raise ArgumentError(f"eps must be >= 0, got {self.eps}")


@dataclass(frozen=True)
class PivotChoice:
    j_star: int
    s_star: tuple
    l_star: int
    objective: float
    s_max: int
    theta: tuple  # sqrt(c_k(j*) / C_k) for k in s_star, in s_star order
    gamma_minus: float
    gamma_plus: float


@dataclass(frozen=True)
class StageRecord:
    stage: int
    j_star: int
    s_star: tuple
    objective: float
    s_max: int
    theta: tuple
    gamma_minus: float
    gamma_plus: float

    def key(self):
        """The part of the record that does not depend on gamma itself."""
        return (self.stage, self.j_star, self.s_star, self.s_max, self.theta)

    def to_dict(self):
        return {
            "stage": self.stage,
            "j_star": self.j_star,
            "s_star": list(self.s_star),
            "objective": self.objective,
            "s_max": self.s_max,
            "theta": list(self.theta),
        }


@dataclass(frozen=True)
class GammaNeighbors:
    gamma_minus: float
    gamma_plus: float


@dataclass
class SimPqrResult:
    pivots: tuple
    complement: tuple
    patch_pivots: tuple
    compact_factors: tuple
    stages: list
    patch_volumes: np.ndarray
    gamma: float
    eps: float
    gamma_minus: float = -math.inf
    gamma_plus: float = math.inf
    partial_patches: tuple = ()

    @property
    def neighbors(self):
        return GammaNeighbors(self.gamma_minus, self.gamma_plus)

    def stage_log(self):
        return [s.key() for s in self.stages]

    def r_diagonals(self):
        return [f.r_diagonal for f in self.compact_factors]


def select_pivot(c, gamma, eps):
    """Solve one stage of the pivot/patch selection problem.

    ``c`` is the ``K x n`` array of squared residual column magnitudes.
    Returns ``None`` when no entry exceeds ``eps`` (factorization complete).

    For every coordinate the active patches are sorted by normalized
    magnitude ``theta = sqrt(c_k(j) / C_k)`` (descending, stable on patch
    index), so the best subset of size ``l`` is always a prefix. Ties in the
    objective prefer the larger subset, then the smaller coordinate; ``theta``
    is snapped to a ``2**-40`` grid so that ties lost to rounding stay ties. The
    crossing values of every competing line ``J_{l,j}(gamma)`` against the
    winner give the stage's ``gamma_minus`` / ``gamma_plus``.
    """
    c = np.asarray(c, dtype=float)
    K, n = c.shape
    active = c > eps
    counts = active.sum(axis=0)
    s_max = int(counts.max()) if n else 0
    if s_max == 0:
        return None
    big_c = c.max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(active, snap_ratio(c, big_c[:, None]), -np.inf)
    order = np.argsort(-theta, axis=0, kind="stable")
    ts = np.take_along_axis(theta, order, axis=0)
    ell = np.arange(1, K + 1, dtype=float)[:, None]
    valid = ell <= counts[None, :]
    j1 = ell / s_max
    obj = np.where(valid, j1 + gamma * ts, -np.inf)

    best = obj.max()
    li, ji = np.nonzero(obj == best)
    # larger subset first, then smaller coordinate
    pick = np.lexsort((ji, -li))[0]
    l_star, j_star = int(li[pick]) + 1, int(ji[pick])
    j1_star = l_star / s_max
    j2_star = ts[l_star - 1, j_star]

    j2 = ts[valid]
    dj1 = j1_star - np.broadcast_to(j1, obj.shape)[valid]
    dj2 = j2 - j2_star
    nz = dj2 != 0.0
    crossings = dj1[nz] / dj2[nz]
    # gamma lives in (0, inf); lines meeting at gamma <= 0 never swap order
    below = crossings[(crossings < gamma) & (crossings > 0.0)]
    above = crossings[crossings > gamma]
    g_minus = float(below.max()) if below.size else -math.inf
    g_plus = float(above.min()) if above.size else math.inf

    s_star = tuple(int(k) for k in order[:l_star, j_star])
    return PivotChoice(
        j_star=j_star,
        s_star=s_star,
        l_star=l_star,
        objective=float(best),
        s_max=s_max,
        theta=tuple(float(t) for t in ts[:l_star, j_star]),
        gamma_minus=g_minus,
        gamma_plus=g_plus,
    )


def simpqr(patches: PatchSet, cfg: SimPqrConfig) -> SimPqrResult:
    """Run the simultaneously pivoted QR on ``patches``.

    The returned result carries per-patch compact factors (so that
    ``U_k^T [Pi_Pk | Pi_Pk^c] = Q_k [R1_k | R2_k]`` can be rebuilt with
    :func:`nldeim.linalg.reconstruct_qr`), the stage log, patch volumes and
    the neighbouring breakpoints ``gamma_minus < gamma < gamma_plus``.

    Raises :class:`RankDeficientPatchError` if a patch runs out of active
    columns before reaching its rank, unless ``cfg.allow_partial`` is set.
    """
    K, n = patches.K, patches.n
    a = [np.array(u.T, dtype=float, order="C", copy=True) for u in patches.bases]
    ranks = patches.ranks
    c = np.stack([np.einsum("ij,ij->j", ak, ak) for ak in a])
    remaining = np.ones((K, n), dtype=bool)
    progress = [0] * K
    patch_pivots = [[] for _ in range(K)]
    betas = [[] for _ in range(K)]
    volumes = np.ones(K)
    stages = []
    g_minus, g_plus = -math.inf, math.inf

    while True:
        choice = select_pivot(c, cfg.gamma, cfg.eps)
        if choice is None:
            break
        j = choice.j_star
        for k in choice.s_star:
            volumes[k] *= math.sqrt(c[k, j])
            betas[k].append(householder_stage(a[k], c[k], progress[k], j, remaining[k]))
            patch_pivots[k].append(j)
            progress[k] += 1
        stages.append(
            StageRecord(
                stage=len(stages),
                j_star=j,
                s_star=choice.s_star,
                objective=choice.objective,
                s_max=choice.s_max,
                theta=choice.theta,
                gamma_minus=choice.gamma_minus,
                gamma_plus=choice.gamma_plus,
            )
        )
        g_minus = max(g_minus, choice.gamma_minus)
        g_plus = min(g_plus, choice.gamma_plus)

    partial = tuple(k for k in range(K) if progress[k] < ranks[k])
    if partial and not cfg.allow_partial:
        k = partial[0]
        raise RankDeficientPatchError(k, progress[k], ranks[k])
    if partial:
        logger.warning("%d patches only partially factored: %s", len(partial), partial[:10])

    factors = []
    for k in range(K):
        comp = tuple(int(j) for j in np.flatnonzero(remaining[k]))
        factors.append(CompactPqr(a[k], tuple(patch_pivots[k]), comp, tuple(betas[k])))

    # union in order of first selection; intersection in ascending order
    seen, pivots = set(), []
    for s in stages:
        if s.j_star not in seen:
            seen.add(s.j_star)
            pivots.append(s.j_star)
    complement = tuple(int(j) for j in np.flatnonzero(remaining.all(axis=0)))
    return SimPqrResult(
        pivots=tuple(pivots),
        complement=complement,
        patch_pivots=tuple(tuple(p) for p in patch_pivots),
        compact_factors=tuple(factors),
        stages=stages,
        patch_volumes=volumes,
        gamma=cfg.gamma,
        eps=cfg.eps,
        gamma_minus=g_minus,
        gamma_plus=g_plus,
        partial_patches=partial,
    )


def gamma_neighbors(patches: PatchSet, cfg: SimPqrConfig) -> GammaNeighbors:
    """Nearest values of gamma below/above ``cfg.gamma`` at which the stage
    sequence changes. Computed in the same pass as :func:`simpqr`."""
    return simpqr(patches, cfg).neighbors


@dataclass
class PathSegment:
    gamma_lo: float
    gamma_hi: float
    gamma: float  # the value the stored result was computed at
    result: SimPqrResult

    def midpoint(self):
        if math.isinf(self.gamma_hi):
            return 2.0 * self.gamma_lo if self.gamma_lo > 0 else 1.0
        return 0.5 * (self.gamma_lo + self.gamma_hi)


def gamma_path(patches: PatchSet, eps, *, nudge=1e-9, allow_partial=False,
               max_segments=10_000, max_bisections=60):
    """Sweep the full solution path from ``gamma = 1/K`` to infinity.

    After each run the next representative gamma is ``gamma_plus * (1 +
    nudge)``; if the run there reports a lower breakpoint beyond the previous
    ``gamma_plus`` (a skipped segment), the gap is bisected until the
    segment adjacent to the previous one is found.
    """
    start = 1.0 / patches.K
    run = lambda g: simpqr(patches, SimPqrConfig(g, eps, allow_partial))
    segments = []
    lo, gamma = start, start
    res = run(gamma)
    while True:
        hi = res.gamma_plus
        segments.append(PathSegment(lo, hi, gamma, res))
        if math.isinf(hi):
            return segments
        if len(segments) >= max_segments:
            raise BudgetError(f"gamma path exceeded {max_segments} segments")
        g = hi * (1.0 + nudge)
        nxt = run(g)
        tries = 0
        # breakpoints reached from different stages may differ by rounding
        while nxt.gamma_minus > hi * (1.0 + BREAK_RTOL):
            if tries >= max_bisections:
                raise BudgetError(f"could not isolate the segment after gamma={hi!r}")
            g = 0.5 * (hi + nxt.gamma_minus)
            nxt = run(g)
            tries += 1
        lo, gamma, res = hi, g, nxt


def businger_golub_consistent(u, pivots, rtol=1e-9):
    """Whether ``pivots`` is a valid Businger-Golub sequence for ``u.T``,
    allowing any choice among columns tied for the largest residual.

    Residuals are recomputed independently at every step by projecting out
    the span of the columns already chosen.
    """
    a = np.asarray(u, dtype=float).T
    n = a.shape[1]
    chosen = []
    for p in pivots:
        if chosen:
            q, _ = np.linalg.qr(a[:, chosen])
            resid = a - q @ (q.T @ a)
        else:
            resid = a
        norms = np.einsum("ij,ij->j", resid, resid)
        norms[chosen] = -np.inf
        top = norms.max()
        if p in chosen or norms[p] < top - rtol * max(top, 1.0):
            return False
        chosen.append(p)
    return True


def check_guarantees(result: SimPqrResult, cfg: SimPqrConfig, patches: PatchSet = None,
                     eta=0.5, nu=0.5, tol=1e-12):
    """Audit a run against the parameter-choice guarantees.

    (a) ``gamma >= (K-1)/(K(1-eta))``  ->  ``sqrt(c_k(j*)) >= eta sqrt(C_k)`` on ``S*``
    (b) ``gamma <= 1 - nu``            ->  ``|S*| > nu * S_max``
    (c) ``gamma <= 1/K``               ->  ``|S*| == S_max``
    (d) ``gamma`` beyond the last breakpoint -> per-patch Businger-Golub pivots
        (needs ``patches``)

    Returns a dict with, per condition, whether it was applicable and the
    list of violating stages/patches.
    """
    K = len(result.patch_pivots)
    g = cfg.gamma
    report = {}
    a_on = g >= (K - 1) / (K * (1 - eta))
    b_on = g <= 1 - nu
    c_on = g <= 1.0 / K
    report["a"] = {
        "applies": a_on,
        "violations": [s.stage for s in result.stages
                       if a_on and min(s.theta) < eta - tol],
    }
    report["b"] = {
        "applies": b_on,
        "violations": [s.stage for s in result.stages
                       if b_on and not len(s.s_star) > nu * s.s_max],
    }
    report["c"] = {
        "applies": c_on,
        "violations": [s.stage for s in result.stages
                       if c_on and len(s.s_star) != s.s_max],
    }
    d_on = patches is not None and math.isinf(result.gamma_plus)
    d_viol = []
    if d_on:
        for k, u in enumerate(patches.bases):
            if not businger_golub_consistent(u, result.patch_pivots[k]):
                d_viol.append(k)
    report["d"] = {"applies": d_on, "violations": d_viol}
    report["ok"] = all(not v["violations"] for v in report.values())
    return report
