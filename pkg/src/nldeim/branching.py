"""Branch coordinates: extra coordinates that separate manifold points sharing
the same immersion coordinates, turning an immersion into an embedding."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial import cKDTree

from .errors import ArgumentError, NldeimError
from .linalg import volume
from .simpqr import PatchSet, SimPqrConfig, simpqr

logger = logging.getLogger(__name__)

__all__ = [
    "BranchNeighborhood",
    "BranchSet",
    "find_branches",
    "branch_separators",
    "branch_basis_local_pca",
    "branch_bases",
    "select_branch_coords",
    "verify_branch_robustness",
    "nearest_branch",
]


@dataclass
class BranchNeighborhood:
    center: int
    clusters: list  # arrays of point indices
    centroids: np.ndarray  # n_clusters x n
    radius: float
    members: np.ndarray = field(default=None)

    @property
    def n_clusters(self):
        return len(self.clusters)


@dataclass
class BranchSet:
    mode: str  # "vectors" or "bases"
    vectors: list = field(default_factory=list)
    bases: list = field(default_factory=list)

    def __len__(self):
        return len(self.vectors) if self.mode == "vectors" else len(self.bases)


def _single_linkage(x, threshold):
    if x.shape[0] == 1:
        return np.zeros(1, dtype=int)
    z = linkage(x, method="single")
    return fcluster(z, t=threshold, criterion="distance") - 1


def find_branches(points, p_i, rho, gap_factor=3.0, centers=None):
    """Group the points near each centre (in the ``p_i`` coordinates) into
    branches.

    Neighbours are the points within ``rho`` of the centre after projecting
    onto ``p_i``; they are clustered in the full space by single linkage with
    link threshold ``gap_factor * rho``. Clusters are ordered by their
    smallest member index so the output does not depend on input order.
    """
    x = np.asarray(points, dtype=float)
    p_i = list(p_i)
    if not p_i:
        raise ArgumentError("p_i must contain at least one coordinate")
    if not rho > 0:
        raise ArgumentError("rho must be positive")
    proj = x[:, p_i]
    tree = cKDTree(proj)
    if centers is None:
        centers = range(x.shape[0])
    out = []
    for c in centers:
        nb = np.asarray(sorted(tree.query_ball_point(proj[c], rho)), dtype=int)
        if nb.size == 0:
            continue
        labels = _single_linkage(x[nb], gap_factor * rho)
        groups = [nb[labels == lab] for lab in np.unique(labels)]
        groups.sort(key=lambda g: int(g.min()))
        cents = np.stack([x[g].mean(axis=0) for g in groups])
        out.append(BranchNeighborhood(int(c), groups, cents, rho, nb))
    return out


def branch_separators(neighborhoods, tol=1e-8):
    """All pairwise centroid differences in multi-branch neighbourhoods,
    sign-normalized (first nonzero entry positive) and deduplicated."""
    vecs = []
    for nh in neighborhoods:
        for a, b in itertools.combinations(range(nh.n_clusters), 2):
            w = nh.centroids[b] - nh.centroids[a]
            nz = np.flatnonzero(np.abs(w) > tol)
            if nz.size == 0:
                continue
            if w[nz[0]] < 0:
                w = -w
            if not any(np.linalg.norm(w - v) <= tol for v in vecs):
                vecs.append(w)
    return BranchSet("vectors", vectors=vecs)


def branch_basis_local_pca(neighborhood: BranchNeighborhood, points, rho=None):
    """Orthonormal basis of the principal directions of a neighbourhood whose
    RMS spread (singular value over ``sqrt(N)``) exceeds ``2 rho``.

    An empty ``n x 0`` basis means the neighbourhood shows a single branch.
    """
    rho = neighborhood.radius if rho is None else rho
    x = np.asarray(points, dtype=float)[neighborhood.members]
    n = x.shape[1]
    if x.shape[0] < 2:
        return np.zeros((n, 0))
    y = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(y, full_matrices=False)
    keep = s / np.sqrt(x.shape[0]) > 2.0 * rho
    return vt[keep].T.copy()


def branch_bases(neighborhoods, points, rho=None):
    bases = [branch_basis_local_pca(nh, points, rho) for nh in neighborhoods]
    return BranchSet("bases", bases=[b for b in bases if b.shape[1] > 0])


def _restrict(mat, p_i, tol):
    """Zero the immersion coordinates and re-orthonormalize the columns."""
    m = np.array(mat, dtype=float, copy=True)
    m[list(p_i)] = 0.0
    q, r = np.linalg.qr(m)
    d = np.abs(np.diag(r))
    keep = d > tol * max(d.max(initial=0.0), 1e-300)
    return q[:, keep] if d.size and d.max() > tol else m[:, :0]


def select_branch_coords(branch_set: BranchSet, p_i, cfg: SimPqrConfig = None, tol=1e-10):
    """Branch coordinates ``P_B`` (disjoint from ``p_i``) from SimPQR run on
    the separating vectors or bases, each treated as one patch.

    Separators are restricted to the complement of ``p_i`` before
    factoring, which forces ``P_B`` and ``p_i`` to be disjoint. ``cfg``
    defaults to ``gamma = 1/K, eps = 1e-4``.
    """
    items = branch_set.vectors if branch_set.mode == "vectors" else branch_set.bases
    if not items:
        raise ArgumentError("branch set is empty; the immersion already separates branches")
    patches = []
    for it in items:
        mat = np.asarray(it, dtype=float)
        if mat.ndim == 1:
            mat = mat[:, None]
        q = _restrict(mat, p_i, tol)
        if q.shape[1] == 0:
            raise NldeimError("a separating direction lies entirely in the immersion coordinates")
        patches.append(q)
    ps = PatchSet(tuple(patches))
    if cfg is None:
        cfg = SimPqrConfig(1.0 / ps.K, 1e-4)
    res = simpqr(ps, cfg)
    return tuple(sorted(res.pivots))


def nearest_branch(observed, candidates, p_b):
    """Index of the candidate closest to ``observed`` in the ``p_b`` coordinates,
    together with all the distances."""
    p_b = list(p_b)
    d = np.linalg.norm(np.asarray(candidates)[:, p_b] - np.asarray(observed)[p_b], axis=1)
    return int(np.argmin(d)), d


def verify_branch_robustness(pairs, p_b, n_trials=100, fraction=0.9, seed=0):
    """Monte-Carlo check of noise robustness for branch recovery.

    For each pair ``(y, z)`` of points on different branches, random
    disturbances with ``||n|| = fraction * 0.5 * ||Pi_B^T (y - z)||`` must
    leave ``y`` the nearest branch in the ``p_b`` coordinates. The tight
    disturbance ``0.5 * Pi_B Pi_B^T (z - y)`` must give equal distances.
    """
    rng = np.random.default_rng(seed)
    p_b = list(p_b)
    failures, ties = 0, []
    total = 0
    for y, z in pairs:
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        bound = 0.5 * np.linalg.norm((y - z)[p_b])
        for _ in range(n_trials):
            nvec = rng.standard_normal(y.size)
            nvec *= fraction * bound / np.linalg.norm(nvec)
            k, _ = nearest_branch(y + nvec, np.stack([y, z]), p_b)
            failures += k != 0
            total += 1
        tight = np.zeros_like(y)
        tight[p_b] = 0.5 * (z - y)[p_b]
        _, d = nearest_branch(y + tight, np.stack([y, z]), p_b)
        ties.append(abs(d[0] - d[1]))
    return {
        "trials": total,
        "failures": int(failures),
        "max_tie_gap": float(max(ties)) if ties else 0.0,
        "ok": failures == 0,
    }


def strong_recovery_margin(basis, p_b, w):
    """``||Pi_B^T w|| - Vol(Pi_B^T U) ||w||``, nonnegative when the bound holds."""
    sub = np.asarray(basis)[list(p_b)]
    return float(np.linalg.norm(np.asarray(w)[list(p_b)]) - volume(sub) * np.linalg.norm(w))
