"""End-to-end experiment protocols shared by ``scripts/`` and the acceptance
tests: toy-manifold selections, amplification curves and the Burgers
DEIM-versus-NLDEIM comparison."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import datasets, evaluation, tangent
from .branching import branch_bases, find_branches, select_branch_coords
from .simpqr import PatchSet, SimPqrConfig, gamma_path, simpqr

logger = logging.getLogger(__name__)


def sample_patches(sample) -> PatchSet:
    return PatchSet(tuple(sample.tangents), sample.points)


def eigenmap_patches(points, r, k=10, alpha=1.0, r_prime=5, quality_min=0.05):
    model = tangent.laplacian_eigs(tangent.build_graph(points, k, alpha), r_prime)
    pats, dropped = tangent.tangent_from_eigenmaps(model, points, r, quality_min)
    return tangent.to_patchset(pats), dropped


def path_table(patches, eps):
    """One row per gamma-path segment: bounds, coordinates, amplification."""
    rows = []
    for seg in gamma_path(patches, eps):
        amp = evaluation.amplification(patches, seg.result.pivots).per_patch
        rows.append({
            "gamma_lo": seg.gamma_lo,
            "gamma_hi": seg.gamma_hi,
            "coords": tuple(sorted(seg.result.pivots)),
            "max_amp": float(amp.max()),
            "mean_amp": float(amp.mean()),
            "segment": seg,
        })
    return rows


def amplification_by_count(patches, points, eps, counts=range(2, 10)):
    """Best-over-path NLDEIM and DEIM max/mean amplification for each
    coordinate count ``d`` (DEIM uses ``r = d`` modes). Counts the path
    never visits map to ``None`` on the NLDEIM side."""
    rows = path_table(patches, eps)
    out = {}
    for d in counts:
        nl = [row for row in rows if len(row["coords"]) == d]
        p, _ = evaluation.deim_baseline(points, d)
        da = evaluation.amplification(patches, p).per_patch
        out[d] = {
            "nldeim_max": min(r["max_amp"] for r in nl) if nl else None,
            "nldeim_mean": min(r["mean_amp"] for r in nl) if nl else None,
            "deim_max": float(da.max()),
            "deim_mean": float(da.mean()),
            "deim_coords": tuple(sorted(p)),
        }
    return out


def spiral_embedding(points, rho=0.1, p_i=(0, 1), mode="bases"):
    nhs = find_branches(points, p_i, rho)
    if mode == "bases":
        bset = branch_bases(nhs, points, rho)
    else:
        from .branching import branch_separators

        bset = branch_separators(nhs)
    p_b = select_branch_coords(bset, p_i)
    return {"p_b": p_b, "p_e": tuple(sorted(set(p_i) | set(p_b))),
            "multi": sum(nh.n_clusters > 1 for nh in nhs), "items": len(bset)}


@dataclass
class BurgersComparison:
    nldeim_coords: tuple
    deim_coords: tuple
    n_x: int
    nldeim_errors: np.ndarray
    deim_errors: np.ndarray
    pod_modes_99: int
    extra: dict = field(default_factory=dict)

    @property
    def nldeim_xi(self):
        return tuple(j / self.n_x for j in self.nldeim_coords)

    @property
    def deim_xi(self):
        return tuple(j / self.n_x for j in self.deim_coords)

    @property
    def median_ratio(self):
        return float(np.median(self.deim_errors) / np.median(self.nldeim_errors))


def burgers_comparison(nu=1e-3, n_x=256, n_chi=25, n_snap=500, t_final=1.0, n_patches=5000,
                       eps=1e-6, n_test_chi=25, n_test_snap=50, k=3, seed=0):
    """Train on an evenly spaced width grid, select NLDEIM coordinates from
    grid tangents (``gamma = 1/K``) and DEIM coordinates from two POD modes,
    then compare 3-NN reconstruction on fresh simulations at random widths."""
    rng = np.random.default_rng(seed)
    chis = np.linspace(0.1, 0.5, n_chi)
    runs = datasets.burgers_grid(nu, chis, n_x, t_final, n_snap)
    grid = np.stack([r.snapshots for r in runs], axis=1)  # n_t x n_chi x n_x
    train = grid.reshape(-1, n_x)
    pats, dropped = tangent.tangent_from_grid(grid)
    if n_patches and n_patches < len(pats):
        keep = np.sort(rng.choice(len(pats), n_patches, replace=False))
        pats = [pats[i] for i in keep]
    ps = tangent.to_patchset(pats)
    res = simpqr(ps, SimPqrConfig(1.0 / ps.K, eps))
    p_deim, _ = evaluation.deim_baseline(train, 2)

    test_chis = rng.uniform(0.1, 0.5, n_test_chi)
    test_runs = datasets.burgers_grid(nu, test_chis, n_x, t_final, n_snap)
    stride = max(1, n_snap // n_test_snap)
    test = np.concatenate([r.snapshots[::stride][:n_test_snap] for r in test_runs])

    e_nl = evaluation.knn_reconstruct(train, res.pivots, test, k).relative_errors
    e_de = evaluation.knn_reconstruct(train, p_deim, test, k).relative_errors
    frac = evaluation.pod_spectrum(train)
    return BurgersComparison(
        nldeim_coords=tuple(res.pivots),
        deim_coords=tuple(p_deim),
        n_x=n_x,
        nldeim_errors=e_nl,
        deim_errors=e_de,
        pod_modes_99=int(np.searchsorted(frac, 0.99) + 1),
        extra={"K": ps.K, "dropped_cells": len(dropped), "test_chis": test_chis,
               "test_times": test_runs[0].times[::stride][:n_test_snap]},
    )
