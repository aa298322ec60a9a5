"""Scoring coordinate selections: reconstruction, noise amplification, the
POD + DEIM baseline and nearest-neighbour regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ArgumentError, SingularProjectionError
from .linalg import pqr, thin_svd

__all__ = [
    "AmplificationReport",
    "ErrorDistribution",
    "locally_linear_reconstruct",
    "linear_deim_reconstruct",
    "amplification",
    "deim_baseline",
    "knn_reconstruct",
    "pod_spectrum",
    "summarize",
]

PINV_RTOL = 1e-12


def summarize(values):
    v = np.asarray(values, dtype=float)
    return {
        "min": float(v.min()),
        "median": float(np.median(v)),
        "max": float(v.max()),
        "mean": float(v.mean()),
    }


@dataclass
class AmplificationReport:
    per_patch: np.ndarray
    singular: np.ndarray  # bool mask of patches where Pi_P^T U_k is rank deficient

    @property
    def summary(self):
        return summarize(self.per_patch)


@dataclass
class ErrorDistribution:
    relative_errors: np.ndarray

    @property
    def summary(self):
        return summarize(self.relative_errors)


def _sampled_pinv(basis, p):
    sub = np.asarray(basis, dtype=float)[list(p)]
    u, s, v = thin_svd(sub)
    if s.size < basis.shape[1] or s[-1] <= PINV_RTOL * max(s[0], 1e-300):
        raise SingularProjectionError(
            f"sampled basis is rank deficient on coordinates {list(p)}"
        )
    return (v / s) @ u.T


def locally_linear_reconstruct(x, base_point, basis, p):
    """``x_hat = x_bar + U (Pi_P^T U)^+ Pi_P^T (x - x_bar)``."""
    x = np.asarray(x, dtype=float)
    xb = np.asarray(base_point, dtype=float)
    basis = np.asarray(basis, dtype=float)
    p = list(p)
    return xb + basis @ (_sampled_pinv(basis, p) @ (x[p] - xb[p]))


def linear_deim_reconstruct(x, basis, p):
    """``x_hat = U (Pi_P^T U)^+ Pi_P^T x``."""
    x = np.asarray(x, dtype=float)
    basis = np.asarray(basis, dtype=float)
    p = list(p)
    return basis @ (_sampled_pinv(basis, p) @ x[p])


def amplification(bases, p):
    """Per-patch worst-case noise gain ``1 / sigma_min(Pi_P^T U_k)``.

    ``bases`` is a ``PatchSet``, a ``K x n x r`` array or a sequence of
    ``n x r`` matrices. Rank-deficient patches get ``inf`` and are flagged.
    """
    if hasattr(bases, "bases"):
        bases = bases.bases
    p = list(p)
    vals, sing = [], []
    for u in bases:
        sub = np.asarray(u, dtype=float)[p]
        s = np.linalg.svd(sub, compute_uv=False)
        r = u.shape[1]
        smin = s[r - 1] if s.size >= r else 0.0
        bad = smin <= PINV_RTOL * max(s[0] if s.size else 0.0, 1e-300)
        vals.append(np.inf if bad else 1.0 / smin)
        sing.append(bad)
    return AmplificationReport(np.asarray(vals), np.asarray(sing))


def _center(snapshots, centering):
    x = np.asarray(snapshots, dtype=float)
    if isinstance(centering, str):
        if centering == "mean":
            return x - x.mean(axis=0)
        if centering == "none":
            return x
        raise ArgumentError(f"unknown centering {centering!r}")
    return x - np.asarray(centering, dtype=float)


def deim_baseline(snapshots, r, centering="mean", rank_rtol=1e-10):
    """Q-DEIM on the leading ``r`` POD modes of ``snapshots`` (rows = samples).

    Returns ``(p, modes)`` where ``p`` are the first ``r`` pivots of the
    column-pivoted QR of ``modes.T`` and ``modes`` is ``n x r``.
    """
    x = _center(snapshots, centering)
    if not 1 <= r <= min(x.shape):
        raise ArgumentError(f"r={r} out of range for snapshots of shape {x.shape}")
    _, s, v = thin_svd(x)
    if s[r - 1] <= rank_rtol * s[0]:
        raise ArgumentError(f"r={r} exceeds the numerical rank of the snapshots")
    modes = v[:, :r]
    f = pqr(modes.T)
    return tuple(f.pivots[:r]), modes


def knn_reconstruct(train, p, test, k=3):
    """Inverse-distance-weighted k-NN prediction of the full state from the
    coordinates ``p``; returns relative errors ``||u_hat - u|| / ||u||``.

    Selected coordinates are copied from the test point. An exact hit on a
    training point returns that point's values.
    """
    train = np.asarray(train, dtype=float)
    test = np.asarray(test, dtype=float)
    p = list(p)
    if k < 1 or train.shape[0] == 0:
        raise ArgumentError("need k >= 1 and a nonempty training set")
    k = min(k, train.shape[0])
    tree = cKDTree(train[:, p])
    dist, idx = tree.query(test[:, p], k=k)
    if k == 1:
        dist, idx = dist[:, None], idx[:, None]
    pred = np.empty_like(test)
    for t in range(test.shape[0]):
        d, ix = dist[t], idx[t]
        hit = d == 0.0
        if hit.any():
            pred[t] = train[ix[hit]].mean(axis=0)
        else:
            w = 1.0 / d
            pred[t] = (w @ train[ix]) / w.sum()
    pred[:, p] = test[:, p]
    num = np.linalg.norm(pred - test, axis=1)
    den = np.linalg.norm(test, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(den > 0, num / den, num)
    return ErrorDistribution(rel)


def pod_spectrum(snapshots, centering="mean"):
    """Cumulative fraction of variance captured by the leading POD modes,
    truncated at the numerical rank."""
    x = _center(snapshots, centering)
    s = np.linalg.svd(x, compute_uv=False)
    e = s**2
    if e.sum() == 0:
        return np.zeros(0)
    e = e[e > 1e-14 * e[0]]
    return np.cumsum(e) / e.sum()
