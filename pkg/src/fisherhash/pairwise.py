"""Margin logistic loss over pairs of continuous representations.

Similar pairs are pushed toward dissimilarity -K/2 (all bits agree) and
dissimilar pairs toward +K/2 through a symmetric logistic loss shifted
by a margin m:

    loss_similar(D)    = log(1 + exp(D + m))
    loss_dissimilar(D) = log(1 + exp(-D + m))

with D(u_i, u_j) = -1/2 <u_i, u_j>.  A weighted squared discrepancy
psi * sum_i ||u_i - b_i||^2 ties the continuous columns to their binary
codes.  m = 0 recovers the plain pairwise logistic loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .binary_codes import BinaryCodeMatrix


def softplus(x):
    """log(1 + exp(x)) without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def sigmoid(x):
    """Logistic function, evaluated on the stable branch per sign."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def loss_similar(d, m):
    """Loss for a same-class pair at dissimilarity d, margin m."""
    _check_finite(d, m)
    return softplus(np.asarray(d, dtype=np.float64) + m)


def loss_dissimilar(d, m):
    """Loss for a different-class pair; mirror of loss_similar in d."""
    _check_finite(d, m)
    return softplus(-np.asarray(d, dtype=np.float64) + m)


def _check_finite(d, m):
    if not np.isfinite(d).all() or not np.isfinite(m):
        raise ValueError("loss inputs must be finite")


@dataclass(frozen=True)
class MarginParams:
    """Margin m >= 0 and discrepancy weight psi >= 0.

    Only the ratio between the pair losses and the psi term matters for
    the optimum; the trainer keeps the discrepancy weight at 1 and
    scales the pair block instead (see training.HyperParams.phi).
    """

    m: float = 1.0
    psi: float = 1.0

    def __post_init__(self):
        if self.m < 0:
            raise ValueError(f"margin must be >= 0, got {self.m}")
        if self.psi < 0:
            raise ValueError(f"psi must be >= 0, got {self.psi}")


@dataclass(frozen=True)
class PairSets:
    """Index pairs (i, j) with i < j, split into similar and dissimilar.

    The two sets are disjoint and contain no self-pairs; indices refer
    to columns of the representation matrix being scored.
    """

    similar: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))
    dissimilar: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))

    def __post_init__(self):
        object.__setattr__(self, "similar", _as_pairs(self.similar))
        object.__setattr__(self, "dissimilar", _as_pairs(self.dissimilar))
        sim = set(map(tuple, self.similar))
        dis = set(map(tuple, self.dissimilar))
        if len(sim) != len(self.similar) or len(dis) != len(self.dissimilar):
            raise ValueError("duplicate pairs")
        if sim & dis:
            raise ValueError(f"pairs in both sets: {sorted(sim & dis)[:3]}")

    def validate_against(self, n: int) -> None:
        for name, pairs in (("similar", self.similar), ("dissimilar", self.dissimilar)):
            if pairs.size and pairs.max() >= n:
                raise ValueError(f"{name} pair index {pairs.max()} out of range for N={n}")

    @property
    def count(self) -> int:
        return len(self.similar) + len(self.dissimilar)

    @classmethod
    def all_pairs_from_label_sets(cls, label_sets) -> "PairSets":
        """Every unordered pair, similar iff the items share a label."""
        n = len(label_sets)
        sim, dis = [], []
        for i in range(n):
            li = label_sets[i]
            for j in range(i + 1, n):
                (sim if li & label_sets[j] else dis).append((i, j))
        return cls(np.asarray(sim, dtype=np.int64).reshape(-1, 2),
                   np.asarray(dis, dtype=np.int64).reshape(-1, 2))


def _as_pairs(pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size:
        if (pairs < 0).any():
            raise ValueError("negative pair index")
        if (pairs[:, 0] >= pairs[:, 1]).any():
            bad = pairs[pairs[:, 0] >= pairs[:, 1]][0]
            raise ValueError(f"pairs must satisfy i < j, got {tuple(bad)}")
    pairs.setflags(write=False)
    return pairs


def _dense_codes(b, k: int, n: int) -> np.ndarray:
    if isinstance(b, BinaryCodeMatrix):
        dense = b.dense(np.float64)
    else:
        dense = np.asarray(b, dtype=np.float64)
    if dense.shape != (k, n):
        raise ValueError(f"code matrix shape {dense.shape} does not match ({k}, {n})")
    return dense


def _pair_dissimilarities(u: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return -0.5 * np.einsum("kp,kp->p", u[:, pairs[:, 0]], u[:, pairs[:, 1]])


def pair_objective(u: np.ndarray, b, pairs: PairSets, params: MarginParams) -> float:
    """Sum of pair losses on u plus psi * sum_i ||u_i - b_i||^2."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError(f"expected K x N representations, got shape {u.shape}")
    pairs.validate_against(u.shape[1])
    bd = _dense_codes(b, *u.shape)
    total = params.psi * float(((u - bd) ** 2).sum())
    if len(pairs.similar):
        total += float(loss_similar(_pair_dissimilarities(u, pairs.similar), params.m).sum())
    if len(pairs.dissimilar):
        total += float(loss_dissimilar(_pair_dissimilarities(u, pairs.dissimilar), params.m).sum())
    return total


def pair_gradient(u: np.ndarray, b, pairs: PairSets, params: MarginParams) -> np.ndarray:
    """Gradient of pair_objective with respect to u, shaped like u.

    A similar pair (i, j) contributes -1/2 sigma(D_ij + m) u_j to
    column i (and symmetrically to column j); a dissimilar pair
    contributes +1/2 sigma(-D_ij + m) u_j.  The discrepancy term adds
    2 psi (u_i - b_i) per column.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError(f"expected K x N representations, got shape {u.shape}")
    pairs.validate_against(u.shape[1])
    bd = _dense_codes(b, *u.shape)
    grad_t = 2.0 * params.psi * (u - bd).T.copy()
    ut = u.T
    if len(pairs.similar):
        ii, jj = pairs.similar[:, 0], pairs.similar[:, 1]
        coef = -0.5 * sigmoid(_pair_dissimilarities(u, pairs.similar) + params.m)
        np.add.at(grad_t, ii, coef[:, None] * ut[jj])
        np.add.at(grad_t, jj, coef[:, None] * ut[ii])
    if len(pairs.dissimilar):
        ii, jj = pairs.dissimilar[:, 0], pairs.dissimilar[:, 1]
        coef = 0.5 * sigmoid(-_pair_dissimilarities(u, pairs.dissimilar) + params.m)
        np.add.at(grad_t, ii, coef[:, None] * ut[jj])
        np.add.at(grad_t, jj, coef[:, None] * ut[ii])
    return grad_t.T.copy()
