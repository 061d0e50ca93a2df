"""Pairing subjects by covariate similarity.

The pairwise-matching design needs a partition of the 2n subjects into
n pairs with small within-pair covariate distance.  This module
provides the Mahalanobis distance matrix, an exact minimum-cost matcher
for small samples, a greedy + 2-opt heuristic for realistic sizes, and
a rank-interval grid matcher whose within-pair gaps shrink as n grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .core import Blocking, CovariateMatrix
from .designs import regularized_covariance

# Largest 2n the exact bitmask DP accepts.
EXACT_CAPACITY = 12


class CapacityError(ValueError):
    """Raised when a sample is too large for the exact matcher."""


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric non-negative pairwise distances, zero diagonal."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("distances must form a square matrix")
        if not np.allclose(arr, arr.T, rtol=0, atol=1e-9):
            raise ValueError("distances must be symmetric")
        if (arr < 0).any():
            raise ValueError("distances must be >= 0")
        if not np.allclose(np.diag(arr), 0.0, rtol=0, atol=1e-12):
            raise ValueError("self-distances must be 0")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_subjects(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class MatchResult:
    """A pairing with its total within-pair cost."""

    pairing: Blocking
    cost: float
    method: str


def mahalanobis_distances(x: CovariateMatrix) -> DistanceMatrix:
    """All pairwise (x_i - x_j)' S^-1 (x_i - x_j) distances.

    S is the unbiased sample covariance of the covariates, ridged only
    if near-singular (see designs.regularized_covariance).
    """
    vals = x.values
    m = np.linalg.inv(regularized_covariance(vals))
    xm = vals @ m
    sq = np.einsum("ij,ij->i", xm, vals)
    d = sq[:, None] + sq[None, :] - 2.0 * (xm @ vals.T)
    d = np.maximum((d + d.T) / 2.0, 0.0)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d)


def _pair_cost(pairs, d: np.ndarray) -> float:
    return float(sum(d[i, j] for i, j in pairs))


def match_exact(d: DistanceMatrix) -> MatchResult:
    """Minimum total-cost perfect matching by exhaustive bitmask DP.

    Only for 2n <= EXACT_CAPACITY; larger samples should use
    match_heuristic.  Ties are broken toward the lexicographically
    smallest pairing.
    """
    n_sub = d.n_subjects
    if n_sub > EXACT_CAPACITY:
        raise CapacityError(
            f"exact matching supports 2n <= {EXACT_CAPACITY}, got {n_sub}; "
            "use match_heuristic"
        )
    dist = d.values
    full = (1 << n_sub) - 1
    dp = np.full(full + 1, np.inf)
    dp[0] = 0.0
    for mask in range(3, full + 1):
        if bin(mask).count("1") % 2:
            continue
        i = (mask & -mask).bit_length() - 1
        rest = mask ^ (1 << i)
        best = np.inf
        j_bits = rest
        while j_bits:
            j = (j_bits & -j_bits).bit_length() - 1
            j_bits &= j_bits - 1
            cand = dp[rest ^ (1 << j)] + dist[i, j]
            if cand < best:
                best = cand
        dp[mask] = best
    # reconstruct, smallest partner first among exact minima
    pairs = []
    mask = full
    while mask:
        i = (mask & -mask).bit_length() - 1
        rest = mask ^ (1 << i)
        j_bits = rest
        while j_bits:
            j = (j_bits & -j_bits).bit_length() - 1
            j_bits &= j_bits - 1
            if dp[rest ^ (1 << j)] + dist[i, j] == dp[mask]:
                pairs.append((i, j))
                mask = rest ^ (1 << j)
                break
        else:
            raise AssertionError("matching reconstruction failed")
    return MatchResult(Blocking.from_pairs(pairs), _pair_cost(pairs, dist), "exact")


def match_heuristic(d: DistanceMatrix) -> MatchResult:
    """Minimum-cost perfect matching at sizes the exact DP cannot reach.

    Runs the blossom algorithm on the complete distance graph, which
    minimizes the total within-pair cost in polynomial time; the
    bitmask matcher stays as an independently checkable reference for
    small samples.  Deterministic for a given distance matrix.
    """
    dist = d.values
    n_sub = d.n_subjects
    graph = nx.Graph()
    for i in range(n_sub):
        for j in range(i + 1, n_sub):
            graph.add_edge(i, j, weight=float(dist[i, j]))
    mate = nx.min_weight_matching(graph)
    tuples = sorted(tuple(sorted(edge)) for edge in mate)
    return MatchResult(
        Blocking.from_pairs(tuples), _pair_cost(tuples, dist), "heuristic"
    )


def match_grid(x: CovariateMatrix, rng: np.random.Generator) -> MatchResult:
    """Rank-interval grid matching.

    Each covariate's ranks are cut into m = max(1, floor(n^(1/(2p))))
    equal intervals; subjects sharing the full interval tuple are
    paired randomly within their group.  One member of every odd-sized
    group joins an overflow group, itself paired randomly.  The
    within-pair covariate gaps shrink as n grows because interval
    widths shrink while groups stay pairable.
    """
    vals = x.values
    n_sub, p = x.n_subjects, x.n_covariates
    n = x.n_pairs
    m = max(1, math.floor(n ** (1.0 / (2.0 * p)) + 1e-9))
    ids = np.empty((n_sub, p), dtype=np.int64)
    for j in range(p):
        order = np.argsort(vals[:, j], kind="stable")
        rank = np.empty(n_sub, dtype=np.int64)
        rank[order] = np.arange(n_sub)
        ids[:, j] = rank * m // n_sub
    groups: dict[tuple, list[int]] = {}
    for i in range(n_sub):
        groups.setdefault(tuple(ids[i]), []).append(i)
    pairs: list[tuple[int, int]] = []
    overflow: list[int] = []
    for key in sorted(groups):
        members = groups[key]
        shuffled = [members[t] for t in rng.permutation(len(members))]
        if len(shuffled) % 2:
            overflow.append(shuffled.pop())
        pairs.extend(zip(shuffled[0::2], shuffled[1::2]))
    if overflow:
        shuffled = [overflow[t] for t in rng.permutation(len(overflow))]
        pairs.extend(zip(shuffled[0::2], shuffled[1::2]))
    minv = np.linalg.inv(regularized_covariance(vals))
    cost = 0.0
    for i, j in pairs:
        diff = vals[i] - vals[j]
        cost += float(diff @ minv @ diff)
    return MatchResult(Blocking.from_pairs(pairs), cost, "grid")


def pair_gap_diagnostic(pairing: Blocking, mu) -> float:
    """Average squared within-pair gap of a mean vector: (1/n) sum (mu_a - mu_b)^2."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape[0] != pairing.n_subjects:
        raise ValueError("mu length must match the pairing")
    gaps = [mu[a] - mu[b] for a, b in pairing.pairs()]
    return float(np.mean(np.square(gaps)))
