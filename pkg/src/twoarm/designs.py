"""Two-arm design families and their samplers.

Four families are supported:

* bcrd  - balanced completely randomized design (uniform over all
          balanced allocations; the single-block special case),
* block - independent balanced randomization inside B equal blocks,
* pm    - pairwise matching, a block design with blocks of size 2,
* pb    - perfect balance, a deterministic pair {w*, -w*} with w*
          chosen to minimize Mahalanobis imbalance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import Allocation, Blocking, CovariateMatrix, DesignCovariance

DESIGN_KINDS = ("bcrd", "block", "pm", "pb")

# Relative ridge added to a near-singular covariate covariance.
RIDGE_SCALE = 1e-8
_SINGULAR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DesignSpec:
    """A fully specified design: family plus its structure.

    Block-type families (bcrd, block, pm) carry a Blocking; pb carries
    the optimized allocation w_star.
    """

    kind: str
    blocking: Blocking | None = None
    w_star: Allocation | None = None

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.kind == "pb":
            if self.w_star is None or self.blocking is not None:
                raise ValueError("pb requires w_star and no blocking")
        else:
            if self.blocking is None or self.w_star is not None:
                raise ValueError(f"{self.kind} requires a blocking and no w_star")
            if self.kind == "bcrd" and self.blocking.n_blocks != 1:
                raise ValueError("bcrd must have a single block")
            if self.kind == "pm" and not self.blocking.is_pairing:
                raise ValueError("pm requires blocks of size 2")

    @classmethod
    def bcrd(cls, n_subjects: int) -> "DesignSpec":
        return cls("bcrd", blocking=Blocking.single(n_subjects))

    @classmethod
    def block(cls, blocking: Blocking) -> "DesignSpec":
        return cls("block", blocking=blocking)

    @classmethod
    def pm(cls, pairing: Blocking) -> "DesignSpec":
        return cls("pm", blocking=pairing)

    @classmethod
    def pb(cls, w_star: Allocation) -> "DesignSpec":
        return cls("pb", w_star=w_star)

    @property
    def n_subjects(self) -> int:
        if self.kind == "pb":
            return self.w_star.n_subjects
        return self.blocking.n_subjects

    @property
    def n_blocks(self) -> int | None:
        return None if self.kind == "pb" else self.blocking.n_blocks


def sample_allocations(
    spec: DesignSpec, n_draws: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw n_draws allocations as an (n_draws, 2n) array of +-1 (int8).

    Block-type designs randomize each block independently, exactly half
    of each block treated; pb flips a fair coin between w* and -w*.
    """
    if n_draws < 0:
        raise ValueError("n_draws must be >= 0")
    n_sub = spec.n_subjects
    if spec.kind == "pb":
        coin = rng.integers(0, 2, size=n_draws).astype(np.int8) * 2 - 1
        return coin[:, None] * spec.w_star.signs[None, :]
    out = np.empty((n_draws, n_sub), dtype=np.int8)
    for members in spec.blocking.blocks():
        m = members.shape[0]
        # argsort of iid uniforms puts a uniformly random half first
        order = np.argsort(rng.random((n_draws, m)), axis=1)
        buf = np.full((n_draws, m), -1, dtype=np.int8)
        np.put_along_axis(buf, order[:, : m // 2], 1, axis=1)
        out[:, members] = buf
    return out


def sample_allocation(spec: DesignSpec, rng: np.random.Generator) -> Allocation:
    """Draw one allocation from the design."""
    return Allocation(sample_allocations(spec, 1, rng)[0])


def design_covariance(spec: DesignSpec) -> DesignCovariance:
    """Exact allocation covariance E[w w'].

    Within a block of size n_B the off-diagonal entries are
    -1/(n_B - 1) (balanced exchangeable signs must have rows summing to
    zero over the block); across blocks they are 0.  For pb the matrix
    is the rank-one outer product w* w*'.
    """
    if spec.kind == "pb":
        w = spec.w_star.signs.astype(float)
        return DesignCovariance(np.outer(w, w))
    n_sub = spec.n_subjects
    sigma = np.zeros((n_sub, n_sub))
    for members in spec.blocking.blocks():
        m = members.shape[0]
        sigma[np.ix_(members, members)] = -1.0 / (m - 1)
    np.fill_diagonal(sigma, 1.0)
    return DesignCovariance(sigma)


def enumerate_allocations(spec: DesignSpec, max_support: int = 1 << 20) -> np.ndarray:
    """The design's full support as an (S, 2n) array of +-1 (int8).

    Every row is equally likely under the design.  Block-type supports
    are the product of per-block balanced patterns, so S =
    prod_b C(n_B, n_B/2); pb contributes exactly {w*, -w*}.  Supports
    larger than max_support are rejected.
    """
    n_sub = spec.n_subjects
    if spec.kind == "pb":
        w = spec.w_star.signs
        return np.stack([w, -w]).astype(np.int8)
    blocks = spec.blocking.blocks()
    total = 1
    for members in blocks:
        m = members.shape[0]
        total *= math.comb(m, m // 2)
        if total > max_support:
            raise ValueError(f"design support exceeds {max_support} allocations")
    patterns = []
    for members in blocks:
        m = members.shape[0]
        pats = np.full((math.comb(m, m // 2), m), -1, dtype=np.int8)
        for r, chosen in enumerate(itertools.combinations(range(m), m // 2)):
            pats[r, list(chosen)] = 1
        patterns.append(pats)
    out = np.empty((total, n_sub), dtype=np.int8)
    stride = total
    for members, pats in zip(blocks, patterns):
        k = pats.shape[0]
        stride //= k
        idx = (np.arange(total) // stride) % k
        out[:, members] = pats[idx]
    return out


def build_blocking(x: CovariateMatrix, n_blocks: int) -> Blocking:
    """Sorted-covariate blocking into n_blocks contiguous blocks.

    Subjects are stable-sorted by the first covariate; with a second
    covariate present, consecutive super-groups of size 2*n_B are then
    re-sorted by it, so each final block is one half (by covariate 2)
    of a covariate-1 stratum.  Covariates beyond the second are
    ignored.  The sorted order is cut into n_blocks blocks of size n_B.
    """
    n_sub = x.n_subjects
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    if n_sub % n_blocks:
        raise ValueError(f"{n_blocks} blocks do not divide {n_sub} subjects")
    size = n_sub // n_blocks
    if size % 2:
        raise ValueError(f"block size {size} must be even")
    order = np.argsort(x.values[:, 0], kind="stable")
    if x.n_covariates >= 2 and n_blocks >= 2:
        for start in range(0, n_sub, 2 * size):
            seg = order[start : start + 2 * size]
            order[start : start + seg.shape[0]] = seg[
                np.argsort(x.values[seg, 1], kind="stable")
            ]
    block_of = np.empty(n_sub, dtype=np.int64)
    block_of[order] = np.arange(n_sub) // size
    return Blocking(block_of)


def regularized_covariance(values: np.ndarray) -> np.ndarray:
    """Unbiased covariate covariance, ridged only when near-singular."""
    values = np.asarray(values, dtype=float)
    p = values.shape[1]
    s = np.atleast_2d(np.cov(values, rowvar=False, ddof=1))
    trace = float(np.trace(s))
    if not np.isfinite(trace) or trace <= 0:
        return np.eye(p)
    eigs = np.linalg.eigvalsh(s)
    if eigs[0] < _SINGULAR_TOL * max(1.0, eigs[-1]):
        s = s + (RIDGE_SCALE * trace / p) * np.eye(p)
    return s


def mahalanobis_imbalance(x: CovariateMatrix, w: Allocation) -> float:
    """Imbalance objective (X'w)' S^-1 (X'w) for an allocation."""
    if w.n_subjects != x.n_subjects:
        raise ValueError("allocation and covariates disagree on 2n")
    u = x.values.T @ w.signs.astype(float)
    m = np.linalg.inv(regularized_covariance(x.values))
    return float(u @ m @ u)


def _descend(g: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, list[float]]:
    """Greedy best-swap descent on obj(w) = w'Gw; returns w and the trace."""
    n_sub = w.shape[0]
    gd = np.diag(g)
    obj = float(w @ g @ w)
    trace = [obj]
    for _ in range(100 * n_sub):
        gw = g @ w
        tr = np.flatnonzero(w == 1)
        ct = np.flatnonzero(w == -1)
        # swap (i in treated, j in control): delta objective below
        delta = 4.0 * (
            gd[tr][:, None]
            + gd[ct][None, :]
            - 2.0 * g[np.ix_(tr, ct)]
            + gw[ct][None, :]
            - gw[tr][:, None]
        )
        k = int(np.argmin(delta))
        best = float(delta.flat[k])
        if best >= -1e-12 * (1.0 + abs(obj)):
            break
        i = tr[k // ct.shape[0]]
        j = ct[k % ct.shape[0]]
        w = w.copy()
        w[i] = -1
        w[j] = 1
        obj += best
        trace.append(obj)
    return w, trace


def greedy_pair_switch(
    x: CovariateMatrix, restarts: int, rng: np.random.Generator
) -> Allocation:
    """Search for the minimum-imbalance balanced allocation.

    Runs `restarts` greedy descents from independent uniform balanced
    starts (each restart on its own spawned sub-stream); every step
    applies the single (+1, -1) swap that lowers the Mahalanobis
    imbalance the most, first such swap in row-major scan order on
    ties.  The winner is the lowest final objective, earliest restart
    on ties.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    vals = x.values
    n_sub, n = x.n_subjects, x.n_pairs
    m = np.linalg.inv(regularized_covariance(vals))
    g = vals @ m @ vals.T
    best_w, best_obj = None, np.inf
    for child in rng.spawn(restarts):
        w0 = np.full(n_sub, -1, dtype=np.int8)
        w0[child.permutation(n_sub)[:n]] = 1
        w, _ = _descend(g, w0.astype(float))
        obj = float(w @ g @ w)
        if obj < best_obj:
            best_w, best_obj = w, obj
    return Allocation(best_w.astype(np.int8))
