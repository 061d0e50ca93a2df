"""Domain types and estimator algebra for two-arm experiments.

Conventions used throughout the package:

* A sample has 2n subjects indexed 0..2n-1.  An allocation is a vector
  w in {-1, +1}^(2n) with sum(w) = 0; w_i = +1 means subject i is
  treated, -1 means control.
* Each subject carries two potential outcomes (y_T, y_C) with means
  (mu_T, mu_C) and per-subject noise variance total
  rho_i = Var(y_T,i) + Var(y_C,i).
* The estimand is the average treatment effect over the sample and the
  estimator is the simple difference in arm means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _frozen(values, dtype=float) -> np.ndarray:
    """Copy to an immutable ndarray so instances stay value-like."""
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CovariateMatrix:
    """Fixed covariates, one row per subject.

    The row count must be even (two arms of equal size) and at least 4.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim != 2:
            raise ValueError(f"covariates must be 2-D, got ndim={arr.ndim}")
        if arr.shape[0] < 4 or arr.shape[0] % 2:
            raise ValueError(
                f"subject count must be even and >= 4, got {arr.shape[0]}"
            )
        if arr.shape[1] < 1:
            raise ValueError("need at least one covariate column")
        if not np.isfinite(arr).all():
            raise ValueError("covariates must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def n_subjects(self) -> int:
        return self.values.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.values.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.values.shape[0] // 2

    def column_ranges(self) -> np.ndarray:
        """Per-column max - min (the covariate spread bounds)."""
        return self.values.max(axis=0) - self.values.min(axis=0)


@dataclass(frozen=True, eq=False)
class Allocation:
    """A balanced +1/-1 assignment vector."""

    signs: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.signs, dtype=np.int8)
        if arr.ndim != 1 or arr.shape[0] % 2:
            raise ValueError("allocation must be a 1-D vector of even length")
        if not np.isin(arr, (-1, 1)).all():
            raise ValueError("allocation entries must be -1 or +1")
        if int(arr.sum()) != 0:
            raise ValueError(f"allocation must be balanced, sum={int(arr.sum())}")
        object.__setattr__(self, "signs", arr)

    @property
    def n_subjects(self) -> int:
        return self.signs.shape[0]

    def mirror(self) -> "Allocation":
        return Allocation(-self.signs)


@dataclass(frozen=True, eq=False)
class Blocking:
    """A partition of subjects into B blocks of equal even size n_B."""

    block_of: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.block_of, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("block_of must be 1-D")
        n = arr.shape[0]
        ids, counts = np.unique(arr, return_counts=True)
        b = ids.shape[0]
        if not np.array_equal(ids, np.arange(b)):
            raise ValueError("block ids must be 0..B-1 with no gaps")
        if counts.min() != counts.max():
            raise ValueError("all blocks must have the same size")
        size = int(counts[0])
        if size % 2:
            raise ValueError(f"block size must be even, got {size}")
        if b * size != n:
            raise ValueError("blocks must partition all subjects")
        object.__setattr__(self, "block_of", arr)

    @classmethod
    def single(cls, n_subjects: int) -> "Blocking":
        return cls(np.zeros(n_subjects, dtype=np.int64))

    @classmethod
    def from_pairs(cls, pairs) -> "Blocking":
        """Build a size-2 blocking from an iterable of index pairs."""
        pairs = [tuple(int(i) for i in p) for p in pairs]
        n = 2 * len(pairs)
        block_of = np.full(n, -1, dtype=np.int64)
        for b, (i, j) in enumerate(pairs):
            if i == j:
                raise ValueError("a pair cannot repeat an index")
            for k in (i, j):
                if not 0 <= k < n:
                    raise ValueError(f"pair index {k} out of range for 2n={n}")
                if block_of[k] >= 0:
                    raise ValueError(f"subject {k} appears in two pairs")
                block_of[k] = b
        return cls(block_of)

    @property
    def n_subjects(self) -> int:
        return self.block_of.shape[0]

    @property
    def n_blocks(self) -> int:
        return int(self.block_of.max()) + 1

    @property
    def block_size(self) -> int:
        return self.n_subjects // self.n_blocks

    @property
    def is_pairing(self) -> bool:
        return self.block_size == 2

    def blocks(self) -> list[np.ndarray]:
        """Member indices of each block, ascending within a block."""
        order = np.argsort(self.block_of, kind="stable")
        return [np.sort(g) for g in np.split(order, self.n_blocks)]

    def pairs(self) -> list[tuple[int, int]]:
        """Canonical pair list (lo, hi), sorted by the low index."""
        if not self.is_pairing:
            raise ValueError("pairs() requires block size 2")
        out = [(int(b[0]), int(b[1])) for b in self.blocks()]
        return sorted(out)


@dataclass(frozen=True, eq=False)
class OutcomePair:
    """Potential outcomes with their means and noise variances.

    rho_i is the total residual variance Var(y_T,i) + Var(y_C,i).
    """

    y_t: np.ndarray
    y_c: np.ndarray
    mu_t: np.ndarray
    mu_c: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        arrays = {}
        n = None
        for name in ("y_t", "y_c", "mu_t", "mu_c", "rho"):
            arr = _frozen(getattr(self, name))
            if arr.ndim != 1:
                raise ValueError(f"{name} must be 1-D")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise ValueError("all outcome vectors must share one length")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite")
            arrays[name] = arr
        if (arrays["rho"] < 0).any():
            raise ValueError("rho entries must be >= 0")
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @classmethod
    def deterministic(cls, y_t, y_c) -> "OutcomePair":
        """Noise-free outcomes: means equal the values, rho = 0."""
        y_t = np.asarray(y_t, dtype=float)
        y_c = np.asarray(y_c, dtype=float)
        return cls(y_t, y_c, y_t, y_c, np.zeros_like(y_t))

    @property
    def n_subjects(self) -> int:
        return self.y_t.shape[0]

    @property
    def mu_sum(self) -> np.ndarray:
        """mu_T + mu_C, the vector the allocation is tested against."""
        return self.mu_t + self.mu_c


@dataclass(frozen=True, eq=False)
class DesignCovariance:
    """Allocation covariance matrix E[w w'], unit diagonal."""

    sigma_w: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.sigma_w)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("sigma_w must be square")
        if not np.allclose(arr, arr.T, rtol=0, atol=1e-12):
            raise ValueError("sigma_w must be symmetric")
        if not np.allclose(np.diag(arr), 1.0, rtol=0, atol=1e-12):
            raise ValueError("sigma_w diagonal must be exactly 1")
        object.__setattr__(self, "sigma_w", arr)

    @property
    def n_subjects(self) -> int:
        return self.sigma_w.shape[0]

    def quadratic_form(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self.sigma_w @ v)


def _check_lengths(w: Allocation, outcomes: OutcomePair) -> None:
    if w.n_subjects != outcomes.n_subjects:
        raise ValueError(
            f"allocation length {w.n_subjects} does not match "
            f"outcomes length {outcomes.n_subjects}"
        )


def estimand(outcomes: OutcomePair) -> float:
    """Sample average treatment effect mean(y_T - y_C)."""
    return float(np.mean(outcomes.y_t - outcomes.y_c))


def estimate(w: Allocation, outcomes: OutcomePair) -> float:
    """Difference in arm means under allocation w.

    Each treated subject reveals y_T, each control reveals y_C; with n
    subjects per arm the estimator is mean(treated y_T) - mean(control
    y_C), which equals sum((y_T - y_C) + w * (y_T + y_C)) / 2n.
    """
    _check_lengths(w, outcomes)
    n = w.n_subjects // 2
    treated = w.signs == 1
    return float(
        (outcomes.y_t[treated].sum() - outcomes.y_c[~treated].sum()) / n
    )


def squared_error(w: Allocation, outcomes: OutcomePair) -> float:
    """(estimate - estimand)^2 via the quadratic form (w'(y_T+y_C))^2 / 4n^2."""
    _check_lengths(w, outcomes)
    n = w.n_subjects // 2
    contrast = float(w.signs @ (outcomes.y_t + outcomes.y_c))
    return contrast * contrast / (4.0 * n * n)


def residual_variance_mean(rho) -> float:
    """Average per-subject noise variance rho_bar."""
    rho = np.asarray(rho, dtype=float)
    if rho.size == 0:
        raise ValueError("rho must be non-empty")
    if (rho < 0).any():
        raise ValueError("rho entries must be >= 0")
    return float(rho.mean())
