"""Monte Carlo evaluation of a design cell.

A cell fixes covariates, a response model, and a design; each
replicate draws fresh potential outcomes and one allocation and records
the squared error of the difference-in-means estimate.  Replicates are
drawn in fixed-size chunks on seed-derived substreams, so results are
bit-identical no matter how cells are scheduled across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Allocation, Blocking, CovariateMatrix, OutcomePair
from .criteria import (
    approx_quantile,
    asymptotic_reference,
    pm_variance_candidate,
    tail_constant,
)
from .designs import DesignSpec, enumerate_allocations, sample_allocations
from .response import ResponseModel, default_model, draw_outcomes, potential_means
from .streams import chunk_sizes, substream


@dataclass(frozen=True, eq=False)
class CellConfig:
    """One simulation cell: fixed covariates, model, design, budget."""

    cell_id: str
    model: ResponseModel
    x: CovariateMatrix
    design: DesignSpec
    n_reps: int
    master_seed: int
    q: float = 0.95
    bootstrap_reps: int = 1000

    def __post_init__(self):
        if self.n_reps < 2:
            raise ValueError("n_reps must be >= 2")
        if self.bootstrap_reps < 1:
            raise ValueError("bootstrap_reps must be >= 1")
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must be in (0, 1)")
        if self.design.n_subjects != self.x.n_subjects:
            raise ValueError("design and covariates disagree on 2n")
        if self.model.n_covariates != self.x.n_covariates:
            raise ValueError("model and covariates disagree on p")


@dataclass(frozen=True)
class CriterionReport:
    """Summary statistics of one cell's squared-error sample."""

    cell_id: str
    design_kind: str
    n_subjects: int
    n_reps: int
    master_seed: int
    q: float
    c_q: float
    mean_sq_err: float
    sd_sq_err: float
    emp_quantile: float
    emp_ci: tuple[float, float]
    approx_quantile: float
    approx_ci: tuple[float, float]


def empirical_quantile(samples: np.ndarray, q: float) -> float:
    """The ceil(q * N)-th order statistic (inverse-CDF definition)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size == 0:
        raise ValueError("samples must be a non-empty 1-D array")
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    k = math.ceil(q * samples.size)
    return float(np.partition(samples, k - 1)[k - 1])


def bootstrap_ci(
    samples: np.ndarray,
    statistic,
    level: float = 0.95,
    n_resamples: int = 1000,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Percentile-method bootstrap interval for a statistic."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size == 0:
        raise ValueError("samples must be a non-empty 1-D array")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    n = samples.size
    stats = np.empty(n_resamples)
    for r in range(n_resamples):
        stats[r] = statistic(samples[rng.integers(0, n, n)])
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def simulate_squared_errors(cfg: CellConfig) -> np.ndarray:
    """All replicate squared errors for a cell, chunk by chunk."""
    mu_t, mu_c = potential_means(cfg.model, cfg.x)
    n = cfg.x.n_pairs
    sq = np.empty(cfg.n_reps)
    pos = 0
    for ci, size in enumerate(chunk_sizes(cfg.n_reps)):
        rng_y = substream(cfg.master_seed, cfg.cell_id, "outcomes", ci)
        rng_w = substream(cfg.master_seed, cfg.cell_id, "alloc", ci)
        y_t = draw_outcomes(cfg.model, mu_t, rng_y, size)
        y_c = draw_outcomes(cfg.model, mu_c, rng_y, size)
        w = sample_allocations(cfg.design, size, rng_w)
        sq[pos : pos + size] = np.square(
            (w * (y_t + y_c)).sum(axis=1) / (2.0 * n)
        )
        pos += size
    return sq


def run_cell(cfg: CellConfig) -> CriterionReport:
    """Simulate a cell and summarize its squared-error distribution.

    Both quantile figures get percentile bootstrap intervals on their
    own seed-derived streams, so reports are reproducible from
    (cell_id, master_seed) alone.
    """
    sq = simulate_squared_errors(cfg)
    mean_sq = float(sq.mean())
    sd_sq = float(sq.std(ddof=1))
    c_q = tail_constant(cfg.q)
    emp_q = empirical_quantile(sq, cfg.q)
    apx_q = approx_quantile(mean_sq, sd_sq * sd_sq, c_q)
    emp_ci = bootstrap_ci(
        sq,
        lambda s: empirical_quantile(s, cfg.q),
        n_resamples=cfg.bootstrap_reps,
        rng=substream(cfg.master_seed, cfg.cell_id, "bootstrap-empirical"),
    )
    apx_ci = bootstrap_ci(
        sq,
        lambda s: float(s.mean()) + c_q * float(s.std(ddof=1)),
        n_resamples=cfg.bootstrap_reps,
        rng=substream(cfg.master_seed, cfg.cell_id, "bootstrap-approx"),
    )
    return CriterionReport(
        cell_id=cfg.cell_id,
        design_kind=cfg.design.kind,
        n_subjects=cfg.x.n_subjects,
        n_reps=cfg.n_reps,
        master_seed=cfg.master_seed,
        q=cfg.q,
        c_q=c_q,
        mean_sq_err=mean_sq,
        sd_sq_err=sd_sq,
        emp_quantile=emp_q,
        emp_ci=emp_ci,
        approx_quantile=apx_q,
        approx_ci=apx_ci,
    )


def enumerate_design_oracle(
    spec: DesignSpec, outcomes: OutcomePair
) -> tuple[float, float]:
    """Exact (mean, variance) of the squared error over the design support.

    Outcomes are held fixed; the average runs over every allocation in
    the support with equal weight, which is exact for block-type
    designs (independent uniform blocks) and for pb ({w*, -w*}).
    """
    allocs = enumerate_allocations(spec).astype(float)
    n = spec.n_subjects // 2
    v = outcomes.y_t + outcomes.y_c
    sq = np.square(allocs @ v / (2.0 * n))
    return float(sq.mean()), float(sq.var())


def _duplicate_pair_setup(n_subjects: int) -> tuple[CovariateMatrix, ResponseModel]:
    """Covariates duplicated within consecutive pairs, linear response.

    Duplicated rows force every within-pair mean gap to zero exactly,
    which isolates the noise-driven variance floor.
    """
    base = np.linspace(-1.0, 1.0, n_subjects // 2)
    x = CovariateMatrix(np.repeat(base, 2)[:, None])
    # total noise variance rho = 1 split evenly over the two arms
    model = ResponseModel(
        kind="continuous",
        beta0=-1.0,
        beta=np.array([1.0]),
        beta_t=0.001,
        sigma=math.sqrt(0.5),
    )
    return x, model


def convergence_study(
    design_kinds,
    n_subjects_grid,
    n_reps: int,
    master_seed: int,
) -> list[dict]:
    """Track n^2 Var[(tau_hat - tau)^2] as the sample grows.

    Runs pm and/or pb on matched-duplicate covariates (zero within-pair
    gaps, Gaussian noise with rho = 1) and reports the scaled variance
    with a moment-based standard error, next to the published reference
    constants and the enumeration-implied pm candidate.
    """
    ref = asymptotic_reference(1.0)
    rows = []
    for kind in design_kinds:
        if kind not in ("pm", "pb"):
            raise ValueError(f"convergence study covers pm and pb, not {kind!r}")
        for n_sub in n_subjects_grid:
            if n_sub % 2 or n_sub < 4:
                raise ValueError("n_subjects must be even and >= 4")
            x, model = _duplicate_pair_setup(n_sub)
            if kind == "pm":
                pairing = Blocking(np.arange(n_sub) // 2)
                spec = DesignSpec.pm(pairing)
            else:
                w_star = np.tile(np.array([1, -1], dtype=np.int8), n_sub // 2)
                spec = DesignSpec.pb(Allocation(w_star))
            cfg = CellConfig(
                cell_id=f"convergence::{kind}::{n_sub}",
                model=model,
                x=x,
                design=spec,
                n_reps=n_reps,
                master_seed=master_seed,
            )
            sq = simulate_squared_errors(cfg)
            n = n_sub // 2
            var = float(sq.var(ddof=1))
            centered = sq - sq.mean()
            m4 = float(np.mean(centered**4))
            se = float(np.sqrt(max(m4 - var * var, 0.0) / n_reps))
            rows.append(
                {
                    "design": kind,
                    "n_subjects": int(n_sub),
                    "n_reps": int(n_reps),
                    "scaled_variance": n * n * var,
                    "se": n * n * se,
                    "pm_reference": ref.pm_reference,
                    "pb_reference": ref.pb_reference,
                    "pm_enumeration_candidate": pm_variance_candidate(1.0),
                }
            )
    return rows
