"""Command line driver for simulation grids.

A grid is a product of response types, covariate counts, and a design
axis: either a list of block counts (the blocking sweep) or a list of
design families (bcrd / pm / pb).  Covariates are drawn once per
(response, p) panel and shared by every design in that panel; every
stochastic step runs on substreams derived from the master seed, so a
grid is reproducible cell by cell regardless of worker count.

Config files are plain ``key=value`` lines with ``#`` comments.  Flags
override config values; the available presets are

* fig1 - blocking sweep, B in {1,...,48}, 100000 replicates per cell,
* fig2 - bcrd vs pairwise matching vs perfect balance, 30000 replicates,
* exp  - the blocking sweep with long-tailed (centered exponential)
         covariates instead of uniform ones.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CovariateMatrix
from .designs import DesignSpec, build_blocking, greedy_pair_switch
from .matching import EXACT_CAPACITY, mahalanobis_distances, match_exact, match_heuristic
from .montecarlo import CellConfig, run_cell
from .response import RESPONSE_KINDS, default_covariate_source, default_model, draw_covariates
from .streams import substream

CSV_COLUMNS = (
    "response", "p", "design", "B", "n_subjects", "n_reps", "seed",
    "mean_sq_err", "sd_sq_err",
    "emp_q95", "emp_q95_lo", "emp_q95_hi",
    "approx_q95", "approx_q95_lo", "approx_q95_hi",
    "runtime_ms", "error",
)

_KNOWN_KEYS = (
    "preset", "seed", "reps", "n_subjects", "p", "responses", "designs",
    "blocks", "covariates", "bootstrap_reps", "pb_restarts", "workers", "out",
)

_PRESETS = {
    "fig1": {
        "n_subjects": "96",
        "blocks": "1,2,3,4,6,8,12,16,24,48",
        "responses": ",".join(RESPONSE_KINDS),
        "p": "1,2,5",
        "reps": "100000",
        "covariates": "uniform",
    },
    "fig2": {
        "n_subjects": "96",
        "designs": "bcrd,pm,pb",
        "responses": ",".join(RESPONSE_KINDS),
        "p": "1,2,5",
        "reps": "30000",
        "covariates": "uniform",
        "pb_restarts": "10000",
    },
}
_PRESETS["exp"] = dict(_PRESETS["fig1"], covariates="exponential")


class ConfigError(ValueError):
    """Invalid config file or option combination."""


@dataclass(frozen=True)
class ExperimentGrid:
    """A validated grid ready to run."""

    seed: int
    n_reps: int
    n_subjects: int
    responses: tuple[str, ...]
    p_list: tuple[int, ...]
    blocks: tuple[int, ...] | None
    designs: tuple[str, ...] | None
    covariate_family: str
    bootstrap_reps: int
    pb_restarts: int
    workers: int
    out_dir: str

    @property
    def axis(self) -> str:
        return "blocks" if self.blocks is not None else "designs"


def parse_config(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; unknown or repeated keys error."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        values[key] = value
    return values


def _parse_int(raw: dict, key: str, default: int | None, minimum: int) -> int:
    if key not in raw:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        value = int(raw[key])
    except ValueError:
        raise ConfigError(f"key {key!r} must be an integer, got {raw[key]!r}")
    if value < minimum:
        raise ConfigError(f"key {key!r} must be >= {minimum}, got {value}")
    return value


def _parse_list(raw_value: str, key: str, cast, allowed=None) -> tuple:
    items = []
    for part in raw_value.split(","):
        part = part.strip()
        try:
            item = cast(part)
        except ValueError:
            raise ConfigError(f"key {key!r}: bad entry {part!r}")
        if allowed is not None and item not in allowed:
            raise ConfigError(f"key {key!r}: {part!r} not in {sorted(allowed)}")
        items.append(item)
    if not items:
        raise ConfigError(f"key {key!r} must list at least one entry")
    return tuple(items)


def build_grid(config: dict[str, str], overrides: dict[str, str] | None = None) -> ExperimentGrid:
    """Resolve preset defaults, config keys, then explicit overrides."""
    raw = dict(config)
    if overrides:
        raw.update({k: str(v) for k, v in overrides.items() if v is not None})
    preset = raw.pop("preset", None)
    if preset is not None:
        if preset not in _PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; choose from {sorted(_PRESETS)}"
            )
        raw = {**_PRESETS[preset], **raw}
    if not raw:
        raise ConfigError("empty configuration: give a preset or explicit keys")
    if "blocks" in raw and "designs" in raw:
        raise ConfigError("specify blocks or designs, not both")
    if "blocks" not in raw and "designs" not in raw:
        raise ConfigError("specify a design axis: blocks=... or designs=...")

    seed = _parse_int(raw, "seed", None, 0)
    n_reps = _parse_int(raw, "reps", None, 2)
    n_subjects = _parse_int(raw, "n_subjects", 96, 4)
    if n_subjects % 2:
        raise ConfigError(f"n_subjects must be even, got {n_subjects}")
    responses = _parse_list(
        raw.get("responses", ",".join(RESPONSE_KINDS)), "responses", str,
        allowed=set(RESPONSE_KINDS),
    )
    p_list = _parse_list(raw.get("p", "1"), "p", int, allowed=set(range(1, 6)))
    blocks = designs = None
    if "blocks" in raw:
        blocks = _parse_list(raw["blocks"], "blocks", int)
        for b in blocks:
            if b < 1 or n_subjects % b or (n_subjects // b) % 2:
                raise ConfigError(
                    f"blocks entry {b} does not split {n_subjects} subjects "
                    "into equal even blocks"
                )
    else:
        designs = _parse_list(
            raw["designs"], "designs", str, allowed={"bcrd", "pm", "pb"}
        )
    family = raw.get("covariates", "uniform")
    if family not in ("uniform", "exponential"):
        raise ConfigError(f"covariates must be uniform or exponential, got {family!r}")
    return ExperimentGrid(
        seed=seed,
        n_reps=n_reps,
        n_subjects=n_subjects,
        responses=responses,
        p_list=p_list,
        blocks=blocks,
        designs=designs,
        covariate_family=family,
        bootstrap_reps=_parse_int(raw, "bootstrap_reps", 1000, 1),
        pb_restarts=_parse_int(raw, "pb_restarts", 1000, 1),
        workers=_parse_int(raw, "workers", 1, 1),
        out_dir=raw.get("out", "results"),
    )


def _tasks(grid: ExperimentGrid) -> list[dict]:
    axis: list[tuple[str, int]]
    if grid.blocks is not None:
        axis = [("block", b) for b in grid.blocks]
    else:
        b_of = {"bcrd": 1, "pm": grid.n_subjects // 2, "pb": 0}
        axis = [(kind, b_of[kind]) for kind in grid.designs]
    return [
        {"response": resp, "p": p, "design": design, "B": b}
        for resp in grid.responses
        for p in grid.p_list
        for design, b in axis
    ]


def _build_design(
    label: str, b: int, x: CovariateMatrix, grid: ExperimentGrid, cell_id: str
) -> DesignSpec:
    if label == "block":
        return DesignSpec.block(build_blocking(x, b))
    if label == "bcrd":
        return DesignSpec.bcrd(x.n_subjects)
    if label == "pm":
        d = mahalanobis_distances(x)
        result = (
            match_exact(d) if x.n_subjects <= EXACT_CAPACITY else match_heuristic(d)
        )
        return DesignSpec.pm(result.pairing)
    if label == "pb":
        rng = substream(grid.seed, cell_id, "design")
        return DesignSpec.pb(greedy_pair_switch(x, grid.pb_restarts, rng))
    raise ValueError(f"unknown design label {label!r}")


def _run_task(payload: tuple) -> dict:
    """Run one cell; exceptions land in the row's error column."""
    grid, task, x_values = payload
    row = {col: "" for col in CSV_COLUMNS}
    row.update(
        response=task["response"], p=task["p"], design=task["design"],
        B=task["B"], n_subjects=grid.n_subjects, n_reps=grid.n_reps,
        seed=grid.seed, error="",
    )
    cell_id = (
        f"{task['response']}|p{task['p']}|{task['design']}|B{task['B']}"
        f"|n{grid.n_subjects}"
    )
    start = time.perf_counter()
    try:
        x = CovariateMatrix(x_values)
        model = default_model(task["response"], task["p"])
        design = _build_design(task["design"], task["B"], x, grid, cell_id)
        cfg = CellConfig(
            cell_id=cell_id,
            model=model,
            x=x,
            design=design,
            n_reps=grid.n_reps,
            master_seed=grid.seed,
            bootstrap_reps=grid.bootstrap_reps,
        )
        report = run_cell(cfg)
    except Exception as exc:  # noqa: BLE001 - cell failures become rows
        row["runtime_ms"] = round((time.perf_counter() - start) * 1000.0, 3)
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    row.update(
        mean_sq_err=report.mean_sq_err,
        sd_sq_err=report.sd_sq_err,
        emp_q95=report.emp_quantile,
        emp_q95_lo=report.emp_ci[0],
        emp_q95_hi=report.emp_ci[1],
        approx_q95=report.approx_quantile,
        approx_q95_lo=report.approx_ci[0],
        approx_q95_hi=report.approx_ci[1],
        runtime_ms=round((time.perf_counter() - start) * 1000.0, 3),
    )
    return row


def run_grid(grid: ExperimentGrid) -> list[dict]:
    """Run every cell, one fixed covariate draw per (response, p) panel."""
    panels: dict[tuple[str, int], np.ndarray] = {}
    for resp in grid.responses:
        for p in grid.p_list:
            source = default_covariate_source(resp, grid.covariate_family)
            rng = substream(grid.seed, "covariates", grid.covariate_family, resp, p)
            panels[(resp, p)] = draw_covariates(
                source, grid.n_subjects, p, rng
            ).values
    payloads = [
        (grid, task, panels[(task["response"], task["p"])])
        for task in _tasks(grid)
    ]
    if grid.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(grid.workers) as pool:
            return list(pool.map(_run_task, payloads))
    return [_run_task(payload) for payload in payloads]


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows(rows: list[dict], path: Path) -> None:
    """Write the long-form results table (UTF-8, LF line endings)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_format(row[col]) for col in CSV_COLUMNS])


def emit_plot_data(rows: list[dict], out_dir: Path) -> list[Path]:
    """One small series file per (response, p) panel, error rows skipped."""
    panels: dict[tuple, list[dict]] = {}
    for row in rows:
        if row["error"]:
            continue
        panels.setdefault((row["response"], row["p"]), []).append(row)
    columns = (
        "design", "B",
        "emp_q95", "emp_q95_lo", "emp_q95_hi",
        "approx_q95", "approx_q95_lo", "approx_q95_hi",
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for (resp, p), series in sorted(panels.items()):
        path = out_dir / f"{resp}_p{p}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in series:
                writer.writerow([_format(row[col]) for col in columns])
        written.append(path)
    return written


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="twoarm",
        description="Run a two-arm design simulation grid and write CSV results.",
    )
    parser.add_argument("config", nargs="?", help="path to a key=value config file")
    parser.add_argument("--preset", choices=sorted(_PRESETS), help="named grid")
    parser.add_argument("--seed", type=int, help="master seed (required somewhere)")
    parser.add_argument("--reps", type=int, help="replicates per cell")
    parser.add_argument("--workers", type=int, help="parallel cell workers")
    parser.add_argument("--out", help="output directory (default: results)")
    args = parser.parse_args(argv)

    try:
        config: dict[str, str] = {}
        if args.config is not None:
            config = parse_config(Path(args.config).read_text(encoding="utf-8"))
        overrides = {
            "preset": args.preset,
            "seed": args.seed,
            "reps": args.reps,
            "workers": args.workers,
            "out": args.out,
        }
        grid = build_grid(config, overrides)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    rows = run_grid(grid)
    out_dir = Path(grid.out_dir)
    write_rows(rows, out_dir / "results.csv")
    panel_files = emit_plot_data(rows, out_dir / "panels")
    failures = [row for row in rows if row["error"]]
    for row in rows:
        status = row["error"] or f"emp_q95={_format(row['emp_q95'])}"
        print(
            f"{row['response']} p={row['p']} {row['design']} B={row['B']}: {status}"
        )
    print(
        f"wrote {len(rows)} rows to {out_dir / 'results.csv'} "
        f"and {len(panel_files)} panel files; {len(failures)} failed cells"
    )
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
