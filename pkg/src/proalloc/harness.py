"""Experiment orchestration: capacity sweeps, seeding, aggregation, CSV.

A sweep runs ``runs`` independent replicas per grid capacity, pools the
outage counts, and attaches closed-form overlays where one exists.  Results
are bit-reproducible: every replica's seed is derived from (base_seed,
run_index) alone, so run counts, worker counts, and grid order never change
a single cell, and the same replica seeds recur across capacities (common
random numbers, which stabilizes curve comparisons).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import IO

from . import analysis
from .scheduler import OutageStats, run_error_model, run_single_class
from .traffic import (
    Binomial,
    CapacityScaled,
    Deterministic,
    ErrorModelConfig,
    LookaheadModel,
    ScalingConfig,
    Tabulated,
    Uniform,
    max_lookahead,
    validate_error_config,
)
from .twoclass import SP1, SP2, SP3, Policy, TwoClassConfig, policy_label, run_two_class

__all__ = [
    "DEFAULT_BASE_SEED",
    "WORKERS_ENV_VAR",
    "derive_run_seed",
    "confidence_interval",
    "ExperimentConfig",
    "SweepRow",
    "SweepResult",
    "SweepError",
    "run_sweep",
    "run_replica",
    "analytic_overlay",
    "export_csv",
    "load_csv",
    "CSV_COLUMNS",
    "lookahead_label",
    "parse_lookahead",
    "parse_policy",
]

DEFAULT_BASE_SEED = 123456789
WORKERS_ENV_VAR = "PROALLOC_WORKERS"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Two-sided 95% normal quantile, frozen so intervals never drift with
# library versions.
_WILSON_Z = 1.959963984540054


def derive_run_seed(base_seed: int, run_index: int) -> int:
    """Map (base_seed, run_index) to a 64-bit seed (SplitMix64 output step).

    Injective in run_index for a fixed base, well-mixed, and stable across
    platforms.  Replica i of every sweep cell uses the same seed, so cells
    differing only in capacity or policy share their randomness.
    """
    if run_index < 0:
        raise ValueError(f"run_index must be non-negative, got {run_index}")
    x = (int(base_seed) + (run_index + 1) * _GOLDEN) & _MASK64
    x ^= x >> 30
    x = (x * _MIX1) & _MASK64
    x ^= x >> 27
    x = (x * _MIX2) & _MASK64
    x ^= x >> 31
    return x


def confidence_interval(successes: int, trials: int) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion.

    Behaves sensibly at the boundaries (0 or all successes) where the Wald
    interval collapses.
    """
    if trials <= 0:
        raise ValueError(f"trials must be positive, got {trials}")
    if not (0 <= successes <= trials):
        raise ValueError(f"successes must lie in [0, {trials}], got {successes}")
    z2 = _WILSON_Z * _WILSON_Z
    p = successes / trials
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = (_WILSON_Z / denom) * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials))
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == trials else min(1.0, center + half)
    return (low, high)


# --- configuration -----------------------------------------------------------

_SCENARIOS = ("single", "error", "two")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one sweep.

    ``slots_per_run`` counts measured slots; warmup slots are simulated on
    top of them.  ``warmup`` defaults to four times the largest lookahead.
    ``arrivals`` scripts per-slot arrival counts for single-run scenario
    checks and is not accepted by sweeps.
    """

    scenario: str
    capacity_grid: tuple[int, ...]
    gamma: float | None = None
    gamma_p: float | None = None
    gamma_s: float | None = None
    lookahead: LookaheadModel | None = None
    alpha_prime: float | None = None
    alpha_double_prime: float | None = None
    policy: Policy | None = None
    slots_per_run: int = 1000
    runs: int = 100
    warmup: int | None = None
    base_seed: int = DEFAULT_BASE_SEED
    arrivals: tuple[int, ...] | None = None

    def validate(self) -> None:
        problems = []
        if self.scenario not in _SCENARIOS:
            problems.append(f"scenario must be one of {_SCENARIOS}, got {self.scenario!r}")
        if not self.capacity_grid:
            problems.append("capacity_grid must not be empty")
        elif any(not isinstance(c, int) or c < 1 for c in self.capacity_grid):
            problems.append(f"capacities must be positive integers, got {self.capacity_grid}")
        elif any(b <= a for a, b in zip(self.capacity_grid, self.capacity_grid[1:])):
            problems.append(f"capacity_grid must be strictly increasing, got {self.capacity_grid}")
        if self.slots_per_run < 1:
            problems.append(f"slots must be positive, got {self.slots_per_run}")
        if self.runs < 1:
            problems.append(f"runs must be positive, got {self.runs}")
        if self.warmup is not None and self.warmup < 0:
            problems.append(f"warmup must be non-negative, got {self.warmup}")

        if self.scenario == "single":
            if self.gamma is None:
                problems.append("single scenario needs gamma")
            if self.lookahead is None:
                problems.append("single scenario needs a lookahead model")
            if self.arrivals is not None and not isinstance(self.lookahead, Deterministic):
                problems.append("scripted arrivals require a deterministic lookahead")
        elif self.scenario == "error":
            if self.gamma is None:
                problems.append("error scenario needs gamma")
            if self.alpha_prime is None or self.alpha_double_prime is None:
                problems.append("error scenario needs alpha_prime and alpha_double_prime")
            if not isinstance(self.lookahead, Deterministic):
                problems.append("error scenario needs lookahead deterministic:<t>")
            if not problems and self.capacity_grid:
                try:
                    ecfg = self._error_config()
                except ValueError as exc:
                    problems.append(str(exc))
                else:
                    for c in self.capacity_grid:
                        problems.extend(validate_error_config(ecfg, c))
            if self.arrivals is not None:
                problems.append("scripted arrivals apply only to the single scenario")
        elif self.scenario == "two":
            if self.gamma_p is None or self.gamma_s is None:
                problems.append("two-class scenario needs gamma_p and gamma_s")
            if self.policy is None:
                problems.append("two-class scenario needs a policy")
            if not isinstance(self.lookahead, Deterministic):
                problems.append("two-class scenario needs lookahead deterministic:<t>")
            if self.arrivals is not None:
                problems.append("scripted arrivals apply only to the single scenario")

        if not problems:
            # Constructing the per-run configs exercises their own checks
            # (gamma ranges, gamma_p > gamma_s, policy parameters).
            try:
                for c in self.capacity_grid:
                    self._build_run_config(c)
            except (ValueError, TypeError) as exc:
                problems.append(str(exc))
        if problems:
            raise ValueError("; ".join(problems))

    def _error_config(self) -> ErrorModelConfig:
        assert isinstance(self.lookahead, Deterministic)
        return ErrorModelConfig(
            gamma=self.gamma,
            alpha_prime=self.alpha_prime,
            alpha_double_prime=self.alpha_double_prime,
            lookahead_t=self.lookahead.t,
        )

    def _build_run_config(self, capacity: int):
        if self.scenario == "single":
            return ScalingConfig(capacity=capacity, gamma=self.gamma)
        if self.scenario == "error":
            return self._error_config()
        return TwoClassConfig(
            capacity=capacity,
            gamma_p=self.gamma_p,
            gamma_s=self.gamma_s,
            primary_lookahead_t=self.lookahead.t,
            policy=self.policy,
        )

    def resolved_warmup(self, capacity: int) -> int:
        if self.warmup is not None:
            return self.warmup
        if self.scenario == "single":
            return 4 * max_lookahead(self.lookahead, capacity)
        return 4 * self.lookahead.t


# --- sweep execution ---------------------------------------------------------


class SweepError(RuntimeError):
    """A replica failed; carries the grid cell for postmortems."""

    def __init__(self, capacity: int, run_index: int, cause: BaseException):
        super().__init__(f"run {run_index} at capacity {capacity} failed: {cause}")
        self.capacity = capacity
        self.run_index = run_index


def run_replica(cfg: ExperimentConfig, capacity: int, run_index: int):
    """One replica; returns (primary stats, secondary stats or None)."""
    seed = derive_run_seed(cfg.base_seed, run_index)
    warmup = cfg.resolved_warmup(capacity)
    total = warmup + cfg.slots_per_run
    if cfg.scenario == "single":
        stats = run_single_class(
            ScalingConfig(capacity=capacity, gamma=cfg.gamma),
            cfg.lookahead,
            total,
            warmup,
            seed,
        )
        return stats, None
    if cfg.scenario == "error":
        stats = run_error_model(cfg._error_config(), capacity, total, warmup, seed)
        return stats, None
    primary, secondary = run_two_class(cfg._build_run_config(capacity), total, warmup, seed)
    return primary, secondary


CSV_COLUMNS = (
    "scenario",
    "capacity",
    "c_log_c",
    "gamma_p",
    "gamma_s",
    "policy",
    "lookahead",
    "runs",
    "slots_per_run",
    "outage_slots_primary",
    "measured_slots",
    "p_hat_primary",
    "ci_low_primary",
    "ci_high_primary",
    "p_hat_secondary",
    "ci_low_secondary",
    "ci_high_secondary",
    "analytic_exact",
    "analytic_log_lower",
    "analytic_log_upper",
    "empirical_diversity",
)


@dataclass(frozen=True)
class SweepRow:
    """One aggregated grid cell; mirrors the CSV schema column for column."""

    scenario: str
    capacity: int
    c_log_c: float
    gamma_p: float | None
    gamma_s: float | None
    policy: str | None
    lookahead: str | None
    runs: int
    slots_per_run: int
    outage_slots_primary: int
    measured_slots: int
    p_hat_primary: float
    ci_low_primary: float
    ci_high_primary: float
    p_hat_secondary: float | None
    ci_low_secondary: float | None
    ci_high_secondary: float | None
    analytic_exact: float | None
    analytic_log_lower: float | None
    analytic_log_upper: float | None
    empirical_diversity: float | None


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]

    def row_for(self, capacity: int) -> SweepRow:
        for row in self.rows:
            if row.capacity == capacity:
                return row
        raise KeyError(f"no row for capacity {capacity}")


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        raw = os.environ.get(WORKERS_ENV_VAR, "1")
        try:
            workers = int(raw)
        except ValueError as exc:
            raise ValueError(f"{WORKERS_ENV_VAR} must be an integer, got {raw!r}") from exc
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    return workers


def analytic_overlay(cfg: ExperimentConfig, capacity: int):
    """(exact, log_lower, log_upper) where a closed form applies, else Nones.

    Single class, zero lookahead: exact Poisson tail plus the factorial lower
    and Chernoff upper exponents.  Single class, fixed positive lookahead:
    the pooled-service sandwich.  Two-class, zero lookahead, SP1: the exact
    secondary denial probability.  Everything else has no closed form here.
    """
    if cfg.scenario == "single" and isinstance(cfg.lookahead, Deterministic):
        if cfg.lookahead.t == 0:
            exact = analysis.exact_nonpredictive_outage(capacity, cfg.gamma)
            try:
                upper = analysis.chernoff_upper_bound(capacity, cfg.gamma)
            except ValueError:
                upper = None
            lower = analysis.factorial_lower_bound(capacity, cfg.gamma)
            return exact, lower, upper
        bounds = analysis.predictive_outage_bounds(capacity, cfg.gamma, cfg.lookahead.t)
        return None, bounds.log_lower, bounds.log_upper
    if (
        cfg.scenario == "two"
        and isinstance(cfg.policy, SP1)
        and isinstance(cfg.lookahead, Deterministic)
        and cfg.lookahead.t == 0
    ):
        return analysis.exact_secondary_outage(capacity, cfg.gamma_p, cfg.gamma_s), None, None
    return None, None, None


def _aggregate(cfg: ExperimentConfig, results: dict) -> SweepResult:
    rows = []
    for ci, capacity in enumerate(cfg.capacity_grid):
        cell = [results[(ci, r)] for r in range(cfg.runs)]
        outage_p = sum(stats.outage_slots for stats, _ in cell)
        measured = sum(stats.slots_simulated for stats, _ in cell)
        p_hat = outage_p / measured
        ci_low, ci_high = confidence_interval(outage_p, measured)

        has_secondary = cfg.scenario == "two"
        if has_secondary:
            outage_s = sum(sec.outage_slots for _, sec in cell)
            p_hat_s = outage_s / measured
            ci_s = confidence_interval(outage_s, measured)
        else:
            p_hat_s = None
            ci_s = (None, None)

        exact, log_lower, log_upper = analytic_overlay(cfg, capacity)

        diversity_p = p_hat_s if has_secondary else p_hat
        if capacity >= 2 and diversity_p:
            emp_div = analysis.empirical_diversity(diversity_p, capacity)
        else:
            emp_div = None

        if cfg.scenario == "single":
            g_p, g_s = cfg.gamma, None
        elif cfg.scenario == "error":
            g_p, g_s = cfg.gamma, None
        else:
            g_p, g_s = cfg.gamma_p, cfg.gamma_s

        rows.append(
            SweepRow(
                scenario=cfg.scenario,
                capacity=capacity,
                c_log_c=capacity * math.log(capacity),
                gamma_p=g_p,
                gamma_s=g_s,
                policy=policy_label(cfg.policy) if cfg.policy is not None else None,
                lookahead=lookahead_label(cfg.lookahead) if cfg.lookahead is not None else None,
                runs=cfg.runs,
                slots_per_run=cfg.slots_per_run,
                outage_slots_primary=outage_p,
                measured_slots=measured,
                p_hat_primary=p_hat,
                ci_low_primary=ci_low,
                ci_high_primary=ci_high,
                p_hat_secondary=p_hat_s,
                ci_low_secondary=ci_s[0],
                ci_high_secondary=ci_s[1],
                analytic_exact=exact,
                analytic_log_lower=log_lower,
                analytic_log_upper=log_upper,
                empirical_diversity=emp_div,
            )
        )
    return SweepResult(rows=tuple(rows))


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> SweepResult:
    """Run the full capacity grid and aggregate per-cell outage statistics.

    ``workers`` > 1 fans replicas out over processes; the aggregation is
    order-independent, so serial and concurrent execution produce identical
    results (and identical CSV bytes).  Defaults to the PROALLOC_WORKERS
    environment variable, then to 1.
    """
    cfg.validate()
    if cfg.arrivals is not None:
        raise ValueError("scripted arrivals apply to 'simulate', not sweeps")
    workers = _resolve_workers(workers)
    jobs = [
        (ci, capacity, r)
        for ci, capacity in enumerate(cfg.capacity_grid)
        for r in range(cfg.runs)
    ]
    results: dict = {}
    if workers == 1:
        for ci, capacity, r in jobs:
            try:
                results[(ci, r)] = run_replica(cfg, capacity, r)
            except Exception as exc:
                raise SweepError(capacity, r, exc) from exc
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(run_replica, cfg, capacity, r): (ci, capacity, r)
                for ci, capacity, r in jobs
            }
            for fut in as_completed(futures):
                ci, capacity, r = futures[fut]
                try:
                    results[(ci, r)] = fut.result()
                except Exception as exc:
                    raise SweepError(capacity, r, exc) from exc
    return _aggregate(cfg, results)


# --- CSV ---------------------------------------------------------------------


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        raise TypeError("boolean cells are not part of the schema")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export_csv(result: SweepResult, destination: str | Path | IO[str]) -> None:
    """Write rows in schema order; floats via repr so loads round-trip exactly."""
    lines = [",".join(CSV_COLUMNS)]
    for row in result.rows:
        lines.append(",".join(_format_cell(getattr(row, col)) for col in CSV_COLUMNS))
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
        return
    path = Path(destination)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


_INT_COLUMNS = {"capacity", "runs", "slots_per_run", "outage_slots_primary", "measured_slots"}
_STR_COLUMNS = {"scenario", "policy", "lookahead"}


def load_csv(source: str | Path | IO[str]) -> SweepResult:
    """Parse a results file produced by :func:`export_csv`."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        path = Path(source)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot read results from {path}: {exc}") from exc
    lines = [ln for ln in text.split("\n") if ln]
    if not lines or tuple(lines[0].split(",")) != CSV_COLUMNS:
        raise ValueError("unrecognized results header")
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(CSV_COLUMNS):
            raise ValueError(f"row has {len(cells)} cells, expected {len(CSV_COLUMNS)}")
        kwargs = {}
        for col, cell in zip(CSV_COLUMNS, cells):
            if cell == "":
                kwargs[col] = None
            elif col in _INT_COLUMNS:
                kwargs[col] = int(cell)
            elif col in _STR_COLUMNS:
                kwargs[col] = cell
            else:
                kwargs[col] = float(cell)
        rows.append(SweepRow(**kwargs))
    return SweepResult(rows=tuple(rows))


# --- config syntax shared by files and the CLI -------------------------------


def lookahead_label(model: LookaheadModel) -> str:
    """Inverse of :func:`parse_lookahead`."""
    if isinstance(model, Deterministic):
        return f"deterministic:{model.t}"
    if isinstance(model, Binomial):
        return f"binomial:{model.tmax}:{model.p:g}"
    if isinstance(model, Uniform):
        return f"uniform:{model.tmin}:{model.tmax}"
    if isinstance(model, Tabulated):
        probs = ",".join(f"{p:g}" for p in model.probs)
        return f"tabulated:{model.tmin}:{probs}"
    if isinstance(model, CapacityScaled):
        return f"scaled:{model.alpha:g}:{model.fallback_t}"
    raise TypeError(f"unknown lookahead model {model!r}")


def parse_lookahead(text: str) -> LookaheadModel:
    """Parse lookahead syntax: deterministic:4, binomial:5:0.5, uniform:0:5,
    tabulated:<tmin>:<p0,p1,...>, scaled:0.5:1."""
    parts = text.strip().split(":")
    kind = parts[0]
    try:
        if kind == "deterministic" and len(parts) == 2:
            return Deterministic(t=int(parts[1]))
        if kind == "binomial" and len(parts) == 3:
            return Binomial(tmax=int(parts[1]), p=float(parts[2]))
        if kind == "uniform" and len(parts) == 3:
            return Uniform(tmin=int(parts[1]), tmax=int(parts[2]))
        if kind == "tabulated" and len(parts) == 3:
            tmin = int(parts[1])
            probs = tuple(float(p) for p in parts[2].split(","))
            return Tabulated(tmin=tmin, tmax=tmin + len(probs) - 1, probs=probs)
        if kind == "scaled" and len(parts) == 3:
            return CapacityScaled(alpha=float(parts[1]), fallback_t=int(parts[2]))
    except ValueError as exc:
        raise ValueError(f"bad lookahead {text!r}: {exc}") from exc
    raise ValueError(
        f"bad lookahead {text!r}: expected deterministic:<t>, binomial:<tmax>:<p>, "
        "uniform:<tmin>:<tmax>, tabulated:<tmin>:<p0,p1,...>, or scaled:<alpha>:<fallback_t>"
    )


def parse_policy(text: str) -> Policy:
    """Parse policy syntax: sp1, sp2:<beta>, sp3:<f>[:floor|ceil]."""
    parts = text.strip().split(":")
    try:
        if parts[0] == "sp1" and len(parts) == 1:
            return SP1()
        if parts[0] == "sp2" and len(parts) == 2:
            return SP2(beta=float(parts[1]))
        if parts[0] == "sp3" and len(parts) == 2:
            return SP3(f=float(parts[1]))
        if parts[0] == "sp3" and len(parts) == 3:
            return SP3(f=float(parts[1]), rounding=parts[2])
    except ValueError as exc:
        raise ValueError(f"bad policy {text!r}: {exc}") from exc
    raise ValueError(
        f"bad policy {text!r}: expected sp1, sp2:<beta>, or sp3:<f>[:floor|ceil]"
    )
