"""Command-line front end.

Three commands share one config-file format (``key = value`` lines):

  simulate   run the configuration and print per-capacity counters
  analyze    print closed-form probabilities, bounds, and diversity gains
  sweep      run the full grid and emit the results CSV

Exit status: 0 on success, 1 on runtime failure, 2 on a configuration
problem (unreadable file, bad syntax, inconsistent values).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis
from .harness import (
    DEFAULT_BASE_SEED,
    ExperimentConfig,
    analytic_overlay,
    export_csv,
    lookahead_label,
    parse_lookahead,
    parse_policy,
    run_replica,
    run_sweep,
)
from .traffic import Deterministic
from .twoclass import SP3, policy_label

__all__ = ["ConfigError", "parse_config", "main"]


class ConfigError(Exception):
    """Configuration file or value problem; maps to exit status 2."""


_SCENARIO_ALIASES = {
    "single": "single",
    "single_class": "single",
    "error": "error",
    "error_model": "error",
    "two": "two",
    "two_class": "two",
}

_KNOWN_KEYS = (
    "scenario",
    "capacity_grid",
    "gamma",
    "gamma_p",
    "gamma_s",
    "lookahead",
    "alpha_prime",
    "alpha_double_prime",
    "policy",
    "slots",
    "runs",
    "warmup",
    "seed",
    "arrivals",
)


def _parse_int_tuple(value: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in value.split(",") if part.strip())


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines into an ExperimentConfig.

    Blank lines and ``#`` comments are ignored.  Unknown keys, duplicate
    keys, and unparsable values raise ConfigError with the line number;
    semantic validation happens later via ExperimentConfig.validate.
    """
    entries: dict[str, tuple[int, str]] = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        entries[key] = (lineno, value)

    if "scenario" not in entries:
        raise ConfigError("missing required key 'scenario'")
    if "capacity_grid" not in entries:
        raise ConfigError("missing required key 'capacity_grid'")

    def take(key: str, convert, default=None):
        if key not in entries:
            return default
        lineno, value = entries[key]
        try:
            return convert(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc

    scenario_raw = entries["scenario"][1]
    scenario = _SCENARIO_ALIASES.get(scenario_raw)
    if scenario is None:
        lineno = entries["scenario"][0]
        raise ConfigError(
            f"line {lineno}: unknown scenario {scenario_raw!r} "
            f"(expected one of {sorted(set(_SCENARIO_ALIASES))})"
        )

    return ExperimentConfig(
        scenario=scenario,
        capacity_grid=take("capacity_grid", _parse_int_tuple),
        gamma=take("gamma", float),
        gamma_p=take("gamma_p", float),
        gamma_s=take("gamma_s", float),
        lookahead=take("lookahead", parse_lookahead),
        alpha_prime=take("alpha_prime", float),
        alpha_double_prime=take("alpha_double_prime", float),
        policy=take("policy", parse_policy),
        slots_per_run=take("slots", int, 1000),
        runs=take("runs", int, 100),
        warmup=take("warmup", int),
        base_seed=take("seed", int, DEFAULT_BASE_SEED),
        arrivals=take("arrivals", _parse_int_tuple),
    )


def _load_config(args) -> ExperimentConfig:
    path = Path(args.config)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if getattr(args, "runs", None) is not None:
        cfg = replace(cfg, runs=args.runs)
    if getattr(args, "slots", None) is not None:
        cfg = replace(cfg, slots_per_run=args.slots)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _emit(lines: list[str], out_path: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        Path(out_path).write_text(text, encoding="utf-8")


# --- simulate ----------------------------------------------------------------


def _merge_stats(parts):
    from .scheduler import OutageStats

    total = OutageStats()
    for s in parts:
        total.slots_simulated += s.slots_simulated
        total.outage_slots += s.outage_slots
        total.requests_arrived += s.requests_arrived
        total.requests_served += s.requests_served
        total.requests_expired += s.requests_expired
        total.pending_at_end += s.pending_at_end
    return total


def _cmd_simulate(cfg: ExperimentConfig, args) -> int:
    lines = []
    scripted = cfg.arrivals is not None
    runs = 1 if scripted else cfg.runs
    for capacity in cfg.capacity_grid:
        if scripted:
            from .scheduler import run_single_class
            from .traffic import ScalingConfig

            warmup = cfg.resolved_warmup(capacity)
            stats = run_single_class(
                ScalingConfig(capacity=capacity, gamma=cfg.gamma),
                cfg.lookahead,
                warmup + cfg.slots_per_run,
                warmup,
                rng=0,
                scripted=cfg.arrivals,
            )
            primary, secondary = stats, None
        else:
            replicas = [run_replica(cfg, capacity, r) for r in range(runs)]
            primary = _merge_stats(p for p, _ in replicas)
            secondary = (
                _merge_stats(s for _, s in replicas) if cfg.scenario == "two" else None
            )
        parts = [
            f"scenario={cfg.scenario}",
            f"capacity={capacity}",
            f"runs={runs}",
            f"measured_slots={primary.slots_simulated}",
            f"outage_slots={primary.outage_slots}",
            f"outage_fraction={primary.outage_fraction!r}",
            f"arrived={primary.requests_arrived}",
            f"served={primary.requests_served}",
            f"expired={primary.requests_expired}",
        ]
        if secondary is not None:
            parts.extend(
                [
                    f"secondary_outage_slots={secondary.outage_slots}",
                    f"secondary_outage_fraction={secondary.outage_fraction!r}",
                    f"secondary_arrived={secondary.requests_arrived}",
                    f"secondary_served={secondary.requests_served}",
                    f"secondary_denied={secondary.requests_expired}",
                ]
            )
        lines.append(" ".join(parts))
    _emit(lines, args.out)
    return 0


# --- analyze -----------------------------------------------------------------


def _analyze_lines(cfg: ExperimentConfig) -> list[str]:
    lines = [f"scenario = {cfg.scenario}"]
    per_capacity_keys = ("analytic_exact", "analytic_log_lower", "analytic_log_upper")

    if cfg.scenario == "single":
        lines.append(f"gamma = {cfg.gamma!r}")
        lines.append(f"lookahead = {lookahead_label(cfg.lookahead)}")
        if isinstance(cfg.lookahead, Deterministic):
            d = analysis.diversity_deterministic(cfg.gamma, cfg.lookahead.t)
            lines.append(f"diversity = {d!r}")
        else:
            result = analysis.diversity_random_t(cfg.gamma, cfg.lookahead)
            lines.append(f"diversity = {result.value!r}")
            lines.append(f"regime = {result.regime}")
    elif cfg.scenario == "error":
        t = cfg.lookahead.t
        lines.append(f"gamma = {cfg.gamma!r}")
        lines.append(f"alpha_prime = {cfg.alpha_prime!r}")
        lines.append(f"alpha_double_prime = {cfg.alpha_double_prime!r}")
        lines.append(f"lookahead = {lookahead_label(cfg.lookahead)}")
        result = analysis.diversity_with_errors(
            cfg.gamma, cfg.alpha_prime, cfg.alpha_double_prime, t
        )
        lines.append(f"diversity = {result.value!r}")
        lines.append(f"regime = {result.regime}")
        improves = analysis.improves_on_nonpredictive(
            cfg.gamma, cfg.alpha_prime, cfg.alpha_double_prime, t
        )
        lines.append(f"improves_on_nonpredictive = {improves}")
        try:
            opt = analysis.optimal_lookahead(cfg.gamma, cfg.alpha_prime, cfg.alpha_double_prime)
        except ValueError as exc:
            lines.append(f"t_star_note = {exc}")
        else:
            lines.append(f"t_star = {opt.t_star!r}")
            lines.append(f"t_star_feasible = {opt.feasible}")
    else:
        t = cfg.lookahead.t
        lines.append(f"gamma_p = {cfg.gamma_p!r}")
        lines.append(f"gamma_s = {cfg.gamma_s!r}")
        lines.append(f"policy = {policy_label(cfg.policy)}")
        lines.append(f"lookahead = {lookahead_label(cfg.lookahead)}")
        # SP3 with f = 0 serves primaries only at their deadline, which
        # forfeits the lookahead; every other policy keeps the full gain.
        if isinstance(cfg.policy, SP3) and cfg.policy.f == 0.0:
            primary_d = 1.0 - cfg.gamma_p
        else:
            primary_d = analysis.diversity_deterministic(cfg.gamma_p, t)
        lines.append(f"primary_diversity = {primary_d!r}")
        lines.append(
            f"secondary_diversity = {analysis.diversity_secondary_nonpredictive(cfg.gamma_p)!r}"
        )

    for capacity in cfg.capacity_grid:
        values = analytic_overlay(cfg, capacity)
        if all(v is None for v in values):
            continue
        lines.append("")
        lines.append(f"capacity = {capacity}")
        for key, value in zip(per_capacity_keys, values):
            if value is not None:
                lines.append(f"{key} = {value!r}")
    return lines


def _cmd_analyze(cfg: ExperimentConfig, args) -> int:
    _emit(_analyze_lines(cfg), args.out)
    return 0


# --- sweep -------------------------------------------------------------------


def _cmd_sweep(cfg: ExperimentConfig, args) -> int:
    result = run_sweep(cfg)
    if args.out is None:
        export_csv(result, sys.stdout)
    else:
        export_csv(result, args.out)
    return 0


# --- entry point -------------------------------------------------------------


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proalloc",
        description="Outage simulation and analysis for prediction-based allocation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_run_opts: bool):
        p.add_argument("config", help="experiment config file (key = value lines)")
        p.add_argument("--out", default=None, help="write output to this file instead of stdout")
        if with_run_opts:
            p.add_argument("--seed", type=int, default=None, help="override the base seed")
            p.add_argument(
                "--runs", type=_positive_int, default=None, help="override the run count"
            )
            p.add_argument(
                "--slots",
                type=_positive_int,
                default=None,
                help="override measured slots per run",
            )

    p_sim = sub.add_parser("simulate", help="run the configuration and print counters")
    add_common(p_sim, with_run_opts=True)
    p_sim.set_defaults(func=_cmd_simulate)

    p_ana = sub.add_parser("analyze", help="print closed-form values, no simulation")
    add_common(p_ana, with_run_opts=False)
    p_ana.set_defaults(func=_cmd_analyze)

    p_sweep = sub.add_parser("sweep", help="run the capacity grid and emit CSV")
    add_common(p_sweep, with_run_opts=True)
    p_sweep.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(cfg, args)
    except Exception as exc:  # runtime failures map to status 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
