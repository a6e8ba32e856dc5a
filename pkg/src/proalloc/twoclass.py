"""Two-class service: deadline-bound primary traffic plus best-effort traffic.

Primary requests arrive Poisson(C**gamma_p) with a fixed lookahead; secondary
requests arrive Poisson(C**gamma_s) and must be served in their arrival slot
or be denied.  A sharing policy decides how much of the slot's capacity the
primary class may use; whatever it leaves (plus anything it allocated but did
not need) goes to the secondary class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .scheduler import BLOCK_SLOTS, OutageStats, RequestQueue, _BucketState, _measured_from
from .traffic import ensure_rng, sample_poisson

__all__ = [
    "SP1",
    "SP2",
    "SP3",
    "Policy",
    "policy_label",
    "TwoClassConfig",
    "primary_allocation",
    "TwoClassServeResult",
    "serve_two_class_slot",
    "run_two_class",
]


@dataclass(frozen=True)
class SP1:
    """Primary may use the whole slot; secondary gets pure leftovers."""


@dataclass(frozen=True)
class SP2:
    """Withhold floor(C**beta) units from the primary class every slot."""

    beta: float

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must lie in (0, 1), got {self.beta!r}")


@dataclass(frozen=True)
class SP3:
    """Serve what is due plus a fraction f of the not-yet-due backlog.

    Capacity units are integral, so f times the backlog is rounded; "floor"
    (the default) is conservative toward the secondary class, "ceil" toward
    the primary.
    """

    f: float
    rounding: str = "floor"

    def __post_init__(self):
        if not (0.0 <= self.f <= 1.0):
            raise ValueError(f"f must lie in [0, 1], got {self.f!r}")
        if self.rounding not in ("floor", "ceil"):
            raise ValueError(f"rounding must be 'floor' or 'ceil', got {self.rounding!r}")


Policy = Union[SP1, SP2, SP3]


def policy_label(policy: Policy) -> str:
    """Short form used in CSV output and config files (sp1, sp2:0.3, sp3:0.5)."""
    if isinstance(policy, SP1):
        return "sp1"
    if isinstance(policy, SP2):
        return f"sp2:{policy.beta:g}"
    if isinstance(policy, SP3):
        label = f"sp3:{policy.f:g}"
        return label if policy.rounding == "floor" else f"{label}:{policy.rounding}"
    raise TypeError(f"unknown policy {policy!r}")


@dataclass(frozen=True)
class TwoClassConfig:
    """Shared-slot system: primary outranks secondary, gamma_p > gamma_s."""

    capacity: int
    gamma_p: float
    gamma_s: float
    primary_lookahead_t: int
    policy: Policy

    def __post_init__(self):
        if not isinstance(self.capacity, (int, np.integer)) or self.capacity < 1:
            raise ValueError(f"capacity must be a positive integer, got {self.capacity!r}")
        for name, g in (("gamma_p", self.gamma_p), ("gamma_s", self.gamma_s)):
            if not (0.0 <= g <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {g!r}")
        if self.gamma_p <= self.gamma_s:
            raise ValueError(
                f"gamma_p must exceed gamma_s, got {self.gamma_p!r} <= {self.gamma_s!r}"
            )
        if not isinstance(self.primary_lookahead_t, (int, np.integer)) or self.primary_lookahead_t < 0:
            raise ValueError(
                f"primary_lookahead_t must be a non-negative integer, got {self.primary_lookahead_t!r}"
            )
        if not isinstance(self.policy, (SP1, SP2, SP3)):
            raise TypeError(f"policy must be SP1, SP2, or SP3, got {self.policy!r}")

    @property
    def primary_rate(self) -> float:
        return float(self.capacity) ** self.gamma_p

    @property
    def secondary_rate(self) -> float:
        return float(self.capacity) ** self.gamma_s


def primary_allocation(policy: Policy, capacity: int, n_pending: int, n_due: int) -> int:
    """Capacity the primary class may consume this slot.

    SP1 offers everything.  SP2 always withholds floor(C**beta) units.  SP3
    offers what is due now plus a fraction f of the backlog that is not yet
    due, never more than C.  The allocation is a cap on primary service, not
    a reservation: unused units still flow to the secondary class.
    """
    if capacity < 1:
        raise ValueError(f"capacity must be positive, got {capacity}")
    if n_due < 0 or n_pending < n_due:
        raise ValueError(f"need 0 <= n_due <= n_pending, got due={n_due} pending={n_pending}")
    if isinstance(policy, SP1):
        return capacity
    if isinstance(policy, SP2):
        withheld = math.floor(float(capacity) ** policy.beta)
        return max(0, capacity - withheld)
    if isinstance(policy, SP3):
        rounder = math.floor if policy.rounding == "floor" else math.ceil
        return min(capacity, n_due + rounder(policy.f * (n_pending - n_due)))
    raise TypeError(f"unknown policy {policy!r}")


class TwoClassServeResult(NamedTuple):
    primary_served: int
    primary_expired: int
    primary_outage: bool
    secondary_served: int
    secondary_outage: bool


def serve_two_class_slot(
    primary_queue: RequestQueue,
    secondary_count: int,
    policy: Policy,
    capacity: int,
    slot: int,
) -> TwoClassServeResult:
    """Serve one slot: primary EDF within its allocation, secondary after.

    Secondary requests have no deadline slack; any that do not fit into the
    leftover capacity are denied, and a slot with at least one denial counts
    as a secondary outage.
    """
    if secondary_count < 0:
        raise ValueError(f"secondary_count must be non-negative, got {secondary_count}")
    n_pending = len(primary_queue)
    n_due = primary_queue.due_count(slot)
    allocation = primary_allocation(policy, capacity, n_pending, n_due)
    served, expired, outage = primary_queue.serve_slot(allocation, slot)
    leftover = capacity - served
    secondary_served = min(secondary_count, leftover)
    return TwoClassServeResult(
        primary_served=served,
        primary_expired=expired,
        primary_outage=outage,
        secondary_served=secondary_served,
        secondary_outage=secondary_served < secondary_count,
    )


def _run_two_class_t0(
    cfg: TwoClassConfig, slots: int, warmup: int, gen, primary_rate: float, secondary_rate: float
) -> tuple[OutageStats, OutageStats]:
    """Vectorized path for primary lookahead 0: slots are independent."""
    primary = OutageStats()
    secondary = OutageStats()
    capacity = cfg.capacity
    if isinstance(cfg.policy, SP2):
        allocation = max(0, capacity - math.floor(float(capacity) ** cfg.policy.beta))
    else:
        # With zero lookahead everything pending is due, so SP3's backlog
        # fraction vanishes and its cap min(C, due) serves exactly like SP1.
        allocation = capacity
    done = 0
    while done < slots:
        n = min(BLOCK_SLOTS, slots - done)
        p_counts = sample_poisson(primary_rate, gen, size=n)
        s_counts = sample_poisson(secondary_rate, gen, size=n)
        p_served = np.minimum(p_counts, allocation)
        p_expired = p_counts - p_served
        leftover = capacity - p_served
        s_served = np.minimum(s_counts, leftover)
        s_denied = s_counts - s_served
        primary.requests_arrived += int(p_counts.sum())
        primary.requests_served += int(p_served.sum())
        primary.requests_expired += int(p_expired.sum())
        secondary.requests_arrived += int(s_counts.sum())
        secondary.requests_served += int(s_served.sum())
        secondary.requests_expired += int(s_denied.sum())
        lo = _measured_from(done, n, warmup)
        if lo < n:
            measured = n - lo
            primary.slots_simulated += measured
            secondary.slots_simulated += measured
            primary.outage_slots += int(np.count_nonzero(p_expired[lo:]))
            secondary.outage_slots += int(np.count_nonzero(s_denied[lo:]))
        done += n
    primary.check_conservation()
    secondary.check_conservation()
    return primary, secondary


def run_two_class(
    cfg: TwoClassConfig,
    slots: int,
    warmup: int,
    rng,
    *,
    primary_rate: float | None = None,
    secondary_rate: float | None = None,
) -> tuple[OutageStats, OutageStats]:
    """Simulate the shared system; returns (primary, secondary) counters.

    Per slot: primary arrivals are drawn, then secondary arrivals; primary is
    served EDF within its policy allocation; the secondary class uses the
    leftover capacity in the same slot.  Secondary denials count into
    ``requests_expired``.  Rate overrides exist for off-scaling experiments.

    The RNG stream order (primary block, then secondary block) matches the
    zero-lookahead fast path, so counters are reproducible from the seed
    alone for any (policy, lookahead) combination.
    """
    if slots < 1:
        raise ValueError(f"slots must be positive, got {slots}")
    if warmup < 0 or warmup >= slots:
        raise ValueError(f"warmup must lie in [0, slots), got {warmup} for {slots} slots")
    gen = ensure_rng(rng)
    p_rate = cfg.primary_rate if primary_rate is None else float(primary_rate)
    s_rate = cfg.secondary_rate if secondary_rate is None else float(secondary_rate)
    t = cfg.primary_lookahead_t
    if t == 0:
        return _run_two_class_t0(cfg, slots, warmup, gen, p_rate, s_rate)

    capacity = cfg.capacity
    policy = cfg.policy
    primary = OutageStats()
    secondary = OutageStats()
    state = _BucketState(t)
    done = 0
    while done < slots:
        n = min(BLOCK_SLOTS, slots - done)
        p_counts = sample_poisson(p_rate, gen, size=n)
        s_counts = sample_poisson(s_rate, gen, size=n)
        for i in range(n):
            slot = done + i
            arrivals = int(p_counts[i])
            if arrivals:
                state.add(t, arrivals)
                primary.requests_arrived += arrivals
            pending = state.pending()
            due = state.buckets[0]
            allocation = primary_allocation(policy, capacity, pending, due)
            served, expired = state.serve_and_advance(allocation)
            primary.requests_served += served
            primary.requests_expired += expired
            s_arrived = int(s_counts[i])
            leftover = capacity - served
            s_served = s_arrived if s_arrived <= leftover else leftover
            s_denied = s_arrived - s_served
            secondary.requests_arrived += s_arrived
            secondary.requests_served += s_served
            secondary.requests_expired += s_denied
            if slot >= warmup:
                primary.slots_simulated += 1
                secondary.slots_simulated += 1
                if expired:
                    primary.outage_slots += 1
                if s_denied:
                    secondary.outage_slots += 1
        done += n
    primary.pending_at_end = state.pending()
    primary.check_conservation()
    secondary.check_conservation()
    return primary, secondary
