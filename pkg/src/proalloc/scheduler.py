"""Earliest-deadline-first service and the single-class slot engine.

The engine tracks pending requests as counts bucketed by slots-until-deadline,
which is sufficient for outage statistics because requests are unit-size and
EDF only cares about deadlines.  ``RequestQueue`` offers the same discipline
over explicit Request objects for small-scale and scripted scenarios.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .traffic import (
    Deterministic,
    ErrorModelConfig,
    LookaheadModel,
    Request,
    ScalingConfig,
    arrival_rate,
    ensure_rng,
    lookahead_pmf,
    max_lookahead,
    sample_poisson,
)

__all__ = [
    "OutageStats",
    "ServeResult",
    "RequestQueue",
    "run_single_class",
    "run_error_model",
]

# Slots drawn per RNG block.  Purely Poisson streams (deterministic
# lookahead) are invariant to this value because block draws consume
# bit-generator state exactly like repeated scalar draws; paths that
# interleave multinomial splits or a second stream are not, so this is a
# fixed constant of the implementation, not a tuning knob.
BLOCK_SLOTS = 8192


class ServeResult(NamedTuple):
    served: int
    expired: int
    outage: bool


@dataclass
class OutageStats:
    """Counters from one simulation run.

    Request counters cover the whole run (warmup included) so that
    arrived == served + expired + pending_at_end holds exactly.  Slot
    counters cover only the measured window after warmup.
    """

    slots_simulated: int = 0
    outage_slots: int = 0
    requests_arrived: int = 0
    requests_served: int = 0
    requests_expired: int = 0
    pending_at_end: int = 0

    @property
    def outage_fraction(self) -> float:
        if self.slots_simulated == 0:
            return 0.0
        return self.outage_slots / self.slots_simulated

    def check_conservation(self) -> None:
        total = self.requests_served + self.requests_expired + self.pending_at_end
        if total != self.requests_arrived:
            raise AssertionError(
                f"request conservation violated: arrived={self.requests_arrived} "
                f"served+expired+pending={total}"
            )


class RequestQueue:
    """Pending requests ordered by (deadline_slot, id)."""

    def __init__(self, requests: Iterable[Request] = ()):
        self._heap: list[tuple[int, int, Request]] = [
            (r.deadline_slot, r.id, r) for r in requests
        ]
        heapq.heapify(self._heap)

    def __len__(self) -> int:
        return len(self._heap)

    def __iter__(self) -> Iterator[Request]:
        """Yield pending requests in service order without consuming them."""
        return (item[2] for item in sorted(self._heap))

    def enqueue_batch(self, requests: Iterable[Request]) -> None:
        for r in requests:
            if r.deadline_slot < r.arrival_slot:
                raise ValueError(f"request {r.id} has deadline before arrival")
            heapq.heappush(self._heap, (r.deadline_slot, r.id, r))

    def due_count(self, slot: int) -> int:
        """Number of pending requests with deadline_slot <= slot."""
        return sum(1 for d, _, _ in self._heap if d <= slot)

    def serve_slot(self, capacity: int, slot: int) -> ServeResult:
        """Serve up to ``capacity`` requests EDF, then expire what is overdue.

        A request due at ``slot`` can still be served in this call; it
        expires only if it is still pending afterwards.  Outage means at
        least one expiry.
        """
        if capacity < 0:
            raise ValueError(f"capacity must be non-negative, got {capacity}")
        served = 0
        while self._heap and served < capacity:
            heapq.heappop(self._heap)
            served += 1
        expired = 0
        while self._heap and self._heap[0][0] <= slot:
            heapq.heappop(self._heap)
            expired += 1
        return ServeResult(served=served, expired=expired, outage=expired > 0)


# --- count-level engine ------------------------------------------------------


class _BucketState:
    """Pending-request counts keyed by slots remaining until deadline."""

    __slots__ = ("buckets",)

    def __init__(self, tmax: int):
        self.buckets = deque([0] * (tmax + 1))

    def add(self, offset: int, count: int) -> None:
        self.buckets[offset] += count

    def serve_and_advance(self, capacity: int) -> tuple[int, int]:
        """Serve EDF within ``capacity``, expire bucket 0, shift time."""
        served = 0
        remaining = capacity
        for i, pending in enumerate(self.buckets):
            if remaining == 0:
                break
            take = pending if pending <= remaining else remaining
            if take:
                self.buckets[i] = pending - take
                served += take
                remaining -= take
        expired = self.buckets[0]
        self.buckets.popleft()
        self.buckets.append(0)
        return served, expired

    def pending(self) -> int:
        return sum(self.buckets)


def _measured_from(block_start: int, block_len: int, warmup: int) -> int:
    """Index within the block where the measured window begins."""
    return max(0, min(block_len, warmup - block_start))


def _run_t0_blocks(
    capacity: int, rate: float, slots: int, warmup: int, gen: np.random.Generator
) -> OutageStats:
    """Vectorized path for zero lookahead: each slot is independent."""
    stats = OutageStats()
    done = 0
    while done < slots:
        n = min(BLOCK_SLOTS, slots - done)
        counts = sample_poisson(rate, gen, size=n)
        served = np.minimum(counts, capacity)
        expired = counts - served
        stats.requests_arrived += int(counts.sum())
        stats.requests_served += int(served.sum())
        stats.requests_expired += int(expired.sum())
        lo = _measured_from(done, n, warmup)
        if lo < n:
            stats.slots_simulated += n - lo
            stats.outage_slots += int(np.count_nonzero(expired[lo:]))
        done += n
    stats.check_conservation()
    return stats


def _run_buckets(
    capacity: int,
    slots: int,
    warmup: int,
    tmax: int,
    batch_iter: Iterable[tuple[np.ndarray, np.ndarray]],
) -> OutageStats:
    """General engine: consume per-slot (support, counts) arrival batches."""
    stats = OutageStats()
    state = _BucketState(tmax)
    for slot, (support, counts) in enumerate(batch_iter):
        for t, c in zip(support, counts):
            if c:
                state.add(int(t), int(c))
                stats.requests_arrived += int(c)
        served, expired = state.serve_and_advance(capacity)
        stats.requests_served += served
        stats.requests_expired += expired
        if slot >= warmup:
            stats.slots_simulated += 1
            if expired:
                stats.outage_slots += 1
    stats.pending_at_end = state.pending()
    stats.check_conservation()
    return stats


def _poisson_batches(
    model: LookaheadModel,
    capacity: int,
    rate: float,
    slots: int,
    gen: np.random.Generator,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield per-slot (support, counts) batches from block Poisson draws.

    Draw order per block: the totals array, then one multinomial per slot
    with a positive total, in slot order.  Deterministic lookahead skips the
    multinomial; zero rate skips the Poisson draw.  A multinomial split of
    each slot total is distributed identically to per-request PMF draws.
    """
    support, probs = lookahead_pmf(model, capacity)
    deterministic = isinstance(model, Deterministic)
    done = 0
    while done < slots:
        n = min(BLOCK_SLOTS, slots - done)
        totals = sample_poisson(rate, gen, size=n)
        for total in totals:
            total = int(total)
            if deterministic:
                yield support, np.array([total], dtype=np.int64)
            elif total == 0:
                yield support, np.zeros(len(support), dtype=np.int64)
            else:
                yield support, gen.multinomial(total, probs)
        done += n


def _error_model_batches(
    cfg: ErrorModelConfig,
    capacity: int,
    slots: int,
    gen: np.random.Generator,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Per-slot batches for two-stream traffic: predicted drawn, then urgent."""
    rate_pred = float(capacity) ** cfg.gamma_prime
    rate_urgent = float(capacity) ** cfg.gamma_double_prime
    support = np.array([0, cfg.lookahead_t], dtype=np.int64)
    done = 0
    while done < slots:
        n = min(BLOCK_SLOTS, slots - done)
        predicted = sample_poisson(rate_pred, gen, size=n)
        urgent = sample_poisson(rate_urgent, gen, size=n)
        for p, u in zip(predicted, urgent):
            yield support, np.array([int(u), int(p)], dtype=np.int64)
        done += n


def _scripted_batches(
    arrivals: Sequence[int], lookahead_t: int, slots: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    support = np.array([lookahead_t], dtype=np.int64)
    for slot in range(slots):
        n = int(arrivals[slot]) if slot < len(arrivals) else 0
        if n < 0:
            raise ValueError(f"scripted arrival count must be non-negative, got {n}")
        yield support, np.array([n], dtype=np.int64)


def _check_window(slots: int, warmup: int) -> None:
    if slots < 1:
        raise ValueError(f"slots must be positive, got {slots}")
    if warmup < 0 or warmup >= slots:
        raise ValueError(f"warmup must lie in [0, slots), got {warmup} for {slots} slots")


def run_single_class(
    cfg: ScalingConfig,
    model: LookaheadModel,
    slots: int,
    warmup: int,
    rng,
    *,
    rate: float | None = None,
    scripted: Sequence[int] | None = None,
) -> OutageStats:
    """Simulate ``slots`` slots of single-class traffic and count outages.

    The first ``warmup`` slots are simulated but excluded from the outage
    window.  ``rate`` overrides the capacity-scaled arrival rate; ``scripted``
    replaces Poisson arrivals entirely with fixed per-slot counts (requires a
    deterministic lookahead and consumes no randomness; slots beyond the
    script see no arrivals).

    Identical (seed, parameters) reproduce identical counters.  The
    zero-lookahead fast path consumes the same RNG stream as the general
    loop, so the two are exchangeable mid-experiment.
    """
    _check_window(slots, warmup)
    if not isinstance(cfg, ScalingConfig):
        raise TypeError(f"cfg must be a ScalingConfig, got {type(cfg).__name__}")
    capacity = cfg.capacity

    if scripted is not None:
        if not isinstance(model, Deterministic):
            raise ValueError("scripted arrivals require a deterministic lookahead")
        return _run_buckets(
            capacity, slots, warmup, model.t, _scripted_batches(scripted, model.t, slots)
        )

    gen = ensure_rng(rng)
    lam = arrival_rate(cfg) if rate is None else float(rate)
    if isinstance(model, Deterministic) and model.t == 0:
        return _run_t0_blocks(capacity, lam, slots, warmup, gen)
    tmax = max_lookahead(model, capacity)
    return _run_buckets(
        capacity, slots, warmup, tmax, _poisson_batches(model, capacity, lam, slots, gen)
    )


def run_error_model(
    cfg: ErrorModelConfig,
    capacity: int,
    slots: int,
    warmup: int,
    rng,
) -> OutageStats:
    """Simulate single-class traffic under imperfect predictions.

    Predicted requests carry ``cfg.lookahead_t`` slots of notice, urgent ones
    none; both are served EDF from the same capacity.
    """
    _check_window(slots, warmup)
    if capacity < 1:
        raise ValueError(f"capacity must be positive, got {capacity}")
    gen = ensure_rng(rng)
    return _run_buckets(
        capacity, slots, warmup, cfg.lookahead_t, _error_model_batches(cfg, capacity, slots, gen)
    )
