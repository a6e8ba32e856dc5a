"""Independent object-level reference simulators for engine cross-checks.

These rebuild each slot from explicit Request objects and the public queue
API, so an agreement test against the count-level engines exercises the
whole service discipline, not a shared code path.
"""

from proalloc.scheduler import RequestQueue
from proalloc.traffic import Request
from proalloc.twoclass import serve_two_class_slot


def reference_single_class(capacity, batches, warmup):
    """Serve explicit per-slot (support, counts) arrival batches EDF.

    Returns a dict of counters comparable with OutageStats fields.
    """
    queue = RequestQueue()
    next_id = 0
    arrived = served = expired = 0
    measured = outages = 0
    for slot, (support, counts) in enumerate(batches):
        fresh = []
        for t, c in zip(support, counts):
            for _ in range(int(c)):
                fresh.append(
                    Request(
                        id=next_id,
                        klass="primary",
                        arrival_slot=slot,
                        deadline_slot=slot + int(t),
                    )
                )
                next_id += 1
        queue.enqueue_batch(fresh)
        arrived += len(fresh)
        result = queue.serve_slot(capacity, slot)
        served += result.served
        expired += result.expired
        if slot >= warmup:
            measured += 1
            outages += bool(result.outage)
    return {
        "requests_arrived": arrived,
        "requests_served": served,
        "requests_expired": expired,
        "pending_at_end": len(queue),
        "slots_simulated": measured,
        "outage_slots": outages,
    }


def reference_two_class(cfg, primary_counts, secondary_counts, warmup):
    """Two-class slot loop over pre-drawn arrival counts.

    Returns (primary, secondary) counter dicts.
    """
    queue = RequestQueue()
    next_id = 0
    pri = {"requests_arrived": 0, "requests_served": 0, "requests_expired": 0,
           "slots_simulated": 0, "outage_slots": 0}
    sec = {"requests_arrived": 0, "requests_served": 0, "requests_expired": 0,
           "slots_simulated": 0, "outage_slots": 0}
    t = cfg.primary_lookahead_t
    for slot, (p_n, s_n) in enumerate(zip(primary_counts, secondary_counts)):
        fresh = [
            Request(id=next_id + i, klass="primary", arrival_slot=slot, deadline_slot=slot + t)
            for i in range(int(p_n))
        ]
        next_id += int(p_n)
        queue.enqueue_batch(fresh)
        pri["requests_arrived"] += int(p_n)
        result = serve_two_class_slot(queue, int(s_n), cfg.policy, cfg.capacity, slot)
        pri["requests_served"] += result.primary_served
        pri["requests_expired"] += result.primary_expired
        sec["requests_arrived"] += int(s_n)
        sec["requests_served"] += result.secondary_served
        sec["requests_expired"] += int(s_n) - result.secondary_served
        if slot >= warmup:
            pri["slots_simulated"] += 1
            sec["slots_simulated"] += 1
            pri["outage_slots"] += bool(result.primary_outage)
            sec["outage_slots"] += bool(result.secondary_outage)
    pri["pending_at_end"] = len(queue)
    sec["pending_at_end"] = 0
    return pri, sec


def stats_dict(stats):
    """OutageStats as a plain dict for comparison with the references."""
    return {
        "requests_arrived": stats.requests_arrived,
        "requests_served": stats.requests_served,
        "requests_expired": stats.requests_expired,
        "pending_at_end": stats.pending_at_end,
        "slots_simulated": stats.slots_simulated,
        "outage_slots": stats.outage_slots,
    }
