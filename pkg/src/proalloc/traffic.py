"""Arrival and lookahead generation for the slotted allocation simulator.

Traffic is Poisson per slot with a rate tied to the service capacity C
through a scaling exponent gamma: rate = C**gamma.  Each request carries a
lookahead T (slots of advance notice), so a request arriving in slot n is
due at slot n + T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "ScalingConfig",
    "ErrorModelConfig",
    "Request",
    "Deterministic",
    "Tabulated",
    "Binomial",
    "Uniform",
    "CapacityScaled",
    "LookaheadModel",
    "arrival_rate",
    "lookahead_pmf",
    "max_lookahead",
    "ensure_rng",
    "sample_poisson",
    "sample_lookahead",
    "sample_lookahead_counts",
    "sample_error_model_counts",
    "generate_slot",
    "generate_error_model_slot",
    "validate_error_config",
]


@dataclass(frozen=True)
class ScalingConfig:
    """Capacity and the exponent coupling arrival rate to capacity."""

    capacity: int
    gamma: float

    def __post_init__(self):
        if not isinstance(self.capacity, (int, np.integer)) or self.capacity < 1:
            raise ValueError(f"capacity must be a positive integer, got {self.capacity!r}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma!r}")


@dataclass(frozen=True)
class ErrorModelConfig:
    """Imperfect-prediction traffic: a predicted stream plus an urgent stream.

    The predicted stream has rate C**(alpha_prime * gamma) and lookahead
    ``lookahead_t``; the urgent stream has rate C**(alpha_double_prime * gamma)
    and lookahead 0.  alpha_prime inflates the predicted load (false alarms),
    alpha_double_prime sizes the unpredicted remainder (misses).
    """

    gamma: float
    alpha_prime: float
    alpha_double_prime: float
    lookahead_t: int

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma!r}")
        if self.alpha_prime < 0.0 or self.alpha_double_prime < 0.0:
            raise ValueError("alpha exponents must be non-negative")
        if not isinstance(self.lookahead_t, (int, np.integer)) or self.lookahead_t < 0:
            raise ValueError(f"lookahead_t must be a non-negative integer, got {self.lookahead_t!r}")

    @property
    def gamma_prime(self) -> float:
        return self.alpha_prime * self.gamma

    @property
    def gamma_double_prime(self) -> float:
        return self.alpha_double_prime * self.gamma


def validate_error_config(cfg: ErrorModelConfig, capacity: int) -> list[str]:
    """Return human-readable violations of the error-model constraints.

    Checks, at the given capacity: the urgent stream must not exceed the
    perfect-prediction load (gamma'' <= gamma), and the two streams together
    must cover it (C**gamma' + C**gamma'' >= C**gamma).  Empty list means the
    configuration is admissible.
    """
    problems = []
    if cfg.gamma_double_prime > cfg.gamma:
        problems.append(
            f"urgent-stream exponent {cfg.gamma_double_prime:g} exceeds gamma={cfg.gamma:g}"
        )
    covered = capacity**cfg.gamma_prime + capacity**cfg.gamma_double_prime
    demand = capacity**cfg.gamma
    if covered < demand:
        problems.append(
            f"stream rates sum to {covered:g} < required load {demand:g} at capacity {capacity}"
        )
    return problems


@dataclass(frozen=True)
class Request:
    """A unit-resource request; ``klass`` is 'primary' or 'secondary'."""

    id: int
    klass: str
    arrival_slot: int
    deadline_slot: int

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("id must be non-negative")
        if self.klass not in ("primary", "secondary"):
            raise ValueError(f"klass must be 'primary' or 'secondary', got {self.klass!r}")
        if self.deadline_slot < self.arrival_slot:
            raise ValueError(
                f"deadline_slot {self.deadline_slot} precedes arrival_slot {self.arrival_slot}"
            )


# --- lookahead models -------------------------------------------------------


@dataclass(frozen=True)
class Deterministic:
    """Every request arrives exactly ``t`` slots ahead of its deadline."""

    t: int

    def __post_init__(self):
        if not isinstance(self.t, (int, np.integer)) or self.t < 0:
            raise ValueError(f"t must be a non-negative integer, got {self.t!r}")


@dataclass(frozen=True)
class Tabulated:
    """Explicit lookahead PMF on the integer support tmin..tmax."""

    tmin: int
    tmax: int
    probs: tuple[float, ...]

    def __post_init__(self):
        if self.tmin < 0 or self.tmax < self.tmin:
            raise ValueError(f"need 0 <= tmin <= tmax, got {self.tmin}..{self.tmax}")
        if len(self.probs) != self.tmax - self.tmin + 1:
            raise ValueError(
                f"probs has {len(self.probs)} entries for support of size {self.tmax - self.tmin + 1}"
            )
        if any(p < 0.0 for p in self.probs):
            raise ValueError("probabilities must be non-negative")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total!r}, expected 1 within 1e-12")


@dataclass(frozen=True)
class Binomial:
    """Lookahead distributed Binomial(tmax, p) on 0..tmax."""

    tmax: int
    p: float

    def __post_init__(self):
        if not isinstance(self.tmax, (int, np.integer)) or self.tmax < 0:
            raise ValueError(f"tmax must be a non-negative integer, got {self.tmax!r}")
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"p must lie in [0, 1], got {self.p!r}")


@dataclass(frozen=True)
class Uniform:
    """Lookahead uniform on the integers tmin..tmax."""

    tmin: int
    tmax: int

    def __post_init__(self):
        if self.tmin < 0 or self.tmax < self.tmin:
            raise ValueError(f"need 0 <= tmin <= tmax, got {self.tmin}..{self.tmax}")


@dataclass(frozen=True)
class CapacityScaled:
    """Two-point lookahead whose zero-lookahead mass shrinks with capacity.

    Pr(T = 0) = C**-alpha (clamped to [0, 1]); the rest of the mass sits at
    ``fallback_t``.  Models prediction quality that improves as the system
    scales.
    """

    alpha: float
    fallback_t: int = 1

    def __post_init__(self):
        if self.alpha <= 0.0 or not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha!r}")
        if not isinstance(self.fallback_t, (int, np.integer)) or self.fallback_t < 1:
            raise ValueError(f"fallback_t must be a positive integer, got {self.fallback_t!r}")


LookaheadModel = Union[Deterministic, Tabulated, Binomial, Uniform, CapacityScaled]


def arrival_rate(cfg: ScalingConfig) -> float:
    """Poisson mean per slot: capacity**gamma."""
    return float(cfg.capacity) ** cfg.gamma


def lookahead_pmf(model: LookaheadModel, capacity: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (support, probs) for the model's lookahead distribution.

    ``capacity`` only matters for CapacityScaled; the other models ignore it.
    """
    if isinstance(model, Deterministic):
        return np.array([model.t], dtype=np.int64), np.array([1.0])
    if isinstance(model, Tabulated):
        support = np.arange(model.tmin, model.tmax + 1, dtype=np.int64)
        return support, np.asarray(model.probs, dtype=np.float64)
    if isinstance(model, Binomial):
        support = np.arange(0, model.tmax + 1, dtype=np.int64)
        probs = np.array(
            [
                math.comb(model.tmax, k) * model.p**k * (1.0 - model.p) ** (model.tmax - k)
                for k in support
            ]
        )
        return support, probs
    if isinstance(model, Uniform):
        support = np.arange(model.tmin, model.tmax + 1, dtype=np.int64)
        n = len(support)
        return support, np.full(n, 1.0 / n)
    if isinstance(model, CapacityScaled):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        p0 = min(1.0, float(capacity) ** -model.alpha)
        return (
            np.array([0, model.fallback_t], dtype=np.int64),
            np.array([p0, 1.0 - p0]),
        )
    raise TypeError(f"unknown lookahead model {model!r}")


def max_lookahead(model: LookaheadModel, capacity: int = 1) -> int:
    """Largest lookahead the model can produce (buffer sizing)."""
    support, _ = lookahead_pmf(model, capacity)
    return int(support[-1])


def ensure_rng(rng) -> np.random.Generator:
    """Coerce a seed or Generator into a Generator (PCG64 for seeds)."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_poisson(rate: float, rng, size=None):
    """Draw Poisson counts with the given mean.

    Delegates to numpy's Generator.poisson, which is exact in distribution
    over the full mean range used here (inversion by multiplication for small
    means, the PTRS transformed-rejection sampler for means >= 10).  A rate of
    exactly zero returns zeros without consuming generator state.

    Returns a Python int when size is None, else an int64 array.
    """
    if not math.isfinite(rate) or rate < 0.0:
        raise ValueError(f"rate must be finite and non-negative, got {rate!r}")
    gen = ensure_rng(rng)
    if rate == 0.0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    if size is None:
        return int(gen.poisson(rate))
    return gen.poisson(rate, size=size).astype(np.int64, copy=False)


def sample_lookahead(model: LookaheadModel, capacity: int, rng, size=None):
    """Draw lookahead values from the model's PMF at the given capacity.

    Deterministic models short-circuit without consuming generator state.
    Random models consume one uniform per draw (inverse-CDF lookup), so two
    runs with equal seeds and equal draw counts stay aligned.
    """
    if isinstance(model, Deterministic):
        if size is None:
            return model.t
        return np.full(size, model.t, dtype=np.int64)
    support, probs = lookahead_pmf(model, capacity)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0  # guard float round-off at the top bin
    gen = ensure_rng(rng)
    u = gen.random() if size is None else gen.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, len(support) - 1)
    if size is None:
        return int(support[idx])
    return support[idx]


def sample_lookahead_counts(model: LookaheadModel, capacity: int, total: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Split ``total`` simultaneous arrivals across lookahead values.

    Returns (support, counts).  Uses a single multinomial draw, which is
    distributed identically to ``total`` independent PMF draws; the engine
    relies on that equivalence to process arrivals in bulk.  Zero totals
    consume no generator state.
    """
    support, probs = lookahead_pmf(model, capacity)
    if total < 0:
        raise ValueError(f"total must be non-negative, got {total}")
    if isinstance(model, Deterministic):
        return support, np.array([total], dtype=np.int64)
    if total == 0:
        return support, np.zeros(len(support), dtype=np.int64)
    gen = ensure_rng(rng)
    counts = gen.multinomial(total, probs)
    return support, counts.astype(np.int64, copy=False)


def sample_error_model_counts(cfg: ErrorModelConfig, capacity: int, rng, size=None):
    """Draw (predicted, urgent) Poisson counts for one slot or a batch.

    The predicted stream is drawn first, then the urgent stream, so callers
    that interleave per-slot draws and callers that draw blocks stay on the
    same stream as long as they keep that order.
    """
    gen = ensure_rng(rng)
    rate_pred = float(capacity) ** cfg.gamma_prime
    rate_urgent = float(capacity) ** cfg.gamma_double_prime
    predicted = sample_poisson(rate_pred, gen, size=size)
    urgent = sample_poisson(rate_urgent, gen, size=size)
    return predicted, urgent


def generate_slot(
    cfg: ScalingConfig,
    model: LookaheadModel,
    slot: int,
    rng,
    *,
    rate: float | None = None,
    next_id: int = 0,
) -> list[Request]:
    """Generate the primary requests arriving in one slot.

    ``rate`` overrides the capacity-scaled arrival rate when given (used for
    scripted or off-scaling experiments).  Request ids start at ``next_id``
    and increase in draw order.
    """
    gen = ensure_rng(rng)
    lam = arrival_rate(cfg) if rate is None else rate
    n = sample_poisson(lam, gen)
    if n == 0:
        return []
    lookaheads = sample_lookahead(model, cfg.capacity, gen, size=n)
    return [
        Request(id=next_id + i, klass="primary", arrival_slot=slot, deadline_slot=slot + int(t))
        for i, t in enumerate(np.atleast_1d(lookaheads))
    ]


def generate_error_model_slot(
    cfg: ErrorModelConfig,
    capacity: int,
    slot: int,
    rng,
    *,
    next_id: int = 0,
) -> list[Request]:
    """Generate one slot of imperfect-prediction traffic.

    Predicted requests get deadline slot + lookahead_t, urgent ones are due
    immediately.  Predicted requests take the lower ids.
    """
    gen = ensure_rng(rng)
    predicted, urgent = sample_error_model_counts(cfg, capacity, gen)
    out = [
        Request(id=next_id + i, klass="primary", arrival_slot=slot, deadline_slot=slot + cfg.lookahead_t)
        for i in range(predicted)
    ]
    out.extend(
        Request(id=next_id + predicted + i, klass="primary", arrival_slot=slot, deadline_slot=slot)
        for i in range(urgent)
    )
    return out
