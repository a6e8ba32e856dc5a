"""Closed-form outage probabilities, bounds, and diversity exponents.

All logarithms are natural.  Probabilities are computed in the log domain
(log-sum-exp over Poisson terms with certified geometric-majorant
truncation) and exposed both as logs and as linear values; linear values
below exp(-700) flush to 0.0 rather than raising underflow surprises.

The diversity exponent of an outage curve P(C) is -log P / (C log C) in the
large-capacity limit; the closed forms here give that limit for each traffic
and lookahead regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .traffic import (
    Binomial,
    CapacityScaled,
    Deterministic,
    LookaheadModel,
    Tabulated,
    Uniform,
)

__all__ = [
    "poisson_tail_log",
    "poisson_tail",
    "exact_nonpredictive_outage",
    "exact_nonpredictive_outage_log",
    "chernoff_upper_bound",
    "factorial_lower_bound",
    "SandwichBounds",
    "predictive_outage_bounds",
    "diversity_deterministic",
    "DiversityResult",
    "diversity_random_t",
    "diversity_with_errors",
    "improves_on_nonpredictive",
    "OptimalLookahead",
    "optimal_lookahead",
    "exact_secondary_outage",
    "exact_secondary_outage_log",
    "diversity_secondary_nonpredictive",
    "empirical_diversity",
]

# Linear probabilities below this log flush to exactly 0.0.
_LOG_FLUSH = -700.0

# Relative truncation for internal tail sums; well under float64 resolution.
_SUM_TOL = 1e-18


def _linear(log_p: float) -> float:
    if log_p < _LOG_FLUSH:
        return 0.0
    return math.exp(log_p)


def _check_rate(rate: float) -> float:
    rate = float(rate)
    if not math.isfinite(rate) or rate < 0.0:
        raise ValueError(f"rate must be finite and non-negative, got {rate!r}")
    return rate


def _check_count(value, name: str) -> int:
    if isinstance(value, bool) or value != int(value):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")
    return value


def _log_poisson_pmf(k: int, rate: float, log_rate: float) -> float:
    return k * log_rate - rate - math.lgamma(k + 1)


def poisson_tail_log(rate: float, threshold) -> float:
    """log Pr(Poisson(rate) > threshold), accurate over the full range.

    Sums on whichever side of the mode is shorter: below the mean it sums
    the CDF downward from ``threshold`` and complements through log1p, above
    it sums the upper tail directly.  Each sum starts at its largest term
    and stops once the geometric majorant of the remainder is negligible.
    Truncation is certified; the accuracy floor is the one lgamma call in
    the lead term (about one ulp of lgamma(threshold)), i.e. ~1e-12 absolute
    in the log up to thresholds of 1e4 and ~3e-9 at 1e6.
    """
    rate = _check_rate(rate)
    n = _check_count(threshold, "threshold")
    if rate == 0.0:
        return -math.inf
    log_rate = math.log(rate)

    if n < rate:
        # cdf(n) <= ~0.55 here (Poisson median sits within 1 of the mean),
        # so the complement loses no precision.
        lead = _log_poisson_pmf(n, rate, log_rate)
        mantissas = [1.0]
        term = 1.0
        running = 1.0
        k = n
        while k > 0:
            term *= k / rate  # pmf(k-1) / pmf(k)
            mantissas.append(term)
            running += term
            k -= 1
            r = k / rate
            if term * r / (1.0 - r) <= _SUM_TOL * running:
                break
        log_cdf = lead + math.log(math.fsum(mantissas))
        if log_cdf >= 0.0:  # round-off only; Pr > n is then 0 to precision
            return -math.inf
        return math.log1p(-math.exp(log_cdf))

    lead = _log_poisson_pmf(n + 1, rate, log_rate)
    mantissas = [1.0]
    term = 1.0
    running = 1.0
    k = n + 1
    while True:
        r = rate / (k + 1)  # pmf(k+1) / pmf(k), strictly below 1 here
        if term * r / (1.0 - r) <= _SUM_TOL * running:
            break
        term *= r
        k += 1
        mantissas.append(term)
        running += term
    return lead + math.log(math.fsum(mantissas))


def poisson_tail(rate: float, threshold) -> float:
    """Pr(Poisson(rate) > threshold) as a linear value (flushes below e**-700)."""
    return _linear(poisson_tail_log(rate, threshold))


def exact_nonpredictive_outage_log(capacity: int, gamma: float) -> float:
    """log of the zero-lookahead outage probability Pr(Poisson(C**gamma) > C)."""
    capacity = _check_capacity(capacity)
    gamma = _check_gamma(gamma)
    return poisson_tail_log(float(capacity) ** gamma, capacity)


def exact_nonpredictive_outage(capacity: int, gamma: float) -> float:
    """Zero-lookahead outage probability: one slot's arrivals exceed capacity.

    With no advance notice every request must be served in its arrival slot,
    so slots are independent and the outage probability is the exact Poisson
    tail Pr(Q > C) with Q ~ Poisson(C**gamma).
    """
    return _linear(exact_nonpredictive_outage_log(capacity, gamma))


def _check_capacity(capacity) -> int:
    capacity = _check_count(capacity, "capacity")
    if capacity < 1:
        raise ValueError(f"capacity must be positive, got {capacity}")
    return capacity


def _check_gamma(gamma: float, name: str = "gamma") -> float:
    gamma = float(gamma)
    if not (0.0 <= gamma <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {gamma!r}")
    return gamma


def chernoff_upper_bound(capacity: int, gamma: float) -> float:
    """Chernoff exponent bounding the zero-lookahead outage from above.

    Returns log of the bound: C - C**gamma - (1 - gamma) * C * log C.  Only
    defined while the threshold exceeds the mean (C > C**gamma); at gamma = 1
    the two coincide and no exponential decay is available.
    """
    capacity = _check_capacity(capacity)
    gamma = _check_gamma(gamma)
    mean = float(capacity) ** gamma
    if capacity <= mean:
        raise ValueError(
            f"bound needs capacity above the mean load: C={capacity}, C**gamma={mean:g}"
        )
    return capacity - mean - (1.0 - gamma) * capacity * math.log(capacity)


def factorial_lower_bound(capacity: int, gamma: float) -> float:
    """Log of the single-term lower bound on the zero-lookahead outage.

    Keeps only the first tail term Pr(Q = C + 1):
    gamma * (C + 1) * log C - log (C + 1)! - C**gamma.
    """
    capacity = _check_capacity(capacity)
    gamma = _check_gamma(gamma)
    return (
        gamma * (capacity + 1) * math.log(capacity)
        - math.lgamma(capacity + 2)
        - float(capacity) ** gamma
    )


@dataclass(frozen=True)
class SandwichBounds:
    """Log-domain lower and upper bounds on an outage probability."""

    log_lower: float
    log_upper: float

    def __post_init__(self):
        if self.log_lower > self.log_upper + 1e-9:
            raise ValueError(
                f"lower bound {self.log_lower!r} exceeds upper bound {self.log_upper!r}"
            )

    @property
    def lower(self) -> float:
        return _linear(self.log_lower)

    @property
    def upper(self) -> float:
        return _linear(self.log_upper)


def predictive_outage_bounds(capacity: int, gamma: float, lookahead_t: int) -> SandwichBounds:
    """Sandwich the steady-state outage probability under lookahead T >= 1.

    Lower: a single slot's arrivals alone overflow the pooled service of
    T + 1 slots, Pr(Poisson(C**gamma) > C(T+1)).  Upper: arrivals of T + 1
    consecutive slots overflow that pooled service,
    Pr(Poisson((T+1) C**gamma) > C(T+1)).  Both decay with the same exponent
    (1+T)(1-gamma), so they pin the diversity gain from either side.
    """
    capacity = _check_capacity(capacity)
    gamma = _check_gamma(gamma)
    t = _check_count(lookahead_t, "lookahead_t")
    if t < 1:
        raise ValueError(f"lookahead_t must be at least 1, got {t}")
    rate = float(capacity) ** gamma
    pooled = capacity * (t + 1)
    return SandwichBounds(
        log_lower=poisson_tail_log(rate, pooled),
        log_upper=poisson_tail_log((t + 1) * rate, pooled),
    )


def diversity_deterministic(gamma: float, lookahead_t: int) -> float:
    """Diversity gain with fixed lookahead T: (1 + T) (1 - gamma).

    Evaluated as (1+T) - (1+T) * gamma, which rounds exactly for the common
    decimal gammas (e.g. T=4, gamma=0.8 yields 1.0, not 0.99999...).
    """
    gamma = _check_gamma(gamma)
    t = _check_count(lookahead_t, "lookahead_t")
    return (1.0 + t) - (1.0 + t) * gamma


class DiversityResult(NamedTuple):
    value: float
    regime: str


def diversity_random_t(gamma: float, model: LookaheadModel) -> DiversityResult:
    """Diversity gain when each request's lookahead is random.

    For any capacity-independent PMF the worst support point dominates:
    d = (1 + Tmin) (1 - gamma) with Tmin the smallest lookahead of positive
    probability.  For the capacity-scaled model Pr(T=0) = C**-alpha the
    zero-lookahead mass fades with scale and
    d = min(1 + alpha - gamma, (1 + fallback) (1 - gamma)); the regime tag
    says which side binds.
    """
    gamma = _check_gamma(gamma)
    if isinstance(model, CapacityScaled):
        scarcity = 1.0 + model.alpha - gamma
        fallback = diversity_deterministic(gamma, model.fallback_t)
        if scarcity <= fallback:
            return DiversityResult(scarcity, "alpha-limited")
        return DiversityResult(fallback, f"T={model.fallback_t}-limited")
    if isinstance(model, Deterministic):
        return DiversityResult(diversity_deterministic(gamma, model.t), f"Tmin={model.t}")
    if isinstance(model, (Tabulated, Binomial, Uniform)):
        support, probs = _positive_support(model)
        tmin = support[0]
        return DiversityResult(diversity_deterministic(gamma, tmin), f"Tmin={tmin}")
    raise TypeError(f"unsupported lookahead model {model!r}")


def _positive_support(model) -> tuple[list[int], list[float]]:
    from .traffic import lookahead_pmf

    support, probs = lookahead_pmf(model, capacity=1)
    keep = [(int(t), float(p)) for t, p in zip(support, probs) if p > 0.0]
    if not keep:
        raise ValueError(f"model {model!r} has empty support")
    return [t for t, _ in keep], [p for _, p in keep]


def diversity_with_errors(
    gamma: float, alpha_prime: float, alpha_double_prime: float, lookahead_t: int
) -> DiversityResult:
    """Diversity gain under imperfect predictions.

    The predicted stream (rate C**(alpha' gamma), lookahead T) contributes
    exponent (1 + T)(1 - alpha' gamma); the urgent stream (rate
    C**(alpha'' gamma), no lookahead) contributes 1 - alpha'' gamma.  The
    smaller of the two limits the system.  Requires alpha' >= alpha'' and a
    feasible pair: the urgent stream cannot exceed the total load
    (alpha'' <= 1) and, for gamma > 0, the streams must cover the load at
    scale (max(alpha', alpha'') >= 1).
    """
    gamma = _check_gamma(gamma)
    t = _check_count(lookahead_t, "lookahead_t")
    a1 = float(alpha_prime)
    a2 = float(alpha_double_prime)
    if a1 < 0.0 or a2 < 0.0:
        raise ValueError("alpha exponents must be non-negative")
    if a1 < a2:
        raise ValueError(
            f"alpha_prime must be at least alpha_double_prime, got {a1!r} < {a2!r}"
        )
    if a2 > 1.0:
        raise ValueError(f"infeasible: urgent stream exceeds the total load (alpha''={a2!r} > 1)")
    if gamma > 0.0 and max(a1, a2) < 1.0:
        raise ValueError(
            f"infeasible: streams cannot cover the load at scale (max alpha = {max(a1, a2)!r} < 1)"
        )
    predicted = (1.0 + t) * (1.0 - a1 * gamma)
    urgent = 1.0 - a2 * gamma
    if predicted < urgent:
        return DiversityResult(predicted, "predicted-limited")
    if urgent < predicted:
        return DiversityResult(urgent, "urgent-limited")
    return DiversityResult(urgent, "balanced")


def improves_on_nonpredictive(
    gamma: float, alpha_prime: float, alpha_double_prime: float, lookahead_t: int
) -> bool:
    """True when imperfect predictions still beat the zero-lookahead exponent."""
    result = diversity_with_errors(gamma, alpha_prime, alpha_double_prime, lookahead_t)
    return result.value > 1.0 - _check_gamma(gamma)


class OptimalLookahead(NamedTuple):
    t_star: float
    feasible: bool


def optimal_lookahead(
    gamma: float, alpha_prime: float, alpha_double_prime: float
) -> OptimalLookahead:
    """Smallest (real-valued) lookahead balancing the two error-stream exponents.

    t* = (alpha' - alpha'') gamma / (1 - alpha' gamma).  Beyond t* the urgent
    stream limits the system and further lookahead is wasted.  ``feasible``
    reports whether predictions can help at all: 1 <= alpha' <= 1/gamma and
    alpha'' < 1.  Raises when alpha' gamma = 1 (the predicted stream already
    absorbs all diversity; no finite horizon balances it).
    """
    gamma = _check_gamma(gamma)
    a1 = float(alpha_prime)
    a2 = float(alpha_double_prime)
    if a1 < a2:
        raise ValueError(
            f"alpha_prime must be at least alpha_double_prime, got {a1!r} < {a2!r}"
        )
    denom = 1.0 - a1 * gamma
    if denom == 0.0:
        raise ValueError("alpha' * gamma = 1: no finite lookahead balances the streams")
    t_star = (a1 - a2) * gamma / denom
    if gamma > 0.0:
        feasible = (1.0 <= a1 <= 1.0 / gamma) and a2 < 1.0
    else:
        feasible = a1 >= 1.0 and a2 < 1.0
    return OptimalLookahead(t_star=t_star, feasible=feasible)


def exact_secondary_outage_log(
    capacity: int,
    gamma_p: float,
    gamma_s: float,
    tail_tolerance: float = 1e-15,
    max_terms: int = 10_000_000,
) -> float:
    """log probability that best-effort traffic is denied in a slot.

    Two independent Poisson streams share the slot: primary (rate C**gamma_p)
    is served first, secondary (rate C**gamma_s) gets the leftovers; neither
    has lookahead.  Denial happens when total demand y exceeds C with at
    least one secondary request present:

        P = sum_{y > C} sum_{u=1..y} lp**(y-u) ls**u / ((y-u)! u!) * e**-(lp+ls)

    The outer tail is truncated once the Poisson(lp+ls) majorant of the
    remainder drops below ``tail_tolerance`` of the running sum.
    """
    capacity = _check_capacity(capacity)
    gamma_p = _check_gamma(gamma_p, "gamma_p")
    gamma_s = _check_gamma(gamma_s, "gamma_s")
    if gamma_p <= gamma_s:
        raise ValueError(f"gamma_p must exceed gamma_s, got {gamma_p!r} <= {gamma_s!r}")
    if not (0.0 < tail_tolerance < 1.0):
        raise ValueError(f"tail_tolerance must lie in (0, 1), got {tail_tolerance!r}")
    lp = float(capacity) ** gamma_p
    ls = float(capacity) ** gamma_s
    total = lp + ls
    log_lp = math.log(lp)
    log_ls = math.log(ls)

    # Incremental log-sum-exp over the outer terms.
    running_max = -math.inf
    running_sum = 0.0  # sum of exp(log_term - running_max)
    terms_used = 0
    y = capacity + 1
    while True:
        inner = [
            (y - u) * log_lp + u * log_ls - math.lgamma(y - u + 1) - math.lgamma(u + 1)
            for u in range(1, y + 1)
        ]
        terms_used += y
        if terms_used > max_terms:
            raise RuntimeError(
                f"secondary outage sum exceeded {max_terms} terms at capacity {capacity}"
            )
        m = max(inner)
        log_term = -total + m + math.log(math.fsum(math.exp(v - m) for v in inner))
        if log_term > running_max:
            if running_sum:
                running_sum = running_sum * math.exp(running_max - log_term) + 1.0
            else:
                running_sum = 1.0
            running_max = log_term
        else:
            running_sum += math.exp(log_term - running_max)
        # Certified remainder: sum of u=0..y terms telescopes to the
        # Poisson(lp+ls) pmf, so the leftover outer tail is bounded by it.
        log_rest = poisson_tail_log(total, y)
        log_sum = running_max + math.log(running_sum)
        if log_rest <= log_sum + math.log(tail_tolerance):
            return log_sum
        y += 1


def exact_secondary_outage(
    capacity: int,
    gamma_p: float,
    gamma_s: float,
    tail_tolerance: float = 1e-15,
) -> float:
    """Linear-domain version of :func:`exact_secondary_outage_log`."""
    return _linear(exact_secondary_outage_log(capacity, gamma_p, gamma_s, tail_tolerance))


def diversity_secondary_nonpredictive(gamma_p: float) -> float:
    """Secondary-class diversity when the primary class has no lookahead.

    The heavier primary load dominates the slot, so both classes decay with
    exponent 1 - gamma_p regardless of the secondary rate.
    """
    return 1.0 - _check_gamma(gamma_p, "gamma_p")


def empirical_diversity(p_hat: float, capacity: int) -> float:
    """Finite-capacity diversity estimate -log p / (C log C).

    Needs capacity >= 2 so the normalizer is positive.  A zero estimate maps
    to +inf (the outage was unmeasurably rare at this sample size).
    """
    capacity = _check_capacity(capacity)
    if capacity < 2:
        raise ValueError(f"capacity must be at least 2, got {capacity}")
    p_hat = float(p_hat)
    if not (0.0 <= p_hat <= 1.0):
        raise ValueError(f"p_hat must lie in [0, 1], got {p_hat!r}")
    if p_hat == 0.0:
        return math.inf
    return -math.log(p_hat) / (capacity * math.log(capacity))
