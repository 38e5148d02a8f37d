"""Regret bound evaluators and the discount/window schedules that go with them."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

KL_CLAMP = 1e-15
MIN_GAP = 1e-12


class BoundDomainError(ValueError):
    """Inputs fall outside the range a bound is stated for."""


def gap_profile(gaps: Sequence[float | None]) -> np.ndarray:
    """Per-item gaps to the K-th best item; ``None``/NaN marks always-optimal items."""
    arr = np.array([np.nan if g is None else g for g in gaps], dtype=float)
    if np.any(arr[~np.isnan(arr)] < 0):
        raise ValueError("gaps must be non-negative")
    return arr


def bernoulli_kl(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q), with 0 ln 0 = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    q = min(max(q, KL_CLAMP), 1.0 - KL_CLAMP)
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return max(out, 0.0)


def _exploration_log(epsilon: float) -> float:
    # ln(1 + 4 sqrt(1 - 1/(2 eps)))
    return math.log1p(4.0 * math.sqrt(max(0.0, 1.0 - 1.0 / (2.0 * epsilon))))


def _check_epsilon(epsilon: float, strict: bool) -> None:
    if strict and not 0.5 < epsilon < 1.0:
        raise BoundDomainError(f"epsilon={epsilon} violates ε ∈ (1/2,1)")


def _charged_gaps(gaps) -> np.ndarray:
    arr = gap_profile(gaps) if not isinstance(gaps, np.ndarray) else gaps.astype(float)
    return arr[~np.isnan(arr)]


def _inverse(x: float) -> float:
    return math.inf if x == 0 else 1.0 / x


def ducb_bound_terms(
    L: int, n: int, upsilon: int, gamma: float, epsilon: float, gaps, strict: bool = True
) -> dict[str, float]:
    """Breakpoint and per-item terms of the discounted-UCB regret bound."""
    _check_epsilon(epsilon, strict)
    if strict and not 0.5 < gamma < 1.0:
        raise BoundDomainError(f"gamma={gamma} violates γ ∈ (1/2,1)")
    if not 0.0 < gamma < 1.0:
        raise BoundDomainError(f"gamma={gamma} must lie in (0, 1)")
    breakpoint_term = L * upsilon * math.log((1.0 - gamma) * epsilon) / math.log(gamma)
    const = 4.0 / (1.0 - 1.0 / math.e) * _exploration_log(epsilon)
    shrink = gamma ** (1.0 / (1.0 - gamma))
    horizon = math.ceil(n * (1.0 - gamma)) * math.log(1.0 / (1.0 - gamma))
    items = 0.0
    for gap in _charged_gaps(gaps):
        items += const + 32.0 * epsilon * _inverse(gap * shrink)
    return {"breakpoint": breakpoint_term, "items": items * horizon}


def ducb_upper_bound(
    L: int, n: int, upsilon: int, gamma: float, epsilon: float, gaps, strict: bool = True
) -> float:
    """Upper bound on the n-step regret of the discounted cascade UCB policy."""
    return sum(ducb_bound_terms(L, n, upsilon, gamma, epsilon, gaps, strict).values())


def swucb_bound_terms(
    L: int, n: int, upsilon: int, tau: int, epsilon: float, gaps, strict: bool = True
) -> dict[str, float]:
    """Breakpoint, confidence and per-item terms of the sliding-window bound."""
    _check_epsilon(epsilon, strict)
    if tau < 1 or int(tau) != tau:
        raise BoundDomainError(f"tau={tau} must be an integer >= 1")
    terms = {"breakpoint": float(L * upsilon * tau), "confidence": 0.0, "items": 0.0}
    log_tau = math.log(tau)
    if log_tau == 0.0:
        # both remaining terms carry a factor ln(tau)
        return terms
    inv_q = _inverse(_exploration_log(epsilon))
    terms["confidence"] = L * log_tau**2 * inv_q
    ratio = math.ceil(n / tau) / (n / tau)
    first = 2.0 / log_tau * math.ceil(log_tau * inv_q) if math.isfinite(inv_q) else math.inf
    for gap in _charged_gaps(gaps):
        c = first + 8.0 * epsilon * _inverse(gap) * ratio
        terms["items"] += c * n * log_tau / tau
    return terms


def swucb_upper_bound(
    L: int, n: int, upsilon: int, tau: int, epsilon: float, gaps, strict: bool = True
) -> float:
    """Upper bound on the n-step regret of the sliding-window cascade UCB policy."""
    return sum(swucb_bound_terms(L, n, upsilon, tau, epsilon, gaps, strict).values())


def swucb_limit_constant(epsilon: float, gap: float) -> float:
    """Per-item constant of the window bound in the large-window limit."""
    return 2.0 / _exploration_log(epsilon) + 8.0 * epsilon / gap


def regret_lower_bound(L: int, K: int, delta: float, p: float, n: int) -> float:
    if not 0.0 < p < 1.0:
        raise BoundDomainError(f"p={p} must lie in (0, 1)")
    if delta < MIN_GAP:
        raise BoundDomainError(f"delta={delta} below {MIN_GAP}: the bound degenerates")
    if delta > p:
        raise BoundDomainError(f"need delta <= p, got delta={delta}, p={p}")
    kl = bernoulli_kl(p - delta, p)
    if kl <= 0.0:
        raise BoundDomainError("degenerate KL divergence")
    return L * delta * (1.0 - p) ** (K - 1) * math.sqrt(2.0 * n / (3.0 * kl))


def _ceil(x: float) -> int:
    # absorb float noise so exact integers are not bumped up
    return math.ceil(round(x, 9))


def gamma_for_horizon(n: int, upsilon: int | None = None) -> float:
    """Discount factor: 1 - sqrt(Υ/n)/4 when Υ is known, else 1 - 1/(4 sqrt n).

    Clamped into the open interval (1/2, 1); ``upsilon=0`` gives the largest
    double below 1, i.e. essentially no forgetting.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if upsilon is None:
        g = 1.0 - 1.0 / (4.0 * math.sqrt(n))
    else:
        if upsilon < 0:
            raise ValueError("upsilon must be >= 0")
        g = 1.0 - 0.25 * math.sqrt(upsilon / n)
    return min(max(g, math.nextafter(0.5, 1.0)), math.nextafter(1.0, 0.0))


def tau_for_horizon(n: int, upsilon: int | None = None) -> int:
    """Window length: 2 sqrt(n ln n / Υ) when Υ is known, else 2 sqrt(n ln n).

    ``upsilon=0`` means nothing ever needs forgetting and returns ``n``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if upsilon == 0:
        return n
    if upsilon is not None and upsilon < 0:
        raise ValueError("upsilon must be >= 0")
    base = n * math.log(n) / (upsilon if upsilon is not None else 1)
    return max(1, _ceil(2.0 * math.sqrt(base)))


def doubling_schedule(t: int) -> tuple[float, int]:
    """(γ, τ) for step t when the horizon is unknown; constant on [2^k, 2^(k+1))."""
    if t < 1:
        raise ValueError("t must be >= 1")
    k = int(t).bit_length() - 1
    block = 2**k
    gamma = 1.0 - 1.0 / (4.0 * math.sqrt(block))
    tau = max(1, _ceil(2.0 * math.sqrt(block * math.log(block)))) if k else 1
    return gamma, tau
