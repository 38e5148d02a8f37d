"""Cascade click model: rewards, click positions, optimal lists and regret.

Item ids are 1-based (``1..L``); attraction vectors are indexed 0-based, so
item ``a`` has attraction ``alpha[a - 1]``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

RankedList = tuple[int, ...]


def validate_list(ranked: Sequence[int], L: int, K: int | None = None) -> None:
    if K is not None and len(ranked) != K:
        raise ValueError(f"ranked list has {len(ranked)} items, expected K={K}")
    if len(ranked) > L:
        raise ValueError(f"ranked list longer than L={L}")
    if len(set(ranked)) != len(ranked):
        raise ValueError(f"ranked list has duplicate items: {list(ranked)}")
    for a in ranked:
        if not 1 <= a <= L:
            raise ValueError(f"item id {a} outside [1, {L}]")


def as_attraction(alpha) -> np.ndarray:
    probs = np.asarray(alpha, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError("attraction vector must be a non-empty 1-d sequence")
    if np.any(~np.isfinite(probs)) or np.any(probs < 0) or np.any(probs > 1):
        raise ValueError("attraction probabilities must lie in [0, 1]")
    return probs


def realized_reward(ranked: Sequence[int], attracted: Sequence[int]) -> int:
    """1 if any shown item is attractive under the realization, else 0."""
    validate_list(ranked, len(attracted))
    return int(any(attracted[a - 1] for a in ranked))


def expected_reward(ranked: Sequence[int], alpha) -> float:
    """Probability of a click anywhere in ``ranked``: 1 - prod(1 - alpha)."""
    probs = as_attraction(alpha)
    validate_list(ranked, probs.size)
    return list_reward([probs[a - 1] for a in ranked])


def list_reward(shown: Sequence[float]) -> float:
    """Click probability for the given attraction values of the shown items.

    The product runs over sorted values so equal item sets give bit-identical
    results whatever their order.
    """
    miss = 1.0
    for p in sorted(shown):
        miss *= 1.0 - p
    return 1.0 - miss


def first_click_position(ranked: Sequence[int], attracted: Sequence[int]) -> int:
    """1-based position of the first attractive item, or ``K + 1`` for no click."""
    validate_list(ranked, len(attracted))
    for i, a in enumerate(ranked, start=1):
        if attracted[a - 1]:
            return i
    return len(ranked) + 1


def click_distribution(ranked: Sequence[int], alpha) -> np.ndarray:
    """Closed-form probabilities of each click outcome ``1..K+1``."""
    probs = as_attraction(alpha)
    validate_list(ranked, probs.size)
    out = np.empty(len(ranked) + 1)
    examine = 1.0
    for i, a in enumerate(ranked):
        out[i] = examine * probs[a - 1]
        examine *= 1.0 - probs[a - 1]
    out[-1] = examine
    return out


def optimal_list(alpha, K: int) -> RankedList:
    """The K most attractive items, by decreasing attraction, ties to the smaller id."""
    probs = as_attraction(alpha)
    if not 1 <= K <= probs.size:
        raise ValueError(f"need 1 <= K <= L, got K={K}, L={probs.size}")
    order = np.argsort(-probs, kind="stable")[:K]
    return tuple(int(i) + 1 for i in order)


def per_step_regret(ranked: Sequence[int], alpha, K: int) -> float:
    validate_list(ranked, len(alpha), K)
    best = expected_reward(optimal_list(alpha, K), alpha)
    return max(0.0, best - expected_reward(ranked, alpha))
