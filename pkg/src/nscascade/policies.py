"""Ranking policies for the cascade model.

Every policy exposes ``select(t) -> RankedList`` and
``update(t, ranked, click)``. UCB-type policies keep per-item observation
counts ``N`` and click counts ``X`` (0-based arrays, item ``a`` at ``a - 1``)
and rank the K items with the largest index. Items never observed get an
infinite index so they are explored first, ties going to the smaller id.
"""
from __future__ import annotations

import math
from collections import deque
from typing import Sequence

import numpy as np
from numba import njit

from .bounds import doubling_schedule, gamma_for_horizon, tau_for_horizon
from .model import RankedList

UCB1_RADIUS = 1.5
KLUCB_LOGLOG = 3.0
KLUCB_TOL = 1e-9
KLUCB_MAX_ITER = 64
DEFAULT_EPSILON = 0.5

__all__ = [
    "CascadeDUCB",
    "CascadeKLUCB",
    "CascadeSWUCB",
    "CascadeUCB1",
    "POLICIES",
    "Policy",
    "RankedExp3",
    "discounted_horizon",
    "ducb_ucbs",
    "klucb_budget",
    "klucb_index",
    "klucb_root",
    "make_policy",
    "select_list",
    "swucb_ucbs",
    "ucb1_index",
]


def select_list(ucbs: np.ndarray, K: int) -> RankedList:
    """Top-K items by decreasing index; equal indices go to the smaller id."""
    if not 1 <= K <= len(ucbs):
        raise ValueError(f"need 1 <= K <= L, got K={K}, L={len(ucbs)}")
    order = np.argsort(-np.asarray(ucbs, dtype=float), kind="stable")[:K]
    return tuple((order + 1).tolist())


def _mean_plus_radius(X: np.ndarray, N: np.ndarray, radius_numerator: float) -> np.ndarray:
    # X/N + sqrt(radius_numerator / N), +inf where N == 0
    seen = N > 0
    n = np.where(seen, N, 1.0)
    u = X / n + np.sqrt(radius_numerator / n)
    u[~seen] = np.inf
    return u


def discounted_horizon(gamma: float, t: int) -> float:
    """(1 - gamma^t) / (1 - gamma); equals t when gamma == 1."""
    if gamma == 1.0:
        return float(t)
    h = -math.expm1(t * math.log(gamma)) / (1.0 - gamma)
    # rounding can push the t = 1 value just below 1 and its log below 0
    return max(h, 1.0) if t >= 1 else h


def ducb_ucbs(X, N, horizon: float, epsilon: float) -> np.ndarray:
    """Discounted mean plus 2 sqrt(eps ln horizon / N)."""
    return _mean_plus_radius(np.asarray(X, float), np.asarray(N, float), 4.0 * epsilon * math.log(horizon))


def swucb_ucbs(X, N, t: int, tau: int, epsilon: float) -> np.ndarray:
    """Window mean plus sqrt(eps ln(min(t, tau)) / N)."""
    return _mean_plus_radius(np.asarray(X, float), np.asarray(N, float), epsilon * math.log(min(t, tau)))


def ucb1_index(X, N, t: int, radius: float = UCB1_RADIUS) -> np.ndarray:
    return _mean_plus_radius(np.asarray(X, float), np.asarray(N, float), radius * math.log(t))


@njit(cache=True)
def _kl(p, q):
    q = min(max(q, 1e-15), 1.0 - 1e-15)
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return out


@njit(cache=True)
def _root(p, count, budget, tol, max_iter):
    if count <= 0.0:
        return math.inf
    if p >= 1.0:
        return 1.0
    if budget <= 0.0:
        return p
    lo = p
    hi = 1.0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if count * _kl(p, mid) <= budget:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def _klucb_indices(X, N, budget, tol, max_iter):
    out = np.empty(N.shape[0])
    for i in range(N.shape[0]):
        p = X[i] / N[i] if N[i] > 0.0 else 0.0
        out[i] = _root(p, N[i], budget, tol, max_iter)
    return out


@njit(cache=True)
def _top_k(values, K):
    # repeated argmax; strict > keeps the smaller index on ties
    L = values.shape[0]
    taken = np.zeros(L, dtype=np.bool_)
    out = np.empty(K, dtype=np.int64)
    for k in range(K):
        best = -1
        for i in range(L):
            if not taken[i] and (best < 0 or values[i] > values[best]):
                best = i
        taken[best] = True
        out[k] = best + 1
    return out


@njit(cache=True)
def _ucb_top_k(X, N, radius_numerator, K):
    u = np.empty(N.shape[0])
    for i in range(N.shape[0]):
        if N[i] > 0.0:
            u[i] = X[i] / N[i] + math.sqrt(radius_numerator / N[i])
        else:
            u[i] = math.inf
    return _top_k(u, K)


@njit(cache=True)
def _klucb_top_k(X, N, budget, tol, max_iter, K):
    return _top_k(_klucb_indices(X, N, budget, tol, max_iter), K)


@njit(cache=True)
def _observe(N, X, ranked, click, gamma):
    # discount everything, then count the examined prefix of the list
    if gamma != 1.0:
        for i in range(N.shape[0]):
            N[i] *= gamma
            X[i] *= gamma
    K = len(ranked)
    for i in range(min(click, K)):
        N[ranked[i] - 1] += 1.0
    if click <= K:
        X[ranked[click - 1] - 1] += 1.0


@njit(cache=True)
def _draw(p, u):
    # inverse-CDF draw; never returns a zero-probability index
    total = p.sum()
    x = u * total
    acc = 0.0
    last = -1
    for i in range(p.shape[0]):
        if p[i] > 0.0:
            acc += p[i]
            last = i
            if acc > x:
                return i
    return last


@njit(cache=True)
def _exp3_select(log_weights, exploration, u, probs):
    K, L = log_weights.shape
    used = np.zeros(L, dtype=np.bool_)
    out = np.empty(K, dtype=np.int64)
    for k in range(K):
        lw = log_weights[k]
        w = np.exp(lw - lw.max())
        p = (1.0 - exploration) * w / w.sum() + exploration / L
        i = _draw(p, u[2 * k])
        if used[i]:
            for j in range(L):
                if used[j]:
                    p[j] = 0.0
            p = p / p.sum()
            i = _draw(p, u[2 * k + 1])
        probs[k] = p[i]
        used[i] = True
        out[k] = i + 1
    return out


def klucb_root(p: float, count: float, budget: float,
               tol: float = KLUCB_TOL, max_iter: int = KLUCB_MAX_ITER) -> float:
    """Largest q in [p, 1] with count * kl(p, q) <= budget, by bisection."""
    return _root(float(p), float(count), float(budget), tol, max_iter)


def klucb_budget(t: int) -> float:
    if t < 2:
        return math.log(max(t, 1))
    return max(0.0, math.log(t) + KLUCB_LOGLOG * math.log(math.log(t)))


def klucb_index(X, N, t: int) -> np.ndarray:
    return _klucb_indices(np.asarray(X, float), np.asarray(N, float),
                          klucb_budget(t), KLUCB_TOL, KLUCB_MAX_ITER)


class Policy:
    name = "policy"

    def __init__(self, L: int, K: int):
        if not 1 <= K <= L:
            raise ValueError(f"need 1 <= K <= L, got K={K}, L={L}")
        self.L = L
        self.K = K

    def select(self, t: int) -> RankedList:
        raise NotImplementedError

    def update(self, t: int, ranked: Sequence[int], click: int) -> None:
        raise NotImplementedError

    def _check_click(self, ranked, click):
        if len(ranked) != self.K:
            raise ValueError(f"ranked list has {len(ranked)} items, expected {self.K}")
        if not 1 <= click <= self.K + 1:
            raise ValueError(f"click position {click} outside [1, {self.K + 1}]")


class _CascadeUCB(Policy):
    """Shared cascade bookkeeping: items above the click were examined."""

    def __init__(self, L: int, K: int):
        super().__init__(L, K)
        self.N = np.zeros(L)
        self.X = np.zeros(L)
        self.t = 0

    def indices(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def radius_numerator(self, t: int) -> float:
        """``c`` in the index ``X/N + sqrt(c/N)``."""
        raise NotImplementedError

    def select(self, t: int) -> RankedList:
        # same ranking as select_list(self.indices(t), K), without the temporaries
        return tuple(_ucb_top_k(self.X, self.N, self.radius_numerator(t), self.K).tolist())

    def discount(self, t: int) -> float:
        return 1.0

    def update(self, t: int, ranked: Sequence[int], click: int) -> None:
        self._check_click(ranked, click)
        _observe(self.N, self.X, tuple(ranked), click, self.discount(t))
        self.t = t


class CascadeDUCB(_CascadeUCB):
    """Cascade UCB on geometrically discounted statistics."""

    name = "cascade_ducb"

    def __init__(self, L: int, K: int, *, n: int | None = None, gamma: float | None = None,
                 epsilon: float = DEFAULT_EPSILON, doubling: bool = False):
        super().__init__(L, K)
        if gamma is None and not doubling:
            if n is None:
                raise ValueError("either gamma, n or doubling is required")
            gamma = gamma_for_horizon(n)
        if gamma is not None and not 0.0 < gamma <= 1.0:
            raise ValueError(f"gamma={gamma} must lie in (0, 1]")
        self.gamma = gamma
        self.epsilon = epsilon
        self.doubling = doubling

    def gamma_at(self, t: int) -> float:
        return doubling_schedule(t)[0] if self.doubling else self.gamma

    def indices(self, t: int) -> np.ndarray:
        return ducb_ucbs(self.X, self.N, discounted_horizon(self.gamma_at(t), t), self.epsilon)

    def radius_numerator(self, t: int) -> float:
        return 4.0 * self.epsilon * math.log(discounted_horizon(self.gamma_at(t), t))

    def discount(self, t: int) -> float:
        return self.gamma_at(t)


class CascadeSWUCB(_CascadeUCB):
    """Cascade UCB on the observations of the last ``tau`` steps."""

    name = "cascade_swucb"

    def __init__(self, L: int, K: int, *, n: int | None = None, tau: int | None = None,
                 epsilon: float = DEFAULT_EPSILON, doubling: bool = False):
        super().__init__(L, K)
        if tau is None and not doubling:
            if n is None:
                raise ValueError("either tau, n or doubling is required")
            tau = tau_for_horizon(n)
        if tau is not None and tau < 1:
            raise ValueError(f"tau={tau} must be >= 1")
        self.tau = tau
        self.epsilon = epsilon
        self.doubling = doubling
        # one (observed items, clicked item or 0) entry per past step
        self.window: deque[tuple[tuple[int, ...], int]] = deque()

    def tau_at(self, t: int) -> int:
        return doubling_schedule(t)[1] if self.doubling else self.tau

    def indices(self, t: int) -> np.ndarray:
        return swucb_ucbs(self.X, self.N, t, self.tau_at(t), self.epsilon)

    def radius_numerator(self, t: int) -> float:
        return self.epsilon * math.log(min(t, self.tau_at(t)))

    def update(self, t: int, ranked: Sequence[int], click: int) -> None:
        super().update(t, ranked, click)
        clicked = ranked[click - 1] if click <= self.K else 0
        self.window.append((tuple(ranked[: min(click, self.K)]), clicked))
        tau = self.tau_at(t)
        while len(self.window) > tau:
            seen, old_click = self.window.popleft()
            for a in seen:
                self.N[a - 1] -= 1.0
            if old_click:
                self.X[old_click - 1] -= 1.0


class CascadeUCB1(_CascadeUCB):
    name = "cascade_ucb1"

    def __init__(self, L: int, K: int, *, n: int | None = None, radius: float = UCB1_RADIUS):
        super().__init__(L, K)
        self.radius = radius

    def indices(self, t: int) -> np.ndarray:
        return ucb1_index(self.X, self.N, t, self.radius)

    def radius_numerator(self, t: int) -> float:
        return self.radius * math.log(t)


class CascadeKLUCB(_CascadeUCB):
    name = "cascade_klucb"

    def __init__(self, L: int, K: int, *, n: int | None = None):
        super().__init__(L, K)

    def indices(self, t: int) -> np.ndarray:
        return _klucb_indices(self.X, self.N, klucb_budget(t), KLUCB_TOL, KLUCB_MAX_ITER)

    def select(self, t: int) -> RankedList:
        top = _klucb_top_k(self.X, self.N, klucb_budget(t), KLUCB_TOL, KLUCB_MAX_ITER, self.K)
        return tuple(top.tolist())


class RankedExp3(Policy):
    """One Exp3 learner per position; a position is rewarded when it gets the click.

    A position whose draw collides with an item already placed above it
    redraws from its distribution restricted to unused items.
    """

    name = "ranked_exp3"

    def __init__(self, L: int, K: int, *, n: int | None = None, exploration: float | None = None,
                 rng: np.random.Generator | None = None):
        super().__init__(L, K)
        if exploration is None:
            if n is None:
                raise ValueError("either exploration or n is required")
            exploration = min(1.0, math.sqrt(math.log(L) / (L * n))) if L > 1 else 1.0
        if not 0.0 < exploration <= 1.0:
            raise ValueError(f"exploration={exploration} must lie in (0, 1]")
        self.exploration = exploration
        self.rng = rng if rng is not None else np.random.default_rng()
        self.log_weights = np.zeros((K, L))
        self._last: RankedList | None = None
        self._last_probs = np.ones(K)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def distribution(self, position: int) -> np.ndarray:
        """Sampling distribution of the 1-based ``position``."""
        lw = self.log_weights[position - 1]
        w = np.exp(lw - lw.max())
        return (1.0 - self.exploration) * w / w.sum() + self.exploration / self.L

    def select(self, t: int) -> RankedList:
        # two uniforms per position: the draw and a redraw after a collision
        u = self.rng.random(2 * self.K)
        self._last = tuple(_exp3_select(self.log_weights, self.exploration, u, self._last_probs).tolist())
        return self._last

    def update(self, t: int, ranked: Sequence[int], click: int) -> None:
        self._check_click(ranked, click)
        if self._last is None or tuple(ranked) != self._last:
            raise ValueError("update must follow select with the same ranked list")
        # positions other than the clicked one earn zero reward, which leaves
        # their weights untouched
        if click <= self.K:
            k = click - 1
            gain = 1.0 / self._last_probs[k]
            self.log_weights[k, ranked[k] - 1] += self.exploration * gain / self.L
        self._last = None


POLICIES = {
    cls.name: cls
    for cls in (CascadeDUCB, CascadeSWUCB, CascadeUCB1, CascadeKLUCB, RankedExp3)
}


def make_policy(name: str, L: int, K: int, n: int, rng: np.random.Generator | None = None,
                **params) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    if cls is RankedExp3:
        params["rng"] = rng
    return cls(L, K, n=n, **params)
