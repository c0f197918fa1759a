"""Shapley values of set functions over ``m`` players encoded as bitmasks.

Bit ``i`` of a mask means player ``i`` is in the coalition.  Value functions
are called at most once per mask (results are cached), so expensive
coalition values such as refitted posterior models are shared between
players and permutations.
"""

from __future__ import annotations

from math import factorial
from typing import Callable

import numpy as np

MAX_EXACT_PLAYERS = 12


class BudgetError(ValueError):
    """Exact enumeration requested for too many players."""


class CachedValue:
    def __init__(self, fn: Callable[[int], float]):
        self.fn = fn
        self.cache: dict[int, float] = {}

    def __call__(self, mask: int) -> float:
        mask = int(mask)
        if mask not in self.cache:
            self.cache[mask] = float(self.fn(mask))
        return self.cache[mask]


def members(mask: int, m: int) -> list[int]:
    return [i for i in range(m) if mask >> i & 1]


def shapley_weights(m: int) -> np.ndarray:
    """Weight s!(m-s-1)!/m! of a coalition of size s not containing the player."""
    return np.array([factorial(s) * factorial(m - s - 1) / factorial(m) for s in range(m)])


def exact_from_values(values: np.ndarray, m: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (1 << m,):
        raise ValueError(f"need 2^{m} coalition values")
    masks = np.arange(1 << m)
    sizes = np.array([bin(k).count("1") for k in masks])
    w = shapley_weights(m)
    phi = np.zeros(m)
    for i in range(m):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        phi[i] = np.sum(w[sizes[without]] * (values[without | bit] - values[without]))
    return phi


def exact_shapley(value: Callable[[int], float], m: int,
                  max_players: int = MAX_EXACT_PLAYERS) -> tuple[np.ndarray, np.ndarray]:
    """(phi, coalition values) by full subset enumeration."""
    if m > max_players:
        raise BudgetError(f"exact Shapley over {m} players needs 2^{m} evaluations "
                          f"(limit {max_players}); use a sampling or greedy mode")
    vals = np.array([value(mask) for mask in range(1 << m)])
    return exact_from_values(vals, m), vals


def permutation_shapley(value: Callable[[int], float], m: int, B: int, seed: int,
                        antithetic: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Monte Carlo Shapley over ``B`` random orderings.

    With ``antithetic`` every ordering is paired with its reverse and the pair
    average counts as one sample.  Returns (phi, standard errors, per-sample
    marginal contributions of shape (B, m)).  Each sample telescopes, so the
    estimates always sum to ``v(all) - v(empty)``.
    """
    if B < 1:
        raise ValueError("need at least one permutation")
    rng = np.random.default_rng(seed)
    samples = np.zeros((B, m))

    def walk(order) -> np.ndarray:
        out = np.zeros(m)
        mask = 0
        prev = value(0)
        for i in order:
            mask |= 1 << int(i)
            cur = value(mask)
            out[i] = cur - prev
            prev = cur
        return out

    for b in range(B):
        order = rng.permutation(m)
        contrib = walk(order)
        if antithetic:
            contrib = 0.5 * (contrib + walk(order[::-1]))
        samples[b] = contrib
    phi = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(B) if B > 1 else np.full(m, np.nan)
    return phi, se, samples


def submodularity_violations(values: np.ndarray, m: int, tol: float = 1e-9) -> list[tuple[int, int, int]]:
    """Triples (i, A, B), A subset of B not containing i, with a larger gain at B than at A.

    It suffices to compare each coalition with its one-player extensions.
    """
    values = np.asarray(values, dtype=float)
    out = []
    for A in range(1 << m):
        for j in range(m):
            B = A | 1 << j
            if B == A:
                continue
            for i in range(m):
                bit = 1 << i
                if A & bit or B & bit:
                    continue
                if values[B | bit] - values[B] > values[A | bit] - values[A] + tol:
                    out.append((i, A, B))
    return out


def is_submodular(values: np.ndarray, m: int, tol: float = 1e-9) -> bool:
    return not submodularity_violations(values, m, tol)
