"""Payoff-robust comparisons of signals over V-shaped scoring rules.

If one signal set earns at least as much as another under every V-shaped
rule, it does so under every decision problem with a binary state.  A sweep
evaluates R (or ACIV over agent decisions) at each kink of a grid; the
dominance verdicts are therefore grid-resolution verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, SchemaError
from .decision import PayoffFunction, rational_decisions
from .estimation import EstimatorSpec
from .infovalue import PayoffEngine, bootstrap, parallel_map

FLOAT_FLOOR = 1e-12


class UnsupportedStateError(ValueError):
    """V-shaped rules need a binary state."""


@dataclass(frozen=True)
class MuGrid:
    values: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if not v:
            raise ValueError("empty kink grid")
        if any(not 0.0 < x < 1.0 for x in v):
            raise ValueError("kinks must lie strictly inside (0, 1)")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("kinks must be strictly ascending")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_step(cls, step: float = 0.01) -> "MuGrid":
        k = int(np.floor(1.0 / step + 1e-9))
        pts = np.round(step * np.arange(1, k + 1), 12)
        return cls(tuple(p for p in pts if 0.0 < p < 1.0))

    def __len__(self) -> int:
        return len(self.values)


def v_shaped_family(grid: MuGrid, step: float = 0.01, states=(0, 1),
                    reflect_state: bool = True) -> list[PayoffFunction]:
    return [PayoffFunction.v_shaped(mu, step, states, reflect_state) for mu in grid.values]


@dataclass
class SweepResult:
    grid: MuGrid
    quantity: str  # "R" or "ACIV"
    sets: dict
    agents: tuple
    values: dict
    ci: dict = field(default_factory=dict)
    boot: dict = field(default_factory=dict)
    B: int = 0
    seed: int | None = None

    def se(self, name: str) -> np.ndarray | None:
        if name not in self.boot:
            return None
        return self.boot[name].std(axis=0, ddof=1)

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "mu": list(self.grid.values),
            "sets": {k: list(v) for k, v in self.sets.items()},
            "agents": list(self.agents),
            "series": {k: v.tolist() for k, v in self.values.items()},
            "ci": {k: {"lo": lo.tolist(), "hi": hi.tolist()} for k, (lo, hi) in self.ci.items()},
            "bootstrap": {"B": self.B, "seed": self.seed},
        }


def _sweep_values(ds: Dataset, sets: Mapping[str, tuple], Db: tuple | None,
                  family: list[PayoffFunction], model) -> dict[str, np.ndarray]:
    # posteriors do not depend on the payoff, so beliefs are fitted once
    eng = PayoffEngine(ds, family[0], model)
    w = ds.weights / ds.weights.sum()
    beliefs = {k: eng.beliefs(cols) for k, cols in sets.items()}
    base = eng.beliefs(Db) if Db is not None else None
    out = {}
    for k, P in beliefs.items():
        row = np.empty(len(family))
        for j, S in enumerate(family):
            pay = S.matrix[rational_decisions(S, P), ds.state]
            if base is not None:
                pay = pay - S.matrix[rational_decisions(S, base), ds.state]
            row[j] = pay @ w
        out[k] = row
    return out


def sweep(ds: Dataset, signal_sets: Mapping[str, Sequence[str]], Db: Sequence[str] | None = None,
          grid: MuGrid | None = None, model=None, step: float = 0.01, B: int = 0,
          seed: int | None = None, reflect_state: bool = True) -> SweepResult:
    """Evaluate every signal set under every V-shaped rule of the grid.

    With ``Db`` the swept quantity is ACIV(V; Db), otherwise R(V).  ``V`` is
    taken together with ``Db`` (union), as in ACIV.
    """
    if ds.n_states != 2:
        raise UnsupportedStateError(f"V-shaped sweeps need a binary state, got {ds.n_states} states")
    grid = grid or MuGrid.from_step(0.01)
    model = model if model is not None else EstimatorSpec()
    Db_t = tuple(ds.check_columns(Db)) if Db is not None else None
    sets = {k: tuple(ds.check_columns(v)) + (Db_t or ()) for k, v in signal_sets.items()}
    if not sets:
        raise ValueError("need at least one signal set")
    family = v_shaped_family(grid, step, ds.states.labels, reflect_state)
    values = _sweep_values(ds, sets, Db_t, family, model)
    res = SweepResult(grid, "ACIV" if Db_t is not None else "R",
                      {k: tuple(ds.check_columns(v)) for k, v in signal_sets.items()},
                      Db_t or (), values)
    if B:
        if seed is None:
            raise ValueError("bootstrap needs an explicit seed")
        rng = np.random.default_rng(seed)
        counts = [rng.multinomial(ds.n, np.full(ds.n, 1.0 / ds.n)) for _ in range(B)]
        draws = parallel_map(lambda c: _sweep_values(ds.with_weights(ds.weights * c), sets, Db_t,
                                                     family, model), counts)
        for k in sets:
            arr = np.array([d[k] for d in draws])
            res.boot[k] = arr
            res.ci[k] = (np.percentile(arr, 2.5, axis=0), np.percentile(arr, 97.5, axis=0))
        res.B, res.seed = B, seed
    return res


@dataclass
class DominanceVerdict:
    pair: tuple
    verdict: str  # "V1-dominates" | "V2-dominates" | "incomparable"
    equivalent: bool
    signs: list
    eps: list
    diff: list

    def to_dict(self) -> dict:
        return {"pair": list(self.pair), "verdict": self.verdict, "equivalent": self.equivalent,
                "signs": self.signs, "eps": self.eps, "diff": self.diff}


def _eps(res: SweepResult, a: str, b: str, eps) -> np.ndarray:
    G = len(res.grid)
    if eps is not None:
        return np.full(G, float(eps))
    if a in res.boot and b in res.boot and res.B > 1:
        return 2.0 * (res.boot[a] - res.boot[b]).std(axis=0, ddof=1)
    return np.full(G, 1e-9)


def dominance(res: SweepResult, pair: tuple[str, str], eps: float | None = None) -> DominanceVerdict:
    """Grid-level dominance of ``pair[0]`` over ``pair[1]``.

    V1 dominates when it is never worse by more than ``eps`` and strictly
    better (by more than ``eps``) at one kink at least.  ``eps=None`` uses twice
    the paired bootstrap standard error when available, else 1e-9.
    """
    a, b = pair
    for k in pair:
        if k not in res.values:
            raise SchemaError(f"signal set {k!r} not in sweep")
    diff = res.values[a] - res.values[b]
    e = np.maximum(_eps(res, a, b, eps), FLOAT_FLOOR)
    signs = np.where(diff > e, 1, np.where(diff < -e, -1, 0))
    a_ok, b_ok = np.all(signs >= 0), np.all(signs <= 0)
    if a_ok and np.any(signs > 0):
        verdict = "V1-dominates"
    elif b_ok and np.any(signs < 0):
        verdict = "V2-dominates"
    else:
        verdict = "incomparable"
    return DominanceVerdict((a, b), verdict, bool(a_ok and b_ok), signs.tolist(), e.tolist(),
                            diff.tolist())


def dominance_matrix(res: SweepResult, eps: float | None = None) -> dict:
    """Pairwise verdicts and per-kink difference arrays (row minus column)."""
    names = list(res.values)
    table, diffs = {}, {}
    for a in names:
        table[a] = {}
        for b in names:
            if a == b:
                table[a][b] = "equivalent"
                diffs[f"{a}|{b}"] = [0.0] * len(res.grid)
                continue
            v = dominance(res, (a, b), eps)
            table[a][b] = "equivalent" if v.equivalent else {
                "V1-dominates": "dominates", "V2-dominates": "dominated"}.get(v.verdict, "incomparable")
            diffs[f"{a}|{b}"] = v.diff
    return {"names": names, "verdicts": table, "diff": diffs, "mu": list(res.grid.values)}


def total_order(matrix: Mapping) -> list[str] | None:
    """Names sorted best-first when the verdict table is a strict total order."""
    names = matrix["names"]
    wins = {a: sum(matrix["verdicts"][a][b] == "dominates" for b in names) for a in names}
    order = sorted(names, key=lambda a: -wins[a])
    for i, a in enumerate(order):
        for b in order[i + 1:]:
            if matrix["verdicts"][a][b] != "dominates":
                return None
    return order
