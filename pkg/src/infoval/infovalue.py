"""Value of information for a rational Bayesian decision-maker.

Quantities, all in payoff units:

* ``rational_payoff``  R(V): average realized payoff of best-responding to
  the estimated posterior given the columns V; R(empty) is the best fixed
  action under the empirical prior.
* ``information_value`` R(V) - R(empty).
* ``aciv``  R(V u Db) - R(Db): value a signal adds on top of agent decisions,
  computed row-wise as a paired payoff difference.
* ``iliv``  the same difference restricted to the rows where V = v, with the
  decision-maker fed a possibly counterfactual realization v'.
* ``shapley_aciv``  exact Shapley split of ACIV over signals, or the greedy
  marginal-gain ordering.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import Dataset, SchemaError
from .decision import PayoffFunction, no_info_payoff, rational_decisions
from .estimation import EstimatorSpec, row_beliefs
from .shapley import CachedValue, exact_shapley, members

THREADS_ENV = "INFOVAL_THREADS"


class NoInstancesError(ValueError):
    """The requested instance group has no rows (or zero weight)."""


@dataclass
class InfoValueEstimate:
    quantity: str
    value: float
    baseline: float
    n_effective: float
    signals: tuple = ()
    agents: tuple = ()
    ci: tuple | None = None
    B: int = 0
    seed: int | None = None
    model: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "quantity": self.quantity,
            "value": self.value,
            "baseline": self.baseline,
            "n_effective": self.n_effective,
            "signals": list(self.signals),
            "agents": list(self.agents),
            "ci": None if self.ci is None else [self.ci[0], self.ci[1]],
            "bootstrap": {"B": self.B, "seed": self.seed},
            "model": self.model,
            "model_fingerprint": model_fingerprint(self.model),
        }
        out.update(self.extra)
        return out


def model_fingerprint(model_dict: Mapping) -> str:
    blob = json.dumps(model_dict, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _spec_dict(model) -> dict:
    return model.to_dict() if hasattr(model, "to_dict") else {"kind": type(model).__name__}


def _kish(w: np.ndarray) -> float:
    return float(w.sum() ** 2 / np.sum(w**2)) if np.any(w > 0) else 0.0


def _check_problem(ds: Dataset, S: PayoffFunction) -> None:
    if len(S.states) != ds.n_states or any(
            str(a) != str(b) for a, b in zip(S.states.labels, ds.states.labels)):
        raise SchemaError(f"payoff states {S.states.labels} do not match dataset states "
                          f"{ds.states.labels}")


def _canonical(ds: Dataset, cols: Sequence[str]) -> tuple[str, ...]:
    wanted = set(ds.check_columns(cols))
    return tuple(c for c in ds.columns if c in wanted)


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Ordered map, threaded when ``INFOVAL_THREADS`` > 1."""
    threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


class PayoffEngine:
    """Per-row rational payoffs for column sets, sharing folds and fits."""

    def __init__(self, ds: Dataset, S: PayoffFunction, model=None, folds: np.ndarray | None = None):
        _check_problem(ds, S)
        self.ds, self.S = ds, S
        self.model = model if model is not None else EstimatorSpec()
        if folds is None and getattr(self.model, "crossfit", False):
            folds = self.model.plan.assign(ds.n)
        self.folds = folds
        self._beliefs: dict[tuple, np.ndarray] = {}
        self._payoffs: dict[tuple, np.ndarray] = {}

    def beliefs(self, cols: Sequence[str]) -> np.ndarray:
        key = _canonical(self.ds, cols)
        if key not in self._beliefs:
            if not key:
                self._beliefs[key] = np.tile(self.ds.prior(), (self.ds.n, 1))
            else:
                self._beliefs[key] = row_beliefs(self.ds, key, self.model, self.folds)
        return self._beliefs[key]

    def decisions(self, cols: Sequence[str]) -> np.ndarray:
        return rational_decisions(self.S, self.beliefs(cols))

    def payoffs(self, cols: Sequence[str]) -> np.ndarray:
        key = _canonical(self.ds, cols)
        if key not in self._payoffs:
            d = self.decisions(key)
            self._payoffs[key] = self.S.matrix[d, self.ds.state]
        return self._payoffs[key]

    def mean(self, x: np.ndarray) -> float:
        w = self.ds.weights
        return float(x @ w / w.sum())

    def R(self, cols: Sequence[str]) -> float:
        return self.mean(self.payoffs(cols))

    def aciv(self, V: Sequence[str], Db: Sequence[str]) -> float:
        return self.mean(self.payoffs(tuple(V) + tuple(Db)) - self.payoffs(Db))


def bootstrap(stat: Callable[[Dataset], float], ds: Dataset, B: int, seed: int,
              level: float = 0.95) -> tuple[float, float, np.ndarray]:
    """Percentile interval of ``stat`` over ``B`` row resamples.

    Resamples are expressed as multinomial count weights on the rows, so the
    estimators inside ``stat`` are refitted on every resample.
    """
    if B < 1:
        raise ValueError("bootstrap needs B >= 1")
    rng = np.random.default_rng(seed)
    counts = [rng.multinomial(ds.n, np.full(ds.n, 1.0 / ds.n)) for _ in range(B)]

    def one(c):
        return stat(ds.with_weights(ds.weights * c))

    vals = np.array(parallel_map(one, counts), dtype=float)
    alpha = (1 - level) / 2
    lo, hi = np.percentile(vals, [100 * alpha, 100 * (1 - alpha)])
    return float(lo), float(hi), vals


def _finish(est: InfoValueEstimate, stat, ds, B, seed) -> InfoValueEstimate:
    if B:
        if seed is None:
            raise ValueError("bootstrap needs an explicit seed")
        lo, hi, _ = bootstrap(stat, ds, B, seed)
        est.ci, est.B, est.seed = (lo, hi), B, seed
    return est


def rational_payoff(ds: Dataset, S: PayoffFunction, V: Sequence[str] = (), model=None,
                    B: int = 0, seed: int | None = None) -> InfoValueEstimate:
    model = model if model is not None else EstimatorSpec()
    V = ds.check_columns(V)

    def stat(d):
        return PayoffEngine(d, S, model).R(V)

    base = no_info_payoff(S, ds.prior())
    est = InfoValueEstimate("R", stat(ds), base, _kish(ds.weights), V, (), model=_spec_dict(model))
    return _finish(est, stat, ds, B, seed)


def information_value(ds: Dataset, S: PayoffFunction, V: Sequence[str] = (), model=None,
                      B: int = 0, seed: int | None = None) -> InfoValueEstimate:
    model = model if model is not None else EstimatorSpec()
    V = ds.check_columns(V)

    def stat(d):
        eng = PayoffEngine(d, S, model)
        return eng.R(V) - eng.R(())

    base = no_info_payoff(S, ds.prior())
    est = InfoValueEstimate("IV", stat(ds), base, _kish(ds.weights), V, (), model=_spec_dict(model))
    return _finish(est, stat, ds, B, seed)


def aciv(ds: Dataset, S: PayoffFunction, V: Sequence[str], Db: Sequence[str], model=None,
         B: int = 0, seed: int | None = None) -> InfoValueEstimate:
    """Agent-complementary information value of ``V`` over agent columns ``Db``.

    Row-wise: best response to the belief given V u Db minus best response to
    the belief given Db alone, scored on the realized state and averaged.
    Both beliefs come from the same cross-fitting folds.
    """
    model = model if model is not None else EstimatorSpec()
    V, Db = ds.check_columns(V), ds.check_columns(Db)

    def stat(d):
        return PayoffEngine(d, S, model).aciv(V, Db)

    eng = PayoffEngine(ds, S, model)
    est = InfoValueEstimate("ACIV", eng.aciv(V, Db), eng.R(Db), _kish(ds.weights), V, Db,
                            model=_spec_dict(model))
    return _finish(est, stat, ds, B, seed)


# ---------------------------------------------------------------------------
# instance level

class IlivEvaluator:
    """Fits the two posterior models once and answers ILIV queries.

    Both models are fitted on all rows; cross-fitting does not apply here
    because counterfactual realizations are never training rows.
    """

    def __init__(self, ds: Dataset, S: PayoffFunction, V: Sequence[str], Db: Sequence[str] = (),
                 model=None):
        _check_problem(ds, S)
        self.ds, self.S = ds, S
        self.model = model if model is not None else EstimatorSpec()
        self.V = ds.check_columns(V)
        self.Db = tuple(c for c in ds.check_columns(Db) if c not in self.V)
        if not self.V:
            raise SchemaError("ILIV needs a non-empty signal set")
        self.cols = self.V + self.Db
        self.full = self.model.fit(ds, self.cols)
        self.base = self.model.fit(ds, self.Db) if self.Db else None
        self._vcodes = ds.codes(self.V)
        self._dcodes = ds.codes(self.Db)

    def group(self, v) -> np.ndarray:
        code = self._encode(v)
        idx = np.flatnonzero(np.all(self._vcodes == code, axis=1))
        if len(idx) == 0 or self.ds.weights[idx].sum() <= 0:
            raise NoInstancesError(f"no instances with {dict(zip(self.V, self._labels(code)))}")
        return idx

    def _encode(self, v) -> np.ndarray:
        if isinstance(v, np.ndarray) and v.dtype.kind in "iu":
            if v.shape != (len(self.V),):
                raise SchemaError("code vector length mismatch")
            return v
        return self.ds.encode(self.V, v)

    def _labels(self, code) -> list:
        return [self.ds.column(c).levels[k] for c, k in zip(self.V, code)]

    def _baseline_payoff(self, idx) -> np.ndarray:
        if self.base is None:
            pb = np.tile(self.ds.prior(), (len(idx), 1))
        else:
            pb = self.base.predict(self._dcodes[idx])
        return self.S.matrix[rational_decisions(self.S, pb), self.ds.state[idx]]

    def r(self, v, v_prime) -> float:
        """Expected payoff on the v-group of best-responding to (v', Db)."""
        idx = self.group(v)
        w = self.ds.weights[idx]
        if v_prime is None:
            pay = self._baseline_payoff(idx)
        else:
            vp = self._encode(v_prime)
            X = np.hstack([np.tile(vp, (len(idx), 1)), self._dcodes[idx]])
            d = rational_decisions(self.S, self.full.predict(X))
            pay = self.S.matrix[d, self.ds.state[idx]]
        return float(pay @ w / w.sum())

    def value(self, v, v_prime) -> float:
        """ILIV^v(v'; Db) = r^v(v'; Db) - r^v(empty; Db)."""
        if v_prime is None:
            return 0.0
        idx = self.group(v)
        w = self.ds.weights[idx]
        vp = self._encode(v_prime)
        X = np.hstack([np.tile(vp, (len(idx), 1)), self._dcodes[idx]])
        d = rational_decisions(self.S, self.full.predict(X))
        s = self.S.matrix[d, self.ds.state[idx]] - self._baseline_payoff(idx)
        return float(s @ w / w.sum())

    def realizations(self) -> list[np.ndarray]:
        cards = self.ds.cards(self.V)
        return [np.array(c, dtype=np.int64) for c in itertools.product(*[range(k) for k in cards])]

    def scan(self, v) -> dict[tuple, float]:
        """ILIV of every realization v' of V on the v-group."""
        return {tuple(self._labels(vp)): self.value(v, vp) for vp in self.realizations()}


def iliv(ds: Dataset, S: PayoffFunction, V: Sequence[str], v, v_prime, Db: Sequence[str] = (),
         model=None) -> InfoValueEstimate:
    ev = IlivEvaluator(ds, S, V, Db, model)
    idx = ev.group(v)
    val = ev.value(v, v_prime)
    return InfoValueEstimate("ILIV", val, ev.r(v, None), _kish(ds.weights[idx]), ev.V, ev.Db,
                             model=_spec_dict(ev.model),
                             extra={"v": _jsonable(v), "v_prime": _jsonable(v_prime),
                                    "group_size": int(len(idx))})


def _jsonable(x):
    if x is None:
        return None
    if isinstance(x, Mapping):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# combinatorics over signals

@dataclass
class ShapleyResult:
    signals: tuple
    scores: dict
    mode: str
    total: float
    order: tuple = ()
    coalition_values: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"signals": list(self.signals), "mode": self.mode, "scores": self.scores,
                "total": self.total, "order": list(self.order),
                "coalition_values": self.coalition_values}


def shapley_aciv(ds: Dataset, S: PayoffFunction, signals: Sequence[str], Db: Sequence[str] = (),
                 model=None, mode: str = "exact", engine: PayoffEngine | None = None) -> ShapleyResult:
    """Split ACIV(all signals; Db) over the signals.

    ``exact`` enumerates all subsets with the classical Shapley weights.
    ``greedy`` repeatedly adds the signal with the largest ACIV over the
    accumulated set (starting from Db) and records those marginal gains.
    """
    signals = ds.check_columns(signals)
    Db = ds.check_columns(Db)
    if set(signals) & set(Db):
        raise SchemaError("signals and agent columns overlap")
    eng = engine or PayoffEngine(ds, S, model)
    m = len(signals)
    r_base = eng.R(Db)

    if mode == "exact":
        def value(mask):
            return eng.R(Db + tuple(signals[i] for i in members(mask, m))) - r_base

        phi, vals = exact_shapley(CachedValue(value), m)
        coal = {",".join(signals[i] for i in members(k, m)): float(vals[k]) for k in range(1 << m)}
        return ShapleyResult(signals, {s: float(p) for s, p in zip(signals, phi)}, "exact",
                             float(vals[-1]), tuple(signals[i] for i in np.argsort(-phi, kind="stable")),
                             coal)
    if mode == "greedy":
        chosen: list[str] = []
        gains: dict[str, float] = {}
        current = r_base
        for _ in range(m):
            best, best_gain = None, -np.inf
            for s in signals:
                if s in chosen:
                    continue
                g = eng.R(Db + tuple(chosen) + (s,)) - current
                if g > best_gain + 1e-12:
                    best, best_gain = s, g
            chosen.append(best)
            gains[best] = float(best_gain)
            current += best_gain
        return ShapleyResult(signals, gains, "greedy", float(current - r_base), tuple(chosen))
    raise ValueError(f"unknown mode {mode!r}; use 'exact' or 'greedy'")
