"""Posterior estimators and their diagnostics.

The rational decision-maker needs P(state | realization).  Estimators here
learn it from a :class:`~infoval.data.Dataset`:

* ``frequency``: smoothed cell counts, exact on its own training cells when
  ``smoothing=0``;
* ``glm``: softmax (logistic for binary states) regression fitted by
  full-batch gradient descent;
* ``oracle``: the exact posterior of a :class:`~infoval.dgp.SyntheticDGP`.

Cross-fitting produces out-of-fold beliefs for every row.  ECE and swap
regret diagnose how far the induced decisions are from best responses.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .data import Dataset, cell_keys
from .decision import PayoffFunction, rational_decisions


class DegenerateFoldWarning(UserWarning):
    pass


class PosteriorModel(Protocol):
    cols: tuple

    def predict(self, X: np.ndarray) -> np.ndarray: ...

    def predict_dataset(self, ds: Dataset) -> np.ndarray: ...


class _Base:
    cols: tuple = ()
    meta: dict

    def predict_dataset(self, ds: Dataset) -> np.ndarray:
        return self.predict(ds.codes(self.cols))

    def predict_one(self, codes) -> np.ndarray:
        return self.predict(np.asarray(codes, dtype=np.int64)[None, :])[0]


def _train_arrays(ds: Dataset, cols, idx):
    X = ds.codes(cols)
    y, w = ds.state, ds.weights
    if idx is not None:
        X, y, w = X[idx], y[idx], w[idx]
    return X, y, w


class FrequencyModel(_Base):
    """Smoothed per-cell state frequencies; unseen cells get the smoothed prior."""

    def __init__(self, ds: Dataset, cols: Sequence[str], smoothing: float = 1.0, idx=None):
        if smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        self.cols = tuple(ds.check_columns(cols))
        self.cards = ds.cards(self.cols)
        self.n_states = ds.n_states
        X, y, w = _train_arrays(ds, self.cols, idx)
        S = self.n_states
        counts_prior = np.bincount(y, weights=w, minlength=S)
        self.fallback = (counts_prior + smoothing) / (counts_prior.sum() + smoothing * S)
        keys = cell_keys(X, self.cards)
        uniq, inv = np.unique(keys, return_inverse=True)
        counts = np.zeros((len(uniq), S))
        np.add.at(counts, (inv.ravel(), y), w)
        tot = counts.sum(axis=1, keepdims=True)
        seen = tot[:, 0] > 0
        self.keys = uniq[seen]
        self.post = (counts[seen] + smoothing) / (tot[seen] + smoothing * S)
        self.smoothing = smoothing
        self.meta = {"kind": "frequency", "smoothing": smoothing, "cells": int(seen.sum())}

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        if X.shape[1] != len(self.cols):
            raise ValueError(f"expected {len(self.cols)} columns, got {X.shape[1]}")
        keys = cell_keys(X, self.cards)
        out = np.tile(self.fallback, (len(keys), 1))
        if len(self.keys):
            pos = np.clip(np.searchsorted(self.keys, keys), 0, len(self.keys) - 1)
            hit = self.keys[pos] == keys
            out[hit] = self.post[pos[hit]]
        return out


class GLMModel(_Base):
    """Softmax regression on one-hot (categorical) / standardized bin-center features.

    Weights start at zero, so zero epochs predicts the uniform distribution.
    Training is plain full-batch gradient descent on weighted cross-entropy.
    """

    def __init__(self, ds: Dataset, cols: Sequence[str], epochs: int = 500, lr: float = 0.5,
                 l2: float = 0.0, idx=None):
        self.cols = tuple(ds.check_columns(cols))
        self.n_states = ds.n_states
        self._numeric = [ds.column(c).numeric for c in self.cols]
        self._cards = ds.cards(self.cols)
        self._centers = [np.asarray(ds.column(c).centers, dtype=float) for c in self.cols]
        X, y, w = _train_arrays(ds, self.cols, idx)
        self._mu = np.zeros(len(self.cols))
        self._sd = np.ones(len(self.cols))
        wn = w / w.sum()
        for j, num in enumerate(self._numeric):
            if num:
                v = self._centers[j][X[:, j]]
                m = float(wn @ v)
                sd = float(np.sqrt(wn @ (v - m) ** 2))
                self._mu[j], self._sd[j] = m, sd if sd > 0 else 1.0
        F = self._features(X)
        Y = np.eye(self.n_states)[y]
        W = np.zeros((F.shape[1], self.n_states))
        b = np.zeros(self.n_states)
        for _ in range(int(epochs)):
            P = _softmax(F @ W + b)
            G = (P - Y) * wn[:, None]
            W -= lr * (F.T @ G + l2 * W)
            b -= lr * G.sum(axis=0)
        self.W, self.b = W, b
        self.meta = {"kind": "glm", "epochs": int(epochs), "lr": lr, "l2": l2}

    def _features(self, X: np.ndarray) -> np.ndarray:
        blocks = []
        for j, num in enumerate(self._numeric):
            if num:
                v = self._centers[j][X[:, j]]
                blocks.append(((v - self._mu[j]) / self._sd[j])[:, None])
            else:
                blocks.append(np.eye(self._cards[j])[X[:, j]])
        if not blocks:
            return np.zeros((X.shape[0], 0))
        return np.hstack(blocks)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        return _softmax(self._features(X) @ self.W + self.b)


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


class OracleModel(_Base):
    """Exact posterior of a synthetic DGP whose variables back the dataset columns."""

    def __init__(self, dgp, cols: Sequence[str]):
        self.cols = tuple(cols)
        self.dgp = dgp
        post, mass = dgp.posterior_table(list(self.cols))
        self._post, self._mass = post, mass
        self._cards = [len(dgp.levels[dgp.axis(c)]) for c in self.cols]
        self.meta = {"kind": "oracle"}

    def predict(self, X: np.ndarray) -> np.ndarray:
        from .dgp import UndefinedPosterior

        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        if not self.cols:
            return np.tile(self._post[0], (X.shape[0], 1))
        flat = np.ravel_multi_index(tuple(X.T), tuple(self._cards))
        if np.any(self._mass[flat] <= 0):
            raise UndefinedPosterior("oracle queried at a zero-probability realization")
        return self._post[flat]


@dataclass(frozen=True)
class CrossFitPlan:
    K: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("cross-fitting needs K >= 2")

    def assign(self, n: int) -> np.ndarray:
        if self.K > n:
            raise ValueError(f"K={self.K} folds exceed {n} rows")
        perm = np.random.default_rng(self.seed).permutation(n)
        folds = np.empty(n, dtype=np.int64)
        folds[perm] = np.arange(n) % self.K
        return folds


@dataclass(frozen=True)
class EstimatorSpec:
    """How to learn posteriors: estimator family, its knobs, and cross-fitting."""

    kind: str = "frequency"
    smoothing: float = 1.0
    epochs: int = 500
    lr: float = 0.5
    l2: float = 0.0
    folds: int = 5
    seed: int | None = 0
    crossfit: bool = True

    def __post_init__(self):
        if self.kind not in ("frequency", "glm"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.crossfit and self.seed is None:
            raise ValueError("cross-fitting needs an explicit seed")

    def fit(self, ds: Dataset, cols: Sequence[str], idx=None):
        if self.kind == "frequency":
            return FrequencyModel(ds, cols, self.smoothing, idx)
        return GLMModel(ds, cols, self.epochs, self.lr, self.l2, idx)

    @property
    def plan(self) -> CrossFitPlan | None:
        return CrossFitPlan(self.folds, self.seed) if self.crossfit else None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "EstimatorSpec":
        d = dict(d)
        kind = d.pop("type", d.pop("kind", "frequency"))
        if "K" in d:
            d["folds"] = d.pop("K")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown estimator keys {sorted(unknown)}")
        return cls(kind=kind, **d)


@dataclass(frozen=True)
class OracleSpec:
    """Use the exact posterior of ``dgp`` instead of learning one."""

    dgp: object
    crossfit: bool = field(default=False, init=False)
    plan = None

    def fit(self, ds: Dataset, cols: Sequence[str], idx=None):
        return OracleModel(self.dgp, cols)

    def to_dict(self) -> dict:
        return {"kind": "oracle"}


class CrossFitModel(_Base):
    """Out-of-fold predictions on the training rows, full-data fit elsewhere."""

    def __init__(self, train: Dataset, cols, oof: np.ndarray, full, folds: np.ndarray):
        self.cols = tuple(cols)
        self._train = train
        self.oof = oof
        self.full = full
        self.folds = folds
        self.meta = {"kind": "crossfit", "inner": full.meta, "K": int(folds.max()) + 1}

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.full.predict(X)

    def predict_dataset(self, ds: Dataset) -> np.ndarray:
        if ds is self._train:
            return self.oof
        return self.full.predict_dataset(ds)


def cross_fit(ds: Dataset, cols: Sequence[str], spec, plan: CrossFitPlan | None = None,
              folds: np.ndarray | None = None) -> CrossFitModel:
    """Fit ``spec`` K times; each row is predicted by the model not trained on it."""
    cols = ds.check_columns(cols)
    if folds is None:
        plan = plan or spec.plan or CrossFitPlan()
        folds = plan.assign(ds.n)
    K = int(folds.max()) + 1
    oof = np.empty((ds.n, ds.n_states))
    X = ds.codes(cols)
    for k in range(K):
        test = folds == k
        train = np.flatnonzero(~test)
        smoothing = getattr(spec, "smoothing", 1.0)
        present = np.bincount(ds.state[train], weights=ds.weights[train], minlength=ds.n_states) > 0
        if smoothing == 0 and present.sum() < 2:
            warnings.warn(f"fold {k}: training rows contain a single state; "
                          "unseen cells fall back to that prior", DegenerateFoldWarning, stacklevel=2)
        model = spec.fit(ds, cols, idx=train)
        oof[test] = model.predict(X[test])
    return CrossFitModel(ds, cols, oof, spec.fit(ds, cols), folds)


def fit_frequency_estimator(ds: Dataset, cols: Sequence[str], smoothing: float = 1.0) -> FrequencyModel:
    return FrequencyModel(ds, cols, smoothing)


def fit_glm_estimator(ds: Dataset, cols: Sequence[str], epochs: int = 500, lr: float = 0.5,
                      seed: int = 0, l2: float = 0.0) -> GLMModel:
    # zero initialisation makes the fit independent of the seed
    return GLMModel(ds, cols, epochs, lr, l2)


def row_beliefs(ds: Dataset, cols: Sequence[str], spec, folds: np.ndarray | None = None) -> np.ndarray:
    """Belief for every row: out-of-fold when cross-fitting, in-sample otherwise."""
    if getattr(spec, "crossfit", False):
        if folds is None:
            folds = spec.plan.assign(ds.n)
        return cross_fit(ds, cols, spec, folds=folds).oof
    return spec.fit(ds, cols).predict_dataset(ds)


# ---------------------------------------------------------------------------
# diagnostics

def _positive_prob(model_or_probs, ds: Dataset) -> np.ndarray:
    if isinstance(model_or_probs, np.ndarray):
        P = model_or_probs
    else:
        P = model_or_probs.predict_dataset(ds)
    if P.ndim == 2:
        if P.shape[1] != 2:
            raise ValueError("calibration diagnostics need a binary state")
        return P[:, 1]
    return P


def calibration_table(p: np.ndarray, y: np.ndarray, w: np.ndarray | None = None,
                      bins: int | None = 10) -> dict:
    """Binned ECE with the per-bin table.

    ``bins=None`` groups rows by their exact predicted value instead of by
    equal-width bins.
    """
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(p) if w is None else np.asarray(w, dtype=float)
    W = w.sum()
    if bins is None:
        uniq, b = np.unique(p, return_inverse=True)
        nb = len(uniq)
        edges = None
    else:
        if bins < 1:
            raise ValueError("bins must be >= 1")
        edges = np.linspace(0.0, 1.0, bins + 1)
        b = np.clip((p * bins).astype(np.int64), 0, bins - 1)
        nb = bins
    b = b.ravel()
    cnt = np.bincount(b, weights=w, minlength=nb)
    sp = np.bincount(b, weights=w * p, minlength=nb)
    sy = np.bincount(b, weights=w * y, minlength=nb)
    nz = cnt > 0
    mean_p = np.divide(sp, cnt, out=np.zeros(nb), where=nz)
    rate = np.divide(sy, cnt, out=np.zeros(nb), where=nz)
    ece_val = float(np.sum(cnt[nz] * np.abs(mean_p[nz] - rate[nz])) / W)
    table = [{"lo": float(edges[i]) if edges is not None else float(mean_p[i]),
              "hi": float(edges[i + 1]) if edges is not None else float(mean_p[i]),
              "mean_prediction": float(mean_p[i]), "empirical_rate": float(rate[i]),
              "count": float(cnt[i])} for i in range(nb) if edges is not None or nz[i]]
    return {"ece": ece_val, "edges": None if edges is None else edges.tolist(), "bins": table}


def ece(model, ds: Dataset, bins: int | None = 10) -> float:
    """Expected calibration error of P(state = second label)."""
    p = _positive_prob(model, ds)
    return calibration_table(p, ds.state, ds.weights, bins)["ece"]


def swap_regret(decisions, states, S: PayoffFunction, weights=None) -> float:
    """Exact swap regret; the best swap map is chosen per played action."""
    d = np.asarray(decisions, dtype=np.int64)
    s = np.asarray(states, dtype=np.int64)
    w = np.ones(len(d)) if weights is None else np.asarray(weights, dtype=float)
    if len(d) != len(s) or len(d) != len(w):
        raise ValueError("decisions, states and weights must align")
    acts, inv = np.unique(d, return_inverse=True)
    C = np.zeros((len(acts), len(S.states)))
    np.add.at(C, (inv.ravel(), s), w)
    G = C @ S.matrix.T  # payoff if every play of action a were replaced by d'
    own = G[np.arange(len(acts)), acts]
    return float(max(0.0, np.sum(G.max(axis=1) - own) / w.sum()))


@dataclass
class CalibrationReport:
    ece: float
    ece_exact: float
    edges: list | None
    bins: list
    swap_regret: float
    regret_bound: float
    bound_holds: bool
    binned_bound_holds: bool
    payoff_bounds: tuple
    tolerance: float = 1e-6

    @property
    def violation(self) -> bool:
        return not self.bound_holds

    def to_dict(self) -> dict:
        d = asdict(self)
        d["payoff_bounds"] = list(self.payoff_bounds)
        d["violation"] = self.violation
        return d


def regret_bound_check(model, ds: Dataset, S: PayoffFunction, bins: int = 10,
                       decisions: np.ndarray | None = None, tol: float = 1e-6) -> CalibrationReport:
    """Compare the swap regret of best-responding to ``model`` with 2(M2-M1)·ECE.

    The bound is evaluated with ECE grouped by exact predicted value, which
    is the quantity the bound is stated for; the equal-width binned ECE and
    its table are reported alongside.  Passing ``decisions`` overrides the
    best-response rule (e.g. to inject a corrupted decision-maker).
    """
    if len(S.states) != 2 or ds.n_states != 2:
        raise ValueError("the regret bound check needs a binary state")
    P = model if isinstance(model, np.ndarray) else model.predict_dataset(ds)
    if P.ndim == 1:
        P = np.column_stack([1 - P, P])
    if decisions is None:
        decisions = rational_decisions(S, P)
    binned = calibration_table(P[:, 1], ds.state, ds.weights, bins)
    exact = calibration_table(P[:, 1], ds.state, ds.weights, None)["ece"]
    sr = swap_regret(decisions, ds.state, S, ds.weights)
    span = S.M2 - S.M1
    bound = 2.0 * span * exact
    return CalibrationReport(
        ece=binned["ece"], ece_exact=exact, edges=binned["edges"], bins=binned["bins"],
        swap_regret=sr, regret_bound=bound, bound_holds=bool(sr <= bound + tol),
        binned_bound_holds=bool(sr <= 2.0 * span * binned["ece"] + tol),
        payoff_bounds=S.bounds, tolerance=tol)
