"""Feature attributions: SHAP and its information-value variant ILIV-SHAP.

Both share one coalition game.  For SHAP the coalition value is the model's
expected output with the coalition's features fixed to the explained
instance.  For ILIV-SHAP that coalition-conditional prediction is binned and
handed, as a counterfactual signal, to the rational decision-maker on the
group of rows whose actual prediction equals the instance's prediction; the
coalition value is the resulting ILIV over the agent decisions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import Column, Dataset, SchemaError, SignalSpec, encode_column
from .decision import PayoffFunction
from .infovalue import IlivEvaluator
from .shapley import CachedValue, exact_shapley, members, permutation_shapley

IMPUTATIONS = ("interventional", "conditional")


@dataclass(frozen=True)
class PredictiveModel:
    """A deterministic real-valued model over ``m`` features plus background rows."""

    f: Callable[[np.ndarray], np.ndarray]
    feature_names: tuple
    background: np.ndarray

    def __post_init__(self):
        bg = np.atleast_2d(np.asarray(self.background, dtype=float))
        if bg.shape[0] == 0:
            raise ValueError("background data must be non-empty")
        if bg.shape[1] != len(self.feature_names):
            raise ValueError("background width does not match feature names")
        object.__setattr__(self, "background", bg)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def m(self) -> int:
        return len(self.feature_names)

    def __call__(self, X) -> np.ndarray:
        return np.asarray(self.f(np.atleast_2d(np.asarray(X, dtype=float))), dtype=float).ravel()


def _mask(coalition, m: int) -> int:
    if isinstance(coalition, (int, np.integer)):
        return int(coalition)
    mask = 0
    for i in coalition:
        if not 0 <= int(i) < m:
            raise ValueError(f"feature index {i} out of range")
        mask |= 1 << int(i)
    return mask


def coalition_value_shap(model: PredictiveModel, x, coalition, imputation: str = "interventional") -> float:
    """Expected model output with the coalition's features fixed to ``x``.

    Interventional imputation averages over all background rows.  Conditional
    imputation averages over background rows that agree with ``x`` on the
    coalition, falling back to interventional when none do.
    """
    x = np.asarray(x, dtype=float)
    m = model.m
    mask = _mask(coalition, m)
    if mask == (1 << m) - 1:
        return float(model(x[None, :])[0])
    idx = members(mask, m)
    bg = model.background
    if imputation == "conditional" and idx:
        match = np.all(np.isclose(bg[:, idx], x[idx]), axis=1)
        if match.any():
            return float(model(bg[match]).mean())
    elif imputation not in IMPUTATIONS:
        raise ValueError(f"imputation must be one of {IMPUTATIONS}")
    X = bg.copy()
    X[:, idx] = x[idx]
    return float(model(X).mean())


@dataclass
class Attribution:
    feature_names: tuple
    scores: np.ndarray
    base: float
    total: float
    mode: str  # "shap" | "iliv-shap"
    estimator: dict
    se: np.ndarray | None = None
    x: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def efficiency_gap(self) -> float:
        return float(abs(self.scores.sum() - (self.total - self.base)))

    def as_dict(self) -> dict:
        return dict(zip(self.feature_names, self.scores.tolist()))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "estimator": self.estimator,
            "features": list(self.feature_names),
            "x": None if self.x is None else self.x.tolist(),
            "scores": self.scores.tolist(),
            "se": None if self.se is None else [None if np.isnan(s) else float(s) for s in self.se],
            "base": self.base,
            "total": self.total,
            "efficiency_gap": self.efficiency_gap,
            **self.extra,
        }


def shap_game(model: PredictiveModel, x, imputation: str = "interventional") -> CachedValue:
    x = np.asarray(x, dtype=float)
    return CachedValue(lambda mask: coalition_value_shap(model, x, mask, imputation))


def shap_exact(model: PredictiveModel, x, imputation: str = "interventional") -> Attribution:
    x = np.asarray(x, dtype=float)
    game = shap_game(model, x, imputation)
    phi, vals = exact_shapley(game, model.m)
    return Attribution(model.feature_names, phi, float(vals[0]), float(vals[-1]), "shap",
                       {"kind": "exact", "imputation": imputation}, x=x)


# ---------------------------------------------------------------------------
# ILIV-SHAP

def prediction_column(values, name: str = "prediction", step: float = 0.01,
                      lo: float = 0.0, hi: float = 1.0) -> Column:
    """Grid-binned signal column holding model predictions."""
    return encode_column(name, "signal", np.asarray(values, dtype=float),
                         SignalSpec(name, "numeric", binning="grid", grid=(lo, hi, step)))


def attach_predictions(ds: Dataset, model: PredictiveModel, features: Sequence[str] | None = None,
                       name: str = "prediction", step: float = 0.01) -> Dataset:
    """Add the model's prediction for every row as a grid-binned signal.

    Features are read from the raw values of numeric columns (or the level
    centers of categorical ones).
    """
    features = list(features or model.feature_names)
    X = np.column_stack([_feature_values(ds, f) for f in features])
    return ds.add_column(prediction_column(model(X), name, step))


def _feature_values(ds: Dataset, name: str) -> np.ndarray:
    c = ds.column(name)
    if c.raw is not None:
        return np.asarray(c.raw, dtype=float)
    return np.asarray(c.centers, dtype=float)[c.codes]


class IlivGame:
    """Coalition value: ILIV on the f(x)-group of the binned g_f(coalition)."""

    def __init__(self, model: PredictiveModel, x, ds: Dataset, S: PayoffFunction,
                 Db: Sequence[str] = (), estimator=None, pred_col: str = "prediction",
                 imputation: str = "interventional"):
        self.model = model
        self.x = np.asarray(x, dtype=float)
        self.imputation = imputation
        col = ds.column(pred_col)
        if col.role != "signal":
            raise SchemaError(f"{pred_col!r} must be a signal column")
        self.col = col
        self.evaluator = IlivEvaluator(ds, S, [pred_col], Db, estimator)
        self.fx = float(model(self.x[None, :])[0])
        self.v = np.array([col.encode(self.fx)], dtype=np.int64)
        self.group = self.evaluator.group(self.v)  # raises NoInstancesError
        self.predictions: dict[int, float] = {}

    def g(self, mask: int) -> float:
        if mask not in self.predictions:
            self.predictions[mask] = coalition_value_shap(self.model, self.x, mask, self.imputation)
        return self.predictions[mask]

    def __call__(self, mask: int) -> float:
        vp = np.array([self.col.encode(self.g(int(mask)))], dtype=np.int64)
        return self.evaluator.value(self.v, vp)

    @property
    def group_label(self):
        return self.col.levels[int(self.v[0])]


def iliv_shap_exact(model: PredictiveModel, x, ds: Dataset, S: PayoffFunction,
                    Db: Sequence[str] = (), estimator=None, pred_col: str = "prediction",
                    imputation: str = "interventional") -> Attribution:
    game = IlivGame(model, x, ds, S, Db, estimator, pred_col, imputation)
    phi, vals = exact_shapley(CachedValue(game), model.m)
    return Attribution(model.feature_names, phi, float(vals[0]), float(vals[-1]), "iliv-shap",
                       {"kind": "exact", "imputation": imputation}, x=game.x,
                       extra={"prediction": game.fx, "group": game.group_label,
                              "group_size": int(len(game.group))})


def permutation_sample(kind: str, model: PredictiveModel, x, B: int, seed: int,
                       antithetic: bool = True, ds: Dataset | None = None,
                       S: PayoffFunction | None = None, Db: Sequence[str] = (), estimator=None,
                       pred_col: str = "prediction", imputation: str = "interventional") -> Attribution:
    """Permutation-sampling estimate of SHAP (``kind='shap'``) or ILIV-SHAP."""
    x = np.asarray(x, dtype=float)
    extra = {}
    if kind == "shap":
        game = shap_game(model, x, imputation)
    elif kind == "iliv-shap":
        if ds is None or S is None:
            raise ValueError("ILIV-SHAP needs a dataset and a payoff function")
        ig = IlivGame(model, x, ds, S, Db, estimator, pred_col, imputation)
        game = CachedValue(ig)
        extra = {"prediction": ig.fx, "group": ig.group_label, "group_size": int(len(ig.group))}
    else:
        raise ValueError("kind must be 'shap' or 'iliv-shap'")
    phi, se, samples = permutation_shapley(game, model.m, B, seed, antithetic)
    return Attribution(model.feature_names, phi, game(0), game((1 << model.m) - 1), kind,
                       {"kind": "permutation", "B": B, "seed": seed, "antithetic": antithetic,
                        "imputation": imputation},
                       se=se, x=x, extra={**extra, "sample_variance": samples.var(axis=0, ddof=1).tolist()
                                          if B > 1 else None})


# ---------------------------------------------------------------------------
# highlighting

@dataclass
class HighlightReport:
    ranking: list
    scores: dict
    tau: float
    highlighted: list

    def to_dict(self) -> dict:
        tau = self.tau if np.isfinite(self.tau) else ("inf" if self.tau > 0 else "-inf")
        return {"ranking": self.ranking, "scores": self.scores, "tau": tau,
                "highlighted": self.highlighted}


def highlight(attr: Attribution, tau: float) -> HighlightReport:
    """Rank features by score (ties by feature index) and flag those >= tau."""
    if np.isnan(tau):
        raise ValueError("threshold must not be NaN")
    order = sorted(range(len(attr.scores)), key=lambda i: (-attr.scores[i], i))
    names = [attr.feature_names[i] for i in order]
    return HighlightReport(names, attr.as_dict(), float(tau),
                           [attr.feature_names[i] for i in order if attr.scores[i] >= tau])


def render_table(shap: Attribution, iliv_shap: Attribution, tau: float) -> tuple[list[dict], str]:
    """Rows of (feature, value, SHAP, ILIV-SHAP, highlighted) plus a text rendering."""
    hl = set(highlight(iliv_shap, tau).highlighted)
    order = highlight(iliv_shap, tau).ranking
    idx = {n: i for i, n in enumerate(shap.feature_names)}
    rows = []
    for name in order:
        i = idx[name]
        rows.append({"feature": name,
                     "value": None if shap.x is None else float(shap.x[i]),
                     "shap": float(shap.scores[i]),
                     "iliv_shap": float(iliv_shap.scores[i]),
                     "highlighted": name in hl})
    lines = [f"{'feature':<20}{'value':>12}{'SHAP':>14}{'ILIV-SHAP':>14}  *"]
    for r in rows:
        val = "" if r["value"] is None else f"{r['value']:.4g}"
        lines.append(f"{r['feature']:<20}{val:>12}{r['shap']:>14.6g}{r['iliv_shap']:>14.6g}  "
                     f"{'*' if r['highlighted'] else ''}")
    return rows, "\n".join(lines)


def linear_model(coef: Sequence[float], intercept: float = 0.0, link: str = "identity"):
    """Callable for a linear predictor with optional logistic link."""
    coef = np.asarray(coef, dtype=float)

    def f(X):
        z = np.asarray(X, dtype=float) @ coef + intercept
        if link == "logistic":
            return 1.0 / (1.0 + np.exp(-z))
        if link != "identity":
            raise ValueError(f"unknown link {link!r}")
        return z

    return f
