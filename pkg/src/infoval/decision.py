"""Decision problems, payoff tables and Bayesian-rational choice.

A decision problem is a triple (states, decisions, payoff).  Payoffs are
always materialized as a dense ``|D| x |Omega|`` table so the rest of the
package can treat every problem the same way, including discretized
continuous decisions (Brier reports on a grid) and V-shaped scoring rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

BELIEF_ATOL = 1e-9
# relative slack used to detect argmax ties so the lowest index wins
TIE_RTOL = 1e-12


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class StateSpace:
    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise DomainError("a state space needs at least two states")
        if len(set(labels)) != len(labels):
            raise DomainError(f"duplicate state labels: {labels}")

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        for i, lab in enumerate(self.labels):
            if lab == label or str(lab) == str(label):
                return i
        raise DomainError(f"unknown state {label!r}; known: {self.labels}")

    @property
    def is_binary(self) -> bool:
        return len(self.labels) == 2


def _grid_points(lo: float, hi: float, step: float) -> np.ndarray:
    if step <= 0:
        raise DomainError("grid step must be positive")
    if hi < lo:
        raise DomainError("grid upper end below lower end")
    k = int(np.floor((hi - lo) / step + 1e-9))
    # rounding keeps grid points such as 0.5 exact
    return np.round(lo + step * np.arange(k + 1), 12)


@dataclass(frozen=True)
class DecisionSpace:
    labels: tuple
    grid: tuple | None = None  # (lo, hi, step) when grid-backed

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise DomainError("empty decision space")
        if len(set(labels)) != len(labels):
            raise DomainError(f"duplicate decision labels: {labels}")
        if self.grid is not None:
            lo, hi, step = self.grid
            if step <= 0:
                raise DomainError("grid step must be positive")
            if list(labels) != sorted(labels):
                raise DomainError("grid labels must be ascending")

    @classmethod
    def from_grid(cls, lo: float = 0.0, hi: float = 1.0, step: float = 0.01) -> "DecisionSpace":
        pts = _grid_points(lo, hi, step)
        return cls(tuple(float(p) for p in pts), grid=(float(lo), float(hi), float(step)))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        if self.grid is not None and isinstance(label, (int, float, np.floating, np.integer)):
            pts = np.asarray(self.labels, dtype=float)
            i = int(np.argmin(np.abs(pts - float(label))))
            if abs(pts[i] - float(label)) <= 1e-9:
                return i
        for i, lab in enumerate(self.labels):
            if lab == label or str(lab) == str(label):
                return i
        raise DomainError(f"unknown decision {label!r}")

    @property
    def values(self) -> np.ndarray:
        """Numeric decision values (grid-backed or numeric labels only)."""
        return np.asarray(self.labels, dtype=float)


@dataclass(frozen=True)
class PayoffFunction:
    """Payoff table ``matrix[d, w]`` with cached bounds (M1, M2).

    Use the constructors :meth:`from_matrix`, :meth:`brier` and
    :meth:`v_shaped` rather than building one by hand.
    """

    kind: str
    matrix: np.ndarray
    decisions: DecisionSpace
    states: StateSpace
    mu: float | None = None
    bounds: tuple = field(init=False)
    # indices of the first occurrence of each distinct payoff row; argmax over
    # these is identical to argmax over all rows under lowest-index tie-breaking
    _distinct: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (len(self.decisions), len(self.states)):
            raise DomainError(
                f"payoff matrix shape {m.shape} != (|D|, |Omega|) = "
                f"({len(self.decisions)}, {len(self.states)})"
            )
        if not np.all(np.isfinite(m)):
            raise DomainError("payoff entries must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "bounds", (float(m.min()), float(m.max())))
        _, first = np.unique(m, axis=0, return_index=True)
        object.__setattr__(self, "_distinct", np.sort(first))

    @classmethod
    def from_matrix(cls, matrix, decisions: Sequence | DecisionSpace, states: Sequence | StateSpace):
        if not isinstance(decisions, DecisionSpace):
            decisions = DecisionSpace(tuple(decisions))
        if not isinstance(states, StateSpace):
            states = StateSpace(tuple(states))
        return cls("matrix", np.asarray(matrix, dtype=float), decisions, states)

    @classmethod
    def brier(cls, step: float = 0.01, states: Sequence = (0, 1)) -> "PayoffFunction":
        """Quadratic score ``1 - (d - w)^2`` on a report grid over [0, 1]."""
        ds = DecisionSpace.from_grid(0.0, 1.0, step)
        d = ds.values[:, None]
        w = np.array([0.0, 1.0])[None, :]
        return cls("brier", 1.0 - (d - w) ** 2, ds, StateSpace(tuple(states)))

    @classmethod
    def v_shaped(cls, mu: float, step: float = 0.01, states: Sequence = (0, 1),
                 reflect_state: bool = True) -> "PayoffFunction":
        ds = DecisionSpace.from_grid(0.0, 1.0, step)
        m = np.array([[v_shaped_payoff(mu, d, w, reflect_state) for w in (0, 1)] for d in ds.values])
        return cls("v-shaped", m, ds, StateSpace(tuple(states)), mu=float(mu))

    @property
    def M1(self) -> float:
        return self.bounds[0]

    @property
    def M2(self) -> float:
        return self.bounds[1]

    def affine(self, a: float, b: float) -> "PayoffFunction":
        return PayoffFunction(self.kind, a * self.matrix + b, self.decisions, self.states, self.mu)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind, "states": list(self.states.labels)}
        if self.kind == "matrix":
            out["decisions"] = list(self.decisions.labels)
            out["matrix"] = self.matrix.tolist()
        else:
            out["step"] = self.decisions.grid[2]
        if self.mu is not None:
            out["mu"] = self.mu
        return out


def as_belief(b, n_states: int | None = None) -> np.ndarray:
    p = np.asarray(b, dtype=float)
    if p.ndim != 1:
        raise DomainError("a belief is a 1-d probability vector")
    if n_states is not None and p.shape[0] != n_states:
        raise DomainError(f"belief has {p.shape[0]} entries, expected {n_states}")
    if np.any(p < -BELIEF_ATOL) or abs(p.sum() - 1.0) > BELIEF_ATOL:
        raise DomainError(f"not a probability vector: {p}")
    return p


def expected_payoff(S: PayoffFunction, d: int, b) -> float:
    """Expected payoff of decision index ``d`` under belief ``b``."""
    p = as_belief(b, len(S.states))
    if not 0 <= int(d) < len(S.decisions):
        raise DomainError(f"decision index {d} out of range [0, {len(S.decisions)})")
    return float(S.matrix[int(d)] @ p)


def rational_decisions(S: PayoffFunction, P: np.ndarray) -> np.ndarray:
    """Row-wise Bayes-optimal decision indices for a belief matrix ``P``.

    Ties (within a tiny relative tolerance) go to the lowest decision index.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    rows = S._distinct
    exp = P @ S.matrix[rows].T
    best = exp.max(axis=1, keepdims=True)
    tol = TIE_RTOL * max(1.0, float(np.abs(S.matrix).max()))
    return rows[np.argmax(exp >= best - tol, axis=1)]


def rational_decision(S: PayoffFunction, b) -> int:
    p = as_belief(b, len(S.states))
    return int(rational_decisions(S, p[None, :])[0])


def no_info_payoff(S: PayoffFunction, prior) -> float:
    """Best fixed-action expected payoff under the prior."""
    p = as_belief(prior, len(S.states))
    return float((S.matrix @ p).max())


def v_shaped_payoff(mu: float, d: float, w: int, reflect_state: bool = True) -> float:
    """V-shaped scoring rule with kink ``mu`` for a binary state ``w``.

    For ``mu <= 1/2`` the payoff is ``1/2 -+ (1/2)(w - mu)/(1 - mu)`` on either
    side of the kink.  Kinks above 1/2 are obtained by reflection; with
    ``reflect_state=True`` both the report and the state are reflected, which
    keeps the switching belief at ``mu``.  ``reflect_state=False`` reflects
    only the report.
    """
    if not 0.0 < mu < 1.0:
        raise DomainError(f"kink must lie in (0, 1), got {mu}")
    if w not in (0, 1):
        raise DomainError("V-shaped rules are defined for binary states")
    if mu > 0.5:
        return v_shaped_payoff(1.0 - mu, 1.0 - d, (1 - w) if reflect_state else w, reflect_state)
    slope = 0.5 * (w - mu) / (1.0 - mu)
    return 0.5 - slope if d <= mu else 0.5 + slope


def problem_from_config(cfg: Mapping) -> PayoffFunction:
    """Build a payoff function from a config mapping.

    Recognised shapes::

        {"kind": "matrix", "states": [...], "decisions": [...], "matrix": [[...]]}
        {"kind": "brier", "step": 0.01}
        {"kind": "v-shaped", "mu": 0.3, "step": 0.01}
    """
    kind = cfg.get("kind", "matrix")
    states = tuple(cfg.get("states", (0, 1)))
    if kind == "matrix":
        if "matrix" not in cfg or "decisions" not in cfg:
            raise DomainError("matrix payoff needs 'decisions' and 'matrix'")
        return PayoffFunction.from_matrix(cfg["matrix"], cfg["decisions"], states)
    if kind == "brier":
        return PayoffFunction.brier(float(cfg.get("step", 0.01)), states)
    if kind in ("v-shaped", "v_shaped", "vshaped"):
        return PayoffFunction.v_shaped(float(cfg["mu"]), float(cfg.get("step", 0.01)), states,
                                       bool(cfg.get("reflect_state", True)))
    raise DomainError(f"unknown payoff kind {kind!r}")


def weather_problem() -> PayoffFunction:
    """Umbrella problem: states (no rain, rain), decisions (no umbrella, umbrella)."""
    return PayoffFunction.from_matrix([[0.0, -100.0], [-50.0, 0.0]],
                                      ("no umbrella", "umbrella"), ("no rain", "rain"))
