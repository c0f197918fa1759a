"""Tabular datasets: column roles, binning of numeric signals, CSV ingestion.

Every signal and agent-decision column is stored as integer codes into a
tuple of level labels.  Numeric signals keep their raw values too, plus one
representative value per bin (used by the GLM estimator and by counterfactual
lookups).  Rows may carry weights, which is how bootstrap resampling and
exact (probability-weighted) datasets are expressed without copying data.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .decision import StateSpace

ROLES = ("signal", "decision", "state", "weight")
BINNINGS = ("equal-frequency", "equal-width", "edges", "grid")


class SchemaError(ValueError):
    """Raised for unknown columns, malformed schemas and non-conforming rows."""


@dataclass(frozen=True)
class SignalSpec:
    """How one signal column is turned into codes."""

    name: str
    kind: str = "categorical"  # or "numeric"
    values: tuple | None = None  # categorical levels, in code order
    binning: str = "equal-frequency"
    k: int = 10
    edges: tuple | None = None
    grid: tuple | None = None  # (lo, hi, step)

    def __post_init__(self):
        if self.kind not in ("categorical", "numeric"):
            raise SchemaError(f"{self.name}: kind must be categorical or numeric")
        if self.kind == "categorical" and self.values is not None and len(self.values) == 0:
            raise SchemaError(f"{self.name}: empty categorical value set")
        if self.kind == "numeric":
            if self.binning not in BINNINGS:
                raise SchemaError(f"{self.name}: unknown binning {self.binning!r}")
            if self.binning in ("equal-frequency", "equal-width") and self.k < 2:
                raise SchemaError(f"{self.name}: need k >= 2 bins")
            if self.binning == "edges" and (self.edges is None or len(self.edges) < 1):
                raise SchemaError(f"{self.name}: explicit binning needs edges")
            if self.binning == "grid" and (self.grid is None or self.grid[2] <= 0):
                raise SchemaError(f"{self.name}: grid binning needs (lo, hi, step>0)")

    @classmethod
    def from_dict(cls, name: str, d: Mapping) -> "SignalSpec":
        d = dict(d)
        d.pop("role", None)
        kind = d.pop("kind", "categorical")
        values = d.pop("values", None)
        edges = d.pop("edges", None)
        grid = d.pop("grid", None)
        if isinstance(grid, Mapping):
            grid = (grid.get("lo", 0.0), grid.get("hi", 1.0), grid["step"])
        spec = cls(name, kind, tuple(values) if values is not None else None,
                   d.pop("binning", "equal-frequency"), int(d.pop("k", 10)),
                   tuple(edges) if edges is not None else None,
                   tuple(float(g) for g in grid) if grid is not None else None)
        if d:
            raise SchemaError(f"{name}: unknown schema keys {sorted(d)}")
        return spec


def bin_edges(x: np.ndarray, spec: SignalSpec) -> np.ndarray:
    """Interior cut points for a numeric column (codes = searchsorted right)."""
    if spec.binning == "edges":
        return np.asarray(sorted(spec.edges), dtype=float)
    if spec.binning == "grid":
        lo, hi, step = spec.grid
        k = int(math.floor((hi - lo) / step + 1e-9))
        pts = lo + step * np.arange(k + 1)
        return np.round((pts[:-1] + pts[1:]) / 2, 12)
    finite = x[np.isfinite(x)]
    if spec.binning == "equal-width":
        lo, hi = float(finite.min()), float(finite.max())
        if hi == lo:
            return np.array([], dtype=float)
        return np.linspace(lo, hi, spec.k + 1)[1:-1]
    qs = np.quantile(finite, np.linspace(0, 1, spec.k + 1)[1:-1])
    return np.unique(qs)


@dataclass(frozen=True)
class Column:
    name: str
    role: str
    codes: np.ndarray
    levels: tuple
    centers: np.ndarray  # numeric representative of each level
    raw: np.ndarray | None = None  # raw numeric values, numeric signals only
    edges: np.ndarray | None = None

    @property
    def cardinality(self) -> int:
        return len(self.levels)

    @property
    def numeric(self) -> bool:
        return self.edges is not None

    def encode(self, value) -> int:
        """Code of a level label, or of the bin containing a raw number."""
        for i, lab in enumerate(self.levels):
            if lab == value or str(lab) == str(value):
                return i
        if self.edges is not None and isinstance(value, (int, float, np.integer, np.floating)):
            return int(np.searchsorted(self.edges, float(value), side="right"))
        raise SchemaError(f"value {value!r} outside the domain of column {self.name!r}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _as_float(values) -> np.ndarray:
    try:
        x = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"non-numeric value in numeric column: {exc}") from None
    return x


def _numeric_level_centers(levels) -> np.ndarray:
    try:
        return np.asarray([float(v) for v in levels], dtype=float)
    except (TypeError, ValueError):
        return np.arange(len(levels), dtype=float)


def encode_column(name: str, role: str, values, spec: SignalSpec | None = None) -> Column:
    """Turn raw values into a :class:`Column` following ``spec``."""
    spec = spec or SignalSpec(name)
    values = np.asarray(values, dtype=object) if not isinstance(values, np.ndarray) else values
    if spec.kind == "numeric":
        x = _as_float(values)
        if np.any(np.isnan(x)):
            raise SchemaError(f"column {name!r} has missing/NaN values")
        edges = bin_edges(x, spec)
        codes = np.searchsorted(edges, x, side="right").astype(np.int64)
        n_bins = len(edges) + 1
        if spec.binning == "grid":
            lo, _, step = spec.grid
            centers = np.round(lo + step * np.arange(n_bins), 12)
            levels = tuple(float(c) for c in centers)
        else:
            sums = np.bincount(codes, weights=x, minlength=n_bins)
            cnts = np.bincount(codes, minlength=n_bins)
            bounds = np.concatenate([[x.min()], edges, [x.max()]])
            mids = (bounds[:-1] + bounds[1:]) / 2
            centers = np.where(cnts > 0, sums / np.maximum(cnts, 1), mids)
            levels = tuple(f"bin{i}" for i in range(n_bins))
        return Column(name, role, _freeze(codes), levels, _freeze(np.asarray(centers, float)),
                      _freeze(x), _freeze(edges))
    if spec.values is not None:
        levels = tuple(spec.values)
        lookup = {str(v): i for i, v in enumerate(levels)}
        try:
            codes = np.fromiter((lookup[str(v)] for v in values), dtype=np.int64, count=len(values))
        except KeyError as exc:
            raise SchemaError(f"column {name!r}: value {exc.args[0]!r} not in {list(levels)}") from None
    else:
        uniq, codes = np.unique(np.asarray(values), return_inverse=True)
        levels = tuple(u.item() if hasattr(u, "item") else u for u in uniq)
        codes = codes.astype(np.int64).ravel()
    return Column(name, role, _freeze(codes), levels, _freeze(_numeric_level_centers(levels)))


def cell_keys(codes: np.ndarray, cards: Sequence[int]) -> np.ndarray:
    """Mixed-radix integer key per row of an (n, k) code matrix."""
    codes = np.asarray(codes, dtype=np.int64)
    n, k = codes.shape
    if k == 0:
        return np.zeros(n, dtype=np.int64)
    if math.prod(max(int(c), 1) for c in cards) < 2**62:
        return np.ravel_multi_index(tuple(codes.T), tuple(max(int(c), 1) for c in cards),
                                    mode="clip").astype(np.int64)
    _, inv = np.unique(codes, axis=0, return_inverse=True)
    return inv.ravel().astype(np.int64)


@dataclass(frozen=True)
class Dataset:
    """Rows of (signals, agent decisions, state) with optional weights."""

    columns: Mapping[str, Column]
    state: np.ndarray
    states: StateSpace
    weights: np.ndarray
    state_name: str = "state"
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.state)
        if n < 1:
            raise SchemaError("a dataset needs at least one row")
        for c in self.columns.values():
            if len(c.codes) != n:
                raise SchemaError(f"column {c.name!r} has {len(c.codes)} rows, expected {n}")
        if len(self.weights) != n:
            raise SchemaError("weights length mismatch")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise SchemaError("weights must be finite and non-negative")
        if self.weights.sum() <= 0:
            raise SchemaError("total weight must be positive")
        if self.state.min() < 0 or self.state.max() >= len(self.states):
            raise SchemaError("state codes out of range")

    # construction -----------------------------------------------------------
    @classmethod
    def from_arrays(cls, signals: Mapping[str, Iterable] | None = None,
                    decisions: Mapping[str, Iterable] | None = None,
                    state: Iterable = (), states: Sequence | None = None,
                    weights: Iterable | None = None,
                    schema: Mapping[str, SignalSpec | Mapping] | None = None,
                    state_name: str = "state") -> "Dataset":
        schema = dict(schema or {})
        cols: dict[str, Column] = {}
        for role, group in (("signal", signals or {}), ("decision", decisions or {})):
            for name, vals in group.items():
                if name in cols or name == state_name:
                    raise SchemaError(f"duplicate column name {name!r}")
                spec = schema.get(name)
                if isinstance(spec, Mapping):
                    spec = SignalSpec.from_dict(name, spec)
                cols[name] = encode_column(name, role, list(vals) if not isinstance(vals, np.ndarray) else vals, spec)
        state = list(state)
        if states is None:
            states = tuple(sorted({s for s in state}, key=str))
        space = states if isinstance(states, StateSpace) else StateSpace(tuple(states))
        lookup = {str(lab): i for i, lab in enumerate(space.labels)}
        try:
            codes = np.fromiter((lookup[str(s)] for s in state), dtype=np.int64, count=len(state))
        except KeyError as exc:
            raise SchemaError(f"state {exc.args[0]!r} not in {list(space.labels)}") from None
        w = np.ones(len(codes)) if weights is None else np.asarray(list(weights), dtype=float)
        # zero weights arise internally (bootstrap resamples) but not in input data
        if weights is not None and np.any(w <= 0):
            raise SchemaError("row weights must be positive")
        return cls(cols, _freeze(codes), space, _freeze(w), state_name)

    # accessors --------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.state)

    @property
    def signal_names(self) -> list[str]:
        return [c.name for c in self.columns.values() if c.role == "signal"]

    @property
    def decision_names(self) -> list[str]:
        return [c.name for c in self.columns.values() if c.role == "decision"]

    @property
    def n_states(self) -> int:
        return len(self.states)

    def column(self, name: str) -> Column:
        try:
            return self.columns[name]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}; known: {list(self.columns)}") from None

    def check_columns(self, cols: Iterable[str]) -> tuple[str, ...]:
        cols = tuple(cols)
        for c in cols:
            self.column(c)
        return cols

    def codes(self, cols: Sequence[str]) -> np.ndarray:
        if not cols:
            return np.zeros((self.n, 0), dtype=np.int64)
        return np.column_stack([self.column(c).codes for c in cols])

    def cards(self, cols: Sequence[str]) -> list[int]:
        return [self.column(c).cardinality for c in cols]

    def encode(self, cols: Sequence[str], realization) -> np.ndarray:
        """Code vector for a realization given as a mapping or a sequence of labels."""
        if isinstance(realization, Mapping):
            missing = set(cols) - set(realization)
            if missing:
                raise SchemaError(f"realization lacks columns {sorted(missing)}")
            vals = [realization[c] for c in cols]
        else:
            vals = list(realization)
            if len(vals) != len(cols):
                raise SchemaError("realization length does not match columns")
        return np.array([self.column(c).encode(v) for c, v in zip(cols, vals)], dtype=np.int64)

    def prior(self) -> np.ndarray:
        return np.bincount(self.state, weights=self.weights, minlength=self.n_states) / self.weights.sum()

    # derived datasets -------------------------------------------------------
    def with_weights(self, weights) -> "Dataset":
        return replace(self, weights=_freeze(np.asarray(weights, dtype=float)))

    def add_column(self, col: Column) -> "Dataset":
        if col.name in self.columns:
            raise SchemaError(f"column {col.name!r} exists")
        cols = dict(self.columns)
        cols[col.name] = col
        return replace(self, columns=cols)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        cols = {k: replace(c, codes=_freeze(c.codes[idx]),
                           raw=None if c.raw is None else _freeze(c.raw[idx]))
                for k, c in self.columns.items()}
        return replace(self, columns=cols, state=_freeze(self.state[idx]),
                       weights=_freeze(self.weights[idx]))

    def schema_dict(self) -> dict:
        out = {}
        for c in self.columns.values():
            d: dict = {"role": c.role}
            if c.numeric:
                d.update(kind="numeric", binning="edges", edges=[float(e) for e in c.edges])
            else:
                d.update(kind="categorical", values=list(c.levels))
            out[c.name] = d
        out[self.state_name] = {"role": "state", "values": list(self.states.labels)}
        return out


# ---------------------------------------------------------------------------
# CSV ingestion

def load_sidecar(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def read_csv(path: str | Path, roles: Mapping[str, Mapping]) -> Dataset:
    """Read an RFC-4180 CSV whose columns are described by ``roles``.

    ``roles`` maps column name to ``{"role": ..., **binning}``; exactly one
    column must have role ``state``.  Columns not mentioned are ignored.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)
    state_cols = [k for k, v in roles.items() if v.get("role") == "state"]
    if len(state_cols) != 1:
        raise SchemaError(f"exactly one state column required, found {state_cols}")
    for name, spec in roles.items():
        if spec.get("role") not in ROLES:
            raise SchemaError(f"column {name!r}: role must be one of {ROLES}")
        if name not in header:
            raise SchemaError(f"column {name!r} (role {spec.get('role')}) not in CSV header {header}")
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    data = {h: [r[i] for r in rows] for i, h in enumerate(header)}
    signals, decisions, schema = {}, {}, {}
    weights = None
    state_name = state_cols[0]
    for name, spec in roles.items():
        role = spec["role"]
        if role == "signal":
            signals[name] = data[name]
            schema[name] = spec
        elif role == "decision":
            decisions[name] = data[name]
            schema[name] = {k: v for k, v in spec.items() if k in ("role", "values")}
        elif role == "weight":
            weights = _as_float(data[name])
    states = roles[state_name].get("values")
    state_vals = data[state_name]
    if states is not None:
        known = {str(s) for s in states}
        for lineno, s in enumerate(state_vals, start=2):
            if str(s) not in known:
                raise SchemaError(f"{path}:{lineno}: state {s!r} not in {list(states)}")
    ds = Dataset.from_arrays(signals, decisions, state_vals, states, weights, schema, state_name)
    return replace(ds, meta={"path": str(path)})


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write a dataset as CSV (level labels / raw values, plus state)."""
    path = Path(path)
    names = list(ds.columns)
    cols = []
    for name in names:
        c = ds.columns[name]
        if c.raw is not None:
            cols.append([repr(float(v)) for v in c.raw])
        else:
            cols.append([str(c.levels[k]) for k in c.codes])
    state = [str(ds.states.labels[k]) for k in ds.state]
    header = names + [ds.state_name]
    has_w = not np.all(ds.weights == 1.0)
    if has_w:
        header.append("weight")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            row = [col[i] for col in cols] + [state[i]]
            if has_w:
                row.append(repr(float(ds.weights[i])))
            w.writerow(row)
