"""Data-generating processes with exact posteriors.

A :class:`SyntheticDGP` is a finite joint distribution over named variables
(signals and agent decisions) and the state, stored as a dense probability
tensor.  It is usually built from a small Bayesian network of conditional
probability tables (see :meth:`SyntheticDGP.from_nodes`), which also is the
JSON format used by fixtures and by ``infoval simulate``.

Everything here is exact arithmetic over the finite support, so these objects
double as oracles for the estimators in :mod:`infoval.estimation`.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import Column, Dataset, SchemaError, _freeze, cell_keys
from .decision import PayoffFunction, StateSpace


class UndefinedPosterior(ValueError):
    """Conditioning event has zero probability."""


@dataclass(frozen=True)
class Node:
    name: str
    role: str
    values: tuple
    parents: tuple = ()
    cpt: np.ndarray | None = None  # shape (*parent_cards, len(values))

    @classmethod
    def from_dict(cls, d: Mapping) -> "Node":
        return cls(d["name"], d.get("role", "signal"), tuple(d["values"]),
                   tuple(d.get("parents", ())), np.asarray(d["cpt"], dtype=float))

    def to_dict(self) -> dict:
        return {"name": self.name, "role": self.role, "values": list(self.values),
                "parents": list(self.parents), "cpt": self.cpt.tolist()}


@dataclass(frozen=True)
class JointDistribution:
    """Probability mass over distinct (realization, state) cells."""

    columns: tuple
    cells: tuple  # ((label, ...), state_label)
    probs: np.ndarray

    def __post_init__(self):
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ValueError("joint masses must sum to 1")
        if len(set(self.cells)) != len(self.cells):
            raise ValueError("duplicate cells in joint distribution")

    def as_dict(self) -> dict:
        return {c: float(p) for c, p in zip(self.cells, self.probs)}

    def posterior(self, realization: Sequence, states: Sequence) -> np.ndarray:
        d = self.as_dict()
        key = tuple(realization)
        mass = np.array([d.get((key, s), 0.0) for s in states])
        if mass.sum() <= 0:
            raise UndefinedPosterior(f"realization {key} has zero mass")
        return mass / mass.sum()


def total_variation(a: JointDistribution, b: JointDistribution) -> float:
    da, db = a.as_dict(), b.as_dict()
    keys = set(da) | set(db)
    return 0.5 * sum(abs(da.get(k, 0.0) - db.get(k, 0.0)) for k in keys)


class SyntheticDGP:
    """Finite joint distribution over variables x state.

    ``joint`` has one axis per variable (in ``names`` order) followed by the
    state axis.  Instances are treated as immutable.
    """

    def __init__(self, names: Sequence[str], roles: Sequence[str], levels: Sequence[Sequence],
                 states: Sequence, joint, state_name: str = "state",
                 nodes: Sequence[Node] | None = None):
        self.names = tuple(names)
        self.roles = tuple(roles)
        self.levels = tuple(tuple(lv) for lv in levels)
        self.states = StateSpace(tuple(states))
        self.state_name = state_name
        joint = np.asarray(joint, dtype=float)
        expected = tuple(len(lv) for lv in self.levels) + (len(self.states),)
        if joint.shape != expected:
            raise SchemaError(f"joint shape {joint.shape} != {expected}")
        if np.any(joint < 0) or abs(joint.sum() - 1.0) > 1e-9:
            raise SchemaError("joint must be a probability tensor")
        if len(set(self.names)) != len(self.names) or state_name in self.names:
            raise SchemaError("variable names must be unique")
        joint = joint / joint.sum()
        joint.setflags(write=False)
        self.joint = joint
        self.nodes = tuple(nodes) if nodes is not None else None

    # construction -----------------------------------------------------------
    @classmethod
    def from_nodes(cls, nodes: Sequence[Node | Mapping]) -> "SyntheticDGP":
        """Build from conditional probability tables listed in topological order.

        Exactly one node has role ``state``.  Each node's CPT is indexed by its
        parents' values (in ``parents`` order) and then by its own values.
        """
        nodes = [n if isinstance(n, Node) else Node.from_dict(n) for n in nodes]
        state_nodes = [n for n in nodes if n.role == "state"]
        if len(state_nodes) != 1:
            raise SchemaError("exactly one node must have role 'state'")
        pos = {}
        for i, node in enumerate(nodes):
            if node.name in pos:
                raise SchemaError(f"duplicate node {node.name!r}")
            for p in node.parents:
                if p not in pos:
                    raise SchemaError(f"node {node.name!r}: parent {p!r} must be listed earlier")
            shape = tuple(len(nodes[pos[p]].values) for p in node.parents) + (len(node.values),)
            if node.cpt is None or node.cpt.shape != shape:
                raise SchemaError(f"node {node.name!r}: cpt shape must be {shape}")
            if np.any(node.cpt < 0) or not np.allclose(node.cpt.sum(axis=-1), 1.0, atol=1e-9):
                raise SchemaError(f"node {node.name!r}: cpt rows must be distributions")
            pos[node.name] = i
        k = len(nodes)
        joint = np.ones((1,) * k)
        for i, node in enumerate(nodes):
            axes = [pos[p] for p in node.parents] + [i]
            order = np.argsort(axes)
            t = np.transpose(node.cpt, order)
            shape = [1] * k
            for ax in axes:
                shape[ax] = len(nodes[ax].values)
            joint = joint * t.reshape(shape)
        s = pos[state_nodes[0].name]
        joint = np.moveaxis(joint, s, -1)
        others = [n for n in nodes if n.role != "state"]
        return cls([n.name for n in others], [n.role for n in others], [n.values for n in others],
                   state_nodes[0].values, joint, state_nodes[0].name, nodes)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticDGP":
        if "nodes" in d:
            return cls.from_nodes(d["nodes"])
        v = d["variables"]
        return cls([x["name"] for x in v], [x.get("role", "signal") for x in v],
                   [x["values"] for x in v], d["states"], np.asarray(d["joint"]),
                   d.get("state_name", "state"))

    @classmethod
    def load(cls, path: str | Path) -> "SyntheticDGP":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        if self.nodes is not None:
            return {"nodes": [n.to_dict() for n in self.nodes]}
        return {"variables": [{"name": n, "role": r, "values": list(lv)}
                              for n, r, lv in zip(self.names, self.roles, self.levels)],
                "states": list(self.states.labels), "state_name": self.state_name,
                "joint": self.joint.tolist()}

    # queries ----------------------------------------------------------------
    @property
    def prior(self) -> np.ndarray:
        return self.joint.reshape(-1, len(self.states)).sum(axis=0)

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown variable {name!r}; known: {self.names}") from None

    def marginal(self, cols: Sequence[str]) -> np.ndarray:
        """Joint of ``cols`` and the state, axes in ``cols`` order then state."""
        axes = [self.axis(c) for c in cols]
        if len(set(axes)) != len(axes):
            raise SchemaError("repeated column in marginal")
        drop = tuple(i for i in range(len(self.names)) if i not in axes)
        m = self.joint.sum(axis=drop) if drop else self.joint
        remaining = [i for i in range(len(self.names)) if i in axes]
        perm = [remaining.index(a) for a in axes] + [len(axes)]
        return np.transpose(m, perm)

    def _codes(self, cols, realization) -> tuple:
        if isinstance(realization, Mapping):
            vals = [realization[c] for c in cols]
        else:
            vals = list(realization)
        out = []
        for c, v in zip(cols, vals):
            lv = self.levels[self.axis(c)]
            for i, lab in enumerate(lv):
                if lab == v or str(lab) == str(v):
                    out.append(i)
                    break
            else:
                raise SchemaError(f"value {v!r} not in domain of {c!r}")
        return tuple(out)

    def exact_posterior(self, conditioning: Mapping) -> np.ndarray:
        cols = list(conditioning)
        mass = self.marginal(cols)[self._codes(cols, conditioning)]
        total = mass.sum()
        if total <= 0:
            raise UndefinedPosterior(f"P({dict(conditioning)}) = 0")
        return mass / total

    def posterior_table(self, cols: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """(posteriors, cell masses) for every realization of ``cols`` (C order)."""
        m = self.marginal(cols).reshape(-1, len(self.states))
        mass = m.sum(axis=1)
        post = np.divide(m, mass[:, None], out=np.full_like(m, np.nan), where=mass[:, None] > 0)
        return post, mass

    def rational_payoff(self, S: PayoffFunction, cols: Sequence[str]) -> float:
        """Best attainable expected payoff when observing ``cols`` (brute force)."""
        m = self.marginal(list(cols)).reshape(-1, len(self.states))
        return float((m @ S.matrix.T).max(axis=1).sum())

    def aciv(self, S: PayoffFunction, V: Sequence[str], Db: Sequence[str]) -> float:
        union = list(dict.fromkeys(list(Db) + list(V)))
        return self.rational_payoff(S, union) - self.rational_payoff(S, list(Db))

    def joint_distribution(self, cols: Sequence[str] | None = None) -> JointDistribution:
        cols = list(self.names) if cols is None else list(cols)
        m = self.marginal(cols)
        cells, probs = [], []
        for idx in itertools.product(*[range(s) for s in m.shape]):
            p = m[idx]
            if p > 0:
                real = tuple(self.levels[self.axis(c)][i] for c, i in zip(cols, idx[:-1]))
                cells.append((real, self.states.labels[idx[-1]]))
                probs.append(p)
        return JointDistribution(tuple(cols), tuple(cells), np.asarray(probs))

    # datasets ---------------------------------------------------------------
    def _dataset_from_flat(self, flat: np.ndarray, weights: np.ndarray) -> Dataset:
        idx = np.unravel_index(flat, self.joint.shape)
        cols = {}
        for a, (name, role, lv) in enumerate(zip(self.names, self.roles, self.levels)):
            cols[name] = Column(name, "decision" if role == "decision" else "signal",
                                _freeze(idx[a].astype(np.int64)), lv,
                                _freeze(_centers(lv)))
        return Dataset(cols, _freeze(idx[-1].astype(np.int64)), self.states,
                       _freeze(np.asarray(weights, dtype=float)), self.state_name)

    def sample(self, n: int, seed: int) -> Dataset:
        """``n`` i.i.d. rows; identical output for identical ``seed``."""
        if n < 1:
            raise ValueError("sample size must be >= 1")
        rng = np.random.default_rng(seed)
        p = self.joint.ravel()
        flat = rng.choice(p.size, size=n, p=p)
        return self._dataset_from_flat(flat, np.ones(n))

    def to_dataset(self) -> Dataset:
        """Exact dataset: one row per support cell weighted by its probability."""
        flat = np.flatnonzero(self.joint.ravel() > 0)
        return self._dataset_from_flat(flat, self.joint.ravel()[flat])

    def garble(self, channel, signal: str, new_name: str | None = None,
               new_values: Sequence | None = None) -> "SyntheticDGP":
        """Post-process ``signal`` through a state-independent stochastic matrix.

        ``channel[i, j]`` is the probability of emitting output ``j`` given the
        signal's ``i``-th value.  With ``new_name`` the garbled copy is added as
        a new variable and the original kept; otherwise it replaces the original.
        """
        a = self.axis(signal)
        C = np.asarray(channel, dtype=float)
        if C.ndim != 2 or C.shape[0] != len(self.levels[a]):
            raise SchemaError(f"channel needs {len(self.levels[a])} rows, got shape {C.shape}")
        if np.any(C < 0) or not np.allclose(C.sum(axis=1), 1.0, atol=1e-9):
            raise SchemaError("channel rows must be distributions")
        if new_values is None:
            new_values = self.levels[a] if C.shape[1] == len(self.levels[a]) else tuple(range(C.shape[1]))
        if len(new_values) != C.shape[1]:
            raise SchemaError("new_values length must match channel columns")
        moved = np.moveaxis(self.joint, a, -1)  # (..., state, signal)
        if new_name is None:
            out = np.moveaxis(moved @ C, -1, a)
            levels = list(self.levels)
            levels[a] = tuple(new_values)
            return SyntheticDGP(self.names, self.roles, levels, self.states.labels, out, self.state_name)
        # keep the original axis and append the garbled copy before the state
        ext = moved[..., :, :, None] * C  # (..., state, signal, out)
        ext = np.moveaxis(ext, -2, a)  # signal back in place -> (..., state, out)
        ext = np.swapaxes(ext, -1, -2)
        return SyntheticDGP(self.names + (new_name,), self.roles + ("signal",),
                            self.levels + (tuple(new_values),), self.states.labels, ext,
                            self.state_name)


def _centers(levels) -> np.ndarray:
    try:
        return np.asarray([float(v) for v in levels], dtype=float)
    except (TypeError, ValueError):
        return np.arange(len(levels), dtype=float)


def empirical_joint(ds: Dataset, cols: Sequence[str] = ()) -> JointDistribution:
    """Weighted empirical distribution of (selected columns, state)."""
    cols = list(ds.check_columns(cols))
    codes = ds.codes(cols)
    cards = ds.cards(cols)
    keys = cell_keys(np.column_stack([codes, ds.state]), cards + [ds.n_states])
    uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    mass = np.bincount(inv.ravel(), weights=ds.weights, minlength=len(uniq))
    mass = mass / mass.sum()
    cells = []
    for i in first:
        real = tuple(ds.column(c).levels[codes[i, j]] for j, c in enumerate(cols))
        cells.append((real, ds.states.labels[ds.state[i]]))
    keep = mass > 0
    return JointDistribution(tuple(cols), tuple(c for c, k in zip(cells, keep) if k), mass[keep])


def exact_posterior(dgp: SyntheticDGP, conditioning: Mapping) -> np.ndarray:
    return dgp.exact_posterior(conditioning)


def garble(channel, dgp: SyntheticDGP, signal: str, new_name: str | None = None) -> SyntheticDGP:
    return dgp.garble(channel, signal, new_name)


def sample(dgp: SyntheticDGP, n: int, seed: int) -> Dataset:
    return dgp.sample(n, seed)
