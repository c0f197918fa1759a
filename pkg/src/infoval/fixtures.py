"""Small synthetic decision environments with known answers."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .dgp import Node, SyntheticDGP


def bsc(eps: float) -> np.ndarray:
    """Binary symmetric channel flipping its input with probability ``eps``."""
    return np.array([[1 - eps, eps], [eps, 1 - eps]])


def channel_dgp(prior: Sequence[float], channels: Mapping[str, np.ndarray],
                agents: Mapping[str, tuple] | None = None,
                states: Sequence = (0, 1)) -> SyntheticDGP:
    """State first, then signals drawn independently given the state.

    ``channels[name][w, j]`` = P(signal = j | state = w); signal values are
    ``0..J-1``.  ``agents`` maps a decision column to ``(parents, cpt)``.
    """
    nodes = [Node("state", "state", tuple(states), (), np.asarray(prior, dtype=float))]
    for name, ch in channels.items():
        ch = np.asarray(ch, dtype=float)
        nodes.append(Node(name, "signal", tuple(range(ch.shape[1])), ("state",), ch))
    for name, (parents, cpt) in (agents or {}).items():
        cpt = np.asarray(cpt, dtype=float)
        nodes.append(Node(name, "decision", tuple(range(cpt.shape[-1])), tuple(parents), cpt))
    return SyntheticDGP.from_nodes(nodes)


def xor_dgp(with_agent: bool = False) -> SyntheticDGP:
    """Two uniform bits and state = s1 XOR s2; optionally an agent copying s1."""
    half = np.array([0.5, 0.5])
    xor = np.zeros((2, 2, 2))
    for a in (0, 1):
        for b in (0, 1):
            xor[a, b, a ^ b] = 1.0
    nodes = [Node("s1", "signal", (0, 1), (), half),
             Node("s2", "signal", (0, 1), (), half),
             Node("state", "state", (0, 1), ("s1", "s2"), xor)]
    if with_agent:
        nodes.append(Node("a", "decision", (0, 1), ("s1",), np.eye(2)))
    return SyntheticDGP.from_nodes(nodes)


def weather_dgp(forecast_eps: float = 0.0) -> SyntheticDGP:
    """Rain with prior 0.2 and a forecast that errs with probability ``forecast_eps``."""
    return channel_dgp([0.8, 0.2], {"forecast": bsc(forecast_eps)},
                       states=("no rain", "rain"))


def agent_signal_fixtures() -> dict[str, tuple[SyntheticDGP, tuple, tuple]]:
    """Named (dgp, V, Db) triples with binary state for ACIV oracle checks."""
    out = {}
    out["xor"] = (xor_dgp(with_agent=True), ("s2",), ("a",))
    # agent sees a noisy copy of the state; an independent sharper signal helps
    out["noisy-agent"] = (channel_dgp([0.5, 0.5], {"x": bsc(0.1)},
                                      {"a": (("state",), bsc(0.3))}), ("x",), ("a",))
    # agent acts on a garbling of the signal, so the signal itself adds value
    out["garbled-agent"] = (channel_dgp([0.3, 0.7], {"x": [[0.6, 0.3, 0.1], [0.1, 0.3, 0.6]]},
                                        {"a": (("x",), [[0.9, 0.1], [0.5, 0.5], [0.1, 0.9]])}),
                            ("x",), ("a",))
    # signal independent of the state: nothing to add
    out["null-signal"] = (channel_dgp([0.4, 0.6], {"x": [[0.5, 0.5], [0.5, 0.5]]},
                                      {"a": (("state",), bsc(0.2))}), ("x",), ("a",))
    # four-level signal and a three-level agent that partly uses it
    out["multilevel"] = (channel_dgp([0.6, 0.4],
                                     {"x": [[0.4, 0.3, 0.2, 0.1], [0.1, 0.2, 0.3, 0.4]],
                                      "z": bsc(0.25)},
                                     {"a": (("z",), [[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]])}),
                         ("x",), ("a",))
    return out


def garbling_chain(first: np.ndarray, second: np.ndarray, prior=(0.5, 0.5),
                   base: np.ndarray | None = None) -> SyntheticDGP:
    """Signals A, B = garble(A), C = garble(B) of a binary state."""
    base = bsc(0.1) if base is None else np.asarray(base)
    dgp = channel_dgp(prior, {"A": base})
    dgp = dgp.garble(first, "A", new_name="B")
    return dgp.garble(second, "B", new_name="C")


def garbling_chains() -> dict[str, SyntheticDGP]:
    return {
        "symmetric": garbling_chain(bsc(0.1), bsc(0.15)),
        "skewed-prior": garbling_chain(bsc(0.2), bsc(0.1), prior=(0.7, 0.3), base=bsc(0.05)),
        "three-level": garbling_chain(np.array([[0.8, 0.2, 0.0], [0.1, 0.8, 0.1], [0.0, 0.2, 0.8]]),
                                      np.array([[0.9, 0.1], [0.5, 0.5], [0.1, 0.9]]),
                                      prior=(0.4, 0.6),
                                      base=np.array([[0.6, 0.3, 0.1], [0.1, 0.3, 0.6]])),
    }


def z_channels() -> SyntheticDGP:
    """Two asymmetric signals: L certifies state 0, H certifies state 1."""
    L = np.array([[0.5, 0.5], [0.0, 1.0]])  # state 1 always emits 1
    H = np.array([[1.0, 0.0], [0.5, 0.5]])  # state 0 always emits 0
    return channel_dgp([0.5, 0.5], {"L": L, "H": H})


def independent_signals(eps: Sequence[float], prior=(0.5, 0.5),
                        agent_eps: float | None = None) -> SyntheticDGP:
    """Conditionally independent BSC signals ``s0..`` of a binary state."""
    channels = {f"s{i}": bsc(e) for i, e in enumerate(eps)}
    agents = {"a": (("state",), bsc(agent_eps))} if agent_eps is not None else None
    return channel_dgp(prior, channels, agents)


EXPLAIN_COEF = (1.5, -1.0, 0.8, 0.0, 0.6, 0.6)


def explain_fixture(n: int = 20000, seed: int = 0, coef: Sequence[float] = EXPLAIN_COEF,
                    intercept: float = -0.4, background: int = 2000):
    """Binary features, a logistic model that is the exact posterior, and an agent.

    Features ``x0..x5`` are fair bits except ``x5``, which copies ``x4`` (so the
    two are interchangeable); ``x3`` never enters the model.  The state is drawn
    from the model's own probability and the agent ``a`` acts on ``x0`` and
    ``x1`` only.  Returns ``(dataset with a 'prediction' column, model)``.
    """
    from .data import Dataset
    from .explain import PredictiveModel, attach_predictions, linear_model

    m = len(coef)
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 2, size=(n, m))
    X[:, m - 1] = X[:, m - 2]
    f = linear_model(coef, intercept, "logistic")
    y = (rng.random(n) < f(X)).astype(int)
    agent = (1.5 * X[:, 0] - X[:, 1] > 0).astype(int)
    names = tuple(f"x{i}" for i in range(m))
    ds = Dataset.from_arrays({nm: X[:, i] for i, nm in enumerate(names)}, {"a": agent}, y,
                             states=(0, 1), schema={nm: {"values": [0, 1]} for nm in names})
    model = PredictiveModel(f, names, X[:background].astype(float))
    return attach_predictions(ds, model, names), model


def greedy_fixtures() -> dict[str, tuple[SyntheticDGP, tuple]]:
    """(dgp, Db) pairs for comparing greedy selection with exact Shapley scores.

    Some are submodular in ACIV and some are not; callers check by enumeration.
    """
    out = {f"chain-{k}": (d, ()) for k, d in garbling_chains().items()}
    out["indep3-agent"] = (independent_signals([0.1, 0.2, 0.3], prior=(0.6, 0.4), agent_eps=0.3), ("a",))
    out["indep4-skewed"] = (independent_signals([0.1, 0.2, 0.3, 0.4], prior=(0.8, 0.2)), ())
    out["indep4-agent"] = (independent_signals([0.1, 0.25, 0.3, 0.35], prior=(0.7, 0.3), agent_eps=0.3),
                           ("a",))
    out["indep6"] = (independent_signals([0.05, 0.1, 0.2, 0.3, 0.4, 0.45], prior=(0.6, 0.4)), ())
    return out
