import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoval import fixtures
from infoval.data import Dataset, SchemaError
from infoval.decision import PayoffFunction, rational_decisions, v_shaped_payoff
from infoval.estimation import EstimatorSpec, OracleSpec
from infoval.robustness import (MuGrid, UnsupportedStateError, dominance, dominance_matrix, sweep,
                                total_order)

EXACT = EstimatorSpec(smoothing=0.0, crossfit=False)


def no_info_closed_form(mu, p):
    # expected payoff of each side of the kink under prior P(w=1)=p
    lo = (1 - p) * v_shaped_payoff(mu, 0.0, 0) + p * v_shaped_payoff(mu, 0.0, 1)
    hi = (1 - p) * v_shaped_payoff(mu, 1.0, 0) + p * v_shaped_payoff(mu, 1.0, 1)
    return max(lo, hi)


def test_grid():
    assert len(MuGrid.from_step(0.01)) == 99
    assert len(MuGrid.from_step(0.1)) == 9
    assert MuGrid.from_step(0.01).values[0] == 0.01 and MuGrid.from_step(0.01).values[-1] == 0.99
    for bad in [(), (0.0, 0.5), (0.5, 0.4), (0.3, 1.0)]:
        with pytest.raises(ValueError):
            MuGrid(bad)


def test_empty_set_sweep_matches_closed_form():
    ds = fixtures.channel_dgp([0.3, 0.7], {"x": fixtures.bsc(0.2)}).to_dataset()
    res = sweep(ds, {"none": []}, model=EXACT)
    expect = [no_info_closed_form(mu, 0.7) for mu in res.grid.values]
    assert np.allclose(res.values["none"], expect, atol=1e-12)


def test_perfect_signal_sweep():
    ds = fixtures.channel_dgp([0.3, 0.7], {"x": fixtures.bsc(0.0)}).to_dataset()
    res = sweep(ds, {"perfect": ["x"]}, model=EXACT)
    expect = [0.3 * v_shaped_payoff(mu, 0.0, 0) + 0.7 * v_shaped_payoff(mu, 1.0, 1) for mu in res.grid.values]
    assert np.allclose(res.values["perfect"], expect, atol=1e-12)


def test_single_point_grid_is_map_accuracy():
    dgp = fixtures.channel_dgp([0.4, 0.6], {"x": [[0.6, 0.3, 0.1], [0.2, 0.3, 0.5]]})
    ds = dgp.to_dataset()
    res = sweep(ds, {"x": ["x"]}, grid=MuGrid((0.5,)), model=EXACT)
    post, mass = dgp.posterior_table(["x"])
    acc = float(np.sum(mass * post.max(axis=1)))
    # S_0.5 pays 1 for a correct side and 0 otherwise
    assert res.values["x"][0] == pytest.approx(acc)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.lists(st.floats(0.01, 1), min_size=3, max_size=3))
def test_half_kink_decision_is_map(p, w):
    S = PayoffFunction.v_shaped(0.5, 0.01)
    b = np.array([1 - p, p])
    d = rational_decisions(S, b[None])[0]
    side = S.decisions.labels[d] > 0.5
    if abs(p - 0.5) > 1e-9:
        assert side == (p > 0.5)


def test_non_binary_rejected():
    ds = Dataset.from_arrays({"v": ["a", "b", "c"]}, state=[0, 1, 2], states=(0, 1, 2))
    with pytest.raises(UnsupportedStateError):
        sweep(ds, {"v": ["v"]})


@pytest.mark.parametrize("name", list(fixtures.garbling_chains()))
def test_garbling_chain_total_order(name):
    dgp = fixtures.garbling_chains()[name]
    res = sweep(dgp.to_dataset(), {"A": ["A"], "B": ["B"], "C": ["C"]}, model=OracleSpec(dgp))
    for hi, lo in [("A", "B"), ("B", "C"), ("A", "C")]:
        assert np.all(res.values[lo] <= res.values[hi] + 1e-9)
        assert dominance(res, (hi, lo), 1e-9).verdict == "V1-dominates"
    assert total_order(dominance_matrix(res, 1e-9)) == ["A", "B", "C"]


def test_asymmetric_channels_incomparable():
    dgp = fixtures.z_channels()
    res = sweep(dgp.to_dataset(), {"L": ["L"], "H": ["H"]}, model=OracleSpec(dgp))
    v = dominance(res, ("L", "H"), 1e-9)
    assert v.verdict == "incomparable" and not v.equivalent
    assert 1 in v.signs and -1 in v.signs


def test_identical_sets_equivalent():
    ds = fixtures.garbling_chains()["symmetric"].to_dataset()
    res = sweep(ds, {"A": ["A"], "A2": ["A"]}, model=EXACT)
    v = dominance(res, ("A", "A2"))
    assert v.verdict == "incomparable" and v.equivalent
    m = dominance_matrix(sweep(ds, {"A": ["A"]}, model=EXACT))
    assert m["verdicts"] == {"A": {"A": "equivalent"}}
    with pytest.raises(SchemaError):
        dominance(res, ("A", "Z"))


def test_matrix_antisymmetry_and_transitivity():
    dgp = fixtures.garbling_chains()["three-level"]
    res = sweep(dgp.to_dataset(), {"A": ["A"], "B": ["B"], "C": ["C"]}, model=OracleSpec(dgp))
    m = dominance_matrix(res, 1e-9)
    for a in m["names"]:
        for b in m["names"]:
            assert np.allclose(m["diff"][f"{a}|{b}"], -np.asarray(m["diff"][f"{b}|{a}"]))
            flip = {"dominates": "dominated", "dominated": "dominates"}
            assert m["verdicts"][b][a] == flip.get(m["verdicts"][a][b], m["verdicts"][a][b])
    for a in m["names"]:
        for b in m["names"]:
            for c in m["names"]:
                if m["verdicts"][a][b] == m["verdicts"][b][c] == "dominates":
                    assert m["verdicts"][a][c] == "dominates"


def test_dominance_stable_for_small_eps():
    dgp = fixtures.garbling_chains()["symmetric"]
    res = sweep(dgp.to_dataset(), {"A": ["A"], "C": ["C"]}, model=OracleSpec(dgp))
    diff = res.values["A"] - res.values["C"]
    margin = diff[diff > 1e-12].min()
    for eps in np.linspace(0, margin / 2, 6):
        assert dominance(res, ("A", "C"), eps).verdict == "V1-dominates"


def test_aciv_sweep_and_bootstrap():
    dgp = fixtures.channel_dgp([0.5, 0.5], {"x": fixtures.bsc(0.1)}, {"a": (("state",), fixtures.bsc(0.3))})
    dgp = dgp.garble(fixtures.bsc(0.2), "x", new_name="y")
    ds = dgp.sample(5000, seed=0)
    res = sweep(ds, {"x": ["x"], "y": ["y"]}, ["a"], MuGrid.from_step(0.1), EstimatorSpec(seed=1),
                B=10, seed=2)
    assert res.quantity == "ACIV" and len(res.values["x"]) == 9
    assert res.se("x").shape == (9,)
    again = sweep(ds, {"x": ["x"], "y": ["y"]}, ["a"], MuGrid.from_step(0.1), EstimatorSpec(seed=1),
                  B=10, seed=2)
    assert np.array_equal(res.boot["x"], again.boot["x"])
    v = dominance(res, ("x", "y"))
    assert v.eps == pytest.approx(list(np.maximum(2 * (res.boot["x"] - res.boot["y"]).std(axis=0, ddof=1),
                                                   1e-12)))
    assert v.verdict in ("V1-dominates", "incomparable")
    d = res.to_dict()
    assert len(d["mu"]) == 9 and set(d["ci"]) == {"x", "y"}
