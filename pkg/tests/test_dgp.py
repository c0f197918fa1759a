import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoval import fixtures
from infoval.data import Dataset, SchemaError, SignalSpec, encode_column, read_csv, write_csv
from infoval.decision import PayoffFunction, weather_problem
from infoval.dgp import (SyntheticDGP, UndefinedPosterior, empirical_joint, exact_posterior, garble,
                         sample, total_variation)


def stochastic(rows, cols):
    return st.lists(st.lists(st.floats(0.01, 1), min_size=cols, max_size=cols),
                    min_size=rows, max_size=rows).map(
        lambda m: np.asarray(m) / np.asarray(m).sum(axis=1, keepdims=True))


# empirical joint ---------------------------------------------------------------

def test_empirical_prior_and_posteriors():
    ds = Dataset.from_arrays({"v": list("aaaa")}, state=[0, 0, 1, 1])
    assert empirical_joint(ds).posterior((), (0, 1)) == pytest.approx([0.5, 0.5])
    ds = Dataset.from_arrays({"v": list("aaaa")}, state=[0, 0, 0, 1])
    assert empirical_joint(ds, ["v"]).posterior(("a",), (0, 1))[1] == pytest.approx(0.25)
    ds = Dataset.from_arrays({"v": ["a", "a"]}, state=[0, 1], weights=[1, 3])
    assert empirical_joint(ds, ["v"]).posterior(("a",), (0, 1))[1] == pytest.approx(0.75)


def test_empirical_joint_unknown_column():
    ds = Dataset.from_arrays({"v": ["a"]}, state=[0], states=(0, 1))
    with pytest.raises(SchemaError):
        empirical_joint(ds, ["w"])


@pytest.mark.parametrize("name", ["xor", "noisy-agent", "garbled-agent", "multilevel"])
def test_empirical_joint_converges(name):
    dgp = fixtures.agent_signal_fixtures()[name][0]
    ds = dgp.sample(100_000, seed=1)
    cols = list(dgp.names)
    assert total_variation(empirical_joint(ds, cols), dgp.joint_distribution(cols)) <= 0.02


def test_empirical_posteriors_match_exact():
    dgp = fixtures.agent_signal_fixtures()["garbled-agent"][0]
    emp = empirical_joint(dgp.sample(100_000, seed=2), ["x"])
    for v in dgp.levels[dgp.axis("x")]:
        assert np.allclose(emp.posterior((v,), dgp.states.labels), dgp.exact_posterior({"x": v}),
                           atol=0.02)


# exact posteriors ----------------------------------------------------------------

def test_exact_posterior_xor_and_bsc():
    xor = fixtures.xor_dgp()
    assert exact_posterior(xor, {"s1": 1}) == pytest.approx([0.5, 0.5])
    assert exact_posterior(xor, {"s1": 1, "s2": 0}) == pytest.approx([0.0, 1.0])
    bsc = fixtures.channel_dgp([0.5, 0.5], {"x": fixtures.bsc(0.1)})
    assert exact_posterior(bsc, {"x": 1}) == pytest.approx([0.1, 0.9])


def test_exact_posterior_zero_mass():
    dgp = fixtures.channel_dgp([0.5, 0.5], {"x": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]})
    with pytest.raises(UndefinedPosterior):
        dgp.exact_posterior({"x": 2})


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), stochastic(2, 3), stochastic(2, 2))
def test_exact_posterior_is_bayes_rule(p, ch1, ch2):
    dgp = fixtures.channel_dgp([1 - p, p], {"x": ch1, "z": ch2})
    prior = np.array([1 - p, p])
    for i in range(3):
        for j in range(2):
            lik = prior * ch1[:, i] * ch2[:, j]
            assert dgp.exact_posterior({"x": i, "z": j}) == pytest.approx(lik / lik.sum())


# garbling -------------------------------------------------------------------------

def test_garble_identity_and_composition():
    base = fixtures.channel_dgp([0.5, 0.5], {"x": fixtures.bsc(0.1)})
    same = garble(np.eye(2), base, "x")
    assert np.allclose(same.joint, base.joint)
    g = garble(fixtures.bsc(0.2), base, "x")
    # composite flip probability 0.1*0.8 + 0.9*0.2
    assert g.exact_posterior({"x": 1}) == pytest.approx([0.26, 0.74])


def test_garble_to_constant_and_bad_channel():
    base = fixtures.channel_dgp([0.3, 0.7], {"x": fixtures.bsc(0.1)})
    const = base.garble([[1.0], [1.0]], "x")
    assert const.exact_posterior({"x": 0}) == pytest.approx([0.3, 0.7])
    with pytest.raises(SchemaError):
        base.garble(np.eye(3), "x")
    with pytest.raises(SchemaError):
        base.garble([[0.5, 0.6], [0.5, 0.5]], "x")


def test_garble_as_new_column_keeps_original():
    base = fixtures.channel_dgp([0.5, 0.5], {"x": fixtures.bsc(0.1)})
    g = base.garble(fixtures.bsc(0.2), "x", new_name="y")
    assert np.allclose(g.marginal(["x"]), base.marginal(["x"]))
    assert g.exact_posterior({"y": 1}) == pytest.approx([0.26, 0.74])
    # y is independent of the state given x
    assert g.exact_posterior({"x": 1, "y": 0}) == pytest.approx(g.exact_posterior({"x": 1}))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), stochastic(2, 3), stochastic(3, 2), st.floats(0.05, 0.95))
def test_garbling_never_increases_rational_payoff(p, ch, garb, mu):
    dgp = fixtures.channel_dgp([1 - p, p], {"x": ch}).garble(garb, "x", new_name="y")
    for S in (PayoffFunction.brier(0.05), PayoffFunction.v_shaped(mu, 0.05), weather_problem()):
        S = S if S.kind != "matrix" else PayoffFunction.from_matrix(S.matrix, S.decisions, (0, 1))
        assert dgp.rational_payoff(S, ["y"]) <= dgp.rational_payoff(S, ["x"]) + 1e-9


# sampling ---------------------------------------------------------------------------

def test_sample_rejects_empty_and_is_seeded():
    dgp = fixtures.xor_dgp()
    with pytest.raises(ValueError):
        sample(dgp, 0, seed=0)
    a, b = dgp.sample(500, seed=3), dgp.sample(500, seed=3)
    assert np.array_equal(a.codes(["s1", "s2"]), b.codes(["s1", "s2"]))
    assert np.array_equal(a.state, b.state)


def test_sample_xor_prior():
    ds = fixtures.xor_dgp().sample(100_000, seed=4)
    assert abs(ds.prior()[1] - 0.5) <= 0.01


def test_to_dataset_is_exact():
    dgp = fixtures.agent_signal_fixtures()["multilevel"][0]
    ds = dgp.to_dataset()
    assert ds.weights.sum() == pytest.approx(1.0)
    cols = list(dgp.names)
    assert total_variation(empirical_joint(ds, cols), dgp.joint_distribution(cols)) < 1e-12


def test_dgp_roundtrip(tmp_path):
    dgp = fixtures.garbling_chains()["three-level"]
    d = dgp.to_dict()
    again = SyntheticDGP.from_dict(d)
    assert np.allclose(again.joint, dgp.joint)
    path = tmp_path / "dgp.json"
    import json
    path.write_text(json.dumps(d))
    assert np.allclose(SyntheticDGP.load(path).joint, dgp.joint)


# datasets and CSV -----------------------------------------------------------------

def test_numeric_binnings():
    x = np.arange(100.0)
    c = encode_column("x", "signal", x, SignalSpec("x", "numeric"))
    assert c.cardinality == 10 and np.bincount(c.codes).tolist() == [10] * 10
    c = encode_column("x", "signal", x, SignalSpec("x", "numeric", binning="equal-width", k=4))
    assert c.cardinality == 4
    c = encode_column("x", "signal", x, SignalSpec("x", "numeric", binning="edges", edges=(50.0,)))
    assert np.bincount(c.codes).tolist() == [50, 50]
    g = encode_column("p", "signal", [0.004, 0.006, 0.5, 1.0],
                      SignalSpec("p", "numeric", binning="grid", grid=(0, 1, 0.01)))
    assert [g.levels[k] for k in g.codes] == [0.0, 0.01, 0.5, 1.0]
    with pytest.raises(SchemaError):
        SignalSpec("x", "numeric", k=1)
    with pytest.raises(SchemaError):
        encode_column("x", "signal", [1.0, float("nan")], SignalSpec("x", "numeric"))


def test_dataset_validation():
    with pytest.raises(SchemaError):
        Dataset.from_arrays({"v": ["a"]}, {"v": [0]}, state=[0], states=(0, 1))
    with pytest.raises(SchemaError):
        Dataset.from_arrays({"v": ["a"]}, state=[2], states=(0, 1))
    with pytest.raises(SchemaError):
        Dataset.from_arrays({"v": ["a", "b"]}, state=[0, 1], weights=[1, 0])


ROLES = {"s": {"role": "signal"}, "a": {"role": "decision"}, "y": {"role": "state", "values": [0, 1]}}


def test_read_csv_errors_are_line_addressed(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("s,a,y\nu,0,1\nv,1\n")
    with pytest.raises(SchemaError, match=r"d.csv:3"):
        read_csv(p, ROLES)
    p.write_text("s,a,y\nu,0,1\nv,1,7\n")
    with pytest.raises(SchemaError, match=r"d.csv:3"):
        read_csv(p, ROLES)
    p.write_text("s,a\nu,0\n")
    with pytest.raises(SchemaError):
        read_csv(p, ROLES)
    with pytest.raises(SchemaError, match="exactly one state"):
        read_csv(p, {"s": {"role": "signal"}})


def test_csv_roundtrip_with_quoting(tmp_path):
    ds = Dataset.from_arrays({"s": ['a,b', 'say "hi"', "plain"]}, {"a": [0, 1, 0]}, state=[1, 0, 1],
                             states=(0, 1))
    p = tmp_path / "r.csv"
    write_csv(ds, p)
    back = read_csv(p, {"s": {"role": "signal"}, "a": {"role": "decision"},
                        "state": {"role": "state", "values": [0, 1]}})
    assert [back.column("s").levels[k] for k in back.column("s").codes] == ['a,b', 'say "hi"', "plain"]
    assert back.state.tolist() == [1, 0, 1]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abc"), st.integers(0, 1)), min_size=1, max_size=40))
def test_empirical_joint_sums_to_one(rows):
    ds = Dataset.from_arrays({"v": [r[0] for r in rows]}, state=[r[1] for r in rows], states=(0, 1))
    j = empirical_joint(ds, ["v"])
    assert j.probs.sum() == pytest.approx(1.0)
    assert len(set(j.cells)) == len(j.cells)
