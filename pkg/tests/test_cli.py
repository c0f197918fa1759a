import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from infoval import fixtures
from infoval.cli import run
from infoval.config import dump_json
from infoval.data import Dataset, write_csv

ROOT = Path(__file__).resolve().parents[1]


def save(ds, path):
    write_csv(ds, path)
    path.with_suffix(".schema.json").write_text(dump_json({"columns": ds.schema_dict()}))
    return path


def config(tmp_path, doc, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def invoke(argv, capsys):
    code = run(argv)
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 and out else None), err


@pytest.fixture(scope="module")
def xor_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("xor")
    return save(fixtures.xor_dgp(with_agent=True).sample(20_000, seed=7), d / "xor.csv")


def xor_doc(csv, **analysis):
    return {"dataset": {"path": str(csv)}, "problem": {"payoff": {"kind": "brier"}},
            "estimator": {"type": "frequency", "smoothing": 1.0, "K": 5, "seed": 0},
            "analysis": {"signals": ["s2"], "agents": ["a"], **analysis}}


# value commands ------------------------------------------------------------------

def test_aciv_and_empty_iv(tmp_path, xor_csv, capsys):
    cfg = config(tmp_path, xor_doc(xor_csv))
    code, rep, _ = invoke(["aciv", "--config", cfg], capsys)
    assert code == 0
    assert rep["results"]["aciv"]["value"] == pytest.approx(0.25, abs=0.01)
    code, rep, _ = invoke(["iv", "--config", cfg, "--signals", ""], capsys)
    assert code == 0 and rep["results"]["iv"]["value"] == 0.0


def test_shipped_configs_run(capsys):
    code, rep, _ = invoke(["shapley", "--config", str(ROOT / "configs/xor_shapley.toml")], capsys)
    assert code == 0
    phi = rep["results"]["shapley"]["scores"]
    assert list(phi.values()) == pytest.approx([0.125, 0.125], abs=0.01)
    code, rep, _ = invoke(["iliv", "--config", str(ROOT / "configs/xor_iliv.json")], capsys)
    assert code == 0
    scan = {tuple(r["v_prime"]): r["iliv"] for r in rep["results"]["scan"]}
    assert scan[(1,)] == max(scan.values())


def test_missing_state_column_exit_2(tmp_path, capsys):
    p = tmp_path / "d.csv"
    p.write_text("s,a\n0,1\n1,0\n")
    cfg = config(tmp_path, {"dataset": {"path": str(p), "columns": {"s": {"role": "signal"},
                                                                    "a": {"role": "decision"}}},
                            "analysis": {"signals": ["s"]}})
    code, _, err = invoke(["iv", "--config", cfg], capsys)
    assert code == 2 and "state" in err


def test_config_errors_exit_2(tmp_path, xor_csv, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dataset": {"path": "x.csv"},\n "analysis": [}\n')
    code, _, err = invoke(["iv", "--config", str(bad)], capsys)
    assert code == 2 and "bad.json" in err
    cfg = config(tmp_path, xor_doc(xor_csv, bootstrap=10))
    code, _, err = invoke(["aciv", "--config", cfg], capsys)
    assert code == 2 and "seed" in err
    code, _, _ = invoke(["aciv", "--config", cfg, "--seed", "3"], capsys)
    assert code == 0
    code, _, err = invoke(["iv", "--config", cfg, "--signals", "nope"], capsys)
    assert code == 2


def test_empty_instance_group_exit_4(tmp_path, capsys):
    ds = Dataset.from_arrays({"s": [0, 0, 0, 0]}, {"a": [0, 1, 0, 1]}, [0, 1, 1, 0], states=(0, 1),
                             schema={"s": {"values": [0, 1]}})
    csv = save(ds, tmp_path / "g.csv")
    cfg = config(tmp_path, {"dataset": {"path": str(csv)}, "problem": {"payoff": {"kind": "brier"}},
                            "estimator": {"smoothing": 0.0, "crossfit": False},
                            "analysis": {"signals": ["s"], "agents": ["a"], "v": [1]}})
    code, _, err = invoke(["iliv", "--config", cfg], capsys)
    assert code == 4 and "'s': 1" in err


def test_non_binary_state_exit_5(tmp_path, capsys):
    rng = np.random.default_rng(0)
    ds = Dataset.from_arrays({"s": rng.integers(0, 2, 30)}, state=rng.integers(0, 3, 30), states=(0, 1, 2))
    csv = save(ds, tmp_path / "t.csv")
    doc = {"dataset": {"path": str(csv)}, "problem": {"payoff": {"kind": "brier"}},
           "analysis": {"signals": ["s"], "signal_sets": {"s": ["s"]}}}
    cfg = config(tmp_path, doc)
    assert invoke(["robustness", "--config", cfg], capsys)[0] == 5
    assert invoke(["diagnose", "--config", cfg], capsys)[0] == 5


def test_unwritable_output_exit_6(tmp_path, xor_csv, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = config(tmp_path, xor_doc(xor_csv))
    code, _, err = invoke(["aciv", "--config", cfg, "--out", str(blocker / "r.json")], capsys)
    assert code == 6 and "io" in err


# simulate ------------------------------------------------------------------------

def test_simulate_deterministic_and_reingests(tmp_path, capsys):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    for p, seed in [(a, 5), (b, 5), (c, 6)]:
        assert invoke(["simulate", "--fixture", "weather", "--n", "500", "--seed", str(seed),
                       "--out", str(p)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()
    assert a.with_suffix(".schema.json").read_bytes() == b.with_suffix(".schema.json").read_bytes()
    one = tmp_path / "one.csv"
    assert invoke(["simulate", "--fixture", "xor", "--n", "1", "--seed", "0", "--out", str(one)],
                  capsys)[0] == 0
    assert len(one.read_text().splitlines()) == 2
    assert invoke(["simulate", "--fixture", "xor", "--n", "1", "--out", str(one)], capsys)[0] == 2
    assert invoke(["simulate", "--fixture", "nope", "--n", "1", "--seed", "0", "--out", str(one)],
                  capsys)[0] == 2
    cfg = config(tmp_path, {"dataset": {"path": str(a)},
                            "problem": {"payoff": {"kind": "matrix", "states": ["no rain", "rain"],
                                                   "decisions": ["no", "yes"],
                                                   "matrix": [[0, -100], [-50, 0]]}},
                            "analysis": {"signals": ["forecast"], "seed": 0}})
    code, rep, err = invoke(["iv", "--config", cfg], capsys)
    assert code == 0 and err == ""


def test_simulate_from_dgp_file(tmp_path, capsys):
    out = tmp_path / "g.csv"
    code = invoke(["simulate", "--dgp", str(ROOT / "fixtures/garbling_chain.json"), "--n", "200",
                   "--seed", "1", "--out", str(out)], capsys)[0]
    assert code == 0
    header = out.read_text().splitlines()[0].split(",")
    assert {"A", "B", "C", "state"} <= set(header)


# diagnose ------------------------------------------------------------------------

def test_diagnose_flags_corrupted_decisions(capsys):
    code, rep, _ = invoke(["diagnose", "--config", str(ROOT / "configs/weather_diagnose.json")], capsys)
    assert code == 0
    diag = rep["diagnostics"]
    flags = [not d["report"]["bound_holds"] for d in diag]
    assert flags == [False, False, False, True]
    clean = diag[0]["report"]
    assert clean["ece_exact"] == pytest.approx(0.0, abs=1e-12)
    assert len(clean["bins"]) > 0


# explain -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def explain_cfg(tmp_path_factory):
    d = tmp_path_factory.mktemp("explain")
    ds, _ = fixtures.explain_fixture()
    csv = save(ds, d / "e.csv")
    doc = {"dataset": {"path": str(csv)}, "problem": {"payoff": {"kind": "brier"}},
           "estimator": {"type": "glm", "crossfit": False},
           "analysis": {"features": [f"x{i}" for i in range(6)], "agents": ["a"],
                        "model": {"kind": "linear", "coef": list(fixtures.EXPLAIN_COEF),
                                  "intercept": -0.4, "link": "logistic"},
                        "background_rows": 2000, "prediction_column": "fx",
                        "instances": [[1, 0, 1, 0, 1, 1]], "tau": 0.001, "seed": 0}}
    return d, doc


def test_explain_exact_and_permutation(explain_cfg, capsys):
    d, doc = explain_cfg
    cfg = config(d, doc)
    code, rep, _ = invoke(["explain", "--config", cfg], capsys)
    assert code == 0
    exact = rep["results"]["explain"][0]
    assert exact["efficiency"]["iliv_shap"] <= 1e-6 and exact["efficiency"]["shap"] <= 1e-6
    assert exact["iliv_shap"]["scores"][3] == 0.0
    code, rep, _ = invoke(["explain", "--config", cfg, "--permutations", "2000"], capsys)
    approx = rep["results"]["explain"][0]["iliv_shap"]
    gap = np.abs(np.subtract(approx["scores"], exact["iliv_shap"]["scores"]))
    assert np.all(gap <= 3 * np.asarray(approx["se"]) + 1e-12)
    top = max(exact["iliv_shap"]["scores"])
    code, rep, _ = invoke(["explain", "--config", cfg, "--tau", str(top + 1.0)], capsys)
    assert rep["results"]["explain"][0]["highlight"]["highlighted"] == []


# robustness ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def chain_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("chain")
    return save(fixtures.garbling_chains()["symmetric"].sample(20_000, seed=3), d / "c.csv")


def test_robustness_grid_and_verdicts(tmp_path, chain_csv, capsys):
    doc = {"dataset": {"path": str(chain_csv)},
           "estimator": {"type": "frequency", "smoothing": 1.0, "K": 5, "seed": 0},
           "analysis": {"signal_sets": {"A": ["A"], "C": ["C"]}, "eps": 0.01},
           "output": {"plot_data": str(tmp_path / "plot.json")}}
    cfg = config(tmp_path, doc)
    code, rep, _ = invoke(["robustness", "--config", cfg, "--grid-step", "0.1"], capsys)
    assert code == 0
    res = rep["results"]
    assert len(res["sweep"]["mu"]) == 9
    assert res["dominance"]["verdicts"]["A"]["C"] == "dominates"
    assert json.loads((tmp_path / "plot.json").read_text())["mu"] == res["sweep"]["mu"]
    doc["analysis"]["signal_sets"] = {"A": ["A"]}
    code, rep, _ = invoke(["robustness", "--config", config(tmp_path, doc), "--grid-step", "0.1"], capsys)
    assert rep["results"]["dominance"]["verdicts"] == {"A": {"A": "equivalent"}}


# reports -------------------------------------------------------------------------

def test_reports_reproducible_and_fingerprinted(tmp_path, xor_csv, capsys):
    cfg = config(tmp_path, xor_doc(xor_csv, bootstrap=20, seed=4))
    r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert run(["aciv", "--config", cfg, "--out", str(r1)]) == 0
    assert run(["aciv", "--config", cfg, "--out", str(r2)]) == 0
    a, b = json.loads(r1.read_text()), json.loads(r2.read_text())
    a.pop("wall_time"), b.pop("wall_time")
    assert dump_json(a) == dump_json(b)
    same = config(tmp_path, xor_doc(xor_csv, bootstrap=20, seed=4), "copy.json")
    other = config(tmp_path, xor_doc(xor_csv, bootstrap=20, seed=5), "other.json")
    prints = []
    for c in (cfg, same, other):
        invoke(["aciv", "--config", c, "--out", str(r1)], capsys)
        prints.append(json.loads(r1.read_text())["config_fingerprint"])
    assert prints[0] == prints[1] != prints[2]


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "infoval", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("infoval ")
