"""``infoval`` command line tool.

Exit codes: 0 ok, 2 config/schema error, 3 numeric failure, 4 empty instance
group, 5 unsupported (non-binary) state, 6 I/O error.
"""

from __future__ import annotations

import argparse
import importlib
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, dump_json
from .data import SchemaError, write_csv
from .decision import DomainError, rational_decisions
from .dgp import SyntheticDGP, UndefinedPosterior
from .estimation import cross_fit, regret_bound_check
from .explain import (PredictiveModel, attach_predictions, iliv_shap_exact, linear_model,
                      permutation_sample, render_table, shap_exact, highlight)
from .infovalue import (IlivEvaluator, NoInstancesError, aciv, iliv, information_value,
                        shapley_aciv)
from .robustness import MuGrid, UnsupportedStateError, dominance_matrix, sweep
from .shapley import BudgetError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_EMPTY, EXIT_STATE, EXIT_IO = 0, 2, 3, 4, 5, 6


class NumericError(RuntimeError):
    pass


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _finite(obj, where="result"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise NumericError(f"non-finite value in {where}")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _finite(v, f"{where}.{k}")
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _finite(v, where)
    return obj


def _cli_seed(args) -> int | None:
    return getattr(args, "seed", None)


def _boot(cfg: RunConfig, args) -> tuple[int, int | None]:
    B = int(cfg.analysis.get("bootstrap", 0) or 0)
    seed = cfg.seed(_cli_seed(args)) if B else None
    if B and seed is None:
        raise cfg.error("bootstrap resampling needs a seed (analysis.seed or --seed)", "bootstrap")
    return B, seed


def _overrides(args) -> dict:
    keys = {"signals": "signals", "agents": "agents", "bootstrap": "bootstrap", "tau": "tau",
            "rows": "rows", "mode": "mode", "grid_step": "grid_step", "permutations": "permutations"}
    out = {}
    for attr, key in keys.items():
        v = getattr(args, attr, None)
        if v is not None:
            out[key] = v
    if out.get("rows") is not None and isinstance(out["rows"], str):
        out["rows"] = [int(r) for r in out["rows"].split(",") if r.strip()]
    return out


# ---------------------------------------------------------------------------
# subcommands

def cmd_iv(cfg: RunConfig, args) -> dict:
    ds, S = cfg.dataset(), cfg.problem()
    model = cfg.estimator(cli_seed=_cli_seed(args))
    B, seed = _boot(cfg, args)
    est = information_value(ds, S, cfg.cols("signals"), model, B, seed)
    return {"iv": est.to_dict()}


def cmd_aciv(cfg: RunConfig, args) -> dict:
    ds, S = cfg.dataset(), cfg.problem()
    model = cfg.estimator(cli_seed=_cli_seed(args))
    B, seed = _boot(cfg, args)
    agents = cfg.cols("agents")
    if not agents:
        raise cfg.error("ACIV needs agent decision columns (analysis.agents or --agents)", "agents")
    est = aciv(ds, S, cfg.cols("signals"), agents, model, B, seed)
    return {"aciv": est.to_dict()}


def cmd_iliv(cfg: RunConfig, args) -> dict:
    ds, S = cfg.dataset(), cfg.problem()
    model = cfg.estimator({**cfg.section("estimator"), "crossfit": False}, _cli_seed(args))
    a = cfg.analysis
    V, Db = cfg.cols("signals"), cfg.cols("agents")
    if "v" not in a:
        raise cfg.error("ILIV needs analysis.v (the instance group realization)", "analysis")
    out = {"iliv": iliv(ds, S, V, a["v"], a.get("v_prime", a["v"]), Db, model).to_dict()}
    if a.get("scan"):
        ev = IlivEvaluator(ds, S, V, Db, model)
        out["scan"] = [{"v_prime": [_plain(x) for x in k], "iliv": val}
                       for k, val in ev.scan(a["v"]).items()]
    return out


def _plain(x):
    return x.item() if isinstance(x, np.generic) else x


def cmd_shapley(cfg: RunConfig, args) -> dict:
    ds, S = cfg.dataset(), cfg.problem()
    model = cfg.estimator(cli_seed=_cli_seed(args))
    mode = cfg.analysis.get("mode", "exact")
    res = shapley_aciv(ds, S, cfg.cols("signals"), cfg.cols("agents"), model, mode)
    return {"shapley": res.to_dict()}


def _predictive_model(cfg: RunConfig, ds, features) -> PredictiveModel:
    spec = cfg.analysis.get("model")
    if not isinstance(spec, dict):
        raise cfg.error("explain needs analysis.model", "model")
    kind = spec.get("kind", "linear")
    if kind == "linear":
        if len(spec.get("coef", [])) != len(features):
            raise cfg.error("model.coef length must equal the number of features", "coef")
        f = linear_model(spec["coef"], spec.get("intercept", 0.0), spec.get("link", "identity"))
    elif kind == "callable":
        mod, _, attr = spec.get("target", "").partition(":")
        try:
            f = getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError, ValueError) as exc:
            raise cfg.error(f"cannot import model target {spec.get('target')!r}: {exc}", "target") from None
    else:
        raise cfg.error(f"unknown model kind {kind!r}", "kind")
    from .explain import _feature_values

    X = np.column_stack([_feature_values(ds, c) for c in features])
    nbg = cfg.analysis.get("background_rows")
    bg = X[: int(nbg)] if nbg else X
    return PredictiveModel(f, tuple(features), bg)


def cmd_explain(cfg: RunConfig, args) -> dict:
    ds, S = cfg.dataset(), cfg.problem()
    a = cfg.analysis
    features = cfg.cols("features")
    if not features:
        raise cfg.error("explain needs analysis.features", "features")
    model = _predictive_model(cfg, ds, features)
    step = float(a.get("step", 0.01))
    pred_col = a.get("prediction_column", "prediction")
    ds = attach_predictions(ds, model, features, pred_col, step)
    est = cfg.estimator({**cfg.section("estimator"), "crossfit": False}, _cli_seed(args))
    Db = cfg.cols("agents")
    tau = float(a.get("tau", math.inf))
    B = int(a.get("permutations", 0) or 0)
    seed = cfg.seed(_cli_seed(args)) if B else None
    if B and seed is None:
        raise cfg.error("permutation sampling needs a seed (analysis.seed or --seed)", "permutations")
    from .explain import _feature_values

    Xall = np.column_stack([_feature_values(ds, c) for c in features])
    instances = [("row", int(r), Xall[int(r)]) for r in a.get("rows", [])]
    instances += [("instance", i, np.asarray(x, dtype=float)) for i, x in enumerate(a.get("instances", []))]
    if not instances:
        raise cfg.error("explain needs analysis.rows or analysis.instances", "rows")
    results = []
    for kind, key, x in instances:
        if B:
            sh = permutation_sample("shap", model, x, B, seed)
            il = permutation_sample("iliv-shap", model, x, B, seed, ds=ds, S=S, Db=Db,
                                    estimator=est, pred_col=pred_col)
        else:
            sh = shap_exact(model, x)
            il = iliv_shap_exact(model, x, ds, S, Db, est, pred_col)
        rows, text = render_table(sh, il, tau)
        if getattr(args, "table", False):
            print(f"# {kind} {key}\n{text}", file=sys.stderr)
        results.append({kind: key, "shap": sh.to_dict(), "iliv_shap": il.to_dict(),
                        "highlight": highlight(il, tau).to_dict(), "table": rows,
                        "efficiency": {"shap": sh.efficiency_gap, "iliv_shap": il.efficiency_gap}})
    return {"explain": results, "tau": tau if math.isfinite(tau) else None,
            "binning": {"step": step, "column": pred_col}}


def cmd_robustness(cfg: RunConfig, args) -> dict:
    ds = cfg.dataset()
    if ds.n_states != 2:
        raise UnsupportedStateError(f"robustness needs a binary state; dataset has {ds.n_states}")
    a = cfg.analysis
    sets = a.get("signal_sets")
    if not isinstance(sets, dict) or not sets:
        raise cfg.error("robustness needs analysis.signal_sets {name: [columns]}", "signal_sets")
    model = cfg.estimator(cli_seed=_cli_seed(args))
    B, seed = _boot(cfg, args)
    grid = MuGrid.from_step(float(a.get("grid_step", 0.01)))
    Db = cfg.cols("agents") or None
    res = sweep(ds, sets, Db, grid, model, float(a.get("decision_step", 0.01)), B, seed)
    mat = dominance_matrix(res, a.get("eps"))
    plot = {"mu": list(grid.values), "series": {k: v.tolist() for k, v in res.values.items()},
            "diff": mat["diff"]}
    out_plot = cfg.section("output").get("plot_data")
    if out_plot:
        write_atomic(cfg.resolve(out_plot), dump_json(plot))
    return {"sweep": res.to_dict(), "dominance": mat, "plot_data": plot}


def cmd_diagnose(cfg: RunConfig, args) -> dict:
    ds, S = cfg.dataset(), cfg.problem()
    if ds.n_states != 2:
        raise UnsupportedStateError(f"diagnose needs a binary state; dataset has {ds.n_states}")
    a = cfg.analysis
    cols = tuple(dict.fromkeys(cfg.cols("signals") + cfg.cols("agents")))
    specs = a.get("estimators") or [cfg.section("estimator") or {"type": "frequency"}]
    bins = int(a.get("bins", 10))
    out = []
    for i, raw in enumerate(specs):
        est = cfg.estimator(raw, _cli_seed(args))
        model = cross_fit(ds, cols, est) if est.crossfit else est.fit(ds, cols)
        P = model.predict_dataset(ds)
        decisions = None
        corrupt = raw.get("corrupt")
        if corrupt == "reverse-decisions":
            decisions = len(S.decisions) - 1 - rational_decisions(S, P)
        elif corrupt is not None:
            raise cfg.error(f"unknown corruption {corrupt!r}", "corrupt")
        rep = regret_bound_check(P, ds, S, bins, decisions)
        out.append({"estimator": est.to_dict(), "corrupt": corrupt, "columns": list(cols),
                    "report": rep.to_dict()})
    flags = [not r["report"]["bound_holds"] for r in out]
    return {"diagnose": out, "violations": int(sum(flags))}


def cmd_simulate(args) -> dict:
    from . import fixtures

    if args.fixture:
        table = {"xor": lambda: fixtures.xor_dgp(with_agent=True),
                 "bsc": lambda: fixtures.channel_dgp([0.5, 0.5], {"x": fixtures.bsc(0.1)}),
                 "weather": fixtures.weather_dgp,
                 "z-channels": fixtures.z_channels,
                 "garbling-chain": lambda: fixtures.garbling_chains()["symmetric"]}
        if args.fixture not in table:
            raise ConfigError(f"unknown fixture {args.fixture!r}; choose from {sorted(table)}")
        dgp = table[args.fixture]()
    elif args.dgp:
        try:
            dgp = SyntheticDGP.load(args.dgp)
        except json.JSONDecodeError as exc:
            raise ConfigError(exc.msg, args.dgp, exc.lineno) from None
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad DGP spec: {exc}", args.dgp) from None
    else:
        raise ConfigError("simulate needs --dgp or --fixture")
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    ds = dgp.sample(args.n, args.seed)
    out = Path(args.out)
    tmp = out.with_name(f".{out.name}.tmp")
    write_csv(ds, tmp)
    os.replace(tmp, out)
    sidecar = out.with_suffix(".schema.json")
    write_atomic(sidecar, dump_json({"columns": ds.schema_dict(), "dgp": dgp.to_dict(),
                                     "n": args.n, "seed": args.seed}))
    return {"simulate": {"csv": str(out), "schema": str(sidecar), "n": args.n, "seed": args.seed,
                         "columns": list(ds.columns) + [ds.state_name]}}


COMMANDS: dict[str, Callable] = {
    "iv": cmd_iv, "aciv": cmd_aciv, "iliv": cmd_iliv, "shapley": cmd_shapley,
    "explain": cmd_explain, "robustness": cmd_robustness, "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON or TOML)")
    common.add_argument("--seed", type=int, help="seed for any stochastic step lacking one")
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--format", choices=["json"], default="json")

    p = argparse.ArgumentParser(prog="infoval", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"infoval {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in [("iv", "information value of a signal set"),
                           ("aciv", "complementary value of signals over agent decisions"),
                           ("iliv", "instance-level complementary value"),
                           ("shapley", "Shapley / greedy split of ACIV over signals"),
                           ("explain", "SHAP and ILIV-SHAP attributions"),
                           ("robustness", "V-shaped scoring-rule sweep and dominance"),
                           ("diagnose", "calibration error, swap regret and the regret bound")]:
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--signals", help="comma-separated signal columns ('' for none)")
        sp.add_argument("--agents", "--agent", dest="agents", help="comma-separated agent columns")
        sp.add_argument("--bootstrap", type=int, help="bootstrap resamples")
        if name == "shapley":
            sp.add_argument("--mode", choices=["exact", "greedy"])
        if name == "explain":
            sp.add_argument("--rows", help="comma-separated row indices to explain")
            sp.add_argument("--tau", type=float, help="highlight threshold (payoff units)")
            sp.add_argument("--permutations", type=int, help="permutation samples (0 = exact)")
            sp.add_argument("--table", action="store_true", help="print the attribution table to stderr")
        if name == "robustness":
            sp.add_argument("--grid-step", type=float, dest="grid_step")
    sp = sub.add_parser("simulate", parents=[common], help="sample a dataset from a synthetic DGP")
    sp.add_argument("--dgp", help="DGP spec (JSON)")
    sp.add_argument("--fixture", help="built-in DGP name")
    sp.add_argument("--n", type=int, required=True)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        if args.command == "simulate":
            if args.seed is None:
                raise ConfigError("simulate needs --seed")
            if not args.out:
                raise ConfigError("simulate needs --out (CSV path)")
            results, fingerprint = cmd_simulate(args), None
            report_path = None
        else:
            if not args.config:
                raise ConfigError("--config is required")
            cfg = RunConfig.load(args.config, _overrides(args))
            results = COMMANDS[args.command](cfg, args)
            fingerprint = cfg.fingerprint
            report_path = args.out or cfg.section("output").get("report")
            if report_path and not args.out:
                report_path = cfg.resolve(report_path)
        _finite(results)
        diagnostics = results.pop("diagnose", None)
        report = {"tool": "infoval", "version": __version__, "command": args.command,
                  "config_fingerprint": fingerprint, "results": results,
                  "diagnostics": diagnostics, "invocation": _invocation(args),
                  "wall_time": round(time.perf_counter() - t0, 6)}
        text = dump_json(report)
        if report_path:
            write_atomic(Path(report_path), text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except (ConfigError, SchemaError, DomainError, BudgetError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except NoInstancesError as exc:
        return _fail(EXIT_EMPTY, "empty-group", exc)
    except UnsupportedStateError as exc:
        return _fail(EXIT_STATE, "unsupported-state", exc)
    except (NumericError, UndefinedPosterior, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, "numeric", exc)
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)


def _invocation(args) -> dict:
    # the output path is left out so that reports written to different files compare equal
    skip = {"out", "config", "table"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _fail(code: int, kind: str, exc: Exception) -> int:
    print(f"infoval: {kind} error: {exc}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
