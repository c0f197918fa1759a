"""Run configuration documents (JSON or TOML) for the command line tool."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .data import Dataset, SchemaError, load_sidecar, read_csv
from .decision import DomainError, PayoffFunction, problem_from_config
from .estimation import EstimatorSpec


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points into the config file when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path, self.line = path, line
        loc = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(loc + message)


def _parse(text: str, path: Path) -> dict:
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(str(exc), str(path), int(m.group(1)) if m else None) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, str(path), exc.lineno) from None


@dataclass
class RunConfig:
    path: Path
    raw: bytes
    doc: dict
    overrides: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path, overrides: Mapping | None = None) -> "RunConfig":
        path = Path(path)
        raw = path.read_bytes()
        doc = _parse(raw.decode("utf-8"), path)
        if not isinstance(doc, dict):
            raise ConfigError("top level must be a table/object", str(path), 1)
        return cls(path, raw, doc, dict(overrides or {}))

    @classmethod
    def from_dict(cls, doc: Mapping, base: str | Path = ".") -> "RunConfig":
        raw = json.dumps(doc, sort_keys=True).encode()
        return cls(Path(base) / "<inline>.json", raw, dict(doc))

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.raw).hexdigest()

    def line_of(self, key: str) -> int | None:
        text = self.raw.decode("utf-8", errors="replace")
        for i, line in enumerate(text.splitlines(), start=1):
            if re.search(rf'(^|[\s"\']){re.escape(key)}(["\']?\s*[:=])', line):
                return i
        return None

    def error(self, message: str, key: str | None = None) -> ConfigError:
        return ConfigError(message, str(self.path), self.line_of(key) if key else None)

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.path.parent / q

    def section(self, name: str) -> dict:
        sec = self.doc.get(name, {})
        if not isinstance(sec, dict):
            raise self.error(f"section {name!r} must be a table/object", name)
        return sec

    @property
    def analysis(self) -> dict:
        out = dict(self.section("analysis"))
        out.update({k: v for k, v in self.overrides.items() if v is not None})
        return out

    def seed(self, *candidates) -> int | None:
        for c in candidates:
            if c is not None:
                return int(c)
        a = self.analysis
        if a.get("seed") is not None:
            return int(a["seed"])
        return None

    # builders ---------------------------------------------------------------
    def dataset(self) -> Dataset:
        sec = self.section("dataset")
        if "path" not in sec:
            raise self.error("dataset.path is required", "dataset")
        csv_path = self.resolve(sec["path"])
        if "columns" in sec:
            roles = sec["columns"]
        else:
            schema = sec.get("schema")
            side = self.resolve(schema) if schema else csv_path.with_suffix(".schema.json")
            if not side.exists():
                raise self.error(f"no column roles: give dataset.columns or a schema sidecar "
                                 f"(looked for {side})", "dataset")
            roles = load_sidecar(side).get("columns", {})
        if not isinstance(roles, Mapping):
            raise self.error("dataset columns must map names to role tables", "columns")
        try:
            return read_csv(csv_path, roles)
        except SchemaError as exc:
            raise ConfigError(str(exc), str(self.path), self.line_of("dataset")) from None

    def problem(self) -> PayoffFunction:
        sec = self.section("problem")
        pay = sec.get("payoff", sec)
        if not pay:
            raise self.error("problem section is required", "problem")
        try:
            return problem_from_config(pay)
        except (DomainError, KeyError, TypeError, ValueError) as exc:
            raise self.error(f"bad payoff: {exc}", "problem") from None

    def estimator(self, d: Mapping | None = None, cli_seed: int | None = None) -> EstimatorSpec:
        d = dict(self.section("estimator") if d is None else d)
        if d.get("seed") is None:
            d["seed"] = self.seed(cli_seed)
        crossfit = d.get("crossfit", True)
        if crossfit and d["seed"] is None:
            raise self.error("cross-fitting is stochastic: set estimator.seed, analysis.seed or --seed",
                             "estimator")
        d.pop("corrupt", None)
        try:
            return EstimatorSpec.from_dict(d)
        except (TypeError, ValueError) as exc:
            raise self.error(f"bad estimator: {exc}", "estimator") from None

    def cols(self, key: str, default=()) -> tuple:
        v = self.analysis.get(key, default)
        if v is None:
            return ()
        if isinstance(v, str):
            return tuple(s.strip() for s in v.split(",") if s.strip())
        if not isinstance(v, (list, tuple)):
            raise self.error(f"analysis.{key} must be a list of column names", key)
        return tuple(v)


def dump_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False, default=_default) + "\n"


def _default(o):
    import numpy as np

    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
