"""Run configuration: YAML text with sections ``problem``, ``numerics``, ``providers`` and ``output``.

Every key is validated and unknown keys are rejected; problems are collected
and raised together as a :class:`~triquad.errors.ConfigError` whose entries
carry dotted key paths such as ``problem.h[0].value``.

Example::

    problem:
      n: 1
      d: 1
      horizon: 0.25
      lipschitz_C: 0.0
      alpha: 0.0
      terminal:
        - {kind: clamped_affine, bound: 3.0}
    numerics:
      paths: 100000
      steps: 50
      seed: 7
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ConfigError, SpecError
from .model import GeneratorDescriptor, ProblemSpec, TerminalPart

__all__ = [
    "OUTPUT_DIR_ENV",
    "Numerics",
    "ProviderConfig",
    "OutputConfig",
    "RunConfig",
    "parse_config",
    "load_config",
    "serialize_config",
]

OUTPUT_DIR_ENV = "TRIQUAD_OUTPUT_DIR"

_PROBLEM_KEYS = {"n", "d", "horizon", "lipschitz_C", "alpha", "terminal", "l", "k", "h", "functionals", "delay"}
_FUNCTIONAL_KEYS = {"kind", "epsilon"}


@dataclass(frozen=True)
class Numerics:
    paths: int = 10000
    steps: int = 50
    seed: int = 0
    degree: int = 2
    ridge: float | None = None
    tol: float | None = None
    max_iter: int = 25
    outer_tol: float | None = None
    outer_max_iter: int = 15
    backend: str = "colehopf"
    workers: int = 1
    batches: int = 10
    probes: int = 1000


# (type, check, message) per numeric key; None-able keys accept null.
_NUMERIC_RULES = {
    "paths": (int, lambda v: v >= 2, "must be an integer >= 2"),
    "steps": (int, lambda v: v >= 1, "must be an integer >= 1"),
    "seed": (int, lambda v: 0 <= v < 2 ** 63, "must be an integer in [0, 2^63)"),
    "degree": (int, lambda v: 0 <= v <= 6, "must be an integer in [0, 6]"),
    "ridge": (float, lambda v: v >= 0, "must be a nonnegative number or null"),
    "tol": (float, lambda v: v > 0, "must be a positive number or null"),
    "max_iter": (int, lambda v: v >= 1, "must be an integer >= 1"),
    "outer_tol": (float, lambda v: v > 0, "must be a positive number or null"),
    "outer_max_iter": (int, lambda v: v >= 1, "must be an integer >= 1"),
    "backend": (str, lambda v: v in ("colehopf", "euler"), "must be 'colehopf' or 'euler'"),
    "workers": (int, lambda v: v >= 1, "must be an integer >= 1"),
    "batches": (int, lambda v: v == 0 or v >= 2, "must be 0 (pathwise errors) or an integer >= 2"),
    "probes": (int, lambda v: v >= 1, "must be an integer >= 1"),
}
_NULLABLE = {"ridge", "tol", "outer_tol"}


@dataclass(frozen=True)
class ProviderConfig:
    name: str = "surrogate"
    delta_table: str | None = None
    Delta_table: str | None = None
    L_table: str | None = None

    def build(self):
        from .bmo import surrogate_providers, table_providers

        if self.name == "surrogate":
            return surrogate_providers()
        return table_providers(self.delta_table, self.Delta_table, self.L_table)


@dataclass(frozen=True)
class OutputConfig:
    path: str | None = None
    format: str = "json"

    def resolved_path(self):
        """Output path, placed under $TRIQUAD_OUTPUT_DIR when that is set and the path is relative."""
        if self.path is None:
            return None
        p = Path(self.path)
        root = os.environ.get(OUTPUT_DIR_ENV)
        if root and not p.is_absolute():
            p = Path(root) / p
        return p


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    numerics: Numerics = field(default_factory=Numerics)
    providers: ProviderConfig = field(default_factory=ProviderConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    functionals: tuple = ()
    delay: dict | None = None

    def with_overrides(self, seed=None, paths=None, steps=None, out=None, fmt=None, workers=None) -> "RunConfig":
        num = self.numerics
        num = replace(num, seed=num.seed if seed is None else seed, paths=num.paths if paths is None else paths,
                      steps=num.steps if steps is None else steps,
                      workers=num.workers if workers is None else workers)
        errors = _check_numerics(asdict(num))
        if errors:
            raise ConfigError([(f"numerics.{k}", m) for k, m in errors])
        output = replace(self.output, path=self.output.path if out is None else out,
                         format=self.output.format if fmt is None else fmt)
        if output.format not in ("json", "csv", "text"):
            raise ConfigError([("output.format", "must be 'json', 'csv' or 'text'")])
        return replace(self, numerics=num, output=output)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool))


def _check_numerics(data):
    errors = []
    for key, value in data.items():
        typ, ok, msg = _NUMERIC_RULES[key]
        if value is None and key in _NULLABLE:
            continue
        if typ is int and not _is_int(value):
            errors.append((key, msg))
        elif typ is float and not (_is_num(value) and math.isfinite(value)):
            errors.append((key, msg))
        elif typ is str and not isinstance(value, str):
            errors.append((key, msg))
        elif not ok(value):
            errors.append((key, msg))
    return errors


def _parts(raw, path, errors, cls, key_name):
    if raw is None:
        return []
    if not isinstance(raw, list):
        errors.append((path, "must be a list"))
        return []
    out = []
    for j, item in enumerate(raw):
        if not isinstance(item, dict):
            errors.append((f"{path}[{j}]", "must be a mapping"))
            continue
        item = dict(item)
        kind = item.pop(key_name, None)
        if kind is None and cls is TerminalPart:
            errors.append((f"{path}[{j}].{key_name}", "is required"))
            continue
        try:
            out.append(cls(kind if kind is not None else "zero", item))
        except SpecError as exc:
            errors.append((f"{path}[{j}]", str(exc)))
    return out


def _problem(raw, errors):
    if not isinstance(raw, dict):
        errors.append(("problem", "section is required and must be a mapping"))
        return None, (), None
    for key in sorted(set(raw) - _PROBLEM_KEYS):
        errors.append((f"problem.{key}", "unknown key"))
    base_errors = len(errors)
    vals = {}
    for key in ("n", "d"):
        v = raw.get(key)
        if not _is_int(v) or v < 1:
            errors.append((f"problem.{key}", "must be an integer >= 1"))
        vals[key] = v
    for key, default in (("horizon", None), ("lipschitz_C", None), ("alpha", 0.0)):
        v = raw.get(key, default)
        if not (_is_num(v) and math.isfinite(v)):
            errors.append((f"problem.{key}", "must be a finite number"))
        vals[key] = v
    if _is_num(vals["horizon"]) and not vals["horizon"] > 0:
        errors.append(("problem.horizon", "must be positive"))
    if _is_num(vals["lipschitz_C"]) and vals["lipschitz_C"] < 0:
        errors.append(("problem.lipschitz_C", "must be nonnegative"))
    if _is_num(vals["alpha"]) and not (-1.0 <= vals["alpha"] < 1.0):
        errors.append(("problem.alpha", "alpha must lie in [-1, 1)"))
    n = vals["n"] if _is_int(vals["n"]) else None

    terminal = _parts(raw.get("terminal"), "problem.terminal", errors, TerminalPart, "kind")
    if "terminal" not in raw:
        errors.append(("problem.terminal", "is required"))
    l_parts = _parts(raw.get("l"), "problem.l", errors, GeneratorDescriptor, "family")
    k_parts = _parts(raw.get("k"), "problem.k", errors, GeneratorDescriptor, "family")
    h_parts = _parts(raw.get("h"), "problem.h", errors, GeneratorDescriptor, "family")
    if n is not None:
        if len(terminal) != n and "terminal" in raw:
            errors.append(("problem.terminal", f"needs exactly n={n} entries"))
        for key, parts, want in (("l", l_parts, n), ("h", h_parts, n), ("k", k_parts, n - 1)):
            if key in raw and raw[key] is not None and len(parts) != want:
                if key == "k" and n == 1:
                    errors.append(("problem.k", "k parts apply to components 2..n and must be absent for n=1"))
                else:
                    errors.append((f"problem.{key}", f"needs exactly {want} entries"))

    functionals = ()
    if raw.get("functionals") is not None:
        fl = raw["functionals"]
        if not isinstance(fl, list):
            errors.append(("problem.functionals", "must be a list"))
        else:
            from .pathdep import PathFunctional

            items = []
            for j, item in enumerate(fl):
                path = f"problem.functionals[{j}]"
                if not isinstance(item, dict):
                    errors.append((path, "must be a mapping"))
                    continue
                for key in sorted(set(item) - _FUNCTIONAL_KEYS):
                    errors.append((f"{path}.{key}", "unknown key"))
                try:
                    items.append(PathFunctional(item.get("kind"), float(item.get("epsilon", 0.0))))
                except (TypeError, ValueError) as exc:
                    errors.append((path, str(exc)))
            if n is not None and len(items) == len(fl) and len(items) != n:
                errors.append(("problem.functionals", f"needs exactly n={n} entries"))
            functionals = tuple(items)

    delay = None
    if raw.get("delay") is not None:
        d = raw["delay"]
        if not isinstance(d, dict):
            errors.append(("problem.delay", "must be a mapping"))
        else:
            for key in sorted(set(d) - _FUNCTIONAL_KEYS):
                errors.append((f"problem.delay.{key}", "unknown key"))
            from .pathdep import FUNCTIONAL_KINDS

            kind = d.get("kind", "delayed_value")
            eps = d.get("epsilon")
            if kind not in FUNCTIONAL_KINDS:
                errors.append(("problem.delay.kind", f"must be one of {list(FUNCTIONAL_KINDS)}"))
            if not (_is_num(eps) and math.isfinite(eps) and eps > 0):
                errors.append(("problem.delay.epsilon", "must be a positive number"))
            delay = {"kind": kind, "epsilon": eps}

    if len(errors) > base_errors:
        return None, functionals, delay
    try:
        spec = ProblemSpec(vals["n"], vals["d"], float(vals["horizon"]), float(vals["lipschitz_C"]),
                           float(vals["alpha"]), terminal, tuple(l_parts), tuple(k_parts), tuple(h_parts))
    except SpecError as exc:
        errors.append(("problem", str(exc)))
        return None, functionals, delay
    return spec, functionals, delay


def _section(raw, name, cls, errors, rules=None):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        errors.append((name, "must be a mapping"))
        return cls()
    allowed = set(cls.__dataclass_fields__)
    bad = False
    for key in sorted(set(raw) - allowed):
        errors.append((f"{name}.{key}", "unknown key"))
        bad = True
    data = asdict(cls())
    data.update({k: v for k, v in raw.items() if k in allowed})
    if rules is not None:
        errs = rules(data)
        for key, msg in errs:
            errors.append((f"{name}.{key}", msg))
        bad = bad or bool(errs)
    if bad:
        return cls()
    if cls is Numerics:
        for key in ("ridge", "tol", "outer_tol"):
            if data[key] is not None:
                data[key] = float(data[key])
    return cls(**data)


def _provider_rules(data):
    errs = []
    if data["name"] not in ("surrogate", "table"):
        errs.append(("name", "must be 'surrogate' or 'table'"))
    if data["name"] == "table":
        for key in ("delta_table", "Delta_table"):
            if not isinstance(data[key], str):
                errs.append((key, "table providers need a file path"))
    for key in ("delta_table", "Delta_table", "L_table"):
        if data[key] is not None and not isinstance(data[key], str):
            errs.append((key, "must be a path string"))
    return errs


def _output_rules(data):
    errs = []
    if data["format"] not in ("json", "csv", "text"):
        errs.append(("format", "must be 'json', 'csv' or 'text'"))
    if data["path"] is not None and not isinstance(data["path"], str):
        errs.append(("path", "must be a path string or null"))
    return errs


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
        Listing every problem found, each with its key path.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([("", f"malformed YAML: {exc}")]) from exc
    if not isinstance(raw, dict):
        raise ConfigError([("", "top level must be a mapping with a 'problem' section")])
    errors = []
    for key in sorted(set(raw) - {"problem", "numerics", "providers", "output"}):
        errors.append((key, "unknown section"))
    spec, functionals, delay = _problem(raw.get("problem"), errors)
    numerics = _section(raw.get("numerics"), "numerics", Numerics, errors, _check_numerics)
    providers = _section(raw.get("providers"), "providers", ProviderConfig, errors, _provider_rules)
    output = _section(raw.get("output"), "output", OutputConfig, errors, _output_rules)
    if errors:
        raise ConfigError(errors)
    return RunConfig(spec, numerics, providers, output, functionals, delay)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([("", f"cannot read {path}: {exc}")]) from exc
    return parse_config(text)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical YAML text; ``parse_config(serialize_config(c)) == c``."""
    spec = cfg.problem.to_dict()
    problem = {
        "n": spec["n"], "d": spec["d"], "horizon": spec["horizon"],
        "lipschitz_C": spec["lipschitz_C"], "alpha": spec["alpha"],
        "terminal": spec["terminal"], "l": spec["l"], "h": spec["h"],
    }
    if spec["k"]:
        problem["k"] = spec["k"]
    if cfg.functionals:
        problem["functionals"] = [f.to_dict() for f in cfg.functionals]
    if cfg.delay is not None:
        problem["delay"] = dict(cfg.delay)
    tree = {
        "problem": problem,
        "numerics": asdict(cfg.numerics),
        "providers": asdict(cfg.providers),
        "output": asdict(cfg.output),
    }
    return yaml.safe_dump(tree, sort_keys=False, default_flow_style=None)
