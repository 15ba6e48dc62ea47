"""Typed experiment configuration loaded from YAML documents.

A config file is a flat key-value document for one experiment kind.  Every
randomized quantity downstream derives from (master seed, kind, indices), so
a config plus a seed pins an entire run.  Validation errors carry the field
name and, when the key appears literally in the file, its line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import InvalidInputError

EXPERIMENT_KINDS = ("kernel", "trackb", "chain", "governance", "diagnose", "phase")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: dict
    master_seed: int = 0
    source_path: str | None = None

    def snapshot(self) -> dict:
        return {"kind": self.kind, "master_seed": self.master_seed, "params": self.params}


class ConfigError(InvalidInputError):
    pass


def _line_of(path: str | None, key: str) -> str:
    if not path:
        return ""
    try:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            stripped = line.split("#", 1)[0]
            if stripped.strip().startswith(f"{key}:"):
                return f"{path}:{lineno}: "
    except OSError:
        pass
    return f"{path}: " if path else ""


class Validator:
    """Field-wise extraction with anchored error messages."""

    def __init__(self, raw: dict, path: str | None):
        self.raw = dict(raw)
        self.path = path
        self.seen: set[str] = set()

    def fail(self, key: str, message: str):
        raise ConfigError(f"{_line_of(self.path, key)}field {key!r}: {message}")

    def get(self, key: str, kind, required: bool = False, default=None, check=None):
        self.seen.add(key)
        if key not in self.raw or self.raw[key] is None:
            if required:
                self.fail(key, "required")
            return default
        value = self.raw[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is not None and not isinstance(value, kind):
            self.fail(key, f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
        if check is not None:
            problem = check(value)
            if problem:
                self.fail(key, problem)
        return value

    def int_list(self, key: str, required: bool = False, default=None):
        value = self.get(key, list, required=required, default=default)
        if value is default:
            return default
        if not value or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            self.fail(key, "expected a non-empty list of integers")
        return [int(v) for v in value]

    def finish(self, kind: str):
        unknown = set(self.raw) - self.seen - {"kind"}
        if unknown:
            key = sorted(unknown)[0]
            self.fail(key, f"unknown field for experiment kind {kind!r}")


def _positive(value):
    return None if value > 0 else "must be positive"


def _probability(value):
    return None if 0 <= value <= 1 else "must lie in [0, 1]"


def load_config(path: str | Path, kind: str | None = None, seed_override: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return build_config(raw, kind=kind, seed_override=seed_override, source_path=str(path))


def build_config(
    raw: dict,
    kind: str | None = None,
    seed_override: int | None = None,
    source_path: str | None = None,
) -> ExperimentConfig:
    file_kind = raw.get("kind")
    kind = kind or file_kind
    if kind is None:
        raise ConfigError(f"{source_path or '<config>'}: field 'kind': required")
    if file_kind is not None and file_kind != kind:
        raise ConfigError(
            f"{_line_of(source_path, 'kind')}field 'kind': file says {file_kind!r}, "
            f"command line says {kind!r}"
        )
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"{_line_of(source_path, 'kind')}field 'kind': unknown experiment kind {kind!r}; "
            f"expected one of {', '.join(EXPERIMENT_KINDS)}"
        )
    v = Validator(raw, source_path)
    seed = v.get("seed", int, default=0)
    if seed_override is not None:
        seed = seed_override
    params = _VALIDATORS[kind](v)
    v.finish(kind)
    return ExperimentConfig(kind=kind, params=params, master_seed=int(seed), source_path=source_path)


def _validate_kernel(v: Validator) -> dict:
    model = v.get("model", str, required=True, check=lambda m: None if m in ("matrix", "ar", "geometric") else "must be one of matrix, ar, geometric")
    params = {"model": model, "tau": v.get("tau", float, default=0.2, check=lambda x: None if 0 < x < 1 else "must lie in (0, 1)")}
    params["floor"] = v.get("floor", float, default=1e-6, check=_positive)
    if model == "matrix":
        rows = v.get("rows", list, required=True)
        params["rows"] = rows
        params["p0"] = v.get("p0", list, required=True)
        params["q0"] = v.get("q0", list, required=True)
        params["steps"] = v.get("steps", int, default=20, check=_positive)
    elif model == "ar":
        params["a"] = v.get("a", float, required=True, check=lambda x: None if abs(x) < 1 else "must satisfy |a| < 1")
        params["sigma"] = v.get("sigma", float, required=True, check=_positive)
        z0 = v.get("z0", list, required=True)
        if len(z0) != 2:
            v.fail("z0", "expected a pair of initial values")
        params["z0"] = z0
        params["horizon"] = v.get("horizon", int, default=40, check=_positive)
        params["trials"] = v.get("trials", int, default=100_000, check=_positive)
    else:
        params["eta"] = v.get("eta", float, required=True, check=lambda x: None if 0 < x <= 1 else "must lie in (0, 1]")
        params["delta0"] = v.get("delta0", float, required=True, check=lambda x: None if 0 < x <= 1 else "must lie in (0, 1]")
        params["horizon"] = v.get("horizon", int, default=100, check=_positive)
    return params


def _validate_trackb(v: Validator) -> dict:
    params = {
        "horizons": v.int_list("horizons", required=True),
        "action_count": v.get("action_count", int, required=True, check=lambda x: None if x >= 2 else "must be >= 2"),
        "trials_per_point": v.get("trials_per_point", int, required=True, check=_positive),
        "alias_epsilon": v.get("alias_epsilon", float, default=0.0, check=_probability),
        "observation_alphabet_size": v.get("observation_alphabet_size", int, default=3, check=lambda x: None if x >= 2 else "must be >= 2"),
        "segment_length": v.get("segment_length", int, default=None, check=_positive),
        "segment_count": v.get("segment_count", int, default=None, check=_positive),
        "p_drop": v.get("p_drop", float, default=0.0, check=_probability),
        "episode_cap": v.get("episode_cap", int, default=300_000, check=_positive),
        "confidence_delta": v.get("confidence_delta", float, default=0.5, check=lambda x: None if 0 < x < 1 else "must lie in (0, 1)"),
    }
    if params["segment_length"] is None and params["segment_count"] is None:
        params["segment_length"] = 2
    return params


def _validate_chain(v: Validator) -> dict:
    return {
        "lengths": v.int_list("lengths", required=True),
        "policy_noise": v.get("policy_noise", float, default=0.0, check=_probability),
        "sticky_p": v.get("sticky_p", float, default=0.0, check=_probability),
        "reset_period": v.get("reset_period", int, default=None, check=_positive),
        "compare_baseline": v.get("compare_baseline", bool, default=False),
        "max_steps": v.get("max_steps", int, default=None, check=_positive),
        "trials": v.get("trials", int, default=2000, check=_positive),
        "exact": v.get("exact", bool, default=True),
    }


def _validate_governance(v: Validator) -> dict:
    graph = v.get("graph", (str, dict), default=None)
    if isinstance(graph, dict):
        gv = Validator(graph, v.path)
        graph = {
            "generator": gv.get("generator", str, required=True, check=lambda g: None if g == "planted_cycle" else "only 'planted_cycle' is available"),
            "rooms": gv.get("rooms", int, default=15, check=lambda x: None if x >= 4 else "must be >= 4"),
            "extra_edges": gv.get("extra_edges", int, default=10, check=lambda x: None if x >= 0 else "must be >= 0"),
        }
    return {
        "graph": graph,
        "steps": v.get("steps", int, default=100, check=_positive),
        "phase_k": v.get("phase_k", int, default=10, check=_positive),
        "n_seeds": v.get("n_seeds", int, default=20, check=_positive),
        "policy_rule": v.get("policy_rule", str, default="seeded", check=lambda r: None if r in ("first", "seeded") else "must be 'first' or 'seeded'"),
    }


def _validate_diagnose(v: Validator) -> dict:
    process = v.get("process", dict, default=None)
    if process is not None:
        pv = Validator(process, v.path)
        process = {
            "kind": pv.get("kind", str, required=True, check=lambda k: None if k == "sticky_chain" else "only 'sticky_chain' is available"),
            "length": pv.get("length", int, default=3, check=_positive),
            "policy_noise": pv.get("policy_noise", float, default=0.2, check=_probability),
            "sticky_p": pv.get("sticky_p", float, default=0.5, check=_probability),
            "steps": pv.get("steps", int, default=4, check=_positive),
            "compressor_k": pv.get("compressor_k", int, default=1, check=_positive),
        }
    return {
        "trace_csv": v.get("trace_csv", str, required=True),
        "l_star": v.get("l_star", float, required=True, check=_positive),
        "reset_period": v.get("reset_period", int, default=None, check=_positive),
        "gamma_threshold": v.get("gamma_threshold", float, default=None, check=_positive),
        "delta_h_threshold": v.get("delta_h_threshold", float, default=None, check=_positive),
        "r_threshold": v.get("r_threshold", float, default=0.8, check=_positive),
        "gamma_multiplier": v.get("gamma_multiplier", float, default=1.5, check=_positive),
        "process": process,
    }


def _validate_phase(v: Validator) -> dict:
    return {
        "gamma": v.get("gamma", float, required=True, check=_positive),
        "rho0": v.get("rho0", float, default=1.0, check=lambda x: None if 0 < x <= 1 else "must lie in (0, 1]"),
        "tau": v.get("tau", float, required=True, check=lambda x: None if 0 < x < 1 else "must lie in (0, 1)"),
        "b_max": v.get("b_max", int, default=64, check=_positive),
        "b_values": v.int_list("b_values", default=None),
    }


_VALIDATORS = {
    "kernel": _validate_kernel,
    "trackb": _validate_trackb,
    "chain": _validate_chain,
    "governance": _validate_governance,
    "diagnose": _validate_diagnose,
    "phase": _validate_phase,
}
