"""Figure specifications and input-schema validation.

A spec is a JSON document naming the figure kind, its input files (paths are
resolved relative to the spec file), style options, and the output path.
Input CSV columns must match the schemas the lab's experiment runner emits;
mismatches fail with a column-level message.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


class SpecError(ValueError):
    pass


class SchemaError(SpecError):
    pass


FIGURE_KINDS = (
    "scaling_logy",
    "decay_with_thresholds",
    "paired_bars",
    "phase_diagram",
    "rooms_over_time",
)

REQUIRED_INPUTS = {
    "scaling_logy": ("curve",),
    "decay_with_thresholds": ("trace", "fit"),
    "paired_bars": ("bars",),
    "phase_diagram": ("phase",),
    "rooms_over_time": ("visitation",),
}

CSV_SCHEMAS = {
    "curve": (
        "condition",
        "L",
        "median_episodes",
        "iqr_low",
        "iqr_high",
        "capped_fraction",
        "theory_reference",
    ),
    "trace": ("t", "rho", "stderr"),
    "bars": ("condition", "metric", "mean", "std"),
    "phase": ("b", "l_star_b"),
    "visitation": ("condition", "step", "distinct_rooms"),
}


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: dict
    output: Path
    style: dict = field(default_factory=dict)

    @property
    def format(self) -> str:
        fmt = self.style.get("format") or self.output.suffix.lstrip(".").lower()
        if fmt not in ("svg", "png"):
            raise SpecError(f"unsupported output format {fmt!r}; use svg or png")
        return fmt


def load_spec(path: str | Path) -> FigureSpec:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise SpecError(f"{path}: cannot read spec: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON: {exc}") from exc
    return parse_spec(payload, base_dir=path.parent)


def parse_spec(payload: dict, base_dir: str | Path = ".") -> FigureSpec:
    base = Path(base_dir)
    kind = payload.get("kind")
    if kind not in FIGURE_KINDS:
        raise SpecError(
            f"field 'kind': unknown figure kind {kind!r}; expected one of {', '.join(FIGURE_KINDS)}"
        )
    raw_inputs = payload.get("inputs")
    if not isinstance(raw_inputs, dict):
        raise SpecError("field 'inputs': expected a mapping of input names to paths")
    inputs = {}
    for name in REQUIRED_INPUTS[kind]:
        if name not in raw_inputs:
            raise SpecError(f"field 'inputs.{name}': required for kind {kind!r}")
        candidate = Path(raw_inputs[name])
        inputs[name] = candidate if candidate.is_absolute() else base / candidate
    output = payload.get("output")
    if not output:
        raise SpecError("field 'output': required")
    out_path = Path(output)
    if not out_path.is_absolute():
        out_path = base / out_path
    style = payload.get("style", {})
    if not isinstance(style, dict):
        raise SpecError("field 'style': expected a mapping")
    return FigureSpec(kind=kind, inputs=inputs, output=out_path, style=style)


def read_csv(path: Path, schema_name: str) -> list[dict]:
    columns = CSV_SCHEMAS[schema_name]
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise SchemaError(f"{path}: empty file; expected columns {', '.join(columns)}")
            missing = [c for c in columns if c not in reader.fieldnames]
            if missing:
                raise SchemaError(
                    f"{path}: missing column(s) {', '.join(missing)} "
                    f"(schema '{schema_name}' needs {', '.join(columns)})"
                )
            rows = list(reader)
    except OSError as exc:
        raise SpecError(f"{path}: cannot read input: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def read_fit_json(path: Path) -> dict:
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise SpecError(f"{path}: cannot read input: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("tau", "l_star"):
        if key not in payload:
            raise SchemaError(f"{path}: missing field {key!r} in fit record")
    return payload


def source_digests(spec: FigureSpec) -> str:
    """Digest line for figure metadata: inputs plus any run manifest nearby."""
    parts = []
    manifest_seen = set()
    for name in sorted(spec.inputs):
        path = spec.inputs[name]
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        parts.append(f"{name}=sha256:{digest[:16]}")
        manifest = path.parent / "manifest.json"
        if manifest.is_file() and manifest not in manifest_seen:
            manifest_seen.add(manifest)
            mdigest = hashlib.sha256(manifest.read_bytes()).hexdigest()
            parts.append(f"manifest=sha256:{mdigest[:16]}")
    return "; ".join(parts)
