"""Atomic run-directory persistence with digested manifests.

Outputs are written into a staging directory next to the target and promoted
with a single rename, so a run directory either does not exist or contains a
manifest that describes exactly the files present.  Data files are written
with stable formatting; rerunning a config with the same seed reproduces
byte-identical data files (manifest timestamps excluded).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import IntegrityError, InvalidInputError

MANIFEST_NAME = "manifest.json"


def format_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def render_csv(header: list[str], rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue().encode("utf-8")


def render_json(payload) -> bytes:
    return (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class RunWriter:
    """Collects output files in memory, then promotes them atomically."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.files: dict[str, bytes] = {}

    def add(self, name: str, data: bytes) -> None:
        if name in self.files:
            raise InvalidInputError(f"duplicate output file {name!r}")
        self.files[name] = data

    def add_csv(self, name: str, header: list[str], rows) -> None:
        self.add(name, render_csv(header, rows))

    def add_json(self, name: str, payload) -> None:
        self.add(name, render_json(payload))

    def promote(self, manifest_extra: dict) -> dict:
        """Write manifest last inside staging, then rename into place."""
        if self.out_dir.exists() and any(self.out_dir.iterdir()):
            raise InvalidInputError(f"output directory {self.out_dir} is not empty")
        manifest = {
            "artifact_version": __version__,
            **manifest_extra,
            "files": {
                name: {"sha256": sha256_hex(data), "bytes": len(data)}
                for name, data in sorted(self.files.items())
            },
        }
        staging = self.out_dir.parent / f".staging-{self.out_dir.name}-{os.getpid()}"
        if staging.exists():
            shutil.rmtree(staging)
        staging.mkdir(parents=True)
        try:
            for name, data in sorted(self.files.items()):
                path = staging / name
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_bytes(data)
            (staging / MANIFEST_NAME).write_bytes(render_json(manifest))
            if self.out_dir.exists():
                self.out_dir.rmdir()
            os.replace(staging, self.out_dir)
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            raise
        return manifest


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def load_manifest(run_dir: str | Path) -> dict:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.is_file():
        raise IntegrityError(f"no manifest found in {run_dir}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"corrupt manifest in {run_dir}: {exc}") from exc
    for name, meta in manifest.get("files", {}).items():
        fpath = Path(run_dir) / name
        if not fpath.is_file():
            raise IntegrityError(f"manifest lists missing file {name!r}")
        digest = sha256_hex(fpath.read_bytes())
        if digest != meta["sha256"]:
            raise IntegrityError(f"digest mismatch for {name!r}")
    return manifest
