"""Run manifests and atomic file output.

Every CLI command emits exactly one manifest next to its primary output,
recording the command, its flags, the seed, and content digests of all
inputs and outputs. Manifests contain no timestamps or host details, so
a rerun with the same inputs produces a byte-identical manifest.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

TOOL_VERSION = "0.1.0"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file plus rename so readers never see partial data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def manifest_path(primary_output: str | Path) -> Path:
    p = Path(primary_output)
    return p.with_name(p.name + ".manifest.json")


def build_manifest(
    command: str,
    args: dict,
    inputs: dict[str, str | Path],
    outputs: dict[str, str | Path],
    extra: dict | None = None,
) -> dict:
    manifest = {
        "schema": "risktube/manifest/v1",
        "tool_version": TOOL_VERSION,
        "command": command,
        "args": args,
        "inputs": {
            name: {"path": str(path), "sha256": sha256_file(path)}
            for name, path in inputs.items()
        },
        "outputs": {
            name: {"path": str(path), "sha256": sha256_file(path)}
            for name, path in outputs.items()
        },
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_manifest(primary_output: str | Path, manifest: dict) -> Path:
    path = manifest_path(primary_output)
    atomic_write_text(path, json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path
