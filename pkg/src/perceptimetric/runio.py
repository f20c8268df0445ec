"""Atomic output writing, input hashing, and run manifests for the CLI."""

from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write to a sibling temp file and rename, so readers never see partials."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-perceptimetric-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json_atomic(path, payload) -> None:
    atomic_write_text(path, dump_json(payload))


def tool_versions() -> dict:
    import numpy
    import scipy

    from . import __version__

    return {
        "perceptimetric": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
    }


def build_manifest(command: str, config: dict, inputs: dict, outputs: list,
                   seed: int) -> dict:
    """Everything needed to regenerate the outputs: config plus input hashes."""
    return {
        "command": command,
        "config": config,
        "inputs": {
            name: {"path": str(path), "sha256": sha256_file(path)}
            for name, path in inputs.items()
        },
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "versions": tool_versions(),
    }


def write_manifest(out_path, manifest: dict) -> str:
    path = f"{out_path}.manifest.json"
    write_json_atomic(path, manifest)
    return path
