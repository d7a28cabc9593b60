"""Run manifests: what was run, with which config, seeds and input digests."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(command: str, config: dict, seeds: dict, inputs, outputs=None) -> dict:
    """Assemble a manifest; outputs are byte-determined by everything but ``created_utc``."""
    return {
        "command": command,
        "tool_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): file_digest(p) for p in sorted(str(x) for x in inputs)},
        "outputs": sorted(str(o) for o in (outputs or [])),
    }


def write_manifest(manifest: dict, target) -> Path:
    """Write a manifest into a directory (as ``manifest.json``) or to an exact path."""
    target = Path(target)
    path = target / MANIFEST_NAME if target.is_dir() else target
    with path.open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path
