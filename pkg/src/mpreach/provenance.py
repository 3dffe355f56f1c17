"""Artifact provenance: content hashing and per-directory run manifests.

Every command that writes an artifact directory finishes by dropping a
provenance.ini next to its outputs: tool version, the seed in effect, any
command-specific facts, and a sha256 per file. The provenance file itself is
excluded from the hash list so rewriting it is idempotent.
"""

from __future__ import annotations

import configparser
import hashlib
from pathlib import Path

from ._version import __version__

PROVENANCE_NAME = "provenance.ini"
RESOLVED_CONFIG_NAME = "resolved_config.ini"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def iter_artifact_files(root: str | Path, exclude: tuple[str, ...] = (PROVENANCE_NAME,)):
    root = Path(root)
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.name not in exclude:
            yield path


def tree_hash(root: str | Path, exclude: tuple[str, ...] = (PROVENANCE_NAME,)) -> str:
    """Order-independent digest of a directory: names and contents both count."""
    root = Path(root)
    h = hashlib.sha256()
    for path in iter_artifact_files(root, exclude):
        h.update(str(path.relative_to(root)).encode())
        h.update(b"\0")
        h.update(bytes.fromhex(sha256_file(path)))
    return h.hexdigest()


def write_provenance(out_dir: str | Path, seed: int,
                     resolved_config: str | None = None,
                     extra: dict | None = None) -> Path:
    """Stamp an artifact directory. Call after all other files are written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if resolved_config is not None:
        (out / RESOLVED_CONFIG_NAME).write_text(resolved_config)
    cfg = configparser.ConfigParser()
    cfg.optionxform = str  # file names are case-sensitive keys
    run = {"tool_version": __version__, "seed": str(seed)}
    for key, value in (extra or {}).items():
        run[key] = str(value)
    cfg["run"] = run
    cfg["hashes"] = {
        str(p.relative_to(out)): sha256_file(p) for p in iter_artifact_files(out)
    }
    path = out / PROVENANCE_NAME
    with open(path, "w") as fh:
        cfg.write(fh)
    return path
