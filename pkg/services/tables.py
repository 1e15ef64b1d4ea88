"""
Result tables and run manifests.

CSV is the canonical output; markdown is a projection of the same rows.
A manifest written beside each output holds the resolved configuration
and a digest of the output, and nothing time-dependent, so replaying it
reproduces the file byte for byte.
"""
import hashlib
import io
import json
import logging
import os
from typing import Any, Literal

import pandas as pd

from _version import __version__

LOGGER = logging.getLogger("tables")

CSV_FLOAT_FORMAT = "%.12g"
MANIFEST_SUFFIX = ".manifest.json"

OutputFormat = Literal["csv", "markdown"]


def render(frame: pd.DataFrame, fmt: OutputFormat = "csv") -> str:
    match fmt:
        case "csv":
            buffer = io.StringIO()
            frame.to_csv(buffer, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
            return buffer.getvalue()
        case "markdown":
            return frame.to_markdown(index=False, floatfmt=".6g") + "\n"
        case _:
            raise ValueError(f"unknown output format {fmt!r}")


def write_table(frame: pd.DataFrame, path: str | os.PathLike, fmt: OutputFormat = "csv") -> str:
    """Writes the table and returns the SHA-256 of the bytes written."""
    data = render(frame, fmt).encode("utf-8")
    with open(path, "wb") as f:
        f.write(data)
    LOGGER.info(f"Wrote {len(frame)} rows to {path}")
    return hashlib.sha256(data).hexdigest()


def file_digest(path: str | os.PathLike) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def manifest_path(output: str | os.PathLike) -> str:
    return f"{os.fspath(output)}{MANIFEST_SUFFIX}"


def write_manifest(config: dict[str, Any], output: str | os.PathLike, digest: str) -> str:
    path = manifest_path(output)
    manifest = {
        "version": __version__,
        "output": os.path.basename(os.fspath(output)),
        "sha256": digest,
        "config": config,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_manifest(path: str | os.PathLike) -> dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        manifest = json.load(f)
    if not isinstance(manifest, dict) or "config" not in manifest:
        raise ValueError(f"{path} is not a run manifest")
    if manifest.get("version") != __version__:
        LOGGER.warning(f"Manifest {path} was written by version {manifest.get('version')}, running {__version__}")
    return manifest
