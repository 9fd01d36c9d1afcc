"""Pipeline configuration loading and run-metadata provenance."""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .errors import ContractViolation

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Example speed table following common road-network scoring conventions.
# These values are a documented default, not an authoritative lookup.
EXAMPLE_SPEED_TABLE = {
    "motorway": 65.0,
    "trunk": 55.0,
    "primary": 45.0,
    "secondary": 35.0,
    "tertiary": 30.0,
    "residential": 25.0,
    "service": 15.0,
    "default": 30.0,
}


def load_config(path: str | Path | None) -> dict[str, Any]:
    """Load a TOML or JSON pipeline config; None yields an empty config."""
    if path is None:
        return {}
    path = Path(path)
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    if path.suffix == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    raise ContractViolation(f"config {path} must be .toml or .json")


def speed_table_from(config: Mapping[str, Any]) -> dict[str, float]:
    table = config.get("speed_table")
    if not table:
        return dict(EXAMPLE_SPEED_TABLE)
    return {str(k): float(v) for k, v in table.items()}


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_run_metadata(out_dir: str | Path, command: str,
                       config: Mapping[str, Any],
                       inputs: list[str | Path]) -> Path:
    """Record provenance for a pipeline stage (deterministic; no timestamps).

    Captures the effective config and hashes of every input file so a run
    can be replayed and outputs compared bit-for-bit.
    """
    out_dir = Path(out_dir)
    runs = out_dir / "runs"
    runs.mkdir(parents=True, exist_ok=True)
    config_json = json.dumps(config, sort_keys=True, default=str)
    payload = {
        "command": command,
        "package_version": __version__,
        "config": json.loads(config_json),
        "config_hash": hashlib.sha256(config_json.encode()).hexdigest(),
        "input_hashes": {
            str(p): _sha256_file(Path(p)) for p in sorted(str(x) for x in inputs)
            if Path(p).is_file()
        },
    }
    path = runs / f"{command}.meta.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path
