"""Run manifests: what was run, with which resolved parameters, where.

The manifest is written to <out>/manifest.json before any computation so a
crashed run still records what it attempted. Replaying a manifest
(`--from-manifest`) re-runs the same command with the same parameters.
"""

import json
import subprocess
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, ValidationError

from src.errors import ConfigError

MANIFEST_NAME = "manifest.json"
FALLBACK_BUILD_ID = "maskcons-0.1.0"


class RunManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: str
    config_path: str = ""
    params: dict[str, Any]
    seed: int
    build_id: str
    out_dir: str
    run_id: str = ""
    precision: str = "f64"
    created_at: str = ""


def build_id() -> str:
    """`git describe` of the working tree, or the package version outside a checkout."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            capture_output=True, text=True, timeout=5, check=False,
        )
    except (OSError, subprocess.SubprocessError):
        return FALLBACK_BUILD_ID
    described = result.stdout.strip()
    return described if result.returncode == 0 and described else FALLBACK_BUILD_ID


def write_manifest(manifest: RunManifest) -> Path:
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not manifest.created_at:
        manifest = manifest.model_copy(update={"created_at": datetime.now(timezone.utc).isoformat()})
    path = out / MANIFEST_NAME
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest(path: str | Path) -> RunManifest:
    """Accepts the manifest file or the run directory containing it."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read manifest {path}: {e}", key="from_manifest") from e
    try:
        return RunManifest.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"malformed manifest {path}: {e.errors()[0]['msg']}", key="from_manifest") from e
