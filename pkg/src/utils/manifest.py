"""Run manifests: what was run, with which settings, on which inputs."""
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, Iterable

from src import __version__
from src.utils.json_utils import write_json

logger = logging.getLogger(__name__)

_CHUNK = 1 << 20


def compute_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(_CHUNK), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(command: str, config_echo: Dict[str, Any], inputs: Iterable[Path]) -> Dict[str, Any]:
    """
    Manifest payload. Holds no timestamps or host details, so reruns write identical bytes.

    Args:
        command: subcommand name
        config_echo: effective configuration, minus settings that never change outputs
        inputs: files read by the run; each is hashed
    """
    return {
        "command": command,
        "version": __version__,
        "config": config_echo,
        "inputs": [{"path": str(p), "sha256": compute_sha256(p)} for p in inputs],
    }


def write_manifest(output_dir: Path, command: str, config_echo: Dict[str, Any], inputs: Iterable[Path]) -> Path:
    path = Path(output_dir) / f"manifest-{command}.json"
    write_json(path, build_manifest(command, config_echo, inputs))
    logger.info(f"Wrote manifest {path}")
    return path
