"""
Stage checkpoints: torch-serialized dicts carrying a kind, a configuration
hash and module state dicts.
"""
import os
from typing import Any, Dict, Optional

import torch

from ..core.errors import DependencyError
from ..utils.helpers import log_info, log_warning

FORMAT_VERSION = 1


def save_checkpoint(path: str, kind: str, config_hash: str, state_dicts: Dict[str, Dict[str, Any]],
                    extra: Optional[Dict[str, Any]] = None) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    torch.save({
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config_hash": config_hash,
        "state_dicts": state_dicts,
        "extra": extra or {},
    }, path)
    log_info(f"Saved {kind} checkpoint to {path}")
    return path


def load_checkpoint(path: str, kind: str, config_hash: Optional[str] = None,
                    force: bool = False) -> Dict[str, Any]:
    """
    Load a checkpoint written by save_checkpoint.

    A missing file, a different kind or a hash mismatch raises
    DependencyError; with ``force`` a hash mismatch only warns.
    """
    if not os.path.exists(path):
        raise DependencyError(f"Missing {kind} checkpoint: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != FORMAT_VERSION:
        raise DependencyError(f"Unsupported checkpoint format in {path}")
    if payload.get("kind") != kind:
        raise DependencyError(f"{path} holds a {payload.get('kind')} checkpoint, expected {kind}")
    if config_hash is not None and payload.get("config_hash") != config_hash:
        message = (f"{kind} checkpoint {path} has config hash {payload.get('config_hash')}, "
                   f"expected {config_hash}")
        if not force:
            raise DependencyError(message)
        log_warning(f"{message}; continuing because force is set")
    return payload
