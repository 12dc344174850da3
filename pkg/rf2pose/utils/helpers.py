"""
Helper utilities for the rf2pose application.
"""
import hashlib
import json
import logging
import random
from datetime import datetime
from typing import Any, Dict, List, Sequence

import numpy as np
import torch

logger = logging.getLogger("rf2pose")


def log_info(message: str) -> None:
    """
    Log an informational message.

    Args:
        message (str): The message to log
    """
    logger.info(message)


def log_warning(message: str) -> None:
    """
    Log a warning message.

    Args:
        message (str): The warning to log
    """
    logger.warning(message)


def log_error(message: str) -> None:
    """
    Log an error message.

    Args:
        message (str): The error message to log
    """
    logger.error(message)


def log_debug(message: str) -> None:
    """
    Log a debug message.

    Args:
        message (str): The debug message to log
    """
    logger.debug(message)


def set_seed(seed: int) -> None:
    """
    Seed every random number generator the package draws from.

    Args:
        seed (int): Seed shared by python, numpy and torch
    """
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    torch.backends.cudnn.deterministic = True
    torch.backends.cudnn.benchmark = False


def derive_seed(base_seed: int, key: str) -> int:
    """Derive a stable 63-bit seed from a base seed and a string key."""
    digest = hashlib.sha256(f"{base_seed}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def stable_hash(payload: Dict[str, Any]) -> str:
    """
    Hash a JSON-serializable mapping independently of key order.

    Returns:
        str: First 16 hex digits of the SHA-256 digest
    """
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def chunk_list(lst: Sequence[Any], chunk_size: int) -> List[Sequence[Any]]:
    """
    Split a sequence into chunks of specified size.

    Args:
        lst (Sequence): The sequence to split
        chunk_size (int): Size of each chunk

    Returns:
        List: List of chunks
    """
    return [lst[i:i + chunk_size] for i in range(0, len(lst), chunk_size)]


def generate_timestamp() -> str:
    """
    Generate a current timestamp string in ISO format.

    Returns:
        str: Current timestamp in ISO format
    """
    return datetime.now().isoformat()
