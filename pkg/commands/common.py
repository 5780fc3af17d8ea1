"""
Helpers shared by the command modules
"""
import math
import os
from typing import Dict, Optional

from src.config import Config, RunConfig


def banner(title: str):
    print("\n" + "=" * 80)
    print(title)
    print("=" * 80)


def output_paths(config: RunConfig) -> Dict[str, str]:
    """Create --out-dir if needed and return the documented output paths"""
    os.makedirs(config.out_dir, exist_ok=True)
    return Config.get_output_paths(config.out_dir)


def split_point(length: int, train_fraction: float) -> int:
    """Index of the first record after the training head; ``length`` when the whole trace trains"""
    if train_fraction >= 1.0:
        return length
    return min(length, int(math.floor(length * train_fraction)))


def tail_start(length: int, train_fraction: float) -> Optional[int]:
    """First record of the evaluation tail, or None when there is no split"""
    cut = split_point(length, train_fraction)
    return cut if cut < length else None


def require_file(path: Optional[str], what: str):
    """
    Raises:
        FileNotFoundError: ``path`` is not an existing file (mapped to the input exit code)
    """
    if not path or not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")
