"""
Artifact writing helpers.

Files are first written under a ``.partial`` suffix and renamed into place
only once complete, so an interrupted command never leaves a truncated file
under its final name.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

PARTIAL_SUFFIX = ".partial"

PathLike = Union[str, os.PathLike]


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (tuple, set)):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def canonical_json(document: Any) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline"""
    return json.dumps(document, sort_keys=True, indent=2, default=_to_builtin, allow_nan=True) + "\n"


def write_text(path: PathLike, text: str) -> Path:
    """Write text through a ``.partial`` file and rename it into place"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    partial = target.with_name(target.name + PARTIAL_SUFFIX)
    with open(partial, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(partial, target)
    logger.info(f"Wrote {target}")
    return target


def write_json(path: PathLike, document: Any) -> Path:
    return write_text(path, canonical_json(document))


def write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    """Write a DataFrame as CSV without the index"""
    return write_text(path, frame.to_csv(index=False, lineterminator="\n"))


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
