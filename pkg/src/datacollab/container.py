"""On-disk container for mappers and trained models.

A container is an uncompressed ``.npz`` archive holding plain arrays plus a
``type`` tag; loading never unpickles.
"""
from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

from .errors import LoadError
from .learner import TrainedModel
from .mappers import Mapper

_TYPES = {"mapper": Mapper, "model": TrainedModel}


def save(path, obj: Union[Mapper, TrainedModel]) -> Path:
    tag = next((t for t, cls in _TYPES.items() if isinstance(obj, cls)), None)
    if tag is None:
        raise TypeError(f"cannot store {type(obj).__name__}")
    path = Path(path)
    with path.open("wb") as fh:
        np.savez(fh, type=np.array(tag), **obj.to_arrays())
    return path


def load(path) -> Union[Mapper, TrainedModel]:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise LoadError(f"{path}: not a readable container: {exc}") from exc
    tag = str(arrays.pop("type", ""))
    if tag not in _TYPES:
        raise LoadError(f"{path}: unknown container type {tag!r}")
    try:
        return _TYPES[tag].from_arrays(arrays)
    except (KeyError, ValueError, TypeError) as exc:
        raise LoadError(f"{path}: malformed {tag} container: {exc}") from exc
