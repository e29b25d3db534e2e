"""Parameter checkpoints.

Format ``alloc_rl.params/1``: a numpy ``.npz`` archive holding one float64
array per parameter under its dotted name, plus ``__format__`` (the version
string) and ``__names__`` (insertion order). Values round-trip bit-exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ValidationError

FORMAT_VERSION = "alloc_rl.params/1"


def save_params(path, named: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {name: np.asarray(getattr(t, "data", t), dtype=np.float64) for name, t in named.items()}
    with open(path, "wb") as fh:
        np.savez(
            fh,
            __format__=np.array(FORMAT_VERSION),
            __names__=np.array(list(arrays), dtype=str),
            **arrays,
        )
    return path


def load_params(path) -> dict:
    with np.load(Path(path), allow_pickle=False) as npz:
        version = str(npz["__format__"]) if "__format__" in npz.files else None
        if version != FORMAT_VERSION:
            raise ValidationError(f"{path}: unsupported checkpoint format {version!r}")
        return {str(name): npz[str(name)].copy() for name in npz["__names__"]}


def load_into(path, named: dict) -> None:
    """Copy checkpoint values into existing Tensors, checking names and shapes."""
    stored = load_params(path)
    if set(stored) != set(named):
        raise ValidationError(f"{path}: parameter names differ from the target network")
    for name, t in named.items():
        if stored[name].shape != t.data.shape:
            raise ValidationError(f"{path}: {name} has shape {stored[name].shape}, expected {t.data.shape}")
        t.data = stored[name]
