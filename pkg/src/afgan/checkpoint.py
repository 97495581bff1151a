"""Versioned checkpoint archives: every parameter tensor keyed by module path
plus the training configuration, in a single reproducible zip file.

Archives are written with fixed entry metadata and sorted keys so that saving
the same state twice produces byte-identical files.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np
import torch

from .config import TrainConfig
from .errors import CheckpointError

FORMAT_TAG = "afgan-checkpoint-v1"
_ZIP_DATE = (2020, 1, 1, 0, 0, 0)


class Checkpoint(NamedTuple):
    tensors: dict[str, torch.Tensor]
    config: TrainConfig
    meta: dict


def _write_entry(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(
    path: str | Path,
    tensors: Mapping[str, torch.Tensor],
    config: TrainConfig,
    meta: dict | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w") as zf:
        _write_entry(zf, "format.txt", FORMAT_TAG.encode())
        _write_entry(zf, "config.json", config.to_json().encode())
        _write_entry(
            zf, "meta.json", json.dumps(meta or {}, sort_keys=True).encode()
        )
        for key in sorted(tensors):
            buf = io.BytesIO()
            np.save(buf, tensors[key].detach().cpu().numpy())
            _write_entry(zf, f"tensors/{key}.npy", buf.getvalue())
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            names = set(zf.namelist())
            if "format.txt" not in names:
                raise CheckpointError(f"{path} is not a checkpoint archive (no format tag)")
            tag = zf.read("format.txt").decode()
            if tag != FORMAT_TAG:
                raise CheckpointError(
                    f"{path} has format tag {tag!r}, this build reads {FORMAT_TAG!r}"
                )
            config = TrainConfig.from_json(zf.read("config.json").decode())
            meta = json.loads(zf.read("meta.json").decode())
            tensors = {}
            for name in sorted(names):
                if name.startswith("tensors/") and name.endswith(".npy"):
                    key = name[len("tensors/"):-len(".npy")]
                    arr = np.load(io.BytesIO(zf.read(name)))
                    tensors[key] = torch.from_numpy(arr)
    except zipfile.BadZipFile as exc:
        raise CheckpointError(f"{path} is not a readable archive: {exc}") from exc
    return Checkpoint(tensors, config, meta)


def load_into_module(module: torch.nn.Module, tensors: Mapping[str, torch.Tensor], prefix: str = "") -> None:
    """Load a flat tensor dict into a module, failing loudly on mismatch."""
    state = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
    try:
        module.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(
            f"checkpoint does not match the model it is loaded into: {exc}"
        ) from exc
