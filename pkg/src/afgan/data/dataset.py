"""Synthetic dataset generation, manifest I/O, and the in-memory loader."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Iterator

import numpy as np
import torch
from PIL import Image

from ..errors import ConfigError
from .synthetic import SynthSpec, render_face

MANIFEST_NAME = "manifest.jsonl"
SPEC_NAME = "spec.json"
IMAGE_DIR = "images"


def write_synthetic_dataset(
    spec: SynthSpec, count: int, seed: int, out_dir: str | Path
) -> Path:
    """Render ``count`` glyphs with attribute vectors drawn uniformly per bit
    and write them plus a JSON-lines manifest of {image_id, bits, seed}."""
    if count < 1:
        raise ConfigError(f"count must be positive, got {count}")
    out_dir = Path(out_dir)
    (out_dir / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(count):
        bits = rng.integers(0, 2, size=spec.n_attrs).tolist()
        image_seed = int(rng.integers(0, 2 ** 31 - 1))
        image_id = f"img_{i:05d}.png"
        image = render_face(spec, bits, image_seed)
        Image.fromarray(image).save(out_dir / IMAGE_DIR / image_id)
        lines.append(json.dumps(
            {"image_id": image_id, "bits": bits, "seed": image_seed}
        ))
    (out_dir / MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    (out_dir / SPEC_NAME).write_text(
        json.dumps(dataclasses.asdict(spec), sort_keys=True) + "\n"
    )
    return out_dir / MANIFEST_NAME


def load_manifest(path: str | Path) -> list[dict]:
    records = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{line_no}: bad manifest line: {exc}") from exc
        missing = {"image_id", "bits", "seed"} - set(rec)
        if missing:
            raise ConfigError(f"{path}:{line_no}: manifest line missing {sorted(missing)}")
        records.append(rec)
    return records


class SyntheticDataset:
    """In-memory dataset of (image, attribute-bits) pairs.

    Images are held as float tensors in [-1, 1], attributes as a float matrix.
    Batch iteration uses a seeded shuffle so runs are reproducible.
    """

    def __init__(self, images: torch.Tensor, attrs: torch.Tensor, spec: SynthSpec) -> None:
        if images.shape[0] != attrs.shape[0]:
            raise ConfigError(
                f"{images.shape[0]} images for {attrs.shape[0]} attribute rows"
            )
        self.images = images
        self.attrs = attrs
        self.spec = spec

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def resolution(self) -> int:
        return self.images.shape[-1]

    @property
    def n_attrs(self) -> int:
        return self.attrs.shape[1]

    @classmethod
    def load(cls, root: str | Path) -> "SyntheticDataset":
        root = Path(root)
        manifest = load_manifest(root / MANIFEST_NAME)
        if not manifest:
            raise ConfigError(f"{root}: manifest is empty")
        spec = SynthSpec(**json.loads((root / SPEC_NAME).read_text()))
        images, attrs = [], []
        for rec in manifest:
            arr = np.asarray(Image.open(root / IMAGE_DIR / rec["image_id"]).convert("RGB"))
            images.append(arr)
            attrs.append(rec["bits"])
        stacked = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).float()
        return cls(
            stacked / 127.5 - 1.0,
            torch.tensor(attrs, dtype=torch.float32),
            spec,
        )

    @classmethod
    def generate(cls, spec: SynthSpec, count: int, seed: int) -> "SyntheticDataset":
        """Render a dataset directly in memory (no files)."""
        rng = np.random.default_rng(seed)
        images, attrs = [], []
        for _ in range(count):
            bits = rng.integers(0, 2, size=spec.n_attrs).tolist()
            image_seed = int(rng.integers(0, 2 ** 31 - 1))
            images.append(render_face(spec, bits, image_seed))
            attrs.append(bits)
        stacked = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).float()
        return cls(
            stacked / 127.5 - 1.0,
            torch.tensor(attrs, dtype=torch.float32),
            spec,
        )

    def batches(
        self, batch_size: int, generator: torch.Generator, drop_last: bool = True
    ) -> Iterator[tuple[torch.Tensor, torch.Tensor]]:
        """One shuffled epoch of (images, attrs) batches."""
        order = torch.randperm(len(self), generator=generator)
        end = len(self) - (len(self) % batch_size) if drop_last else len(self)
        for start in range(0, end, batch_size):
            idx = order[start:start + batch_size]
            yield self.images[idx], self.attrs[idx]

    def sample_attrs(self, count: int, generator: torch.Generator) -> torch.Tensor:
        """Attribute vectors drawn from the dataset's empirical distribution."""
        idx = torch.randint(0, len(self), (count,), generator=generator)
        return self.attrs[idx]
