"""Binary attribute vectors: the model's sole semantic input."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import torch

from .errors import ConfigError


def default_names(n: int) -> tuple[str, ...]:
    return tuple(f"attr_{i}" for i in range(n))


@dataclass(frozen=True)
class AttributeVector:
    """An ordered sequence of 0/1 flags plus human-readable labels."""

    bits: tuple[int, ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if not self.names:
            object.__setattr__(self, "names", default_names(len(self.bits)))
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"attribute bits must be 0 or 1, got {self.bits}")
        if len(self.names) != len(self.bits):
            raise ConfigError(
                f"{len(self.names)} attribute names for {len(self.bits)} bits"
            )

    def __len__(self) -> int:
        return len(self.bits)

    @classmethod
    def parse(cls, text: str, names: Sequence[str] | None = None) -> "AttributeVector":
        """Parse a comma-separated bit string such as ``"1,0,1,0"``."""
        parts = [p.strip() for p in text.split(",") if p.strip() != ""]
        try:
            bits = tuple(int(p) for p in parts)
        except ValueError as exc:
            raise ValueError(f"cannot parse attribute bits from {text!r}") from exc
        return cls(bits, tuple(names) if names else ())

    @classmethod
    def from_flags(
        cls,
        names: Sequence[str],
        set_names: Iterable[str] = (),
        unset_names: Iterable[str] = (),
    ) -> "AttributeVector":
        """Build a vector from named on/off flags; unnamed attributes default to 0."""
        index = {name: i for i, name in enumerate(names)}
        bits = [0] * len(names)
        for name in set_names:
            if name not in index:
                raise ConfigError(f"unknown attribute name {name!r}")
            bits[index[name]] = 1
        for name in unset_names:
            if name not in index:
                raise ConfigError(f"unknown attribute name {name!r}")
            bits[index[name]] = 0
        return cls(tuple(bits), tuple(names))

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.tensor(self.bits, dtype=dtype)


def validate_bits_tensor(bits: torch.Tensor, n_attrs: int) -> None:
    """Check a (N,) or (B, N) tensor of attribute flags against the module contract.

    Wrong trailing dimension is a configuration error; non-binary values are a
    validation error.
    """
    if bits.shape[-1] != n_attrs:
        raise ConfigError(
            f"attribute vector has length {bits.shape[-1]}, expected {n_attrs}"
        )
    if not torch.all((bits == 0) | (bits == 1)):
        raise ValueError("attribute vector entries must be exactly 0 or 1")
