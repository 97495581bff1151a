"""CelebA attribute-list parsing with the standard 18-attribute selection."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..attributes import AttributeVector
from ..errors import ConfigError

# the 18 attributes kept for face generation, in their canonical order
CELEBA_ATTRIBUTES_18 = (
    "5_o_Clock_Shadow",
    "Arched_Eyebrows",
    "Bags_Under_Eyes",
    "Bald",
    "Bangs",
    "Black_Hair",
    "Blond_Hair",
    "Brown_Hair",
    "Bushy_Eyebrows",
    "Eyeglasses",
    "Gray_Hair",
    "Male",
    "Mouth_Slightly_Open",
    "Narrow_Eyes",
    "No_Beard",
    "Pale_Skin",
    "Pointy_Nose",
    "Smiling",
)


@dataclass(frozen=True)
class AttrRecord:
    image_id: str
    attrs: AttributeVector


def parse_celeba_attrs(
    path: str | Path, selection: Sequence[str] = CELEBA_ATTRIBUTES_18
) -> list[AttrRecord]:
    """Parse a ``list_attr_celeba.txt``-style file, projecting each record onto
    ``selection`` (in the order given). Values +1 map to 1 and -1 to 0.

    Layout: line 1 is the record count, line 2 the attribute names, every
    following line an image filename and one +/-1 value per attribute.
    """
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2:
        raise ConfigError(f"{path}: expected a count line and a header line")
    try:
        declared = int(lines[0].strip())
    except ValueError as exc:
        raise ConfigError(f"{path}: line 1 must be the record count, got {lines[0]!r}") from exc
    header = lines[1].split()
    column = {name: i for i, name in enumerate(header)}
    for name in selection:
        if name not in column:
            raise ConfigError(f"{path}: unknown attribute name in selection: {name!r}")
    indices = [column[name] for name in selection]
    names = tuple(selection)

    records = []
    for line_no, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != len(header) + 1:
            raise ConfigError(
                f"{path}:{line_no}: expected a filename and {len(header)} values, "
                f"got {len(parts)} fields"
            )
        values = parts[1:]
        bits = []
        for idx in indices:
            if values[idx] == "1":
                bits.append(1)
            elif values[idx] == "-1":
                bits.append(0)
            else:
                raise ConfigError(
                    f"{path}:{line_no}: attribute values must be 1 or -1, got {values[idx]!r}"
                )
        records.append(AttrRecord(parts[0], AttributeVector(tuple(bits), names)))
    if declared != len(records):
        raise ConfigError(
            f"{path}: header declares {declared} records, file contains {len(records)}"
        )
    return records


def write_celeba_attrs(records: Sequence[AttrRecord], path: str | Path) -> None:
    """Serialize records back to the same attribute-list layout."""
    if not records:
        raise ConfigError("cannot serialize an empty record list")
    names = records[0].attrs.names
    lines = [str(len(records)), " ".join(names)]
    for rec in records:
        values = " ".join("1" if b else "-1" for b in rec.attrs.bits)
        lines.append(f"{rec.image_id} {values}")
    Path(path).write_text("\n".join(lines) + "\n")
