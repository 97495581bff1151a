"""Attribute/image ingestion: CelebA attribute lists and the procedural
synthetic dataset with its rule-based oracle classifier."""

from .celeba import CELEBA_ATTRIBUTES_18, AttrRecord, parse_celeba_attrs, write_celeba_attrs
from .synthetic import (
    SYNTH_ATTRIBUTE_NAMES,
    OracleClassifier,
    SynthSpec,
    attribute_masks,
    oracle_classify,
    render_face,
)
from .dataset import SyntheticDataset, write_synthetic_dataset

__all__ = [
    "CELEBA_ATTRIBUTES_18",
    "AttrRecord",
    "parse_celeba_attrs",
    "write_celeba_attrs",
    "SYNTH_ATTRIBUTE_NAMES",
    "OracleClassifier",
    "SynthSpec",
    "attribute_masks",
    "oracle_classify",
    "render_face",
    "SyntheticDataset",
    "write_synthetic_dataset",
]
