# SPDX-License-Identifier: Apache-2.0
"""Environment-semantics beam and blockage prediction."""

from ._core import (
    ConfigError,
    IoError,
    assemble_channel,
    concept_names,
    corrupt_labels,
    dft_codebook,
    feature_names,
    generate,
    optimal_beam,
    rate,
    read_dataset,
    sha256_file,
    topg_indices,
)

__all__ = [
    "ConfigError",
    "IoError",
    "assemble_channel",
    "concept_names",
    "corrupt_labels",
    "dft_codebook",
    "feature_names",
    "generate",
    "optimal_beam",
    "rate",
    "read_dataset",
    "sha256_file",
    "topg_indices",
]
