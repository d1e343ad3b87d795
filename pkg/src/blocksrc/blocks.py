"""Spatial block decomposition of square ROIs and per-position dictionaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import as_label_array
from .solvers import Dictionary


@dataclass(frozen=True)
class RoiSample:
    """Square grayscale patch with class label and provenance."""

    pixels: np.ndarray
    label: int
    source_id: str = ""
    centroid: tuple[int, int] | None = None
    radius: int | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise ValueError(f"ROI must be square, got shape {px.shape}")
        if not np.isfinite(px).all() or (px < 0).any():
            raise ValueError("ROI intensities must be finite and >= 0")
        object.__setattr__(self, "pixels", px)

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class BlockGrid:
    """Row-major grid of vectorized blocks cut from one image."""

    block_w: int
    block_h: int
    grid_rows: int
    grid_cols: int
    vectors: np.ndarray  # (nbl, block_w * block_h), row-major over positions

    @property
    def nbl(self) -> int:
        return self.grid_rows * self.grid_cols


def _valid_block_sizes(n: int) -> list[int]:
    return [b for b in range(1, n + 1) if n % b == 0]


def decompose_roi(roi: RoiSample, block_w: int, block_h: int) -> BlockGrid:
    """Cut an ROI into non-overlapping blocks, vectorized row-major.

    Pixel (r, c) of a block lands at vector index ``r * block_w + c``; block
    positions are ordered row-major. Block dims must divide the ROI dims.
    """
    pixels = roi.pixels if isinstance(roi, RoiSample) else np.asarray(roi, dtype=float)
    h, w = pixels.shape
    if block_w < 1 or block_h < 1 or h % block_h != 0 or w % block_w != 0:
        raise ValueError(
            f"block size {block_w}x{block_h} does not divide ROI {w}x{h}; "
            f"valid widths: {_valid_block_sizes(w)}, valid heights: {_valid_block_sizes(h)}"
        )
    rows, cols = h // block_h, w // block_w
    vectors = (
        pixels.reshape(rows, block_h, cols, block_w)
        .transpose(0, 2, 1, 3)
        .reshape(rows * cols, block_h * block_w)
    )
    return BlockGrid(block_w=block_w, block_h=block_h, grid_rows=rows, grid_cols=cols, vectors=vectors)


def compose_blocks(grid: BlockGrid) -> np.ndarray:
    """Inverse of :func:`decompose_roi`: tile block vectors back into an image."""
    r, c, bh, bw = grid.grid_rows, grid.grid_cols, grid.block_h, grid.block_w
    return (
        grid.vectors.reshape(r, c, bh, bw)
        .transpose(0, 2, 1, 3)
        .reshape(r * bh, c * bw)
    )


def assemble_block_dictionaries(training: list[RoiSample], block_w: int, block_h: int) -> list[Dictionary]:
    """Build one dictionary per block position from the training ROIs.

    Dictionary ``j`` holds the block-``j`` vector of every training image as a
    column (normalized, training order preserved) with the image's class label
    attached to the column.
    """
    if not training:
        raise ValueError("no training samples")
    size = training[0].size
    for smp in training:
        if smp.size != size:
            raise ValueError(f"mixed ROI sizes: {smp.size} vs {size}")
    labels = as_label_array([smp.label for smp in training])
    if len(set(labels.tolist())) < 2:
        raise ValueError("training set must contain at least one sample per class")

    grids = [decompose_roi(smp, block_w, block_h) for smp in training]
    nbl = grids[0].nbl
    stacks = np.stack([g.vectors for g in grids])  # (s, nbl, d)
    return [Dictionary.from_matrix(stacks[:, j, :].T, labels) for j in range(nbl)]
