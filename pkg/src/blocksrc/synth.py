"""Synthetic ROI generator with block-wise class structure.

Each class owns a private atom set per block position; every sample block is
a sparse nonnegative combination of its class's atoms for that position plus
white noise, clipped at zero. With disjoint per-class atoms and zero noise
the classes are linearly separable block by block.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .blocks import BlockGrid, RoiSample, compose_blocks
from .labels import class_name
from .pgm import image_from_array, write_pgm


@dataclass(frozen=True)
class SynthSpec:
    roi_size: int = 64
    block_size: int = 16
    atoms_per_class: int = 6
    sparsity: int = 3
    noise_sigma: float = 0.05
    samples_per_class: int = 40

    def __post_init__(self):
        if self.roi_size < 1 or self.block_size < 1 or self.roi_size % self.block_size != 0:
            raise ValueError(
                f"block size {self.block_size} does not divide roi size {self.roi_size}"
            )
        if self.atoms_per_class < 1 or self.samples_per_class < 1:
            raise ValueError("atoms_per_class and samples_per_class must be >= 1")
        if not 1 <= self.sparsity <= self.atoms_per_class:
            raise ValueError("sparsity must be in [1, atoms_per_class]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def synth_dataset(spec: SynthSpec, seed: int) -> list[RoiSample]:
    """Draw a deterministic labeled dataset; benign samples come first."""
    rng = np.random.default_rng(seed)
    nbl = (spec.roi_size // spec.block_size) ** 2
    d = spec.block_size * spec.block_size

    # Nonnegative unit atoms, drawn independently per class and position.
    atom_bank = []
    for _ in range(2):
        atoms = np.abs(rng.standard_normal((nbl, d, spec.atoms_per_class)))
        atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
        atom_bank.append(atoms)

    samples: list[RoiSample] = []
    grid_side = spec.roi_size // spec.block_size
    for cid in (0, 1):
        for i in range(spec.samples_per_class):
            vectors = np.empty((nbl, d))
            for j in range(nbl):
                picks = rng.choice(spec.atoms_per_class, size=spec.sparsity, replace=False)
                coeffs = rng.uniform(0.5, 1.5, size=spec.sparsity)
                block = atom_bank[cid][j][:, picks] @ coeffs
                if spec.noise_sigma > 0:
                    block = block + rng.normal(0.0, spec.noise_sigma, size=d)
                vectors[j] = np.maximum(block, 0.0)
            grid = BlockGrid(
                block_w=spec.block_size,
                block_h=spec.block_size,
                grid_rows=grid_side,
                grid_cols=grid_side,
                vectors=vectors,
            )
            pixels = compose_blocks(grid)
            samples.append(
                RoiSample(
                    pixels=pixels,
                    label=cid,
                    source_id=f"synth{cid}{i:03d}",
                    centroid=(spec.roi_size // 2, spec.roi_size // 2),
                    radius=spec.roi_size // 2,
                )
            )
    return samples


def write_synth_cache(samples: list[RoiSample], out_dir: str) -> dict:
    """Persist a synthetic dataset as a 16-bit PGM ROI cache.

    Float intensities are quantized with a single recorded scale factor so
    the loader can restore them approximately.
    """
    os.makedirs(out_dir, exist_ok=True)
    peak = max(float(s.pixels.max()) for s in samples)
    scale = 60000.0 / peak if peak > 0 else 1.0
    entries = []
    for s in samples:
        fname = f"{s.source_id}_roi{s.size}.pgm"
        arr = np.round(s.pixels * scale).astype(np.uint16)
        write_pgm(os.path.join(out_dir, fname), image_from_array(arr, maxval=65535))
        entries.append(
            {
                "file": fname,
                "ref_id": s.source_id,
                "label": class_name(s.label),
                "centroid": list(s.centroid) if s.centroid else None,
                "radius": s.radius,
                "window": [0, 0],
            }
        )
    manifest = {
        "roi_size": samples[0].size if samples else 0,
        "y_origin": "top",
        "intensity_scale": scale,
        "samples": entries,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest
