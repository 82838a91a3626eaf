"""Spatial pooling of trajectory descriptors over person bounding boxes and
concatenation of per-cell encodings into the gait descriptor."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .descriptor import TRAJ_STEPS, TrajectoryDescriptor
from .encoding import DiagonalGmm, KMeansCodebook, Pca, bow_encode, fisher_vector
from .tracker import PersonTrack


@dataclass(frozen=True)
class PyramidConfig:
    """Grid levels, e.g. ((1, 1),) full body or ((1, 1), (2, 1)) two-level.

    keep_cells optionally restricts each level to a subset of row-major cell
    indices (used for the half-body configurations); None keeps every cell.
    """

    levels: tuple[tuple[int, int], ...] = ((2, 1),)
    keep_cells: tuple[tuple[int, ...] | None, ...] | None = None

    def __post_init__(self):
        if not self.levels:
            raise ValueError("pyramid needs at least one level")
        for rows, cols in self.levels:
            if rows < 1 or cols < 1:
                raise ValueError("grid rows and cols must be >= 1")
        if self.keep_cells is not None and len(self.keep_cells) != len(self.levels):
            raise ValueError("keep_cells must match the number of levels")

    def cells(self, level: int) -> tuple[int, ...]:
        rows, cols = self.levels[level]
        available = tuple(range(rows * cols))
        if self.keep_cells is None or self.keep_cells[level] is None:
            return available
        kept = self.keep_cells[level]
        if any(c not in available for c in kept):
            raise ValueError(f"kept cell out of range for grid {self.levels[level]}")
        return tuple(kept)

    @property
    def n_cells(self) -> int:
        return sum(len(self.cells(level)) for level in range(len(self.levels)))


# Presets named after the reported configurations: full body, upper half,
# lower half, two halves, and the two-level pyramid.
PRESET_PYRAMIDS = {
    "bow": PyramidConfig(levels=((2, 1),)),
    "pfm-fb": PyramidConfig(levels=((1, 1),)),
    "pfm-h1": PyramidConfig(levels=((2, 1),), keep_cells=((0,),)),
    "pfm-h2": PyramidConfig(levels=((2, 1),), keep_cells=((1,),)),
    "pfm": PyramidConfig(levels=((2, 1),)),
    "pfm-pyr": PyramidConfig(levels=((1, 1), (2, 1))),
}


def preset_pyramid(name: str) -> PyramidConfig:
    try:
        return PRESET_PYRAMIDS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESET_PYRAMIDS)}") from None


@dataclass
class GaitDescriptor:
    """Concatenated per-cell encodings, level-major then row-major."""

    values: np.ndarray
    subject_id: int | None = None
    trajectory_id: int | None = None
    view_id: int | None = None
    mirrored: bool = False
    empty_cells: list[tuple[int, int]] = field(default_factory=list)


def assign_cell(position, box, grid: tuple[int, int]) -> int | None:
    """Row-major cell index of a position inside a box under a uniform grid.

    Coordinates are normalized to [0, 1]; positions outside are clamped to the
    nearest cell and boundaries belong to the higher-index cell. Degenerate
    boxes yield None with a warning.
    """
    x0, y0, x1, y1 = (float(c) for c in box)
    if x1 <= x0 or y1 <= y0:
        warnings.warn(f"degenerate box {box}, descriptor skipped")
        return None
    rows, cols = grid
    u = min(max((position[0] - x0) / (x1 - x0), 0.0), 1.0)
    v = min(max((position[1] - y0) / (y1 - y0), 0.0), 1.0)
    col = min(int(u * cols), cols - 1)
    row = min(int(v * rows), rows - 1)
    return row * cols + col


def _descriptor_box(track: PersonTrack, desc: TrajectoryDescriptor) -> np.ndarray:
    # the track's box at the trajectory's middle frame (nearest when absent)
    mid_frame = desc.start_frame + TRAJ_STEPS // 2
    box = track.box_at(mid_frame)
    return box if box is not None else track.nearest_box(mid_frame)


def _gather_cells(descriptors, track, config):
    """Member index lists per (level, kept cell), in concatenation order."""
    groups = []
    for level, grid in enumerate(config.levels):
        members = {cell: [] for cell in config.cells(level)}
        for idx, desc in enumerate(descriptors):
            cell = assign_cell(desc.mean_position, _descriptor_box(track, desc), grid)
            if cell is not None and cell in members:
                members[cell].append(idx)
        for cell in config.cells(level):
            groups.append((level, cell, np.asarray(members[cell], dtype=np.int64)))
    return groups


def build_pfm(descriptors: list[TrajectoryDescriptor], track: PersonTrack,
              config: PyramidConfig, gmm: DiagonalGmm,
              low_pca: Pca | None = None, high_pca: Pca | None = None) -> GaitDescriptor:
    """Concatenate normalized per-cell Fisher vectors into one gait descriptor.

    low_pca (when given) reduces the raw trajectory descriptors before
    encoding; the GMM must have been fitted in that same space. Empty cells
    contribute zero blocks and are recorded. high_pca reduces the final
    concatenation.
    """
    if not descriptors:
        raise ValueError("no trajectory descriptors for this video")
    X = np.stack([d.values for d in descriptors])
    if low_pca is not None:
        X = low_pca.transform(X)

    blocks, empty_cells = [], []
    for level, cell, idx in _gather_cells(descriptors, track, config):
        fv = fisher_vector(X[idx], gmm)
        if fv.empty:
            empty_cells.append((level, cell))
        blocks.append(fv.values)

    values = np.concatenate(blocks)
    if high_pca is not None:
        values = high_pca.transform(values.reshape(1, -1))[0]
    return GaitDescriptor(values=values, empty_cells=empty_cells)


def build_bow(descriptors: list[TrajectoryDescriptor], track: PersonTrack,
              config: PyramidConfig, codebook: KMeansCodebook,
              low_pca: Pca | None = None) -> GaitDescriptor:
    """Bag-of-words counterpart of build_pfm: per-cell Hellinger histograms."""
    if not descriptors:
        raise ValueError("no trajectory descriptors for this video")
    X = np.stack([d.values for d in descriptors])
    if low_pca is not None:
        X = low_pca.transform(X)

    blocks, empty_cells = [], []
    for level, cell, idx in _gather_cells(descriptors, track, config):
        if len(idx) == 0:
            empty_cells.append((level, cell))
        blocks.append(bow_encode(X[idx], codebook))
    return GaitDescriptor(values=np.concatenate(blocks), empty_cells=empty_cells)
