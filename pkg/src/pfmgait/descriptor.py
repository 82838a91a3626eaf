"""Per-point kinematic features and the 318-dimensional trajectory descriptor.

Layout of the descriptor vector (total 30 + 288 = 318):

* shape block (30): the 15 step displacement vectors, each divided by the
  sum of all step magnitudes;
* histogram block (288): three joint orientation histograms over the value
  pairs (div, curl), (div, shear) and (curl, shear). Each pair is treated as
  a 2-D vector; its angle is quantized into 8 uniform bins of [0, 2pi),
  weighted by the vector magnitude, and accumulated over 2x2 spatial
  quadrants around the trajectory's mean position times 3 temporal segments
  of 5 steps. Blocks of 8 bins are L2-normalized per (pair, cell) with an
  epsilon guard. Order: pair-major, then segment, row, column, bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optflow import FlowGradients

N_PAIRS = 3
N_BINS = 8
N_SPATIAL = 2  # 2x2 quadrants
N_TEMPORAL = 3
TRAJ_STEPS = 15
SHAPE_DIM = 2 * TRAJ_STEPS
HIST_DIM = N_PAIRS * N_BINS * N_SPATIAL * N_SPATIAL * N_TEMPORAL
DESCRIPTOR_DIM = SHAPE_DIM + HIST_DIM  # 318
NORM_EPS = 1e-6


@dataclass(frozen=True)
class KinematicSample:
    div: float
    curl: float
    hyp1: float
    hyp2: float
    shear: float


@dataclass
class TrajectoryDescriptor:
    values: np.ndarray  # (DESCRIPTOR_DIM,)
    mean_position: tuple[float, float]  # base-image pixels
    start_frame: int
    scale_id: int
    track_id: int | None = None
    subject_id: int | None = None
    trajectory_id: int | None = None
    view_id: int | None = None


def kinematics(du_dx: float, du_dy: float, dv_dx: float, dv_dy: float) -> KinematicSample:
    """First-order differential invariants of the flow at one point."""
    div = du_dx + dv_dy
    curl = -du_dy + dv_dx
    hyp1 = du_dx - dv_dy
    hyp2 = du_dy + dv_dx
    return KinematicSample(div=div, curl=curl, hyp1=hyp1, hyp2=hyp2,
                           shear=float(np.hypot(hyp1, hyp2)))


def kinematic_maps(gradients: FlowGradients) -> np.ndarray:
    """Stacked (div, curl, hyp1, hyp2) maps, shape (4, H, W)."""
    return np.stack([
        gradients.du_dx + gradients.dv_dy,
        -gradients.du_dy + gradients.dv_dx,
        gradients.du_dx - gradients.dv_dy,
        gradients.du_dy + gradients.dv_dx,
    ])


def describe_trajectory(trajectory) -> TrajectoryDescriptor:
    """Build the fixed-length motion descriptor of one completed trajectory.

    Expects a tracker.Trajectory with 16 positions and 15 kinematic samples.
    Raises ValueError when all displacements are zero (prune normally removes
    such trajectories first).
    """
    pts = trajectory.points_base
    kin = np.asarray(trajectory.kinematics, dtype=np.float64)
    if len(pts) != TRAJ_STEPS + 1 or kin.shape != (TRAJ_STEPS, 4):
        raise ValueError(
            f"expected {TRAJ_STEPS + 1} positions and {TRAJ_STEPS}x4 kinematics, "
            f"got {len(pts)} and {kin.shape}"
        )

    displacements = np.diff(pts, axis=0)
    total = np.hypot(displacements[:, 0], displacements[:, 1]).sum()
    if total == 0:
        raise ValueError("zero-length trajectory shape (all displacements zero)")
    shape_block = (displacements / total).ravel()

    center = pts.mean(axis=0)
    div, curl = kin[:, 0], kin[:, 1]
    shear = np.hypot(kin[:, 2], kin[:, 3])
    pairs = np.stack([
        np.column_stack([div, curl]),
        np.column_stack([div, shear]),
        np.column_stack([curl, shear]),
    ])  # (3, 15, 2)

    # Sample i (step from position i) is cell-assigned by position i relative
    # to the trajectory center; boundary goes to the higher-index cell.
    cols = (pts[:-1, 0] >= center[0]).astype(np.int64)
    rows = (pts[:-1, 1] >= center[1]).astype(np.int64)
    segs = np.arange(TRAJ_STEPS) // (TRAJ_STEPS // N_TEMPORAL)

    angles = np.mod(np.arctan2(pairs[:, :, 1], pairs[:, :, 0]), 2.0 * np.pi)
    bins = np.minimum((angles / (2.0 * np.pi / N_BINS)).astype(np.int64), N_BINS - 1)
    weights = np.hypot(pairs[:, :, 0], pairs[:, :, 1])

    hist = np.zeros((N_PAIRS, N_TEMPORAL, N_SPATIAL, N_SPATIAL, N_BINS))
    for pair_idx in range(N_PAIRS):
        np.add.at(hist, (pair_idx, segs, rows, cols, bins[pair_idx]), weights[pair_idx])

    norms = np.linalg.norm(hist, axis=-1, keepdims=True)
    hist = hist / np.maximum(norms, NORM_EPS)

    values = np.concatenate([shape_block, hist.ravel()])
    return TrajectoryDescriptor(
        values=values,
        mean_position=(float(center[0]), float(center[1])),
        start_frame=trajectory.start_frame,
        scale_id=trajectory.scale_id,
    )
