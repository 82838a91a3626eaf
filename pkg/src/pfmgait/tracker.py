"""Dense point tracking: seeding, median-filtered advection, pruning, and
restriction of trajectories to person tracks."""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy import ndimage

from . import descriptor as _descriptor
from .optflow import FlowField, FlowParams, compute_flow, flow_gradients

SCALE_STRIDE = 1.0 / np.sqrt(2.0)


@dataclass
class PersonTrack:
    """Per-frame bounding boxes of one subject in one camera view.

    Boxes are (x_min, y_min, x_max, y_max), integer pixels, inclusive corners.
    """

    track_id: int
    frames: np.ndarray  # (n,) strictly increasing frame indices
    boxes: np.ndarray  # (n, 4)
    detection_scores: np.ndarray | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.boxes = np.asarray(self.boxes, dtype=np.int64)
        if self.boxes.shape != (self.frames.shape[0], 4):
            raise ValueError("boxes must be (n_frames, 4)")
        if np.any(np.diff(self.frames) <= 0):
            raise ValueError("track frame indices must be strictly increasing")
        if np.any(self.boxes[:, 0] >= self.boxes[:, 2]) or np.any(self.boxes[:, 1] >= self.boxes[:, 3]):
            raise ValueError("boxes need x_min < x_max and y_min < y_max")

    def box_at(self, frame: int) -> np.ndarray | None:
        idx = np.searchsorted(self.frames, frame)
        if idx < len(self.frames) and self.frames[idx] == frame:
            return self.boxes[idx]
        return None

    def nearest_box(self, frame: int) -> np.ndarray:
        """Box at `frame` if present, else the closest frame (earlier wins ties)."""
        deltas = np.abs(self.frames - frame)
        return self.boxes[int(np.argmin(deltas))]


@dataclass
class Trajectory:
    """One tracked point: positions in the coordinates of its pyramid scale,
    per-step kinematic samples (div, curl, hyp1, hyp2), and liveness status."""

    points: np.ndarray  # (n_pts, 2) sub-pixel (x, y), scale coordinates
    start_frame: int
    scale_id: int
    scale_factors: tuple[float, float]  # (fx, fy) mapping scale -> base pixels
    kinematics: np.ndarray  # (n_pts - 1, 4)
    status: str = "complete"

    @property
    def points_base(self) -> np.ndarray:
        return self.points * np.asarray(self.scale_factors)

    @property
    def n_steps(self) -> int:
        return len(self.points) - 1


@dataclass(frozen=True)
class PruneParams:
    """Thresholds for removing noisy and uninformative trajectories."""

    sigma_min: float = 0.7  # px, std of positions below which a track is static
    d_max: float = 7.0  # px, largest tolerated single-step displacement
    dominant_frac: float = 0.7  # max step / total path length

    @classmethod
    def for_frame(cls, width: int, height: int, sigma_min: float = 0.7,
                  dominant_frac: float = 0.7) -> "PruneParams":
        diag = float(np.hypot(width, height))
        return cls(sigma_min=sigma_min, d_max=0.7 * diag / 20.0, dominant_frac=dominant_frac)


@dataclass(frozen=True)
class TrackerParams:
    sample_step: int = 5
    n_scales: int = 8
    traj_length: int = 15  # L: maximum number of tracked steps
    median_kernel: int = 3
    min_scale_dim: int = 32
    sigma_min: float = 0.7
    d_max: float | None = None  # None: 0.7 * frame diagonal / 20
    dominant_frac: float = 0.7
    flow: FlowParams = field(default_factory=FlowParams)


def iou(box_a, box_b) -> float:
    """Intersection over union of two inclusive-corner integer boxes."""
    ix0 = max(box_a[0], box_b[0])
    iy0 = max(box_a[1], box_b[1])
    ix1 = min(box_a[2], box_b[2])
    iy1 = min(box_a[3], box_b[3])
    inter = max(0, ix1 - ix0 + 1) * max(0, iy1 - iy0 + 1)
    if inter == 0:
        return 0.0
    area_a = (box_a[2] - box_a[0] + 1) * (box_a[3] - box_a[1] + 1)
    area_b = (box_b[2] - box_b[0] + 1) * (box_b[3] - box_b[1] + 1)
    return inter / float(area_a + area_b - inter)


def pyramid_scales(width: int, height: int, n_scales: int = 8,
                   min_dim: int = 32) -> list[tuple[int, int]]:
    """Image sizes of the sampling pyramid (factor 1/sqrt(2)); scales whose
    smaller side would drop below min_dim are omitted."""
    sizes = []
    for s in range(n_scales):
        factor = SCALE_STRIDE ** s
        w, h = int(round(width * factor)), int(round(height * factor))
        if min(w, h) < min_dim:
            break
        sizes.append((w, h))
    return sizes


def downsample(frame: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    if frame.shape[::-1] == size:
        return frame
    return cv2.resize(frame, size, interpolation=cv2.INTER_LINEAR)


def seed_points(active_positions: np.ndarray | None, width: int, height: int,
                step: int = 5) -> np.ndarray:
    """Grid positions at spacing `step` not already covered by a tracked point.

    A candidate is suppressed when an active point lies strictly within
    step/2 of it on both axes (i.e. inside the candidate's grid cell).
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    xs = np.arange(step / 2.0, width, step)
    ys = np.arange(step / 2.0, height, step)
    if len(xs) == 0 or len(ys) == 0:
        return np.empty((0, 2))
    occupied = np.zeros((len(ys), len(xs)), dtype=bool)
    if active_positions is not None and len(active_positions):
        pts = np.asarray(active_positions, dtype=np.float64)
        ix = np.floor(pts[:, 0] / step).astype(np.int64)
        iy = np.floor(pts[:, 1] / step).astype(np.int64)
        inside = (
            (ix >= 0) & (ix < len(xs)) & (iy >= 0) & (iy < len(ys))
            & (np.abs(pts[:, 0] - (ix * step + step / 2.0)) < step / 2.0)
            & (np.abs(pts[:, 1] - (iy * step + step / 2.0)) < step / 2.0)
        )
        occupied[iy[inside], ix[inside]] = True
    gy, gx = np.nonzero(~occupied)
    return np.column_stack([xs[gx], ys[gy]])


def median_filter_flow(flow: FlowField, kernel_size: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise square-kernel median of (u, v), replicate-edge padding."""
    u = np.ascontiguousarray(flow.u, dtype=np.float32)
    v = np.ascontiguousarray(flow.v, dtype=np.float32)
    if kernel_size in (3, 5):
        return cv2.medianBlur(u, kernel_size), cv2.medianBlur(v, kernel_size)
    return (
        ndimage.median_filter(u, size=kernel_size, mode="nearest"),
        ndimage.median_filter(v, size=kernel_size, mode="nearest"),
    )


def advance(point, flow: FlowField, median_kernel_size: int = 3) -> np.ndarray | None:
    """One advection step: p + median-filtered flow sampled at rint(p).

    Returns None when the rounded position falls outside the frame (the
    trajectory is to be discarded).
    """
    x, y = float(point[0]), float(point[1])
    h, w = flow.shape
    xi, yi = int(np.rint(x)), int(np.rint(y))
    if not (0 <= xi < w and 0 <= yi < h):
        return None
    mu, mv = median_filter_flow(flow, median_kernel_size)
    return np.array([x + mu[yi, xi], y + mv[yi, xi]])


def prune(trajectory: Trajectory, params: PruneParams) -> bool:
    """True to keep; discards static, jumpy, or single-step-dominated tracks."""
    pts = trajectory.points_base
    centered = pts - pts.mean(axis=0)
    if np.sqrt((centered ** 2).sum(axis=1).mean()) < params.sigma_min:
        return False
    steps = np.diff(pts, axis=0)
    lengths = np.hypot(steps[:, 0], steps[:, 1])
    if lengths.max(initial=0.0) > params.d_max:
        return False
    total = lengths.sum()
    if total > 0 and lengths.max() > params.dominant_frac * total:
        return False
    return True


def link_detections(detections, iou_threshold: float = 0.4, max_gap: int = 5,
                    min_track_length: int = 15,
                    static_displacement_threshold: float = 10.0) -> list[PersonTrack]:
    """Greedy IoU association of per-frame boxes into tracks.

    detections: iterable of (frame_index, (x_min, y_min, x_max, y_max)).
    Each box joins the open track whose last box overlaps it most (IoU >=
    iou_threshold, last box at most max_gap frames old); otherwise it starts
    a new track. Short tracks and tracks whose cumulative box-center
    displacement stays under static_displacement_threshold are dropped.
    """
    by_frame: dict[int, list[tuple[int, int, int, int]]] = {}
    for frame, box in detections:
        by_frame.setdefault(int(frame), []).append(tuple(int(c) for c in box))

    tracks: list[dict] = []  # {'frames': [...], 'boxes': [...]}
    for frame in sorted(by_frame):
        claimed = set()
        for box in by_frame[frame]:
            best_iou, best_idx = 0.0, None
            for idx, tr in enumerate(tracks):
                if idx in claimed or frame - tr["frames"][-1] > max_gap or frame <= tr["frames"][-1]:
                    continue
                overlap = iou(tr["boxes"][-1], box)
                if overlap > best_iou:
                    best_iou, best_idx = overlap, idx
            if best_idx is not None and best_iou >= iou_threshold:
                tracks[best_idx]["frames"].append(frame)
                tracks[best_idx]["boxes"].append(box)
                claimed.add(best_idx)
            else:
                tracks.append({"frames": [frame], "boxes": [box]})

    kept = []
    for tr in tracks:
        if len(tr["frames"]) < min_track_length:
            continue
        boxes = np.asarray(tr["boxes"], dtype=np.float64)
        centers = np.column_stack([(boxes[:, 0] + boxes[:, 2]) / 2.0,
                                   (boxes[:, 1] + boxes[:, 3]) / 2.0])
        moved = np.hypot(*np.diff(centers, axis=0).T).sum() if len(centers) > 1 else 0.0
        if moved < static_displacement_threshold:
            continue
        kept.append(PersonTrack(track_id=len(kept), frames=np.asarray(tr["frames"]),
                                boxes=np.asarray(tr["boxes"])))
    return kept


def filter_by_tracks(trajectories: list[Trajectory],
                     tracks: list[PersonTrack]) -> dict[int, list[Trajectory]]:
    """Assign each trajectory to the track containing most of its positions.

    A position counts for a track when it lies inside that track's box at the
    corresponding frame (inclusive corners). Trajectories inside no box are
    dropped; count ties go to the track whose middle-frame box overlaps the
    trajectory's own bounding box most (then to the lower track id).
    """
    assigned: dict[int, list[Trajectory]] = {track.track_id: [] for track in tracks}
    for traj in trajectories:
        pts = traj.points_base
        frames = traj.start_frame + np.arange(len(pts))
        counts = {}
        for track in tracks:
            n_inside = 0
            for frame, (x, y) in zip(frames, pts):
                box = track.box_at(int(frame))
                if box is not None and box[0] <= x <= box[2] and box[1] <= y <= box[3]:
                    n_inside += 1
            if n_inside:
                counts[track.track_id] = n_inside
        if not counts:
            continue
        best = max(counts.values())
        tied = sorted(tid for tid, c in counts.items() if c == best)
        if len(tied) > 1:
            mid_frame = traj.start_frame + traj.n_steps // 2
            traj_box = (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())
            by_track = {t.track_id: t for t in tracks}
            tied.sort(key=lambda tid: (-iou(traj_box, by_track[tid].nearest_box(mid_frame)), tid))
        assigned[tied[0]].append(traj)
    return assigned


class DenseTracker:
    """Runs dense multi-scale tracking over one frame sequence.

    The active-point set advances frame-sequentially; everything per frame is
    vectorized. Returns only completed trajectories that pass pruning, with
    positions kept in scale coordinates (scale_factors map them to base pixels).
    """

    def __init__(self, params: TrackerParams = TrackerParams()):
        self.params = params

    def run(self, frames: np.ndarray) -> list[Trajectory]:
        frames = np.asarray(frames)
        if frames.ndim != 3 or frames.shape[0] < 2:
            raise ValueError("need a (n_frames, height, width) stack with n_frames >= 2")
        p = self.params
        height, width = frames.shape[1:]
        if p.d_max is not None:
            prune_params = PruneParams(p.sigma_min, p.d_max, p.dominant_frac)
        else:
            prune_params = PruneParams.for_frame(width, height, p.sigma_min, p.dominant_frac)

        kept: list[Trajectory] = []
        for scale_id, (w, h) in enumerate(pyramid_scales(width, height, p.n_scales, p.min_scale_dim)):
            factors = (width / w, height / h)
            small = [downsample(frames[i], (w, h)) for i in range(len(frames))]
            kept.extend(self._run_scale(small, scale_id, factors, prune_params))
        return kept

    def _run_scale(self, small, scale_id, factors, prune_params) -> list[Trajectory]:
        p = self.params
        n_pos = p.traj_length + 1
        h, w = small[0].shape
        pos = np.empty((0, 2))
        buf_pts = np.empty((0, n_pos, 2))
        buf_kin = np.empty((0, p.traj_length, 4))
        counts = np.empty(0, dtype=np.int64)
        starts = np.empty(0, dtype=np.int64)
        done: list[Trajectory] = []

        for t in range(len(small) - 1):
            seeds = seed_points(pos, w, h, p.sample_step)
            if len(seeds):
                pos = np.concatenate([pos, seeds])
                new_pts = np.full((len(seeds), n_pos, 2), np.nan)
                new_pts[:, 0] = seeds
                buf_pts = np.concatenate([buf_pts, new_pts])
                buf_kin = np.concatenate([buf_kin, np.full((len(seeds), p.traj_length, 4), np.nan)])
                counts = np.concatenate([counts, np.ones(len(seeds), dtype=np.int64)])
                starts = np.concatenate([starts, np.full(len(seeds), t, dtype=np.int64)])
            if not len(pos):
                continue

            flow = compute_flow(small[t], small[t + 1], p.flow)
            mu, mv = median_filter_flow(flow, p.median_kernel)
            kin_maps = _descriptor.kinematic_maps(flow_gradients(flow))

            xi = np.rint(pos[:, 0]).astype(np.int64)
            yi = np.rint(pos[:, 1]).astype(np.int64)
            alive = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            pos, buf_pts, buf_kin, counts, starts = (
                a[alive] for a in (pos, buf_pts, buf_kin, counts, starts)
            )
            if not len(pos):
                continue
            xi, yi = xi[alive], yi[alive]

            pos = pos + np.column_stack([mu[yi, xi], mv[yi, xi]])
            idx = np.arange(len(pos))
            buf_kin[idx, counts - 1] = kin_maps[:, yi, xi].T
            buf_pts[idx, counts] = pos
            counts += 1

            full = counts == n_pos
            if np.any(full):
                for j in np.nonzero(full)[0]:
                    traj = Trajectory(
                        points=buf_pts[j].copy(),
                        start_frame=int(starts[j]),
                        scale_id=scale_id,
                        scale_factors=factors,
                        kinematics=buf_kin[j].copy(),
                        status="complete",
                    )
                    if prune(traj, prune_params):
                        done.append(traj)
                pos, buf_pts, buf_kin, counts, starts = (
                    a[~full] for a in (pos, buf_pts, buf_kin, counts, starts)
                )
        return done
