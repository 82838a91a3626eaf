"""Synthetic multi-view gait dataset: articulated point-cloud walkers rendered
as Gaussian blobs, with ground-truth boxes, track files and a manifest.

World model: the walker moves on a ground plane along a straight line or a
circular arc; cameras are orthographic, each rotated by an azimuth about the
vertical axis, so horizontal structure is foreshortened view-dependently.
All world motion for one (subject, trajectory) pair is derived from a seed
shared across views, so the cameras film the same performance.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import videoio
from .videoio import DatasetManifest, ManifestEntry

FPS = 25.0
GROUND_Y_MARGIN = 14  # image rows between the frame bottom and the ground line
BLOB_SIGMA = 1.3
BLOB_RADIUS = 4
BOX_MARGIN = 4


@dataclass(frozen=True)
class GaitParams:
    """Per-subject walking style."""

    stride_freq_hz: float
    limb_amplitude_px: float
    torso_sway_px: float
    speed_px_per_frame: float

    def as_tuple(self):
        return (self.stride_freq_hz, self.limb_amplitude_px,
                self.torso_sway_px, self.speed_px_per_frame)


@dataclass(frozen=True)
class SynthSpec:
    n_subjects: int = 5
    view_azimuths_deg: tuple[float, ...] = (80.0, 45.0, 10.0, -30.0)
    n_frames: int = 150
    width: int = 160
    height: int = 120
    n_straight: int = 3
    n_curved: int = 3
    curved_span_deg: float = 75.0
    noise_level: float = 2.0
    subjects: tuple[GaitParams, ...] | None = None

    def __post_init__(self):
        if min(self.n_subjects, self.n_frames, self.width, self.height) <= 0:
            raise ValueError("spec sizes must be positive")
        if self.noise_level < 0:
            raise ValueError("noise level must be >= 0")

    @property
    def straight_ids(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_straight + 1))

    @property
    def curved_ids(self) -> tuple[int, ...]:
        return tuple(range(self.n_straight + 1, self.n_straight + self.n_curved + 1))


def subject_parameters(spec: SynthSpec, seed: int) -> list[GaitParams]:
    """Deterministic, pairwise-distinct gait parameters for every subject."""
    if spec.subjects is not None:
        params = list(spec.subjects)
    else:
        n = spec.n_subjects
        rng = np.random.default_rng([seed, 101])
        ticks = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.5])
        amp_order = rng.permutation(n)
        sway_order = rng.permutation(n)
        speed_order = rng.permutation(n)
        params = [
            GaitParams(
                stride_freq_hz=1.0 + 0.8 * ticks[i],
                limb_amplitude_px=9.0 + 5.0 * ticks[amp_order[i]],
                torso_sway_px=1.0 + 2.0 * ticks[sway_order[i]],
                speed_px_per_frame=0.5 + 0.22 * ticks[speed_order[i]],
            )
            for i in range(n)
        ]
    tuples = [p.as_tuple() for p in params]
    if len(set(tuples)) != len(tuples):
        raise ValueError("subjects must have pairwise-distinct gait parameters")
    return params


def walker_keypoints(params: GaitParams, phase: float) -> dict[str, tuple[float, float, float, float]]:
    """Body keypoints at one gait phase, as name -> (forward, lateral, height,
    brightness) in the walker's own frame (px)."""
    amp = params.limb_amplitude_px
    sway = params.torso_sway_px * np.sin(phase)
    bob = 1.2 * np.sin(2.0 * phase)
    lift_h = 0.35 * amp

    points = {
        "head": (0.0, sway, 54.0 + bob, 250.0),
        "neck": (0.0, sway, 47.0 + bob, 230.0),
        "chest": (0.0, sway, 42.0 + bob, 230.0),
        "belly": (0.0, sway, 35.0 + bob, 230.0),
        "pelvis": (0.0, sway, 28.0 + 0.5 * bob, 230.0),
    }
    for side, name, leg_phase in ((1.0, "l", phase), (-1.0, "r", phase + np.pi)):
        hip = (0.0, side * 2.5 + sway * 0.5, 26.0)
        swing = np.sin(leg_phase)
        lift = lift_h * max(0.0, np.cos(leg_phase))
        foot = (amp * swing, side * 2.5, lift)
        for frac, tag in ((0.35, "thigh"), (0.7, "shin"), (1.0, "foot")):
            points[f"{tag}_{name}"] = (
                hip[0] + frac * (foot[0] - hip[0]),
                hip[1] + frac * (foot[1] - hip[1]),
                hip[2] + frac * (foot[2] - hip[2]),
                255.0,
            )
        shoulder = (0.0, side * 3.5 + sway, 44.0 + bob)
        hand = (0.55 * amp * np.sin(leg_phase + np.pi), side * 3.5 + sway, 31.0 + bob)
        for frac, tag in ((0.5, "arm"), (1.0, "hand")):
            points[f"{tag}_{name}"] = (
                shoulder[0] + frac * (hand[0] - shoulder[0]),
                shoulder[1] + frac * (hand[1] - shoulder[1]),
                shoulder[2] + frac * (hand[2] - shoulder[2]),
                220.0,
            )
    return points


def _path(spec: SynthSpec, params: GaitParams, trajectory_id: int, rng):
    """Per-frame ground position (x, z) and heading angle of the walker."""
    n = spec.n_frames
    speed = params.speed_px_per_frame
    length = speed * (n - 1)
    if trajectory_id in spec.straight_ids:
        base_headings = (0.0, 25.0, -25.0)
        theta = np.deg2rad(base_headings[(trajectory_id - 1) % len(base_headings)])
        headings = np.full(n, theta)
        arc = np.arange(n) * speed
        positions = np.column_stack([arc * np.cos(theta), arc * np.sin(theta)])
    else:
        idx = trajectory_id - spec.n_straight - 1
        span = np.deg2rad(spec.curved_span_deg) * (1 if idx % 2 == 0 else -1)
        theta0 = np.deg2rad((-35.0, 35.0, 0.0)[idx % 3])
        headings = theta0 + span * np.arange(n) / (n - 1)
        # integrate the rotating heading to traverse the arc at constant speed
        steps = np.column_stack([np.cos(headings[:-1]), np.sin(headings[:-1])]) * speed
        positions = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
    positions = positions - positions.mean(axis=0) + rng.uniform(-2.0, 2.0, size=2)
    return positions, headings


def _render_frame(spec: SynthSpec, background, image_points):
    frame = background.copy()
    ys, xs = np.mgrid[-BLOB_RADIUS:BLOB_RADIUS + 1, -BLOB_RADIUS:BLOB_RADIUS + 1]
    for x, y, brightness in image_points:
        xi, yi = int(np.floor(x)), int(np.floor(y))
        fx, fy = x - xi, y - yi
        weights = brightness * np.exp(-((xs - fx) ** 2 + (ys - fy) ** 2) / (2.0 * BLOB_SIGMA ** 2))
        x0, x1 = xi - BLOB_RADIUS, xi + BLOB_RADIUS + 1
        y0, y1 = yi - BLOB_RADIUS, yi + BLOB_RADIUS + 1
        cx0, cy0 = max(x0, 0), max(y0, 0)
        cx1, cy1 = min(x1, spec.width), min(y1, spec.height)
        if cx0 >= cx1 or cy0 >= cy1:
            continue
        frame[cy0:cy1, cx0:cx1] = np.maximum(
            frame[cy0:cy1, cx0:cx1],
            weights[cy0 - y0:cy1 - y0, cx0 - x0:cx1 - x0],
        )
    return frame


def generate_video(spec: SynthSpec, params: GaitParams, trajectory_id: int,
                   azimuth_deg: float, seed: int, subject_id: int):
    """Render one (subject, trajectory, view) video.

    Returns (frames uint8 (n, H, W), boxes int (n, 4)). The world motion
    depends only on (seed, subject, trajectory), the camera and pixel noise
    also on the view, so different views film the same performance.
    """
    world_rng = np.random.default_rng([seed, subject_id, trajectory_id])
    phase0 = world_rng.uniform(0.0, 2.0 * np.pi)
    positions, headings = _path(spec, params, trajectory_id, world_rng)

    view_rng = np.random.default_rng([seed, subject_id, trajectory_id, int(azimuth_deg * 1000) & 0x7FFFFFFF])
    bg_rng = np.random.default_rng([seed, 7, int(azimuth_deg * 1000) & 0x7FFFFFFF])
    background = bg_rng.uniform(4.0, 22.0, size=(spec.height, spec.width))

    azimuth = np.deg2rad(azimuth_deg)
    view_axis = np.array([np.cos(azimuth), np.sin(azimuth)])
    ground_y = spec.height - GROUND_Y_MARGIN

    # fixed horizontal camera offset so the action is centered in this view
    trace = positions @ view_axis
    center_shift = spec.width / 2.0 - (trace.max() + trace.min()) / 2.0

    frames = np.empty((spec.n_frames, spec.height, spec.width), dtype=np.uint8)
    boxes = np.empty((spec.n_frames, 4), dtype=np.int64)
    for t in range(spec.n_frames):
        phase = phase0 + 2.0 * np.pi * params.stride_freq_hz * t / FPS
        heading = headings[t]
        forward = np.array([np.cos(heading), np.sin(heading)])
        lateral = np.array([-np.sin(heading), np.cos(heading)])
        image_points = []
        for forward_off, lateral_off, height_off, brightness in walker_keypoints(params, phase).values():
            ground = positions[t] + forward_off * forward + lateral_off * lateral
            x = ground @ view_axis + center_shift
            y = ground_y - height_off
            image_points.append((x, y, brightness))
        rendered = _render_frame(spec, background, image_points)
        if spec.noise_level > 0:
            rendered = rendered + spec.noise_level * view_rng.standard_normal(rendered.shape)
        frames[t] = np.clip(np.rint(rendered), 0, 255).astype(np.uint8)

        pts = np.asarray([(p[0], p[1]) for p in image_points])
        x0 = int(np.floor(pts[:, 0].min())) - BOX_MARGIN
        y0 = int(np.floor(pts[:, 1].min())) - BOX_MARGIN
        x1 = int(np.ceil(pts[:, 0].max())) + BOX_MARGIN
        y1 = int(np.ceil(pts[:, 1].max())) + BOX_MARGIN
        boxes[t] = (
            max(x0, 0), max(y0, 0),
            min(max(x1, x0 + 1), spec.width - 1), min(max(y1, y0 + 1), spec.height - 1),
        )
    return frames, boxes


def synth_generate(spec: SynthSpec, seed: int, out_dir: str) -> str:
    """Write the full synthetic dataset; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    params = subject_parameters(spec, seed)
    entries = []
    for subject_id in range(spec.n_subjects):
        for trajectory_id in spec.straight_ids + spec.curved_ids:
            for view_id, azimuth in enumerate(spec.view_azimuths_deg):
                key = f"s{subject_id:02d}_t{trajectory_id:02d}_v{view_id}"
                frames_dir = os.path.join(out_dir, "frames", key)
                track_file = os.path.join(out_dir, "tracks", key + ".txt")
                entries.append(ManifestEntry(subject_id, trajectory_id, view_id,
                                             frames_dir, track_file))
                if os.path.isdir(frames_dir) and os.path.isfile(track_file):
                    continue  # already generated (deterministic, safe to reuse)
                frames, boxes = generate_video(
                    spec, params[subject_id], trajectory_id, azimuth, seed, subject_id
                )
                os.makedirs(frames_dir, exist_ok=True)
                os.makedirs(os.path.dirname(track_file), exist_ok=True)
                for t in range(len(frames)):
                    videoio.write_pgm(os.path.join(frames_dir, f"frame_{t:04d}.pgm"), frames[t])
                from .tracker import PersonTrack

                track = PersonTrack(track_id=0, frames=np.arange(len(frames)), boxes=boxes)
                videoio.save_tracks(track_file, [track])
    manifest_path = os.path.join(out_dir, "manifest.txt")
    videoio.save_manifest(manifest_path, DatasetManifest(entries=entries))
    return manifest_path
