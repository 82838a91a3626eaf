"""Dense two-frame optical flow and its spatial derivatives."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import cv2
import numpy as np


@dataclass(frozen=True)
class FlowParams:
    """Polynomial-expansion flow parameters (Gaussian pyramid + iterations).

    Defaults are the reference implementation's common settings: 3 pyramid
    levels at scale 0.5, a 15-pixel expansion window, 3 iterations per level.
    """

    levels: int = 3
    win_size: int = 15
    iterations: int = 3
    pyr_scale: float = 0.5
    poly_n: int = 5
    poly_sigma: float = 1.2


@dataclass
class FlowField:
    """Per-pixel displacement maps (pixels/frame), same shape as the frames."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError("u and v must be 2-D maps of identical shape")
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise ValueError("flow contains non-finite values")

    @property
    def shape(self):
        return self.u.shape


@dataclass
class FlowGradients:
    """The four spatial partials of the flow (1/frame units)."""

    du_dx: np.ndarray
    du_dy: np.ndarray
    dv_dx: np.ndarray
    dv_dy: np.ndarray


def compute_flow(frame_prev: np.ndarray, frame_next: np.ndarray,
                 params: FlowParams = FlowParams()) -> FlowField:
    """Dense displacement estimate from frame_prev to frame_next.

    Farneback-style quadratic polynomial expansion over a Gaussian pyramid.
    Constant-intensity frame pairs produce zero flow with a warning (the
    estimate is unconstrained there).
    """
    frame_prev = np.asarray(frame_prev)
    frame_next = np.asarray(frame_next)
    if frame_prev.shape != frame_next.shape:
        raise ValueError(f"frame size mismatch: {frame_prev.shape} vs {frame_next.shape}")
    if frame_prev.ndim != 2 or min(frame_prev.shape) < 32:
        raise ValueError("frames must be single-channel and at least 32x32")

    if frame_prev.ptp() == 0 and frame_next.ptp() == 0:
        warnings.warn("constant-intensity frames: flow is unconstrained, returning zeros")
        zero = np.zeros(frame_prev.shape, dtype=np.float32)
        return FlowField(u=zero, v=zero.copy())

    flow = cv2.calcOpticalFlowFarneback(
        frame_prev.astype(np.uint8, copy=False),
        frame_next.astype(np.uint8, copy=False),
        None,
        params.pyr_scale,
        params.levels,
        params.win_size,
        params.iterations,
        params.poly_n,
        params.poly_sigma,
        0,
    )
    return FlowField(u=flow[..., 0], v=flow[..., 1])


def flow_gradients(flow: FlowField) -> FlowGradients:
    """Central differences on the interior, one-sided on the border (spacing 1 px)."""
    du_dy, du_dx = np.gradient(flow.u.astype(np.float64), edge_order=1)
    dv_dy, dv_dx = np.gradient(flow.v.astype(np.float64), edge_order=1)
    return FlowGradients(du_dx=du_dx, du_dy=du_dy, dv_dx=dv_dx, dv_dy=dv_dy)
