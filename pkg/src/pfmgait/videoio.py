"""Frame-sequence, track and manifest ingestion plus the binary descriptor cache.

File formats
------------
frames      one directory per (subject, trajectory, view), binary PGM (P5) files,
            lexicographic filename order. Binary PPM (P6) is accepted and
            converted to grayscale with fixed luma weights.
track file  plain text, one box per line:
            ``track_id frame_index x_min y_min x_max y_max`` (integer pixels,
            inclusive corners).
manifest    plain text, one entry per line:
            ``subject_id trajectory_id view_id frames_dir track_file``.
cache       little-endian binary: magic ``PFMC``, uint32 version, uint32 rows,
            uint32 cols, then float32 row-major payload.
"""

from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .tracker import PersonTrack

CACHE_MAGIC = b"PFMC"
MODEL_MAGIC = b"PFMM"
CACHE_VERSION = 1

# ITU-R BT.601 luma weights, fixed so conversion is reproducible bit-for-bit.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class TrackParseError(ValueError):
    """Malformed track file line; carries the 1-based line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


@dataclass
class FrameSequence:
    """Ordered grayscale frames of one (subject, trajectory, view) video."""

    frames: np.ndarray  # (n_frames, height, width) uint8
    view_id: int = 0
    subject_id: int | None = None
    trajectory_id: int | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.uint8)
        if self.frames.ndim != 3:
            raise ValueError("frames must be a (n, height, width) array")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass
class ManifestEntry:
    subject_id: int
    trajectory_id: int
    view_id: int
    frames_dir: str
    track_file: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        keys = [(e.subject_id, e.trajectory_id, e.view_id) for e in self.entries]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (subject, trajectory, view) triple in manifest")


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Convert (..., 3) RGB to uint8 gray via 0.299R + 0.587G + 0.114B, rounded."""
    rgb = np.asarray(rgb, dtype=np.float64)
    gray = rgb[..., 0] * LUMA_WEIGHTS[0] + rgb[..., 1] * LUMA_WEIGHTS[1] + rgb[..., 2] * LUMA_WEIGHTS[2]
    return np.clip(np.rint(gray), 0, 255).astype(np.uint8)


def _read_pnm_header(fh, path):
    # Tokenized header: magic, width, height, maxval; '#' starts a comment.
    tokens = []
    while len(tokens) < 4:
        line = fh.readline()
        if not line:
            raise ValueError(f"{path}: truncated PNM header")
        line = line.split(b"#", 1)[0]
        tokens.extend(line.split())
    magic = tokens[0].decode("ascii", "replace")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ValueError(f"{path}: bad PNM header") from exc
    return magic, width, height, maxval


def read_image(path: str) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) file as a grayscale uint8 array."""
    with open(path, "rb") as fh:
        magic, width, height, maxval = _read_pnm_header(fh, path)
        if magic not in ("P5", "P6"):
            raise ValueError(f"{path}: unsupported PNM type {magic!r} (need binary P5/P6)")
        if maxval <= 0 or maxval > 255:
            raise ValueError(f"{path}: unsupported maxval {maxval}")
        channels = 1 if magic == "P5" else 3
        data = fh.read(width * height * channels)
    if len(data) != width * height * channels:
        raise ValueError(f"{path}: truncated pixel data")
    if channels == 1:
        return np.frombuffer(data, dtype=np.uint8).reshape(height, width).copy()
    return rgb_to_gray(np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3))


def write_pgm(path: str, image: np.ndarray) -> None:
    """Write a 2-D uint8 array as binary PGM."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (image.shape[1], image.shape[0]))
        fh.write(image.tobytes())
    os.replace(tmp, path)


def load_frames_dir(frames_dir: str) -> np.ndarray:
    """Load all PGM/PPM frames of a directory in lexicographic filename order."""
    if not os.path.isdir(frames_dir):
        raise FileNotFoundError(f"frame directory not found: {frames_dir}")
    names = sorted(
        n for n in os.listdir(frames_dir) if n.lower().endswith((".pgm", ".ppm"))
    )
    if len(names) < 2:
        raise ValueError(f"{frames_dir}: need at least 2 frames, found {len(names)}")
    frames = []
    shape = None
    for name in names:
        img = read_image(os.path.join(frames_dir, name))
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise ValueError(
                f"{frames_dir}/{name}: resolution {img.shape} differs from {shape}"
            )
        frames.append(img)
    return np.stack(frames)


def load_sequence(entry: ManifestEntry) -> FrameSequence:
    """Load one manifest entry's frames as an immutable FrameSequence."""
    frames = load_frames_dir(entry.frames_dir)
    frames.setflags(write=False)
    return FrameSequence(
        frames=frames,
        view_id=entry.view_id,
        subject_id=entry.subject_id,
        trajectory_id=entry.trajectory_id,
    )


def load_tracks(track_file: str, frame_size: tuple[int, int] | None = None) -> list[PersonTrack]:
    """Parse a track file into PersonTracks, one per track id.

    frame_size, when given as (width, height), clamps out-of-frame boxes with
    a warning instead of rejecting them.
    """
    per_track: dict[int, list[tuple[int, int, int, int, int]]] = {}
    with open(track_file, "r") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 6:
                raise TrackParseError(track_file, line_no, f"expected 6 fields, got {len(parts)}")
            try:
                track_id, frame, x0, y0, x1, y1 = (int(p) for p in parts)
            except ValueError:
                raise TrackParseError(track_file, line_no, "non-integer field") from None
            if frame_size is not None:
                width, height = frame_size
                cx0 = min(max(x0, 0), width - 1)
                cy0 = min(max(y0, 0), height - 1)
                cx1 = min(max(x1, 0), width - 1)
                cy1 = min(max(y1, 0), height - 1)
                if (cx0, cy0, cx1, cy1) != (x0, y0, x1, y1):
                    warnings.warn(
                        f"{track_file}:{line_no}: box outside {width}x{height} frame, clamped"
                    )
                    x0, y0, x1, y1 = cx0, cy0, cx1, cy1
            per_track.setdefault(track_id, []).append((frame, x0, y0, x1, y1))

    tracks = []
    for track_id in sorted(per_track):
        rows = sorted(per_track[track_id])
        frames = np.array([r[0] for r in rows], dtype=np.int64)
        boxes = np.array([r[1:] for r in rows], dtype=np.int64)
        tracks.append(PersonTrack(track_id=track_id, frames=frames, boxes=boxes))
    return tracks


def save_tracks(track_file: str, tracks: list[PersonTrack]) -> None:
    """Write PersonTracks in the plain-text track format (atomic)."""
    tmp = track_file + ".tmp"
    with open(tmp, "w") as fh:
        for track in tracks:
            for frame, box in zip(track.frames, track.boxes):
                fh.write("%d %d %d %d %d %d\n" % (track.track_id, frame, *box))
    os.replace(tmp, track_file)


def load_manifest(path: str) -> DatasetManifest:
    """Load a manifest; paths are resolved relative to the manifest file."""
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, "r") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 5:
                raise ValueError(f"{path}:{line_no}: expected 5 fields, got {len(parts)}")
            subject, trajectory, view = int(parts[0]), int(parts[1]), int(parts[2])
            frames_dir = os.path.join(base, parts[3])
            track_file = os.path.join(base, parts[4])
            if not os.path.isdir(frames_dir):
                raise FileNotFoundError(f"{path}:{line_no}: missing frames dir {frames_dir}")
            if not os.path.isfile(track_file):
                raise FileNotFoundError(f"{path}:{line_no}: missing track file {track_file}")
            entries.append(ManifestEntry(subject, trajectory, view, frames_dir, track_file))
    return DatasetManifest(entries=entries)


def save_manifest(path: str, manifest: DatasetManifest) -> None:
    base = os.path.dirname(os.path.abspath(path))
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        for e in manifest.entries:
            fh.write(
                "%d %d %d %s %s\n"
                % (
                    e.subject_id,
                    e.trajectory_id,
                    e.view_id,
                    os.path.relpath(e.frames_dir, base),
                    os.path.relpath(e.track_file, base),
                )
            )
    os.replace(tmp, path)


def save_matrix(path: str, matrix: np.ndarray) -> None:
    """Write a 2-D float32 matrix in the binary cache format (atomic)."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ValueError("cache matrices must be 2-D")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<III", CACHE_VERSION, matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes())
    os.replace(tmp, path)


def load_matrix(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            raise ValueError(f"{path}: not a descriptor cache file")
        version, rows, cols = struct.unpack("<III", fh.read(12))
        if version != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        data = fh.read(rows * cols * 4)
    if len(data) != rows * cols * 4:
        raise ValueError(f"{path}: truncated cache payload")
    return np.frombuffer(data, dtype="<f4").reshape(rows, cols).copy()


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _unpack_str(fh) -> str:
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def save_model(path: str, kind: str, metadata: dict, arrays: dict[str, np.ndarray]) -> None:
    """Serialize a fitted model: type tag, key=value metadata, float64 arrays."""
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", CACHE_VERSION))
        fh.write(_pack_str(kind))
        meta_text = "".join(f"{k}={v}\n" for k, v in sorted(metadata.items()))
        fh.write(_pack_str(meta_text))
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr.reshape(1, -1)
            if arr.ndim != 2:
                raise ValueError(f"model array {name!r} must be 1-D or 2-D")
            fh.write(_pack_str(name))
            fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes())
    os.replace(tmp, path)


def load_model(path: str) -> tuple[str, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(4) != MODEL_MAGIC:
            raise ValueError(f"{path}: not a model file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported model version {version}")
        kind = _unpack_str(fh)
        metadata = {}
        for line in _unpack_str(fh).splitlines():
            if line:
                key, _, value = line.partition("=")
                metadata[key] = value
        (n_arrays,) = struct.unpack("<I", fh.read(4))
        arrays = {}
        for _ in range(n_arrays):
            name = _unpack_str(fh)
            rows, cols = struct.unpack("<II", fh.read(8))
            data = fh.read(rows * cols * 8)
            arrays[name] = np.frombuffer(data, dtype="<f8").reshape(rows, cols).copy()
    return kind, metadata, arrays
