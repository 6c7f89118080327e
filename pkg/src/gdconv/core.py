"""Dense image and parameter-field containers plus their file formats.

Frames hold image data as float64, nominally in [0,1] for pictures and
unbounded for feature planes. Fields hold per-pixel parameter planes.
Both are immutable after construction, so they are safe to share across
threads without locking.

File formats:
  * 8-bit PNG (via Pillow) and binary PPM (P6) for frames.
  * "GDCF" container for fields: 16-byte header (magic ``GDCF``, then
    u32 height, width, depth, little-endian) followed by
    height*width*depth little-endian float32 values in row-major,
    depth-innermost order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

GDCF_MAGIC = b"GDCF"


def _freeze(arr: np.ndarray) -> np.ndarray:
    # always copy: freezing a caller's array in place would be a surprise
    arr = np.array(arr, dtype=np.float64, order="C", copy=True)
    arr.setflags(write=False)
    return arr


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise ValueError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class Frame:
    """A single image: (height, width, channels) float64 array."""

    height: int
    width: int
    channels: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.height <= 0 or self.width <= 0 or self.channels <= 0:
            raise ValueError("frame dimensions must be positive")
        arr = np.asarray(self.data, dtype=np.float64)
        expected = self.height * self.width * self.channels
        if arr.size != expected:
            raise ValueError(
                f"frame data has {arr.size} values, expected "
                f"{self.height}x{self.width}x{self.channels}={expected}"
            )
        arr = arr.reshape(self.height, self.width, self.channels)
        _check_finite(arr, "frame data")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    def plane(self, channel: int) -> np.ndarray:
        """Read-only (H, W) view of one channel."""
        if not 0 <= channel < self.channels:
            raise IndexError(f"channel {channel} out of range [0, {self.channels})")
        return self.data[:, :, channel]


def frame_from_array(arr: np.ndarray) -> Frame:
    """Build a Frame from an (H, W) or (H, W, C) array."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError("expected a 2-d or 3-d array")
    h, w, c = arr.shape
    return Frame(h, w, c, arr)


def frame_from_bytes(height: int, width: int, channels: int, raw: bytes | bytearray | np.ndarray) -> Frame:
    """Decode 8-bit pixel data; each byte b maps to b/255."""
    buf = np.frombuffer(bytes(raw), dtype=np.uint8) if not isinstance(raw, np.ndarray) else raw.astype(np.uint8)
    expected = height * width * channels
    if buf.size != expected:
        raise ValueError(f"got {buf.size} bytes, expected {expected}")
    return Frame(height, width, channels, buf.astype(np.float64) / 255.0)


def frame_to_bytes(frame: Frame) -> bytes:
    """Quantize to 8 bits, rounding half up, clipped to [0, 255]."""
    q = np.floor(frame.data * 255.0 + 0.5)
    return np.clip(q, 0, 255).astype(np.uint8).tobytes()


@dataclass(frozen=True, eq=False)
class FrameStack:
    """An ordered set of same-shaped frames with strictly increasing timestamps."""

    frames: tuple[Frame, ...]
    times: tuple[float, ...]

    def __post_init__(self) -> None:
        frames = tuple(self.frames)
        times = tuple(float(t) for t in self.times)
        if len(frames) < 2:
            raise ValueError("a frame stack needs at least 2 frames")
        shape = frames[0].shape
        for i, f in enumerate(frames):
            if f.shape != shape:
                raise ValueError(f"frame {i} has shape {f.shape}, expected {shape}")
        if len(times) != len(frames):
            raise ValueError("times and frames must have the same length")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def channels(self) -> int:
        return self.frames[0].channels

    @property
    def t(self) -> int:
        """Largest support index (number of frames minus one)."""
        return len(self.frames) - 1


def stack_new(frames: list[Frame] | tuple[Frame, ...], times: list[float] | None = None) -> FrameStack:
    """Build a FrameStack; times default to 0, 1, ..., T."""
    if times is None:
        times = list(range(len(frames)))
    return FrameStack(tuple(frames), tuple(times))


def substack(stack: FrameStack, indices: list[int] | tuple[int, ...]) -> FrameStack:
    """Select a subset of frames (with their timestamps), preserving order."""
    for i in indices:
        if not 0 <= i < len(stack):
            raise ValueError(f"frame index {i} out of range [0, {len(stack)})")
    return FrameStack(
        tuple(stack.frames[i] for i in indices),
        tuple(stack.times[i] for i in indices),
    )


@dataclass(frozen=True, eq=False)
class Field:
    """A per-pixel parameter map: (height, width, depth) float64 array."""

    height: int
    width: int
    depth: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.height <= 0 or self.width <= 0 or self.depth <= 0:
            raise ValueError("field dimensions must be positive")
        arr = np.asarray(self.data, dtype=np.float64)
        expected = self.height * self.width * self.depth
        if arr.size != expected:
            raise ValueError(
                f"field data has {arr.size} values, expected "
                f"{self.height}x{self.width}x{self.depth}={expected}"
            )
        arr = arr.reshape(self.height, self.width, self.depth)
        _check_finite(arr, "field data")
        object.__setattr__(self, "data", _freeze(arr))


def field_from_array(arr: np.ndarray) -> Field:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError("expected a 2-d or 3-d array")
    h, w, d = arr.shape
    return Field(h, w, d, arr)


def constant_field(height: int, width: int, depth: int, value: float = 0.0) -> Field:
    return Field(height, width, depth, np.full((height, width, depth), float(value)))


# ---------------------------------------------------------------------------
# Frame I/O


def write_png(frame: Frame, path: str | Path) -> None:
    if frame.channels == 1:
        img = Image.frombytes("L", (frame.width, frame.height), frame_to_bytes(frame))
    elif frame.channels == 3:
        img = Image.frombytes("RGB", (frame.width, frame.height), frame_to_bytes(frame))
    else:
        raise ValueError(f"PNG output supports 1 or 3 channels, got {frame.channels}")
    img.save(path, format="PNG")


def read_png(path: str | Path) -> Frame:
    with Image.open(path) as img:
        if img.mode == "L":
            channels = 1
        else:
            img = img.convert("RGB")
            channels = 3
        w, h = img.size
        raw = img.tobytes()
    return frame_from_bytes(h, w, channels, raw)


def write_ppm(frame: Frame, path: str | Path) -> None:
    """Write binary PPM (P6); requires a 3-channel frame."""
    if frame.channels != 3:
        raise ValueError(f"PPM (P6) requires 3 channels, got {frame.channels}")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii"))
        fh.write(frame_to_bytes(frame))


def _ppm_tokens(fh):
    while True:
        tok = b""
        ch = fh.read(1)
        while ch.isspace():
            ch = fh.read(1)
        if ch == b"#":
            fh.readline()
            continue
        while ch and not ch.isspace():
            tok += ch
            ch = fh.read(1)
        if not tok:
            raise ValueError("truncated PPM header")
        yield tok


def read_ppm(path: str | Path) -> Frame:
    with open(path, "rb") as fh:
        tokens = _ppm_tokens(fh)
        magic = next(tokens)
        if magic != b"P6":
            raise ValueError(f"not a binary PPM (P6) file: magic {magic!r}")
        w = int(next(tokens))
        h = int(next(tokens))
        maxval = int(next(tokens))
        if maxval != 255:
            raise ValueError(f"only maxval 255 supported, got {maxval}")
        raw = fh.read(w * h * 3)
    return frame_from_bytes(h, w, 3, raw)


# ---------------------------------------------------------------------------
# Field I/O (GDCF)


def write_field(fld: Field, path: str | Path) -> None:
    header = GDCF_MAGIC + struct.pack("<III", fld.height, fld.width, fld.depth)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(fld.data.astype("<f4").tobytes())


def read_field(path: str | Path) -> Field:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != GDCF_MAGIC:
            raise ValueError(f"{path}: not a GDCF field file")
        h, w, d = struct.unpack("<III", header[4:])
        raw = fh.read(h * w * d * 4)
    if len(raw) != h * w * d * 4:
        raise ValueError(f"{path}: truncated GDCF payload")
    data = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return Field(h, w, d, data)
