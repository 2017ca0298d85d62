"""Domain types, volume containers, and the UGSTACK on-disk format.

UGSTACK is a pair of files: ``<name>.json`` (header) and ``<name>.raw``
(payload, little-endian, C row-major). Scalars and probabilities are f32,
masks are u8.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

MAGIC = "UGSTACK1"

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


class FormatError(ValueError):
    """Raised for malformed UGSTACK containers or scribble files."""


@dataclass(frozen=True)
class Stack:
    """A 3D grid of scalar slices, indexed [slice, row, col]."""

    data: np.ndarray
    pixel_spacing: tuple[float, float] = (1.0, 1.0)  # (row mm, col mm)
    slice_spacing: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 3 or min(d.shape) < 1:
            raise ValueError(f"stack data must be 3D non-empty, got shape {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("stack contains non-finite values")
        object.__setattr__(self, "data", d)

    @property
    def num_slices(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ProbabilityGroup:
    """N per-pixel foreground probability maps, indexed [predictor, slice, row, col]."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 4 or d.shape[0] < 1:
            raise ValueError(f"probability group must be 4D with N >= 1, got {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("probability group contains non-finite values")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "data", d)

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class BinaryMask:
    """3D {0,1} mask with the same spatial dims as its Stack."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if not np.isin(d, (0, 1)).all():
            raise ValueError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "data", d.astype(np.uint8))


@dataclass(frozen=True)
class Stroke:
    label: str  # "fg" | "bg"
    polyline: tuple[tuple[int, int], ...]  # ordered (row, col) pixels
    radius: int = 0

    def __post_init__(self):
        if self.label not in ("fg", "bg"):
            raise ValueError(f"stroke label must be 'fg' or 'bg', got {self.label!r}")
        if self.radius < 0:
            raise ValueError("stroke radius must be >= 0")
        pts = tuple((int(r), int(c)) for r, c in self.polyline)
        if not pts:
            raise ValueError("stroke polyline is empty")
        object.__setattr__(self, "polyline", pts)


@dataclass(frozen=True)
class ScribbleSet:
    slice_index: int
    strokes: tuple[Stroke, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "strokes", tuple(self.strokes))

    def to_json(self) -> dict:
        return {
            "slice": self.slice_index,
            "strokes": [
                {"label": s.label, "polyline": [list(p) for p in s.polyline], "radius": s.radius}
                for s in self.strokes
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ScribbleSet":
        strokes = tuple(
            Stroke(s["label"], tuple(tuple(p) for p in s["polyline"]), int(s.get("radius", 0)))
            for s in obj.get("strokes", [])
        )
        return cls(int(obj["slice"]), strokes)


@dataclass
class RefineConfig:
    """Weights and numerical parameters of the refinement loop.

    ``lam`` serializes as ``lambda`` (reserved word in Python).
    """

    alpha: float = 0.1
    beta: float = 0.5
    lam: float = 0.3
    mu: float = 0.005
    D: float = 4.0
    epsilon: float = 1.5
    dt: float = 5.0
    max_steps: int = 200
    zeta: float = 1e-6
    m_prime_fraction: float = 0.6
    early_stop_count: int = 3
    gamma: float = 1.0
    threshold: float = 0.5

    def __post_init__(self):
        if min(self.alpha, self.beta, self.lam, self.mu) < 0:
            raise ValueError("energy weights must be nonnegative")
        if self.mu * self.dt >= 0.25:
            raise ValueError("stability requires mu*dt < 0.25")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError("threshold must lie strictly in (0, 1)")
        if self.D <= 0 or self.epsilon <= 0:
            raise ValueError("D and epsilon must be positive")
        if not (0.0 < self.m_prime_fraction <= 1.0):
            raise ValueError("m_prime_fraction must lie in (0, 1]")

    def to_json(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "RefineConfig":
        obj = dict(obj)
        if "lambda" in obj:
            obj["lam"] = obj.pop("lambda")
        return cls(**obj)


# ---------------------------------------------------------------------------
# UGSTACK IO


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix == ".json":
        base = p.with_suffix("")
    elif p.suffix == ".raw":
        base = p.with_suffix("")
    else:
        base = p
    return base.with_suffix(".json"), base.with_suffix(".raw")


def write_ugstack(data: np.ndarray, path, kind: str, dtype: str, spacing=None,
                  extra: dict | None = None) -> None:
    header_path, raw_path = _paths(path)
    arr = np.ascontiguousarray(data, dtype=_DTYPES[dtype])
    header = {
        "magic": MAGIC,
        "kind": kind,
        "dims": list(arr.shape),
        "dtype": dtype,
    }
    if spacing is not None:
        header["spacing"] = list(spacing)
    if extra:
        for k, v in extra.items():
            header.setdefault(k, v)
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header_path.write_text(json.dumps(header))
    raw_path.write_bytes(arr.tobytes(order="C"))


def read_ugstack(path) -> tuple[np.ndarray, dict]:
    header_path, raw_path = _paths(path)
    if not header_path.exists():
        raise FormatError(f"missing header file: {header_path}")
    if not raw_path.exists():
        raise FormatError(f"missing payload file: {raw_path}")
    header = json.loads(header_path.read_text())
    if header.get("magic") != MAGIC:
        raise FormatError(f"bad magic in {header_path}: {header.get('magic')!r}")
    if header.get("dtype") not in _DTYPES:
        raise FormatError(f"unknown dtype {header.get('dtype')!r}")
    dims = header.get("dims")
    if not dims or any(int(d) < 1 for d in dims):
        raise FormatError(f"bad dims {dims!r}")
    dtype = _DTYPES[header["dtype"]]
    expected = int(np.prod(dims)) * dtype.itemsize
    payload = raw_path.read_bytes()
    if len(payload) != expected:
        raise FormatError(
            f"payload size mismatch: expected {expected} bytes, got {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
    if dtype.kind == "f" and not np.isfinite(arr).all():
        raise FormatError("payload contains non-finite values")
    return arr, header


def read_stack(path) -> Stack:
    arr, header = read_ugstack(path)
    if header["kind"] != "stack":
        raise FormatError(f"expected kind 'stack', got {header['kind']!r}")
    spacing = header.get("spacing", [1.0, 1.0, 1.0])
    return Stack(arr, pixel_spacing=(spacing[1], spacing[2]), slice_spacing=spacing[0])


def read_probability_group(path) -> ProbabilityGroup:
    arr, header = read_ugstack(path)
    if header["kind"] != "probgroup":
        raise FormatError(f"expected kind 'probgroup', got {header['kind']!r}")
    return ProbabilityGroup(arr)


def read_mask(path) -> BinaryMask:
    arr, header = read_ugstack(path)
    if header["kind"] != "mask":
        raise FormatError(f"expected kind 'mask', got {header['kind']!r}")
    return BinaryMask(arr)


def write_stack(obj, path) -> None:
    """Write a Stack, ProbabilityGroup, or BinaryMask as an UGSTACK pair."""
    if isinstance(obj, Stack):
        spacing = [obj.slice_spacing, obj.pixel_spacing[0], obj.pixel_spacing[1]]
        write_ugstack(obj.data, path, "stack", "f32", spacing)
    elif isinstance(obj, ProbabilityGroup):
        write_ugstack(obj.data, path, "probgroup", "f32")
    elif isinstance(obj, BinaryMask):
        write_ugstack(obj.data, path, "mask", "u8")
    else:
        raise TypeError(f"cannot write object of type {type(obj).__name__}")


def load_scribbles(path) -> ScribbleSet:
    return ScribbleSet.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Scribble rasterization


def _line_pixels(p, q):
    """8-connected pixel chain from p to q (inclusive)."""
    r0, c0 = p
    r1, c1 = q
    steps = max(abs(r1 - r0), abs(c1 - c0))
    if steps == 0:
        return [(r0, c0)]
    return [
        (round(r0 + (r1 - r0) * t / steps), round(c0 + (c1 - c0) * t / steps))
        for t in range(steps + 1)
    ]


def _disk_offsets(radius: int):
    r = int(radius)
    offs = []
    for dr in range(-r, r + 1):
        for dc in range(-r, r + 1):
            if dr * dr + dc * dc <= r * r:
                offs.append((dr, dc))
    return offs


def rasterize_scribbles(scribbles: ScribbleSet, height: int, width: int):
    """Rasterize strokes to disjoint foreground/background boolean masks.

    Each polyline is drawn by 8-connected line stepping and dilated by a
    disk of its radius. Later strokes win where strokes overlap. Any
    polyline point outside the image rejects the whole set.
    """
    for s in scribbles.strokes:
        for r, c in s.polyline:
            if not (0 <= r < height and 0 <= c < width):
                raise ValueError(f"scribble point ({r}, {c}) outside {height}x{width} image")
    label = np.zeros((height, width), dtype=np.uint8)  # 0 none, 1 fg, 2 bg
    for s in scribbles.strokes:
        code = 1 if s.label == "fg" else 2
        pixels = set(s.polyline[:1])
        for p, q in zip(s.polyline, s.polyline[1:]):
            pixels.update(_line_pixels(p, q))
        offs = _disk_offsets(s.radius)
        for r, c in pixels:
            for dr, dc in offs:
                rr, cc = r + dr, c + dc
                if 0 <= rr < height and 0 <= cc < width:
                    label[rr, cc] = code
    return label == 1, label == 2


def normalize_slice(image: np.ndarray) -> np.ndarray:
    """Min-max normalize one slice to [0, 1]; constant slices map to 0."""
    img = np.asarray(image, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-12:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)
