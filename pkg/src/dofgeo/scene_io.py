"""Scene data containers and file I/O.

Shared conventions:
  * pixel coordinates are (x, y), origin at the top-left, x rightward,
    y downward, pixel centers at integer coordinates;
  * depth maps store meters; entries <= 0 or non-finite are invalid;
  * all containers are immutable after construction (arrays are set
    read-only) and safe to share across threads.

File formats handled here: 8-bit PNG images, PFM depth maps, 16-bit PNG
depth with a meters-per-unit sidecar, per-scene camera JSON, match CSV /
JSON-lines, and the SPLB1 binary splat-sample buffer.
"""

from __future__ import annotations

import csv
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

INVALID_DEPTH = 0.0


class SceneIOError(ValueError):
    """Raised when a file cannot be parsed or violates a data invariant."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ImageBuffer:
    """Row-major float image with values in [0, 1], 1 or 3 channels."""

    data: np.ndarray  # (H, W, C) float32

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise SceneIOError(f"image must be HxWx1 or HxWx3, got shape {d.shape}")
        if not np.all(np.isfinite(d)) or d.min() < 0.0 or d.max() > 1.0:
            raise SceneIOError("image values must be finite and within [0, 1]")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel metric depth; value > 0 means valid."""

    data: np.ndarray  # (H, W) float64 in memory; disk formats quantize to f32

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64).copy()
        if d.ndim != 2:
            raise SceneIOError(f"depth must be HxW, got shape {d.shape}")
        # Map non-finite entries onto the invalid sentinel so every stored
        # value is finite; <= 0 already encodes invalid.
        d[~np.isfinite(d)] = INVALID_DEPTH
        object.__setattr__(self, "data", _freeze(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.data > 0.0

    def valid_values(self) -> np.ndarray:
        return self.data[self.valid_mask]


@dataclass(frozen=True)
class CameraView:
    """Pinhole camera with world-to-camera extrinsics (X_cam = R X + t)."""

    view_id: int
    K: np.ndarray  # 3x3
    R: np.ndarray  # 3x3
    t: np.ndarray  # 3
    width: int
    height: int

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64)
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if K.shape != (3, 3) or R.shape != (3, 3):
            raise SceneIOError("K and R must be 3x3")
        if K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0:
            raise SceneIOError("K must be upper-triangular")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise SceneIOError("K focal entries must be positive")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
            raise SceneIOError("R is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise SceneIOError("det(R) must be +1 within 1e-9")
        if self.width < 1 or self.height < 1:
            raise SceneIOError("image size must be positive")
        object.__setattr__(self, "K", _freeze(K))
        object.__setattr__(self, "R", _freeze(R))
        object.__setattr__(self, "t", _freeze(t))


@dataclass(frozen=True)
class MatchSet:
    """Semi-dense correspondences between one view pair, with confidences."""

    view_i: int
    view_j: int
    p_i: np.ndarray  # (M, 2) float64, (x, y)
    p_j: np.ndarray  # (M, 2)
    confidence: np.ndarray  # (M,) in [0, 1]

    def __post_init__(self):
        pi = np.asarray(self.p_i, dtype=np.float64).reshape(-1, 2)
        pj = np.asarray(self.p_j, dtype=np.float64).reshape(-1, 2)
        c = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
        if not (len(pi) == len(pj) == len(c)):
            raise SceneIOError("match arrays must have equal length")
        if len(c) and (c.min() < 0.0 or c.max() > 1.0):
            raise SceneIOError("confidences must lie in [0, 1]")
        object.__setattr__(self, "p_i", _freeze(pi))
        object.__setattr__(self, "p_j", _freeze(pj))
        object.__setattr__(self, "confidence", _freeze(c))

    def __len__(self) -> int:
        return len(self.confidence)


@dataclass(frozen=True)
class SplatSampleBuffer:
    """Per-pixel front-to-back (alpha, depth) sample lists.

    Stored as a flat sample array plus per-pixel counts; the stored order
    IS the compositing order and is never re-sorted.
    """

    width: int
    height: int
    counts: np.ndarray  # (H, W) int64
    alphas: np.ndarray  # (total,) float32
    depths: np.ndarray  # (total,) float32

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        alphas = np.asarray(self.alphas, dtype=np.float32)
        depths = np.asarray(self.depths, dtype=np.float32)
        if counts.shape != (self.height, self.width):
            raise SceneIOError("counts shape must match (height, width)")
        if counts.sum() != len(alphas) or len(alphas) != len(depths):
            raise SceneIOError("sample arrays inconsistent with counts")
        if len(alphas) and (alphas.min() < 0.0 or alphas.max() > 1.0):
            raise SceneIOError("alphas must lie in [0, 1]")
        object.__setattr__(self, "counts", _freeze(counts))
        object.__setattr__(self, "alphas", _freeze(alphas))
        object.__setattr__(self, "depths", _freeze(depths))

    def offsets(self) -> np.ndarray:
        """Start index of each pixel's samples in the flat arrays."""
        flat = self.counts.reshape(-1)
        off = np.zeros(len(flat) + 1, dtype=np.int64)
        np.cumsum(flat, out=off[1:])
        return off


# ---------------------------------------------------------------------------
# images


def load_image(path: str | Path) -> ImageBuffer:
    """Load an 8-bit PNG as floats in [0, 1] (exact division by 255)."""
    path = Path(path)
    if not path.exists():
        raise SceneIOError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                if im.mode in ("LA", "RGBA", "P", "I;16", "I"):
                    raise SceneIOError(
                        f"unsupported PNG mode {im.mode!r} for image input: {path}"
                    )
                im = im.convert("RGB")
            arr = np.asarray(im)
    except SceneIOError:
        raise
    except Exception as exc:  # malformed header etc.
        raise SceneIOError(f"cannot read image {path}: {exc}") from exc
    return ImageBuffer(arr.astype(np.float32) / 255.0)


def save_image(img: ImageBuffer, path: str | Path) -> None:
    """Write an ImageBuffer as an 8-bit PNG (round-half-away quantization)."""
    arr = np.clip(np.round(img.data * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        pil = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(arr, mode="RGB")
    pil.save(Path(path), format="PNG")


# ---------------------------------------------------------------------------
# depth (PFM and 16-bit PNG + scale sidecar)


def _read_pfm(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().rstrip()
        if header == b"Pf":
            channels = 1
        elif header == b"PF":
            channels = 3
        else:
            raise SceneIOError(f"not a PFM file: {path}")
        dims = f.readline()
        while dims.startswith(b"#"):
            dims = f.readline()
        m = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise SceneIOError(f"malformed PFM dimensions in {path}")
        width, height = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().strip())
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise SceneIOError(f"truncated PFM payload in {path}")
        data = np.frombuffer(raw, dtype=endian + "f4").reshape(height, width, channels)
        # PFM rows are stored bottom-up.
        data = data[::-1]
        if channels == 3:
            data = data[:, :, 0]
        else:
            data = data[:, :, 0]
        return data.astype(np.float32)


def _write_pfm(data: np.ndarray, path: Path) -> None:
    data = np.asarray(data, dtype=np.float32)
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(data[::-1]).astype("<f4").tobytes())


def save_pfm(data: np.ndarray, path: str | Path) -> None:
    """Write a raw float array (no validity semantics) as grayscale PFM."""
    _write_pfm(np.asarray(data, dtype=np.float32), Path(path))


def load_depth(
    path: str | Path,
    meters_per_unit: float | None = None,
    expect_size: tuple[int, int] | None = None,
) -> DepthMap:
    """Load a depth map from PFM or 16-bit PNG.

    PNG input requires a meters-per-unit scale, either passed explicitly or
    found in a ``<path>.scale.json`` sidecar with key ``meters_per_unit``.
    ``expect_size`` is (width, height) for paired-loading dimension checks.
    """
    path = Path(path)
    if not path.exists():
        raise SceneIOError(f"no such depth file: {path}")
    if path.suffix.lower() == ".pfm":
        data = _read_pfm(path)
    elif path.suffix.lower() == ".png":
        if meters_per_unit is None:
            sidecar = path.with_name(path.name + ".scale.json")
            if not sidecar.exists():
                raise SceneIOError(f"16-bit PNG depth needs a scale sidecar: {sidecar}")
            meters_per_unit = float(json.loads(sidecar.read_text())["meters_per_unit"])
        with Image.open(path) as im:
            if im.mode not in ("I;16", "I"):
                raise SceneIOError(f"depth PNG must be 16-bit grayscale: {path}")
            data = np.asarray(im).astype(np.float32) * meters_per_unit
    else:
        raise SceneIOError(f"unrecognized depth format: {path}")
    depth = DepthMap(data)
    if expect_size is not None and (depth.width, depth.height) != expect_size:
        raise SceneIOError(
            f"depth size {depth.width}x{depth.height} does not match "
            f"expected {expect_size[0]}x{expect_size[1]}"
        )
    return depth


def save_depth(depth: DepthMap, path: str | Path) -> None:
    """Write a DepthMap as little-endian PFM (bit-exact round trip)."""
    _write_pfm(depth.data, Path(path))


# ---------------------------------------------------------------------------
# cameras


def load_cameras(path: str | Path) -> list[CameraView]:
    """Load the per-scene camera JSON array."""
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except FileNotFoundError:
        raise SceneIOError(f"no such camera file: {path}")
    except json.JSONDecodeError as exc:
        raise SceneIOError(f"malformed camera JSON {path}: {exc}") from exc
    views = []
    for e in entries:
        views.append(
            CameraView(
                view_id=int(e["view_id"]),
                K=np.asarray(e["K"], dtype=np.float64).reshape(3, 3),
                R=np.asarray(e["R"], dtype=np.float64).reshape(3, 3),
                t=np.asarray(e["t"], dtype=np.float64),
                width=int(e["width"]),
                height=int(e["height"]),
            )
        )
    return views


def save_cameras(views: list[CameraView], path: str | Path) -> None:
    entries = [
        {
            "view_id": v.view_id,
            "K": [float(x) for x in v.K.reshape(-1)],
            "R": [float(x) for x in v.R.reshape(-1)],
            "t": [float(x) for x in v.t],
            "width": v.width,
            "height": v.height,
        }
        for v in views
    ]
    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# matches


_MATCH_FIELDS = ["view_i", "view_j", "x_i", "y_i", "x_j", "y_j", "conf"]


def load_matches(
    path: str | Path,
    image_sizes: dict[int, tuple[int, int]] | None = None,
) -> list[MatchSet]:
    """Load CSV or JSON-lines matches, grouped by view pair.

    ``image_sizes`` maps view_id -> (width, height); when given, coordinates
    are validated against the bounds of their view. Fractional coordinates
    are accepted as-is.
    """
    path = Path(path)
    if not path.exists():
        raise SceneIOError(f"no such match file: {path}")
    records: list[tuple[int, int, float, float, float, float, float]] = []
    text = path.read_text()
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = tuple(float(obj[k]) for k in _MATCH_FIELDS)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SceneIOError(f"{path}:{lineno}: bad match record: {exc}")
            records.append((int(rec[0]), int(rec[1])) + rec[2:])
    else:
        reader = csv.DictReader(text.splitlines())
        if reader.fieldnames is not None and reader.fieldnames != _MATCH_FIELDS:
            raise SceneIOError(
                f"{path}: match CSV header must be {','.join(_MATCH_FIELDS)}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = tuple(float(row[k]) for k in _MATCH_FIELDS)
            except (KeyError, TypeError, ValueError) as exc:
                raise SceneIOError(f"{path}:{lineno}: bad match record: {exc}")
            records.append((int(rec[0]), int(rec[1])) + rec[2:])

    grouped: dict[tuple[int, int], list] = {}
    for lineno, rec in enumerate(records, start=1):
        vi, vj, xi, yi, xj, yj, conf = rec
        if not 0.0 <= conf <= 1.0:
            raise SceneIOError(f"{path}: record {lineno}: confidence {conf} outside [0, 1]")
        if image_sizes is not None:
            for vid, x, y in ((vi, xi, yi), (vj, xj, yj)):
                if vid not in image_sizes:
                    raise SceneIOError(f"{path}: record {lineno}: unknown view {vid}")
                w, h = image_sizes[vid]
                if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
                    raise SceneIOError(
                        f"{path}: record {lineno}: coordinate ({x}, {y}) outside "
                        f"view {vid} bounds {w}x{h}"
                    )
        grouped.setdefault((vi, vj), []).append((xi, yi, xj, yj, conf))

    out = []
    for (vi, vj), rows in sorted(grouped.items()):
        arr = np.asarray(rows, dtype=np.float64)
        out.append(MatchSet(vi, vj, arr[:, 0:2], arr[:, 2:4], arr[:, 4]))
    return out


def save_matches(matches: list[MatchSet], path: str | Path) -> None:
    with open(Path(path), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(_MATCH_FIELDS)
        for ms in matches:
            for k in range(len(ms)):
                writer.writerow(
                    [
                        ms.view_i,
                        ms.view_j,
                        repr(float(ms.p_i[k, 0])),
                        repr(float(ms.p_i[k, 1])),
                        repr(float(ms.p_j[k, 0])),
                        repr(float(ms.p_j[k, 1])),
                        repr(float(ms.confidence[k])),
                    ]
                )


# ---------------------------------------------------------------------------
# splat sample buffers (SPLB1)

_SPLB_MAGIC = b"SPLB1"


def load_splats(path: str | Path) -> SplatSampleBuffer:
    """Read the SPLB1 binary splat-sample buffer."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:5] != _SPLB_MAGIC:
        raise SceneIOError(f"{path}: missing SPLB1 magic")
    if len(raw) < 13:
        raise SceneIOError(f"{path}: truncated SPLB1 header")
    width, height = struct.unpack_from("<II", raw, 5)
    pos = 13
    counts = np.zeros((height, width), dtype=np.int64)
    alphas: list[np.ndarray] = []
    depths: list[np.ndarray] = []
    for idx in range(width * height):
        if pos + 2 > len(raw):
            raise SceneIOError(f"{path}: truncated SPLB1 payload")
        (n,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        counts.reshape(-1)[idx] = n
        if n:
            if pos + 8 * n > len(raw):
                raise SceneIOError(f"{path}: truncated SPLB1 payload")
            samples = np.frombuffer(raw, dtype="<f4", count=2 * n, offset=pos).reshape(n, 2)
            alphas.append(samples[:, 0])
            depths.append(samples[:, 1])
            pos += 8 * n
    if pos != len(raw):
        raise SceneIOError(f"{path}: trailing bytes in SPLB1 file")
    flat_a = np.concatenate(alphas) if alphas else np.zeros(0, dtype=np.float32)
    flat_d = np.concatenate(depths) if depths else np.zeros(0, dtype=np.float32)
    return SplatSampleBuffer(width, height, counts, flat_a, flat_d)


def save_splats(buf: SplatSampleBuffer, path: str | Path) -> None:
    off = buf.offsets()
    parts = [_SPLB_MAGIC, struct.pack("<II", buf.width, buf.height)]
    flat = buf.counts.reshape(-1)
    for idx in range(buf.width * buf.height):
        n = int(flat[idx])
        parts.append(struct.pack("<H", n))
        if n:
            s = np.empty((n, 2), dtype="<f4")
            s[:, 0] = buf.alphas[off[idx] : off[idx] + n]
            s[:, 1] = buf.depths[off[idx] : off[idx] + n]
            parts.append(s.tobytes())
    Path(path).write_bytes(b"".join(parts))
