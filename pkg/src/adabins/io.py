"""On-disk formats: depth maps, raw 8-bit RGB images and corpus manifests.

Depth-map file layout (all little-endian)::

    b"ADBD" | version u16 | width u32 | height u32 | height*width float32, row-major

NaN marks invalid pixels.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .synthdata import Corpus, SceneSample

DEPTH_MAGIC = b"ADBD"
DEPTH_VERSION = 1
_DEPTH_HEADER = struct.Struct("<4sHII")


class FormatError(ValueError):
    pass


def write_depth_map(path, depth: np.ndarray, mask=None) -> None:
    depth = np.asarray(depth, dtype="<f4")
    if depth.ndim != 2:
        raise FormatError(f"depth map must be 2-D, got shape {depth.shape}")
    if mask is not None:
        depth = np.where(np.asarray(mask, dtype=bool), depth, np.float32(np.nan)).astype("<f4")
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(_DEPTH_HEADER.pack(DEPTH_MAGIC, DEPTH_VERSION, w, h))
        f.write(np.ascontiguousarray(depth).tobytes())


def read_depth_map(path) -> np.ndarray:
    """Return the float32 [H, W] map; invalid pixels are NaN."""
    raw = Path(path).read_bytes()
    if len(raw) < _DEPTH_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, w, h = _DEPTH_HEADER.unpack_from(raw)
    if magic != DEPTH_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != DEPTH_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = raw[_DEPTH_HEADER.size :]
    if len(body) != 4 * w * h:
        raise FormatError(f"{path}: expected {4 * w * h} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float32)


def write_rgb(path, image: np.ndarray) -> None:
    """Store a [3, H, W] image in [0, 1] as interleaved 8-bit RGB (H*W*3 bytes)."""
    rgb = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Path(path).write_bytes(np.ascontiguousarray(rgb.transpose(1, 2, 0)).tobytes())


def read_rgb(path, height: int, width: int) -> np.ndarray:
    raw = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    if raw.size != height * width * 3:
        raise FormatError(f"{path}: expected {height * width * 3} bytes, found {raw.size}")
    return (raw.reshape(height, width, 3).transpose(2, 0, 1) / 255.0).astype(np.float32)


MANIFEST = "manifest.txt"


def save_corpus(corpus: Corpus, out_dir) -> Path:
    """Write every sample as ``NNNN.adbd`` + ``NNNN.rgb`` and list them in manifest.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["# index split scene_type height width depth_file rgb_file"]
    splits = [("train", s) for s in corpus.train] + [("val", s) for s in corpus.val]
    for i, (split, s) in enumerate(splits):
        H, W = s.depth.shape
        stem = f"{i:04d}"
        write_depth_map(out / f"{stem}.adbd", s.depth, s.mask)
        write_rgb(out / f"{stem}.rgb", s.image)
        lines.append(f"{i} {split} {s.scene_type} {H} {W} {stem}.adbd {stem}.rgb")
    path = out / MANIFEST
    path.write_text("\n".join(lines) + "\n")
    return path


def load_corpus(directory, d_min: float, d_max: float) -> Corpus:
    root = Path(directory)
    train, val = [], []
    for line in (root / MANIFEST).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        idx, split, scene_type, H, W, dfile, rfile = line.split()
        depth = read_depth_map(root / dfile)
        with np.errstate(invalid="ignore"):
            mask = np.isfinite(depth) & (depth > d_min) & (depth < d_max)
        image = read_rgb(root / rfile, int(H), int(W))
        sample = SceneSample(image, depth, mask, scene_type, (int(idx),))
        (train if split == "train" else val).append(sample)
    return Corpus(train, val)
