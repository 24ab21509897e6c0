"""Readers and writers for .flo flow files, match lists, and PNM/PFM rasters.

File layouts:
  .flo    little-endian: float32 magic 202021.25, int32 width, int32 height,
          then height x width x (u, v) float32. Components with magnitude
          above 1e9 mean "unknown flow".
  matches ASCII `x1 y1 x2 y2` per line, extra columns ignored, '#' comments.
  PNM     binary P5/P6 with 8-bit or big-endian 16-bit samples, maxval-
          normalized to [0, 1] on read.
  PFM     grayscale "Pf": dimension line, scale line (sign = endianness),
          rows stored bottom-up.
"""

from __future__ import annotations

import struct

import numpy as np

from .model import CostMap, FlowField, FormatError, Image, MatchSet, OcclusionMask

FLO_MAGIC = 202021.25
UNKNOWN_FLOW_THRESHOLD = 1e9


# ---------------------------------------------------------------------------
# .flo flow files
# ---------------------------------------------------------------------------

def read_flo(path):
    """Read a .flo file.

    Returns (FlowField, valid) where `valid` marks pixels whose stored
    components all stay at or below the unknown-flow threshold. Stored
    values are preserved verbatim (float32 widens exactly to float64),
    so writing the field back yields a byte-identical file; consumers
    must honor the validity mask instead of looking for sentinels.
    """
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12:
            raise FormatError(f"{path}: truncated header")
        magic, width, height = struct.unpack("<fii", header)
        if magic != FLO_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if width <= 0 or height <= 0:
            raise FormatError(f"{path}: non-positive dimensions {width}x{height}")
        nbytes = 8 * width * height
        body = fh.read(nbytes)
        if len(body) < nbytes:
            raise FormatError(f"{path}: truncated body")
    raw = np.frombuffer(body, dtype="<f4").reshape(height, width, 2)
    vectors = raw.astype(np.float64)
    finite = np.isfinite(vectors)
    valid = (np.abs(vectors) <= UNKNOWN_FLOW_THRESHOLD).all(axis=2) & finite.all(axis=2)
    if not finite.all():
        vectors = np.where(finite, vectors, 1e10)
    return FlowField(vectors), valid


def write_flo(field, path):
    """Write a flow field as .flo; accepts a FlowField or an (H, W, 2) array."""
    vectors = field.vectors if isinstance(field, FlowField) else np.asarray(field, dtype=np.float64)
    if vectors.ndim != 3 or vectors.shape[2] != 2:
        raise FormatError("flow must be HxWx2")
    height, width = vectors.shape[:2]
    if width <= 0 or height <= 0:
        raise FormatError("non-positive dimensions")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, width, height))
        fh.write(vectors.astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# Match lists
# ---------------------------------------------------------------------------

def read_matches(path, width=None, height=None):
    """Parse a whitespace-separated match file.

    Each data line holds at least `x1 y1 x2 y2`; further columns (scores,
    etc.) are ignored and '#' starts a comment. When image-1 dimensions
    are given, matches whose source position falls outside
    [0, width-1] x [0, height-1] are dropped.

    Returns (MatchSet, rejected) where `rejected` counts dropped
    out-of-bounds matches.
    """
    rows = []
    rejected = 0
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            tokens = text.split()
            if len(tokens) < 4:
                raise FormatError(f"{path}: malformed line {lineno}")
            try:
                values = [float(tok) for tok in tokens[:4]]
            except ValueError as exc:
                raise FormatError(f"{path}: malformed line {lineno}") from exc
            if not all(np.isfinite(v) for v in values):
                raise FormatError(f"{path}: malformed line {lineno}")
            x1, y1 = values[0], values[1]
            if width is not None and height is not None:
                if not (0.0 <= x1 <= width - 1 and 0.0 <= y1 <= height - 1):
                    rejected += 1
                    continue
            rows.append(values)
    coords = np.asarray(rows, dtype=np.float64).reshape(len(rows), 4)
    return MatchSet(coords), rejected


def write_matches(matches, path):
    """Write a MatchSet in the plain `x1 y1 x2 y2` text layout.

    Coordinates use shortest round-trip decimals, so reading the file
    back recovers the exact values.
    """
    with open(path, "w", encoding="ascii") as fh:
        for x1, y1, x2, y2 in matches.coords:
            fh.write(f"{float(x1)!r} {float(y1)!r} {float(x2)!r} {float(y2)!r}\n")


# ---------------------------------------------------------------------------
# PNM rasters (P5/P6) and PFM float maps
# ---------------------------------------------------------------------------

def _next_token(fh, path):
    token = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise FormatError(f"{path}: truncated header")
        if ch == b"#":
            while ch and ch != b"\n":
                ch = fh.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def _next_int(fh, path):
    token = _next_token(fh, path)
    try:
        return int(token)
    except ValueError as exc:
        raise FormatError(f"{path}: bad header token {token!r}") from exc


def read_pnm(path):
    """Read a binary P5/P6 file into float64 in [0, 1]; (H, W) or (H, W, 3)."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic not in (b"P5", b"P6"):
            raise FormatError(f"{path}: unsupported format {magic!r}")
        width = _next_int(fh, path)
        height = _next_int(fh, path)
        maxval = _next_int(fh, path)
        if width <= 0 or height <= 0:
            raise FormatError(f"{path}: non-positive dimensions {width}x{height}")
        if not 0 < maxval < 65536:
            raise FormatError(f"{path}: bad maxval {maxval}")
        channels = 3 if magic == b"P6" else 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        count = width * height * channels
        body = fh.read(count * dtype.itemsize)
        if len(body) < count * dtype.itemsize:
            raise FormatError(f"{path}: truncated body")
    values = np.frombuffer(body, dtype=dtype).astype(np.float64) / maxval
    if channels == 1:
        return values.reshape(height, width)
    return values.reshape(height, width, 3)


def write_pnm(values, path, maxval=255):
    """Write [0, 1] data as binary P5 (grayscale) or P6 (RGB).

    Quantization rounds to the nearest level, so a read/write round-trip
    of any file produced here is byte-identical.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError("raster must be HxW or HxWx3")
    if arr.shape[0] <= 0 or arr.shape[1] <= 0:
        raise FormatError("non-positive dimensions")
    if not 0 < maxval < 65536:
        raise FormatError(f"bad maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    quantized = np.rint(np.clip(arr, 0.0, 1.0) * maxval).astype(dtype)
    header = b"%s\n%d %d\n%d\n" % (magic, arr.shape[1], arr.shape[0], maxval)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(quantized.tobytes())


def read_pfm(path):
    """Read a grayscale "Pf" float map; rows are stored bottom-up."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"Pf":
            raise FormatError(f"{path}: unsupported float-map format {magic!r}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError(f"{path}: bad dimension line")
        try:
            width, height = int(dims[0]), int(dims[1])
            scale = float(fh.readline())
        except ValueError as exc:
            raise FormatError(f"{path}: bad header") from exc
        if width <= 0 or height <= 0:
            raise FormatError(f"{path}: non-positive dimensions {width}x{height}")
        if scale == 0.0:
            raise FormatError(f"{path}: zero scale")
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height
        body = fh.read(count * 4)
        if len(body) < count * 4:
            raise FormatError(f"{path}: truncated body")
    values = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return np.flipud(values).astype(np.float64)


def write_pfm(values, path):
    """Write a grayscale float map (little-endian, bottom-up rows)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] <= 0 or arr.shape[1] <= 0:
        raise FormatError("float map must be HxW with positive dimensions")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n%d %d\n-1.0\n" % (arr.shape[1], arr.shape[0]))
        fh.write(np.flipud(arr).astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# Typed wrappers
# ---------------------------------------------------------------------------

def read_image(path):
    """Read a P5/P6 raster as an Image."""
    return Image(read_pnm(path))


def read_cost_map(path, expect_shape=None):
    """Read a cost map from a P5 PGM or a Pf float map.

    Negative float-map values are clamped to zero; the clamp count is
    returned so callers can surface a warning. `expect_shape` (height,
    width) enforces agreement with a paired image.
    """
    with open(path, "rb") as fh:
        magic = fh.read(2)
    clamped = 0
    if magic == b"Pf":
        values = read_pfm(path)
        negative = values < 0
        clamped = int(negative.sum())
        if clamped:
            values = np.where(negative, 0.0, values)
    elif magic == b"P5":
        values = read_pnm(path)
    else:
        raise FormatError(f"{path}: unsupported cost-map format {magic!r}")
    if expect_shape is not None and values.shape != tuple(expect_shape):
        raise FormatError(
            f"{path}: dimensions {values.shape} do not match paired input {tuple(expect_shape)}"
        )
    return CostMap(values), clamped


def read_mask(path, expect_shape=None):
    """Read a PGM mask; nonzero pixels mark occluded/invalid positions."""
    values = read_pnm(path)
    if values.ndim != 2:
        raise FormatError(f"{path}: mask must be grayscale")
    if expect_shape is not None and values.shape != tuple(expect_shape):
        raise FormatError(
            f"{path}: dimensions {values.shape} do not match paired input {tuple(expect_shape)}"
        )
    return OcclusionMask(values > 0)


def write_label_map(labels, path):
    """Dump integer labels as a PGM for visual inspection of cell layouts."""
    labels = np.asarray(labels)
    top = int(labels.max()) if labels.size else 0
    maxval = min(max(top, 1), 65535)
    write_pnm(np.clip(labels, 0, maxval) / maxval, path, maxval=maxval)
