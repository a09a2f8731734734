"""
Binary Netpbm (P6/P5), PFM and ASCII PLY readers/writers.

PPM/PGM are written with maxval 255 and a single-whitespace header so files
are byte-for-byte reproducible. PFM follows the Middlebury convention:
"Pf", little-endian float32 (negative scale), bottom row first, +inf for
invalid pixels.
"""

import logging

import numpy as np

from errors import ImageFormatError

logger = logging.getLogger(__name__)


# ── Header parsing ───────────────────────────────────────────────────────

def _read_token(f):
    """Next whitespace-delimited header token, skipping '#' comments."""
    token = b""
    while True:
        c = f.read(1)
        if not c:
            if token:
                return token.decode("ascii")
            raise ImageFormatError("Unexpected end of file in header")
        if c == b"#" and not token:
            f.readline()
            continue
        if c.isspace():
            if token:
                return token.decode("ascii")
            continue
        token += c


def _read_line(f):
    line = f.readline()
    if not line:
        raise ImageFormatError("Unexpected end of file in header")
    return line.decode("ascii").strip()


# ── Netpbm ───────────────────────────────────────────────────────────────

def write_ppm(path, image):
    """Write an (H, W, 3) uint8 array as binary P6."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError(f"PPM needs an (H, W, 3) array, got shape {image.shape}")
    data = np.clip(image, 0, 255).astype(np.uint8)
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(data).tobytes())
    logger.debug(f"Wrote PPM {path} ({w}x{h})")


def write_pgm(path, image):
    """Write an (H, W) array as binary P5."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ImageFormatError(f"PGM needs an (H, W) array, got shape {image.shape}")
    data = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(data).tobytes())
    logger.debug(f"Wrote PGM {path} ({w}x{h})")


def _read_pnm(path, magic, channels):
    with open(path, "rb") as f:
        found = _read_token(f)
        if found != magic:
            raise ImageFormatError(f"{path}: expected {magic} header, found {found!r}")
        try:
            w = int(_read_token(f))
            h = int(_read_token(f))
            maxval = int(_read_token(f))
        except ValueError as e:
            raise ImageFormatError(f"{path}: bad header: {e}") from e
        if maxval != 255:
            raise ImageFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
        data = f.read(w * h * channels)
    if len(data) != w * h * channels:
        raise ImageFormatError(f"{path}: truncated pixel data ({len(data)} of {w * h * channels} bytes)")
    arr = np.frombuffer(data, dtype=np.uint8)
    return arr.reshape((h, w, channels) if channels > 1 else (h, w)).copy()


def read_ppm(path):
    return _read_pnm(path, "P6", 3)


def read_pgm(path):
    return _read_pnm(path, "P5", 1)


# ── PFM ──────────────────────────────────────────────────────────────────

def write_pfm(path, values, invalid_mask=None):
    """Write a single-channel float map. Pixels under `invalid_mask` become +inf."""
    data = np.asarray(values, dtype=np.float32).copy()
    if data.ndim != 2:
        raise ImageFormatError(f"PFM needs an (H, W) array, got shape {data.shape}")
    if invalid_mask is not None:
        data[np.asarray(invalid_mask, dtype=bool)] = np.inf
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(data).astype("<f4").tobytes())
    logger.debug(f"Wrote PFM {path} ({w}x{h})")


def read_pfm(path):
    """Read a Pf file into an (H, W) float32 array, top row first."""
    with open(path, "rb") as f:
        identifier = _read_line(f)
        if identifier == "PF":
            raise ImageFormatError(f"{path}: color PFM is not supported")
        if identifier != "Pf":
            raise ImageFormatError(f"{path}: unrecognized identifier line {identifier!r}")
        dims = _read_line(f).split()
        if len(dims) != 2:
            raise ImageFormatError(f"{path}: could not parse dimensions line {dims!r}")
        w, h = int(dims[0]), int(dims[1])
        scale = float(_read_line(f))
        dtype = "<f4" if scale < 0 else ">f4"
        data = f.read(w * h * 4)
    if len(data) != w * h * 4:
        raise ImageFormatError(f"{path}: truncated PFM data")
    arr = np.frombuffer(data, dtype=dtype).reshape(h, w)
    return np.flipud(arr).astype(np.float32)


# ── PLY ──────────────────────────────────────────────────────────────────

def write_ply(path, points):
    """ASCII PLY with float x, y, z vertex properties."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("ply\n")
        f.write("format ascii 1.0\n")
        f.write(f"element vertex {len(pts)}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        f.write("end_header\n")
        for x, y, z in pts:
            f.write(f"{x:.6f} {y:.6f} {z:.6f}\n")
    logger.debug(f"Wrote PLY {path} ({len(pts)} vertices)")


def read_ply(path):
    with open(path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ImageFormatError(f"{path}: missing 'ply' magic")
    count = None
    body = None
    for i, line in enumerate(lines):
        line = line.strip()
        if line.startswith("element vertex"):
            count = int(line.split()[-1])
        elif line == "end_header":
            body = i + 1
            break
    if count is None or body is None:
        raise ImageFormatError(f"{path}: no vertex element")
    rows = [line.split() for line in lines[body:body + count]]
    if len(rows) != count:
        raise ImageFormatError(f"{path}: expected {count} vertices, found {len(rows)}")
    return np.array(rows, dtype=np.float64).reshape(-1, 3)
