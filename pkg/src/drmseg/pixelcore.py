"""Image and label-map value types, netpbm codecs and preprocessing kernels.

Images are held as numpy arrays in row-major ``(height, width[, 3])`` layout.
Binary PPM (P6, maxval 255) carries color images; binary PGM (P5) carries
label maps (16-bit, big-endian) and boundary masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

__all__ = [
    "DecodeError",
    "EncodeError",
    "RgbImage",
    "GrayImage",
    "LabelMap",
    "decode_ppm",
    "encode_ppm",
    "decode_pgm",
    "encode_pgm16",
    "encode_pgm8",
    "decode_label_map",
    "luminance",
    "sobel_magnitude",
    "median_filter",
]


class DecodeError(ValueError):
    """Raised when a netpbm byte stream cannot be decoded."""


class EncodeError(ValueError):
    """Raised when a value cannot be represented in the target format."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit RGB image, ``data`` has shape ``(height, width, 3)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"RGB data must have shape (h, w, 3), got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if data.dtype != np.uint8:
            if np.any(data < 0) or np.any(data > 255):
                raise ValueError("channel values must lie in [0, 255]")
            data = data.astype(np.uint8)
        object.__setattr__(self, "data", _frozen(data))

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "RgbImage":
        arr = np.asarray(values, dtype=np.int64)
        if arr.size != width * height * 3:
            raise ValueError("data length must equal width * height * 3")
        return cls(arr.reshape(height, width, 3))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Scalar floating-point plane, ``data`` has shape ``(height, width)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"gray data must be a non-empty 2-D array, got {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise ValueError("gray values must be finite and non-negative")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel region ids, ``labels`` has shape ``(height, width)``.

    Construction only checks shape and sign so that raw external maps can be
    held before :func:`drmseg.initseg.validate_external` densifies them.
    :meth:`check` enforces the full invariants (dense ids, 4-connected regions).
    """

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.shape[0] < 1 or labels.shape[1] < 1:
            raise ValueError(f"labels must be a non-empty 2-D array, got {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("labels must be integers")
        if labels.min() < 0:
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int64)))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def num_regions(self) -> int:
        return int(self.labels.max()) + 1

    def is_dense(self) -> bool:
        return bool(np.all(np.bincount(self.labels.ravel()) > 0))

    def is_connected(self) -> bool:
        """True when every label forms exactly one 4-connected component."""
        from skimage.measure import label as cc_label

        components = cc_label(self.labels, background=-1, connectivity=1)
        return int(components.max()) == len(np.unique(self.labels))

    def check(self) -> "LabelMap":
        if not self.is_dense():
            raise ValueError("label ids are not dense in [0, numRegions)")
        if not self.is_connected():
            raise ValueError("some label is not a single 4-connected region")
        return self

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)


# -- netpbm codecs ---------------------------------------------------------

_WHITESPACE = b" \t\r\n\x0b\x0c"


def _read_header(buf: bytes, magic: bytes):
    """Parse magic, width, height, maxval; return them and the payload offset."""
    if buf[:2] != magic:
        raise DecodeError(f"bad magic number: expected {magic!r}, got {buf[:2]!r}")
    pos = 2
    fields = []
    names = ("width", "height", "maxval")
    while len(fields) < 3:
        if pos >= len(buf):
            raise DecodeError(f"truncated header: missing {names[len(fields)]}")
        ch = buf[pos : pos + 1]
        if ch in _WHITESPACE:
            pos += 1
        elif ch == b"#":
            eol = buf.find(b"\n", pos)
            pos = len(buf) if eol < 0 else eol + 1
        else:
            start = pos
            while pos < len(buf) and buf[pos : pos + 1] not in _WHITESPACE and buf[pos : pos + 1] != b"#":
                pos += 1
            token = buf[start:pos]
            if not token.isdigit():
                raise DecodeError(f"malformed {names[len(fields)]}: {token!r}")
            fields.append(int(token))
    if pos >= len(buf) or buf[pos : pos + 1] not in _WHITESPACE:
        raise DecodeError("malformed header: maxval must be followed by one whitespace byte")
    width, height, maxval = fields
    if width < 1:
        raise DecodeError(f"malformed width: {width}")
    if height < 1:
        raise DecodeError(f"malformed height: {height}")
    if not 0 < maxval < 65536:
        raise DecodeError(f"malformed maxval: {maxval}")
    return width, height, maxval, pos + 1


def decode_ppm(buf: bytes) -> RgbImage:
    """Decode a binary P6 PPM with maxval 255."""
    width, height, maxval, offset = _read_header(buf, b"P6")
    if maxval != 255:
        raise DecodeError(f"unsupported maxval: {maxval} (only 255 is accepted)")
    need = width * height * 3
    payload = buf[offset:]
    if len(payload) < need:
        raise DecodeError(f"truncated payload: expected {need} bytes, got {len(payload)}")
    data = np.frombuffer(payload[:need], dtype=np.uint8).reshape(height, width, 3)
    return RgbImage(data.copy())


def encode_ppm(img: RgbImage) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.data.tobytes()


def decode_pgm(buf: bytes) -> np.ndarray:
    """Decode a binary P5 PGM of any maxval into a 2-D integer array."""
    width, height, maxval, offset = _read_header(buf, b"P5")
    depth = 1 if maxval < 256 else 2
    need = width * height * depth
    payload = buf[offset:]
    if len(payload) < need:
        raise DecodeError(f"truncated payload: expected {need} bytes, got {len(payload)}")
    dtype = np.uint8 if depth == 1 else np.dtype(">u2")
    arr = np.frombuffer(payload[:need], dtype=dtype).reshape(height, width)
    return arr.astype(np.int64)


def encode_pgm16(lm: LabelMap) -> bytes:
    """Encode a label map as P5 with maxval 65535 and big-endian samples."""
    if lm.labels.max() > 65535:
        raise EncodeError(
            f"label overflow: {lm.num_regions} regions exceed the 16-bit range; remap first"
        )
    header = f"P5\n{lm.width} {lm.height}\n65535\n".encode("ascii")
    return header + lm.labels.astype(">u2").tobytes()


def encode_pgm8(mask: np.ndarray) -> bytes:
    """Encode a 2-D 0/255 mask (e.g. a boundary map) as 8-bit P5."""
    mask = np.asarray(mask)
    out = np.where(mask > 0, 255, 0).astype(np.uint8)
    header = f"P5\n{out.shape[1]} {out.shape[0]}\n255\n".encode("ascii")
    return header + out.tobytes()


def decode_label_map(buf: bytes) -> LabelMap:
    return LabelMap(decode_pgm(buf))


# -- kernels ---------------------------------------------------------------

_LUMA = np.array([0.299, 0.587, 0.114])


def luminance(img: RgbImage) -> GrayImage:
    return GrayImage(img.data.astype(np.float64) @ _LUMA)


def sobel_magnitude(img: GrayImage) -> GrayImage:
    """Sobel gradient magnitude with edge-replicated borders."""
    p = np.pad(img.data, 1, mode="edge")
    # rows r-1, r, r+1 and columns c-1, c, c+1 of the padded plane
    up, mid, down = p[:-2], p[1:-1], p[2:]
    smooth_v = up + 2.0 * mid + down
    gx = smooth_v[:, 2:] - smooth_v[:, :-2]
    left, centre, right = p[:, :-2], p[:, 1:-1], p[:, 2:]
    smooth_h = left + 2.0 * centre + right
    gy = smooth_h[2:, :] - smooth_h[:-2, :]
    return GrayImage(np.hypot(gx, gy))


def median_filter(img: GrayImage, radius: int) -> GrayImage:
    """Median over the ``(2r+1)^2`` window, borders replicated."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return img
    size = 2 * radius + 1
    return GrayImage(ndimage.median_filter(img.data, size=size, mode="nearest"))
