"""Netpbm graymap (P2/P5) and pixmap (P3/P6) reading and writing."""

from __future__ import annotations

import numpy as np

from .errors import FormatError

_WHITESPACE = b" \t\n\r\v\f"


def _header(buf):
    """Parse magic, width, height, maxval; return them and the payload offset."""
    if len(buf) < 2 or buf[:1] != b"P" or buf[1:2] not in b"2356":
        raise FormatError("not a netpbm graymap/pixmap (bad magic)", 0)
    magic = buf[:2].decode()
    pos = 2
    values = []
    while len(values) < 3:
        while pos < len(buf) and buf[pos] in _WHITESPACE:
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed header: expected a decimal number", start)
        values.append(int(buf[start:pos]))
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise FormatError("malformed header: missing whitespace after maxval", pos)
    width, height, maxval = values
    if width < 1 or height < 1:
        raise FormatError(f"bad image size {width}x{height}", pos)
    if not 1 <= maxval <= 65535:
        raise FormatError(f"unsupported maxval {maxval}", pos)
    return magic, width, height, maxval, pos + 1


def parse(buf):
    """Decode a netpbm buffer to an ``[H, W]`` or ``[H, W, 3]`` integer array and its maxval."""
    magic, width, height, maxval, pos = _header(buf)
    channels = 3 if magic in ("P3", "P6") else 1
    count = width * height * channels
    if magic in ("P5", "P6"):
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(buf) - pos < need:
            raise FormatError(f"truncated payload: need {need} bytes, have {len(buf) - pos}", len(buf))
        data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).astype(np.int64)
    else:
        tokens = []
        for line in buf[pos:].splitlines():
            tokens.extend(line.split(b"#", 1)[0].split())
        if len(tokens) < count:
            raise FormatError(f"truncated payload: need {count} samples, have {len(tokens)}", len(buf))
        try:
            data = np.array([int(t) for t in tokens[:count]], dtype=np.int64)
        except ValueError as exc:
            raise FormatError(f"malformed sample: {exc}", pos) from None
    if data.size and data.max() > maxval:
        raise FormatError(f"sample {data.max()} exceeds maxval {maxval}", pos)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return data.reshape(shape), maxval


def read(path):
    with open(path, "rb") as fh:
        return parse(fh.read())


def load_image(path):
    """Image as a ``[C, H, W]`` float array in ``[0, 1]`` (C is 1 or 3)."""
    data, maxval = read(path)
    arr = data.astype(np.float64) / maxval
    return arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)


def _encode(magic, pixels, comment):
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise ValueError("only 8-bit samples are written")
    h, w = pixels.shape[:2]
    head = magic + b"\n"
    if comment:
        for line in comment.splitlines():
            head += b"# " + line.encode() + b"\n"
    head += f"{w} {h}\n255\n".encode()
    return head + np.ascontiguousarray(pixels).tobytes()


def write_pgm(path, pixels, comment=None):
    """Binary graymap from an ``[H, W]`` uint8 array."""
    if np.ndim(pixels) != 2:
        raise ValueError(f"graymap needs [H, W], got {np.shape(pixels)}")
    with open(path, "wb") as fh:
        fh.write(_encode(b"P5", pixels, comment))


def write_ppm(path, pixels, comment=None):
    """Binary pixmap from an ``[H, W, 3]`` uint8 array."""
    if np.ndim(pixels) != 3 or np.shape(pixels)[2] != 3:
        raise ValueError(f"pixmap needs [H, W, 3], got {np.shape(pixels)}")
    with open(path, "wb") as fh:
        fh.write(_encode(b"P6", pixels, comment))


def save_image(path, image):
    """Write a ``[C, H, W]`` array in ``[0, 1]`` as an 8-bit graymap (C=1) or pixmap (C=3)."""
    img = np.asarray(image, dtype=np.float64)
    q = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if q.shape[0] == 1:
        write_pgm(path, q[0])
    elif q.shape[0] == 3:
        write_ppm(path, q.transpose(1, 2, 0))
    else:
        raise ValueError(f"cannot save {q.shape[0]}-channel image")
