"""Binary netpbm I/O: P6 (PPM, RGB) and P5 (PGM, gray), maxval 255.

Values are floats in [0, 1]. Writing quantizes with round half up,
floor(v * 255 + 0.5); reading divides by 255, so a write/read round trip
moves a value by at most 1/510. Parse failures report the byte offset.
Writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import os

import numpy as np


class NetpbmError(ValueError):
    """Malformed or truncated netpbm file."""


def _quantize(a: np.ndarray) -> np.ndarray:
    q = np.floor(np.asarray(a, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(q, 0.0, 255.0).astype(np.uint8)


def atomic_write_bytes(path, data: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"PPM image must be (h, w, 3), got {img.shape}")
    h, w, _ = img.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + _quantize(img).tobytes())


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM image must be (h, w), got {img.shape}")
    h, w = img.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + _quantize(img).tobytes())


class _Scanner:
    """Tokenizer for the netpbm header: whitespace-separated tokens with
    # comments running to end of line."""

    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.off = 0
        self.path = path

    def fail(self, msg: str, at: int | None = None):
        where = self.off if at is None else at
        raise NetpbmError(f"{self.path}: {msg} at byte {where}")

    def token(self, what: str) -> bytes:
        b = self.blob
        n = len(b)
        while self.off < n:
            ch = b[self.off]
            if ch in b" \t\r\n\x0b\x0c":
                self.off += 1
            elif ch == ord("#"):
                while self.off < n and b[self.off] not in b"\r\n":
                    self.off += 1
            else:
                break
        if self.off >= n:
            self.fail(f"missing {what}")
        start = self.off
        while self.off < n and b[self.off] not in b" \t\r\n\x0b\x0c":
            self.off += 1
        return b[start:self.off]

    def int_token(self, what: str) -> int:
        start_guess = self.off
        tok = self.token(what)
        if not tok.isdigit():
            self.fail(f"expected integer {what}, found {tok[:16]!r}",
                      at=self.off - len(tok))
        return int(tok)


def _read(path, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    sc = _Scanner(blob, path)
    found = sc.token("magic")
    if found != magic:
        sc.fail(f"expected magic {magic.decode()}, found {found[:16]!r}", at=0)
    w = sc.int_token("width")
    h = sc.int_token("height")
    if w < 1 or h < 1:
        sc.fail(f"non-positive image size {w}x{h}")
    maxval = sc.int_token("maxval")
    if maxval != 255:
        sc.fail(f"unsupported maxval {maxval} (only 255)")
    # Exactly one whitespace byte separates the header from the raster.
    if sc.off >= len(blob) or blob[sc.off] not in b" \t\r\n\x0b\x0c":
        sc.fail("missing whitespace before pixel data")
    sc.off += 1
    need = w * h * channels
    if len(blob) - sc.off < need:
        sc.fail(f"truncated pixel data, need {need} bytes, have {len(blob) - sc.off}")
    raw = np.frombuffer(blob, dtype=np.uint8, count=need, offset=sc.off)
    shape = (h, w, channels) if channels > 1 else (h, w)
    return raw.reshape(shape).astype(np.float64) / 255.0


def read_ppm(path) -> np.ndarray:
    """(h, w, 3) float image in [0, 1]."""
    return _read(path, b"P6", 3)


def read_pgm(path) -> np.ndarray:
    """(h, w) float image in [0, 1]."""
    return _read(path, b"P5", 1)
