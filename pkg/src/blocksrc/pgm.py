"""PGM (portable graymap) reading and writing, P2 and P5 variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GrayImage:
    width: int
    height: int
    maxval: int
    pixels: np.ndarray  # (height, width) integer intensities in [0, maxval]

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.shape != (self.height, self.width):
            raise ValueError(f"pixel grid {px.shape} does not match {self.height}x{self.width}")
        if self.maxval < 1 or self.maxval > 65535:
            raise ValueError(f"maxval must be in [1, 65535], got {self.maxval}")
        if px.min() < 0 or px.max() > self.maxval:
            raise ValueError("pixel values outside [0, maxval]")
        object.__setattr__(self, "pixels", px.astype(np.uint16))


class _Scanner:
    """Whitespace/comment-aware token scanner over raw PGM bytes."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _skip_filler(self):
        while self.pos < len(self.data):
            c = self.data[self.pos]
            if c in b" \t\r\n":
                self.pos += 1
            elif c == ord("#"):
                while self.pos < len(self.data) and self.data[self.pos] not in b"\r\n":
                    self.pos += 1
            else:
                return

    def token(self) -> bytes:
        self._skip_filler()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos] not in b" \t\r\n":
            self.pos += 1
        if start == self.pos:
            raise ValueError("truncated header: expected another token")
        return self.data[start : self.pos]

    def int_token(self, what: str) -> int:
        tok = self.token()
        try:
            return int(tok)
        except ValueError:
            raise ValueError(f"bad {what} token {tok!r}") from None


def parse_pgm(data: bytes) -> GrayImage:
    """Decode a P5 (binary) or P2 (ASCII) graymap.

    Header comments are skipped; maxval up to 65535 is supported, with
    two-byte big-endian samples when maxval > 255.
    """
    if not isinstance(data, (bytes, bytearray)):
        raise ValueError("expected raw bytes")
    sc = _Scanner(bytes(data))
    magic = sc.token()
    if magic not in (b"P5", b"P2"):
        raise ValueError(f"bad magic {magic!r}: expected P5 or P2")
    width = sc.int_token("width")
    height = sc.int_token("height")
    maxval = sc.int_token("maxval")
    if width < 1 or height < 1:
        raise ValueError(f"bad dimensions {width}x{height}")
    if maxval < 1 or maxval > 65535:
        raise ValueError(f"maxval {maxval} outside [1, 65535]")

    count = width * height
    if magic == b"P5":
        sc.pos += 1  # single whitespace byte separates header from raster
        body = sc.data[sc.pos :]
        wide = maxval > 255
        need = count * (2 if wide else 1)
        if len(body) < need:
            raise ValueError(f"truncated raster: expected {need} bytes, got {len(body)}")
        dtype = ">u2" if wide else np.uint8
        flat = np.frombuffer(body[:need], dtype=dtype).astype(np.uint16)
    else:
        vals = []
        for _ in range(count):
            vals.append(sc.int_token("pixel"))
        flat = np.asarray(vals, dtype=np.uint16)
    if flat.max(initial=0) > maxval:
        raise ValueError("pixel value exceeds maxval")
    return GrayImage(width=width, height=height, maxval=maxval, pixels=flat.reshape(height, width))


def encode_pgm(img: GrayImage) -> bytes:
    """Encode as binary P5; two-byte big-endian samples when maxval > 255."""
    header = f"P5\n{img.width} {img.height}\n{img.maxval}\n".encode("ascii")
    if img.maxval > 255:
        body = img.pixels.astype(">u2").tobytes()
    else:
        body = img.pixels.astype(np.uint8).tobytes()
    return header + body


def write_pgm(path, img: GrayImage) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img))


def read_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def image_from_array(arr: np.ndarray, maxval: int = 255) -> GrayImage:
    arr = np.asarray(arr)
    return GrayImage(width=arr.shape[1], height=arr.shape[0], maxval=maxval, pixels=arr)
