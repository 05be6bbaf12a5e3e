"""Little-endian byte packing primitives.

Strings are u8-length-prefixed UTF-8, integers little-endian, floats IEEE
f64. Both the wire protocol and the learner payload codecs are built out of
these.
"""
from __future__ import annotations

import struct

import numpy as np


class Writer:
    def __init__(self):
        self._buf = bytearray()

    def u8(self, v: int) -> "Writer":
        self._buf.append(v & 0xFF)
        return self

    def u32(self, v: int) -> "Writer":
        self._buf += struct.pack("<I", v)
        return self

    def u64(self, v: int) -> "Writer":
        self._buf += struct.pack("<Q", v)
        return self

    def f64(self, v: float) -> "Writer":
        self._buf += struct.pack("<d", v)
        return self

    def pstr(self, s: str) -> "Writer":
        raw = s.encode("utf-8")
        if len(raw) > 255:
            raise ValueError(f"string too long for u8 prefix: {len(raw)} bytes")
        self._buf.append(len(raw))
        self._buf += raw
        return self

    def raw(self, b: bytes) -> "Writer":
        self._buf += b
        return self

    def f64_array(self, a: np.ndarray) -> "Writer":
        a = np.ascontiguousarray(a, dtype="<f8")
        self.u64(a.size)
        self._buf += a.tobytes()
        return self

    def u32_array(self, a: np.ndarray) -> "Writer":
        a = np.ascontiguousarray(a, dtype="<u4")
        self.u64(a.size)
        self._buf += a.tobytes()
        return self

    def bitmap(self, bits: np.ndarray) -> "Writer":
        bits = np.asarray(bits, dtype=bool).ravel()
        self.u64(bits.size)
        self._buf += np.packbits(bits, bitorder="little").tobytes()
        return self

    def getvalue(self) -> bytes:
        return bytes(self._buf)


class Reader:
    """Sequential reader; raises `error` (default ValueError) on underflow."""

    def __init__(self, data: bytes, error: type[Exception] = ValueError):
        self._data = data
        self._pos = 0
        self._error = error

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise self._error(
                f"buffer underflow: need {n} bytes at offset {self._pos}, "
                f"have {len(self._data) - self._pos}"
            )
        out = self._data[self._pos:self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def pstr(self) -> str:
        n = self.u8()
        try:
            return self._take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise self._error(f"bad utf-8 string: {exc}") from exc

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def f64_array(self) -> np.ndarray:
        n = self.u64()
        return np.frombuffer(self._take(8 * n), dtype="<f8").copy()

    def u32_array(self) -> np.ndarray:
        n = self.u64()
        return np.frombuffer(self._take(4 * n), dtype="<u4").astype(np.int64)

    def bitmap(self) -> np.ndarray:
        nbits = self.u64()
        nbytes = (nbits + 7) // 8
        packed = np.frombuffer(self._take(nbytes), dtype=np.uint8)
        return np.unpackbits(packed, count=nbits, bitorder="little").astype(bool)

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise self._error(f"{len(self._data) - self._pos} trailing bytes")
