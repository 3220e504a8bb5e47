"""Little-endian helpers for the MV* binary container formats.

Every format starts with a 4-byte magic and a u32 version.  Readers work on a
fully loaded ``bytes`` object; files at desk scale fit in memory.
"""

import os
import struct

import numpy as np

from .errors import CorruptionError, FormatError

VERSION = 1


class Writer:
    def __init__(self, magic):
        self._parts = [magic, struct.pack("<I", VERSION)]

    def u8(self, value):
        self._parts.append(struct.pack("<B", value))

    def u32(self, value):
        self._parts.append(struct.pack("<I", value))

    def u64(self, value):
        self._parts.append(struct.pack("<Q", value))

    def string(self, value):
        raw = value.encode("utf-8")
        self.u32(len(raw))
        self._parts.append(raw)

    def array(self, values, dtype, order="C"):
        arr = np.asarray(values, dtype=np.dtype(dtype).newbyteorder("<"))
        self._parts.append(arr.tobytes(order=order))

    def getvalue(self):
        return b"".join(self._parts)

    def save(self, path):
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(self.getvalue())
        os.replace(tmp, path)


class Reader:
    def __init__(self, data, magic, name="file"):
        self._data = data
        self._pos = 0
        self._name = name
        if len(data) < 8 or data[:4] != magic:
            raise FormatError(f"{name}: bad magic, expected {magic!r}")
        self._pos = 4
        version = self.u32()
        if version != VERSION:
            raise FormatError(f"{name}: unsupported version {version}")

    @classmethod
    def open(cls, path, magic):
        with open(path, "rb") as fh:
            return cls(fh.read(), magic, name=str(path))

    def _take(self, size):
        end = self._pos + size
        if end > len(self._data):
            raise CorruptionError(
                f"{self._name}: truncated payload "
                f"(need {end} bytes, have {len(self._data)})"
            )
        chunk = self._data[self._pos:end]
        self._pos = end
        return chunk

    def u8(self):
        return struct.unpack("<B", self._take(1))[0]

    def u32(self):
        return struct.unpack("<I", self._take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self._take(8))[0]

    def string(self):
        size = self.u32()
        try:
            return self._take(size).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptionError(f"{self._name}: invalid UTF-8 string") from exc

    def array(self, dtype, count, shape=None, order="C"):
        dt = np.dtype(dtype).newbyteorder("<")
        raw = self._take(dt.itemsize * count)
        arr = np.frombuffer(raw, dtype=dt).astype(np.dtype(dtype), copy=True)
        if shape is not None:
            arr = arr.reshape(shape, order=order)
        return arr

    def finish(self):
        if self._pos != len(self._data):
            raise CorruptionError(
                f"{self._name}: {len(self._data) - self._pos} trailing bytes"
            )
