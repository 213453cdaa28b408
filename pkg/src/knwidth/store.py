"""On-disk formats: the PODS1 matrix container and 17-digit CSV tables."""
from __future__ import annotations

import csv
import io
import os
import struct
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "StoreFormatError", "dumps_store", "loads_store", "write_store", "read_store",
           "write_csv", "read_csv", "format_float"]

MAGIC = b"PODS1\n"


class StoreFormatError(ValueError):
    pass


def dumps_store(entries: dict) -> bytes:
    """Serialize named arrays; 1-d arrays are stored as single columns."""
    out = [MAGIC]
    for name, arr in entries.items():
        a = np.asarray(arr, dtype="<f8")
        if a.ndim == 1:
            a = a[:, None]
        elif a.ndim == 0:
            a = a.reshape(1, 1)
        elif a.ndim != 2:
            raise ValueError(f"entry {name!r} has {a.ndim} dimensions")
        key = name.encode("utf-8")
        out.append(struct.pack("<I", len(key)))
        out.append(key)
        out.append(struct.pack("<QQ", *a.shape))
        out.append(np.ascontiguousarray(a).tobytes())
    return b"".join(out)


def loads_store(data: bytes) -> dict[str, np.ndarray]:
    if not data.startswith(MAGIC):
        raise StoreFormatError("not a PODS1 store (bad magic)")
    pos = len(MAGIC)
    entries = {}
    try:
        while pos < len(data):
            (klen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos: pos + klen].decode("utf-8")
            if len(name.encode("utf-8")) != klen:
                raise StoreFormatError("truncated entry name")
            pos += klen
            rows, cols = struct.unpack_from("<QQ", data, pos)
            pos += 16
            nbytes = 8 * rows * cols
            if pos + nbytes > len(data):
                raise StoreFormatError(f"truncated payload for entry {name!r}")
            a = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols)
            entries[name] = a.astype(np.float64)
            pos += nbytes
    except (struct.error, UnicodeDecodeError) as exc:
        raise StoreFormatError(f"truncated or corrupt store: {exc}") from None
    return entries


def write_store(path, entries: dict) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps_store(entries))
    os.replace(tmp, path)


def read_store(path) -> dict[str, np.ndarray]:
    return loads_store(Path(path).read_bytes())


def format_float(x: float) -> str:
    return "%.17g" % x


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue(), newline="")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise StoreFormatError(f"{path}: empty CSV")
    return rows[0], rows[1:]
