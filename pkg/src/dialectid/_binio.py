"""Versioned binary container: magic, version, JSON header, then named arrays.

Layout::

    4s magic | u32 version | u32 header length | header JSON (utf-8)
    then for each array listed in header["arrays"]: raw little-endian bytes
"""

import hashlib
import json
import struct

import numpy as np


class FormatError(ValueError):
    pass


def write_container(path, magic: bytes, version: int, meta: dict, arrays: dict) -> None:
    specs = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = "<f8" if arr.dtype.kind == "f" else "<i8"
        specs.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    header = dict(meta, arrays=specs)
    raw = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", magic, version, len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)


def read_container(path, magic: bytes, version: int):
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12:
            raise FormatError(f"{path}: truncated file")
        got, ver, hlen = struct.unpack("<4sII", head)
        if got != magic:
            raise FormatError(f"{path}: expected a {magic.decode()} file, found {got!r}")
        if ver != version:
            raise FormatError(f"{path}: unsupported version {ver}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {}
        for spec in header.pop("arrays"):
            dt = np.dtype(spec["dtype"])
            n = int(np.prod(spec["shape"], dtype=np.int64))
            buf = fh.read(n * dt.itemsize)
            if len(buf) != n * dt.itemsize:
                raise FormatError(f"{path}: truncated array {spec['name']}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype=dt).reshape(spec["shape"]).copy()
    return header, arrays


def config_hash(config: dict) -> str:
    raw = json.dumps(config, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(raw).hexdigest()[:16]
