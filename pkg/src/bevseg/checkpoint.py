"""Bit-exact named-array checkpoint files.

Layout: magic "BEVT", format version u32, array count u32; then per
array (names sorted): name length u32 + UTF-8 name, dtype tag u8
(0 = f32, 1 = f64), rank u32, dims u64 each, raw values.  All integers
and values little-endian.  Optimizer state rides along under the
"opt/" name prefix.
"""

import struct

import numpy as np

__all__ = ["save_arrays", "load_arrays", "save_model", "load_model"]

MAGIC = b"BEVT"
VERSION = 1
_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_arrays(path, arrays):
    """arrays: {name: float32/float64 ndarray}."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(arrays)))
        for name in sorted(arrays):
            arr = np.asarray(arrays[name])
            if not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)  # keeps 0-d shapes intact
            if arr.dtype not in _TAGS:
                raise TypeError(f"{name}: unsupported dtype {arr.dtype}")
            enc = name.encode("utf-8")
            fh.write(struct.pack("<I", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<BI", _TAGS[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError(f"truncated checkpoint while reading {what}")
    return buf


def load_arrays(path):
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, nlen, "name").decode("utf-8")
            tag, rank = struct.unpack("<BI", _read_exact(fh, 5, "dtype/rank"))
            if tag not in _DTYPES:
                raise ValueError(f"{name}: unknown dtype tag {tag}")
            dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, "dims"))
            dt = _DTYPES[tag]
            n = int(np.prod(dims, dtype=np.int64)) if rank else 1
            raw = _read_exact(fh, n * dt.itemsize, f"data of {name}")
            out[name] = np.frombuffer(raw, dtype=dt).reshape(dims).copy()
        return out


def save_model(path, model, optimizer=None, extra=None):
    """Parameters + float buffers, optionally optimizer state under
    "opt/" and extra scalar arrays (e.g. training progress counters)."""
    arrays = {name: p.data for name, p in model.named_parameters()}
    for name, buf in model.named_buffers():
        if np.issubdtype(buf.data.dtype, np.floating):
            arrays[name] = buf.data
    if optimizer is not None:
        named = list(model.named_parameters())
        arrays.update(optimizer.state_arrays(named))
    if extra:
        arrays.update(extra)
    save_arrays(path, arrays)


def load_model(path, model, optimizer=None, strict=True):
    """Returns the arrays that were neither parameters, buffers, nor
    optimizer state (the caller's extras)."""
    arrays = load_arrays(path)
    used = set()
    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    for name, p in params.items():
        if name not in arrays:
            if strict:
                raise ValueError(f"checkpoint missing parameter {name}")
            continue
        arr = arrays[name]
        if arr.shape != p.data.shape:
            raise ValueError(f"{name}: shape {arr.shape} != {p.data.shape}")
        p.data = arr.astype(p.data.dtype, copy=False)
        used.add(name)
    for name, b in buffers.items():
        if name in arrays:
            b.data = arrays[name].astype(b.data.dtype, copy=False)
            used.add(name)
        elif strict and np.issubdtype(b.data.dtype, np.floating):
            raise ValueError(f"checkpoint missing buffer {name}")
    if optimizer is not None:
        named = list(model.named_parameters())
        used |= optimizer.load_state_arrays(named, arrays)
    return {k: v for k, v in arrays.items() if k not in used}
