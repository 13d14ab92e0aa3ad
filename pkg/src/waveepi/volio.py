"""Volume file I/O and grayscale renders.

A volume is stored as a JSON header (<name>.json) plus a sibling raw
little-endian payload (<name>.raw), x-fastest axis order. Writes are
atomic (temp file in the target directory, then rename) and round-trip
bit-exact.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

_DTYPES = {"complex64": "<c8", "float32": "<f4", "complex128": "<c16"}


class VolumeFormatError(ValueError):
    pass


def _atomic_write(path: str, payload: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-volio-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _paths(path: str) -> tuple[str, str]:
    base, ext = os.path.splitext(path)
    if ext not in (".json", ""):
        raise VolumeFormatError(f"volume path must end in .json, got {path!r}")
    return base + ".json", base + ".raw"


def write_volume(
    path: str,
    data: np.ndarray,
    voxel_mm: tuple[float, float, float],
    dtype: str = "complex64",
    domain: tuple[str, ...] | None = None,
) -> None:
    """Write header (.json) and raw payload (.raw); atomic, bit-stable."""
    if dtype not in _DTYPES:
        raise VolumeFormatError(f"dtype must be one of {sorted(_DTYPES)}")
    header_path, payload_path = _paths(path)
    arr = np.asarray(data).astype(_DTYPES[dtype])
    header = {
        "dims": list(arr.shape),
        "dtype": dtype,
        "voxel_mm": [float(v) for v in voxel_mm],
        "axis_order": "x-fastest",
        "endianness": "little",
        "domain": list(domain) if domain is not None else ["image"] * min(arr.ndim, 3),
    }
    _atomic_write(payload_path, arr.tobytes(order="F"))
    _atomic_write(header_path, (json.dumps(header, sort_keys=True, indent=1) + "\n").encode())


def read_volume(path: str) -> tuple[np.ndarray, dict]:
    """Read a volume written by write_volume; returns (data, header)."""
    header_path, payload_path = _paths(path)
    with open(header_path, "rb") as f:
        header = json.loads(f.read().decode())
    for key in ("dims", "dtype", "voxel_mm", "axis_order", "endianness"):
        if key not in header:
            raise VolumeFormatError(f"header missing key {key!r}")
    if header["endianness"] != "little" or header["axis_order"] != "x-fastest":
        raise VolumeFormatError("unsupported axis order or endianness")
    if header["dtype"] not in _DTYPES:
        raise VolumeFormatError(f"unsupported dtype {header['dtype']!r}")
    dims = tuple(int(d) for d in header["dims"])
    itemsize = np.dtype(_DTYPES[header["dtype"]]).itemsize
    expected = int(np.prod(dims)) * itemsize
    with open(payload_path, "rb") as f:
        payload = f.read()
    if len(payload) != expected:
        raise VolumeFormatError(
            f"payload size mismatch: expected {expected} bytes, got {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype=_DTYPES[header["dtype"]]).reshape(dims, order="F")
    return arr, header


def write_pgm(path: str, image: np.ndarray, vmin: float | None = None, vmax: float | None = None) -> None:
    """8-bit binary PGM render of a 2D real image, with the windowing
    recorded in a .window.json sidecar."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise VolumeFormatError("PGM render expects a 2D image")
    lo = float(img.min() if vmin is None else vmin)
    hi = float(img.max() if vmax is None else vmax)
    span = hi - lo
    scaled = np.zeros(img.shape, dtype=np.uint8) if span == 0 else np.clip(
        np.round((img - lo) / span * 255), 0, 255
    ).astype(np.uint8)
    h, w = img.shape
    _atomic_write(path, b"P5\n%d %d\n255\n" % (w, h) + scaled.tobytes())
    sidecar = {"min": lo, "max": hi}
    _atomic_write(
        path + ".window.json", (json.dumps(sidecar, sort_keys=True) + "\n").encode()
    )
