"""Text formats: far-field data files, map CSV, PGM slices, JSON."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .em_kernels import FarFieldData, Incidence
from .imaging import ImageMap
from .sphere_math import SphereQuadrature, Triad

__all__ = [
    "read_far_field",
    "read_far_field_set",
    "write_far_field",
    "write_json",
    "write_map_csv",
    "write_pgm_slices",
]

FORMAT_TAG = "tdscope far-field v1"
_FLOAT = "%.17g"


def _vec(v) -> str:
    return " ".join(_FLOAT % x for x in v)


def write_far_field(path, data: FarFieldData, config_hash: str) -> None:
    """Write one dataset.

    Header lines start with ``#``; each data row is
    ``wx wy wz weight Re(E1) Im(E1) Re(E2) Im(E2) Re(E3) Im(E3)``.
    """
    q, inc = data.quad, data.incidence
    header = "\n".join(
        [
            FORMAT_TAG,
            f"config_hash {config_hash}",
            f"nodes {q.count}",
            f"scheme {q.scheme_id} {q.degree}",
            f"theta {_vec(inc.triad.theta)}",
            f"perp1 {_vec(inc.triad.perp1)}",
            f"perp2 {_vec(inc.triad.perp2)}",
            f"pol_index {inc.pol_index}",
            f"corrupted {int(data.corrupted)}",
            "columns wx wy wz weight re_e1 im_e1 re_e2 im_e2 re_e3 im_e3",
        ]
    )
    s = data.samples
    rows = np.column_stack(
        (q.nodes, q.weights, s[:, 0].real, s[:, 0].imag, s[:, 1].real, s[:, 1].imag, s[:, 2].real, s[:, 2].imag)
    )
    np.savetxt(path, rows, fmt=_FLOAT, header=header, comments="# ")


def _parse_header(path) -> dict:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[2:].rstrip("\n")
            if body == FORMAT_TAG:
                meta["tag"] = body
                continue
            key, _, value = body.partition(" ")
            meta[key] = value
    if meta.get("tag") != FORMAT_TAG:
        raise ValueError(f"{path}: not a tdscope far-field file")
    return meta


def read_far_field(path, quad: SphereQuadrature | None = None) -> tuple[FarFieldData, str]:
    """Read one dataset; returns ``(data, config_hash)``.

    Pass ``quad`` to attach an existing quadrature (nodes and weights must
    match the file exactly).
    """
    meta = _parse_header(path)
    rows = np.loadtxt(path, comments="#", ndmin=2)
    if rows.shape != (int(meta["nodes"]), 10):
        raise ValueError(f"{path}: expected {meta['nodes']} rows of 10 columns")
    nodes, weights = rows[:, :3], rows[:, 3]
    if quad is None:
        scheme, degree = meta["scheme"].split()
        nodes.setflags(write=False)
        weights.setflags(write=False)
        quad = SphereQuadrature(nodes, weights, scheme, int(degree))
    elif not (np.array_equal(quad.nodes, nodes) and np.array_equal(quad.weights, weights)):
        raise ValueError(f"{path}: quadrature differs from the other files")

    def vec(key):
        return np.array([float(x) for x in meta[key].split()])

    triad = Triad(vec("theta"), vec("perp1"), vec("perp2"))
    samples = rows[:, 4::2] + 1j * rows[:, 5::2]
    data = FarFieldData(Incidence(triad, int(meta["pol_index"])), quad, samples, bool(int(meta["corrupted"])))
    return data, meta["config_hash"]


def read_far_field_set(paths) -> tuple[list[FarFieldData], set[str]]:
    """Read several files sharing one quadrature; returns data and the hashes seen."""
    datasets, hashes, quad = [], set(), None
    for p in paths:
        data, h = read_far_field(p, quad)
        quad = data.quad
        datasets.append(data)
        hashes.add(h)
    return datasets, hashes


def write_map_csv(path, image: ImageMap) -> None:
    """CSV ``x,y,z,value``, one row per grid point, x fastest."""
    rows = np.column_stack((image.grid.points(), image.values))
    np.savetxt(path, rows, fmt=_FLOAT, delimiter=",", header="x,y,z,value", comments="")


def _to_pgm(plane: np.ndarray) -> bytes:
    lo, hi = float(plane.min()), float(plane.max())
    if hi > lo:
        scaled = np.rint((plane - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(plane)
    pixels = scaled.astype(np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes()


def write_pgm_slices(directory, image: ImageMap, index) -> list[str]:
    """Binary 8-bit PGM slices through grid index ``(ix, iy, iz)``.

    Each slice is min-max normalized on its own to 0..255. Image rows run
    along the second named axis (``slice_xy``: rows = y, columns = x).
    """
    vol = image.volume()  # (z, y, x)
    ix, iy, iz = index
    planes = {
        "slice_xy.pgm": vol[iz, :, :],
        "slice_xz.pgm": vol[:, iy, :],
        "slice_yz.pgm": vol[:, :, ix],
    }
    directory = Path(directory)
    for name, plane in planes.items():
        (directory / name).write_bytes(_to_pgm(plane))
    return sorted(planes)


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path, payload: dict) -> None:
    """Deterministic JSON: sorted keys, non-finite floats written as null."""
    Path(path).write_text(json.dumps(_clean(payload), indent=2, sort_keys=True, allow_nan=False) + "\n")
