"""File interchange: MatrixMarket matrices, XYZ point clouds, JSON reports.

MatrixMarket (coordinate and array variants) is the matrix interchange
format; reads go through scipy and always come back dense.  Point clouds
use the simple XYZ text layout (count, comment, then ``label x y z``
lines) with an optional JSON sidecar mapping labels to row multiplicities
(default 25 rows per point).  Floats are written with 17 significant
digits so write/read round trips are exact and reruns are bit-stable.
"""

from __future__ import annotations

import getpass
import hashlib
import json
import time
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse

from .ordering import PointCloud

__all__ = ["read_matrix_market", "write_matrix_market", "read_xyz", "write_xyz",
           "read_permutation", "write_permutation", "write_json", "read_json",
           "sha256_file", "build_manifest", "write_manifest", "read_manifest",
           "DEFAULT_MULTIPLICITY"]

DEFAULT_MULTIPLICITY = 25


def read_matrix_market(path) -> np.ndarray:
    """Read a MatrixMarket file (any variant) as a dense float array."""
    m = scipy.io.mmread(str(path))
    if scipy.sparse.issparse(m):
        m = m.toarray()
    return np.asarray(m, dtype=np.float64)


def write_matrix_market(path, matrix: np.ndarray, fmt: str = "auto",
                        comment: str = "") -> None:
    """Write a dense array in MatrixMarket form.

    ``fmt`` picks the variant: "array", "coordinate", or "auto"
    (coordinate when less than half the entries are nonzero).
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if fmt not in ("auto", "array", "coordinate"):
        raise ValueError(f"fmt must be auto, array, or coordinate, got {fmt!r}")
    if fmt == "auto":
        fmt = "coordinate" if np.count_nonzero(matrix) < matrix.size / 2 else "array"
    target = scipy.sparse.coo_matrix(matrix) if fmt == "coordinate" else matrix
    scipy.io.mmwrite(str(path), target, comment=comment, precision=17)


def read_xyz(path, default_multiplicity: int = DEFAULT_MULTIPLICITY,
             sidecar=None) -> PointCloud:
    """Read an XYZ point file, resolving per-point row multiplicities.

    The sidecar (``<path>.mult.json`` by default, if present) may set
    ``{"default": n, "labels": {label: n}}``.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty XYZ file")
    count = int(lines[0].split()[0])
    rows = lines[2:2 + count]
    if len(rows) < count:
        raise ValueError(f"{path}: header says {count} points, found {len(rows)}")

    label_mult = {}
    default = default_multiplicity
    sidecar = Path(sidecar) if sidecar else path.with_name(path.name + ".mult.json")
    if sidecar.exists():
        spec = json.loads(sidecar.read_text())
        default = int(spec.get("default", default))
        label_mult = {str(k): int(v) for k, v in spec.get("labels", {}).items()}

    points, mult = [], []
    for row in rows:
        parts = row.split()
        label = parts[0]
        points.append([float(parts[1]), float(parts[2]), float(parts[3])])
        mult.append(label_mult.get(label, default))
    return PointCloud(points=np.array(points), multiplicity=np.array(mult))


def write_xyz(path, cloud: PointCloud, labels=None, comment: str = "") -> None:
    path = Path(path)
    labels = labels or ["X"] * cloud.n_points
    lines = [str(cloud.n_points), comment]
    for label, (x, y, z) in zip(labels, cloud.points):
        lines.append(f"{label} {x:.17g} {y:.17g} {z:.17g}")
    path.write_text("\n".join(lines) + "\n")


def write_permutation(path, perm) -> None:
    """Write a permutation as a one-based JSON index list."""
    Path(path).write_text(json.dumps([int(p) + 1 for p in perm]) + "\n")


def read_permutation(path) -> np.ndarray:
    one_based = json.loads(Path(path).read_text())
    return np.asarray(one_based, dtype=np.int64) - 1


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _library_version() -> str:
    try:
        from importlib.metadata import version
        return version("spamm")
    except Exception:
        return "unknown"


def build_manifest(command: str, parameters: dict, seeds: dict,
                   inputs: list, outputs: list, argv: list) -> dict:
    """Run manifest: everything needed to reproduce a command's outputs.

    Re-running ``argv`` regenerates bitwise-identical numerical outputs;
    only the timestamp and any wall-time report fields differ.
    """
    return {
        "command": command,
        "argv": list(argv),
        "parameters": parameters,
        "seeds": seeds,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "library_version": _library_version(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "user": _safe_user(),
    }


def _safe_user() -> str:
    try:
        return getpass.getuser()
    except Exception:
        return "unknown"


def write_manifest(path, manifest: dict) -> None:
    write_json(path, manifest)


def read_manifest(path) -> dict:
    return read_json(path)
