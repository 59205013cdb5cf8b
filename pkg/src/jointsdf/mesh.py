"""Triangle mesh container, Wavefront OBJ I/O and topology checks."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


@dataclass
class TriMesh:
    vertices: np.ndarray      # (V, 3) float
    triangles: np.ndarray     # (F, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)

    @property
    def corners(self) -> np.ndarray:
        """(F, 3, 3) triangle corner positions."""
        return self.vertices[self.triangles]

    def signed_volume(self) -> float:
        a, b, c = (self.corners[:, k] for k in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def is_empty(self) -> bool:
        return len(self.triangles) == 0


def check_closed(mesh: TriMesh) -> None:
    """Raise MeshError unless every edge is shared by exactly two consistently
    oriented triangles."""
    if mesh.is_empty():
        raise MeshError("mesh has no triangles")
    F = mesh.triangles
    directed = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    n = len(mesh.vertices)
    key = directed[:, 0] * n + directed[:, 1]
    uniq, counts = np.unique(key, return_counts=True)
    if np.any(counts > 1):
        raise MeshError("mesh is not consistently oriented (repeated directed edge)")
    rev = directed[:, 1] * n + directed[:, 0]
    if not np.all(np.isin(rev, uniq, assume_unique=False)):
        raise MeshError("mesh is open (boundary edge without a twin)")


def read_obj(path) -> TriMesh:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            for k in range(1, len(idx) - 1):      # fan-triangulate polygons
                faces.append([idx[0], idx[k], idx[k + 1]])
    return TriMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_obj(path, mesh: TriMesh) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
