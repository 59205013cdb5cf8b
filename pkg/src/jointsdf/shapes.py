"""Analytic test geometry: icospheres, boxes and skinned capsule chains."""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh
from .rig import Joint, Rig, SkinnedMesh


def box_mesh(lo, hi) -> TriMesh:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    v = np.array([[lo[0] if i & 1 == 0 else hi[0],
                   lo[1] if i & 2 == 0 else hi[1],
                   lo[2] if i & 4 == 0 else hi[2]] for i in range(8)])
    f = np.array([
        [0, 2, 1], [1, 2, 3],   # z = lo
        [4, 5, 6], [5, 7, 6],   # z = hi
        [0, 1, 4], [1, 5, 4],   # y = lo
        [2, 6, 3], [3, 6, 7],   # y = hi
        [0, 4, 2], [2, 4, 6],   # x = lo
        [1, 3, 5], [3, 7, 5],   # x = hi
    ])
    return TriMesh(v, f)


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return TriMesh(np.array(verts) * radius + np.asarray(center, float), np.array(faces))


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def capsule_chain(n_segments: int = 2, segment_length: float = 0.5, radius: float = 0.1,
                  blend: float = 0.08, n_around: int = 24, n_along: int = 20, n_cap: int = 6,
                  ranges_deg=None) -> tuple[Rig, SkinnedMesh]:
    """A straight closed tube along +x with hemispherical caps, one hinge joint
    per segment (axis z) and smooth skin weights around each hinge.

    Joint k pivots at x = k*segment_length; bone k spans
    [k*segment_length, (k+1)*segment_length]. ``blend`` is the half-width of
    the weight transition zone around each interior hinge.
    """
    total = n_segments * segment_length
    # profile: (x, r) pairs from the left pole to the right pole
    prof = []
    for a in np.linspace(np.pi, np.pi / 2, n_cap + 1)[:-1]:
        prof.append((radius * np.cos(a), radius * np.sin(a)))
    for x in np.linspace(0.0, total, n_segments * n_along + 1):
        prof.append((x, radius))
    for a in np.linspace(np.pi / 2, 0.0, n_cap + 1)[1:]:
        prof.append((total + radius * np.cos(a), radius * np.sin(a)))
    # drop the pole entries (r == 0); poles are added explicitly
    prof = np.array(prof)
    ring = prof[1:-1] if prof[0, 1] < 1e-12 else prof
    phis = np.linspace(0.0, 2 * np.pi, n_around, endpoint=False)
    verts = [[-radius, 0.0, 0.0]]
    for x, r in ring:
        for p in phis:
            verts.append([x, r * np.cos(p), r * np.sin(p)])
    verts.append([total + radius, 0.0, 0.0])
    verts = np.array(verts)
    n_ring = len(ring)
    faces = []
    ridx = lambda k, j: 1 + k * n_around + (j % n_around)
    for j in range(n_around):
        faces.append([0, ridx(0, j + 1), ridx(0, j)])
    for k in range(n_ring - 1):
        for j in range(n_around):
            a, b = ridx(k, j), ridx(k, j + 1)
            c, d = ridx(k + 1, j), ridx(k + 1, j + 1)
            faces += [[a, b, d], [a, d, c]]
    last = len(verts) - 1
    for j in range(n_around):
        faces.append([last, ridx(n_ring - 1, j), ridx(n_ring - 1, j + 1)])
    mesh = TriMesh(verts, np.array(faces))
    if mesh.signed_volume() < 0:
        mesh.triangles = mesh.triangles[:, ::-1].copy()

    W = chain_weights(mesh.vertices, n_segments, segment_length, blend)
    if ranges_deg is None:
        ranges_deg = [((0.0, 10.0, 0.0),)] * n_segments
    joints = [Joint(id=k, parent=None if k == 0 else k - 1,
                    center=[k * segment_length, 0.0, 0.0], axes=[[0.0, 0.0, 1.0]],
                    name=f"hinge{k}", ranges_deg=tuple(ranges_deg[k]))
              for k in range(n_segments)]
    return Rig(joints), SkinnedMesh(mesh.vertices, mesh.triangles, W)


def chain_weights(points: np.ndarray, n_segments: int, segment_length: float, blend: float) -> np.ndarray:
    """Partition-of-unity weights along x with smooth transitions at the hinges."""
    x = np.asarray(points, float)[:, 0]
    steps = [np.ones_like(x)]
    steps += [_smoothstep((x - (k * segment_length - blend)) / (2 * blend)) for k in range(1, n_segments)]
    steps.append(np.zeros_like(x))
    W = np.stack([steps[k] - steps[k + 1] for k in range(n_segments)], axis=1)
    return W


def two_joint_arm(radius: float = 0.1, segment_length: float = 0.5, **kw) -> tuple[Rig, SkinnedMesh]:
    """The bundled desk-scale rig: a shoulder (root) and an elbow hinge."""
    ranges = [((-20.0, 10.0, 20.0),), ((-120.0, 10.0, 0.0),)]
    return capsule_chain(2, segment_length, radius, ranges_deg=ranges, **kw)
