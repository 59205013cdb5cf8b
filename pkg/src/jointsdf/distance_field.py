"""Ground-truth signed distance grids.

Near the surface, distances are exact point-to-triangle distances on the
nodes of cut cells; the rest of the grid is filled with a first-order Fast
Marching sweep. Also: inside tests, trilinear sampling, true/interior
boundary labels and marching-cubes extraction.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy import ndimage

from .mesh import MeshError, TriMesh, check_closed

_BAND_CELLS = 2.0


def _f32(x):
    return np.asarray(x, dtype=np.float32).astype(np.float64)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform node lattice; node (i, j, k) sits at origin + spacing*(i, j, k).

    origin and spacing are rounded to float32 so that grids survive a
    round trip through the binary file format unchanged.
    """
    origin: np.ndarray
    spacing: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "origin", _f32(self.origin).reshape(3))
        object.__setattr__(self, "spacing", float(_f32(self.spacing)))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.spacing <= 0 or min(self.dims) < 2:
            raise ValueError("grid needs spacing > 0 and at least 2 nodes per axis")

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (self.dims == other.dims and self.spacing == other.spacing
                and bool(np.array_equal(self.origin, other.origin)))

    def __hash__(self):
        return hash((self.dims, self.spacing, self.origin.tobytes()))

    @classmethod
    def cube_around(cls, lo, hi, resolution: int, pad: float = 0.1) -> "Grid":
        """Cubic grid of ``resolution``^3 nodes covering [lo, hi] dilated by
        ``pad`` of the largest extent on every side."""
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        side = float(np.max(hi - lo)) * (1.0 + 2.0 * pad)
        center = 0.5 * (lo + hi)
        h = side / (resolution - 1)
        return cls(center - 0.5 * side, h, (resolution,) * 3)

    @property
    def box_side(self) -> float:
        """L_G: the largest extent of the grid box."""
        return self.spacing * (max(self.dims) - 1)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.spacing * (np.array(self.dims) - 1)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.origin + self.upper)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def axes(self) -> list[np.ndarray]:
        return [self.origin[a] + self.spacing * np.arange(self.dims[a]) for a in range(3)]

    def nodes(self) -> np.ndarray:
        """(nx, ny, nz, 3) node positions."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)


@dataclass
class GridSdf:
    grid: Grid
    values: np.ndarray          # (nx, ny, nz) float32, NaN marks unknown nodes

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.shape != self.grid.dims:
            raise ValueError(f"values shape {self.values.shape} != grid dims {self.grid.dims}")

    @property
    def origin(self):
        return self.grid.origin

    @property
    def spacing(self):
        return self.grid.spacing

    @property
    def dims(self):
        return self.grid.dims

    @property
    def box_side(self):
        return self.grid.box_side

    def known(self) -> np.ndarray:
        return ~np.isnan(self.values)


# ----------------------------------------------------------------------------
# binary grid files: magic(4) dims(3*u32) origin(3*f32) spacing(f32) payload
# payload is dims-product values in x-fastest order, little endian

_HEADER = struct.Struct("<4s3I3ff")


def write_grid_file(path, magic: bytes, grid: Grid, values: np.ndarray, dtype="<f4") -> None:
    header = _HEADER.pack(magic, *grid.dims, *grid.origin.astype(np.float32), np.float32(grid.spacing))
    payload = np.asarray(values).astype(dtype).ravel(order="F").tobytes()
    Path(path).write_bytes(header + payload)


def read_grid_file(path, magic: bytes, dtype="<f4") -> tuple[Grid, np.ndarray]:
    raw = Path(path).read_bytes()
    got, nx, ny, nz, ox, oy, oz, h = _HEADER.unpack_from(raw)
    if got != magic:
        raise ValueError(f"{path}: bad magic {got!r}, expected {magic!r}")
    grid = Grid(np.array([ox, oy, oz]), h, (nx, ny, nz))
    vals = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size, count=nx * ny * nz)
    return grid, vals.reshape((nx, ny, nz), order="F").astype(np.dtype(dtype).newbyteorder("="))


def save_sdf(path, sdf: GridSdf) -> None:
    write_grid_file(path, b"GSDF", sdf.grid, sdf.values)


def load_sdf(path) -> GridSdf:
    return GridSdf(*read_grid_file(path, b"GSDF"))


def save_labels(path, grid: Grid, labels: np.ndarray) -> None:
    write_grid_file(path, b"GLBL", grid, labels)


def load_labels(path) -> tuple[Grid, np.ndarray]:
    grid, vals = read_grid_file(path, b"GLBL")
    return grid, vals.astype(np.int8)


# ----------------------------------------------------------------------------
# geometry kernels

def point_triangle_sqdist(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared distance from points p to triangles (a, b, c); all (N, 3)."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
        v, w = vb * denom, vc * denom
    conds = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    q = np.select(
        [k[:, None] for k in conds],
        [a, b, a + t_ab[:, None] * ab, c, a + t_ac[:, None] * ac, b + t_bc[:, None] * (c - b)],
        default=a + ab * v[:, None] + ac * w[:, None],
    )
    diff = p - q
    return np.einsum("ij,ij->i", diff, diff)


def _ray_crossings(py, pz, tri):
    """+x ray crossings of yz-points against triangles (paired row-wise).

    Returns (hit, x_cross, orientation sign, degenerate)."""
    ay, az = tri[:, 0, 1], tri[:, 0, 2]
    by, bz = tri[:, 1, 1], tri[:, 1, 2]
    cy, cz = tri[:, 2, 1], tri[:, 2, 2]
    e0 = (by - ay) * (pz - az) - (bz - az) * (py - ay)
    e1 = (cy - by) * (pz - bz) - (cz - bz) * (py - by)
    e2 = (ay - cy) * (pz - cz) - (az - cz) * (py - cy)
    area = e0 + e1 + e2
    scale = np.abs(area) + 1e-300
    tol = 1e-12 * scale
    pos = (e0 > tol) & (e1 > tol) & (e2 > tol)
    neg = (e0 < -tol) & (e1 < -tol) & (e2 < -tol)
    outside = ((e0 > tol) | (e1 > tol) | (e2 > tol)) & ((e0 < -tol) | (e1 < -tol) | (e2 < -tol))
    flat = np.abs(area) <= 1e-14 * (np.abs(by - ay) + np.abs(cy - ay) + np.abs(bz - az) + np.abs(cz - az) + 1e-300) ** 2
    hit = (pos | neg) & ~flat
    degenerate = ~(pos | neg | outside) & ~flat
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (e1 * tri[:, 0, 0] + e2 * tri[:, 1, 0] + e0 * tri[:, 2, 0]) / area
    return hit, x, np.sign(area), degenerate


def inside_mask(mesh: TriMesh, grid: Grid, seed: int = 0) -> np.ndarray:
    """Nodes enclosed by a closed mesh: winding number along +x rays per grid
    row (nonzero rule), re-cast with a jittered ray where a ray hits an edge
    or vertex."""
    nx, ny, nz = grid.dims
    o, h = grid.origin, grid.spacing
    tri = mesh.corners
    ymin, ymax = tri[:, :, 1].min(1), tri[:, :, 1].max(1)
    zmin, zmax = tri[:, :, 2].min(1), tri[:, :, 2].max(1)
    j0 = np.clip(np.ceil((ymin - o[1]) / h - 1e-9), 0, ny).astype(int)
    j1 = np.clip(np.floor((ymax - o[1]) / h + 1e-9), -1, ny - 1).astype(int)
    k0 = np.clip(np.ceil((zmin - o[2]) / h - 1e-9), 0, nz).astype(int)
    k1 = np.clip(np.floor((zmax - o[2]) / h + 1e-9), -1, nz - 1).astype(int)
    sj = np.maximum(j1 - j0 + 1, 0)
    sk = np.maximum(k1 - k0 + 1, 0)
    counts = sj * sk
    f = np.repeat(np.arange(len(tri)), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    j = j0[f] + local // sk[f]
    k = k0[f] + local % sk[f]
    hit, x, s, deg = _ray_crossings(o[1] + j * h, o[2] + k * h, tri[f])

    row = j * nz + k
    rng = np.random.default_rng(seed)
    bad_rows = np.unique(row[deg])
    keep = hit & ~np.isin(row, bad_rows)
    rows_x = [row[keep]]
    xs = [x[keep]]
    ss = [s[keep]]
    for r in bad_rows:
        rj, rk = divmod(int(r), nz)
        for _ in range(16):
            py = o[1] + rj * h + rng.uniform(-1, 1) * 1e-6 * h
            pz = o[2] + rk * h + rng.uniform(-1, 1) * 1e-6 * h
            cand = np.flatnonzero((ymin <= py) & (py <= ymax) & (zmin <= pz) & (pz <= zmax))
            hh, xx, sgn, dd = _ray_crossings(np.full(len(cand), py), np.full(len(cand), pz), tri[cand])
            if not dd.any():
                break
        rows_x.append(np.full(hh.sum(), r))
        xs.append(xx[hh])
        ss.append(sgn[hh])
    row_all = np.concatenate(rows_x)
    x_all = np.concatenate(xs)
    s_all = np.concatenate(ss)

    inside = np.zeros((ny * nz, nx), dtype=bool)
    if row_all.size:
        order = np.lexsort((x_all, row_all))
        row_all, x_all, s_all = row_all[order], x_all[order], s_all[order]
        starts = np.flatnonzero(np.r_[True, row_all[1:] != row_all[:-1]])
        ends = np.r_[starts[1:], len(row_all)]
        xnodes = o[0] + h * np.arange(nx)
        for a, b in zip(starts, ends):
            xr = x_all[a:b]
            suffix = np.r_[np.cumsum(s_all[a:b][::-1])[::-1], 0.0]
            wind = suffix[np.searchsorted(xr, xnodes, side="right")]
            inside[row_all[a]] = wind != 0
    return np.ascontiguousarray(inside.reshape(ny, nz, nx).transpose(2, 0, 1))


def _band_candidates(tri: np.ndarray, grid: Grid, pad_cells: float):
    o, h, dims = grid.origin, grid.spacing, np.array(grid.dims)
    lo = np.ceil((tri.min(1) - o) / h - pad_cells).astype(int)
    hi = np.floor((tri.max(1) - o) / h + pad_cells).astype(int)
    lo = np.clip(lo, 0, dims)
    hi = np.clip(hi, -1, dims - 1)
    size = np.maximum(hi - lo + 1, 0)
    return lo, size


def unsigned_band(mesh: TriMesh, grid: Grid, pad_cells: float = _BAND_CELLS,
                  chunk: int = 2_000_000) -> np.ndarray:
    """Exact unsigned distance on every node within ``pad_cells`` (per axis) of
    some triangle's bounding box; +inf elsewhere."""
    tri = mesh.corners
    lo, size = _band_candidates(tri, grid, pad_cells)
    counts = size.prod(axis=1)
    best = np.full(grid.size, np.inf)
    nx, ny, nz = grid.dims
    o, h = grid.origin, grid.spacing
    start = 0
    csum = np.cumsum(counts)
    while start < len(tri):
        base = csum[start - 1] if start else 0
        stop = int(np.searchsorted(csum, base + chunk, side="right"))
        stop = max(stop, start + 1)
        sl = slice(start, stop)
        c = counts[sl]
        f = np.repeat(np.arange(start, stop), c)
        local = np.arange(c.sum()) - np.repeat(np.cumsum(c) - c, c)
        sy, sz = size[f, 1], size[f, 2]
        i = lo[f, 0] + local // (sy * sz)
        rem = local % (sy * sz)
        j = lo[f, 1] + rem // sz
        k = lo[f, 2] + rem % sz
        p = o + h * np.stack([i, j, k], axis=1)
        d2 = point_triangle_sqdist(p, tri[f, 0], tri[f, 1], tri[f, 2])
        np.minimum.at(best, (i * ny + j) * nz + k, d2)
        start = stop
    return np.sqrt(best).reshape(grid.dims)


def exact_band(mesh: TriMesh, grid: Grid, inside: np.ndarray | None = None) -> GridSdf:
    """Signed exact distances on the near-surface band, NaN elsewhere.

    The band holds every node within two cells of the surface, which covers
    all nodes of cut cells (those are within sqrt(3) cells).
    """
    check_closed(mesh)
    dist = unsigned_band(mesh, grid)
    band = dist <= _BAND_CELLS * grid.spacing
    if inside is None:
        inside = inside_mask(mesh, grid)
    vals = np.full(grid.dims, np.nan)
    vals[band] = np.where(inside[band], -dist[band], dist[band])
    return GridSdf(grid, vals)


# ----------------------------------------------------------------------------
# fast marching

@numba.njit(cache=True)
def _solve_eikonal(a1, a2, a3, h):
    # a1 <= a2 <= a3 (inf for missing)
    u = a1 + h
    if u <= a2:
        return u
    d = a1 - a2
    u = 0.5 * (a1 + a2 + np.sqrt(2.0 * h * h - d * d))
    if u <= a3:
        return u
    s = a1 + a2 + a3
    q = a1 * a1 + a2 * a2 + a3 * a3
    return (s + np.sqrt(s * s - 3.0 * (q - h * h))) / 3.0


@numba.njit(cache=True)
def _fmm(mag, sgn, accepted, nx, ny, nz, h):
    n = nx * ny * nz
    strides = (ny * nz, nz, 1)
    dims = (nx, ny, nz)
    tentative = np.full(n, np.inf)
    heap = [(0.0, 0)]
    heap.pop()

    for idx in range(n):
        if accepted[idx]:
            mag[idx] = abs(mag[idx])

    def update(q):
        # smallest same-side accepted neighbour per axis
        i = q // strides[0]
        j = (q // strides[1]) % ny
        k = q % nz
        coord = (i, j, k)
        a = np.full(3, np.inf)
        for ax in range(3):
            for step in (-1, 1):
                c = coord[ax] + step
                if c < 0 or c >= dims[ax]:
                    continue
                r = q + step * strides[ax]
                if accepted[r] and (sgn[r] == 0 or sgn[r] == sgn[q]):
                    if mag[r] < a[ax]:
                        a[ax] = mag[r]
        a.sort()
        if a[0] == np.inf:
            return np.inf
        return _solve_eikonal(a[0], a[1], a[2], h)

    for idx in range(n):
        if accepted[idx]:
            i = idx // strides[0]
            j = (idx // strides[1]) % ny
            k = idx % nz
            coord = (i, j, k)
            for ax in range(3):
                for step in (-1, 1):
                    c = coord[ax] + step
                    if c < 0 or c >= dims[ax]:
                        continue
                    q = idx + step * strides[ax]
                    if not accepted[q]:
                        u = update(q)
                        if u < tentative[q]:
                            tentative[q] = u
                            heapq.heappush(heap, (u, q))

    while len(heap) > 0:
        d, idx = heapq.heappop(heap)
        if accepted[idx] or d > tentative[idx]:
            continue
        accepted[idx] = True
        mag[idx] = d
        i = idx // strides[0]
        j = (idx // strides[1]) % ny
        k = idx % nz
        coord = (i, j, k)
        for ax in range(3):
            for step in (-1, 1):
                c = coord[ax] + step
                if c < 0 or c >= dims[ax]:
                    continue
                q = idx + step * strides[ax]
                if not accepted[q]:
                    u = update(q)
                    if u < tentative[q]:
                        tentative[q] = u
                        heapq.heappush(heap, (u, q))
    return mag


def _unknown_signs(values: np.ndarray) -> np.ndarray:
    """Side (+1/-1) of every node: band nodes keep their own sign, each
    connected unknown component takes the majority sign of the band nodes
    bordering it."""
    known = ~np.isnan(values)
    sgn = np.where(known, np.sign(np.nan_to_num(values)), 0.0)
    labels, n = ndimage.label(~known)
    if n == 0:
        return sgn
    votes = np.zeros(n + 1)
    for ax in range(3):
        for step in (-1, 1):
            src = [slice(None)] * 3
            dst = [slice(None)] * 3
            if step == 1:
                src[ax], dst[ax] = slice(1, None), slice(None, -1)
            else:
                src[ax], dst[ax] = slice(None, -1), slice(1, None)
            lab = labels[tuple(dst)]
            s = np.where(known[tuple(src)], np.where(sgn[tuple(src)] < 0, -1.0, 1.0), 0.0)
            m = (lab > 0) & (s != 0)
            np.add.at(votes, lab[m], s[m])
    comp = np.where(votes >= 0, 1.0, -1.0)
    comp[0] = 0.0
    return np.where(known, sgn, comp[labels])


def fast_march(band: GridSdf) -> GridSdf:
    """Fill every unknown (NaN) node with the first-order upwind Eikonal
    solution seeded from the band; positive and negative sides are marched
    separately (a node only uses same-side upwind neighbours)."""
    vals = band.values.astype(np.float64)
    known = ~np.isnan(vals)
    if not known.any():
        raise ValueError("empty band: the surface does not intersect the grid")
    if not np.all(np.isfinite(vals[known])):
        raise ValueError("band values must be finite")
    sgn = _unknown_signs(vals)
    # zero-valued band nodes seed both sides
    sgn_seed = np.where(known & (vals == 0), 0, np.where(sgn < 0, -1, 1)).astype(np.int8)
    mag = np.abs(np.nan_to_num(vals, nan=np.inf)).ravel()
    out = _fmm(mag, sgn_seed.ravel(), known.ravel().copy(), *band.grid.dims, band.grid.spacing)
    side = np.where(sgn_seed.ravel() < 0, -1.0, 1.0)
    return GridSdf(band.grid, (side * out).reshape(band.grid.dims))


def mesh_to_sdf(mesh: TriMesh, grid: Grid) -> GridSdf:
    return fast_march(exact_band(mesh, grid))


# ----------------------------------------------------------------------------
# sampling

def trilinear_sample(sdf: GridSdf, x: np.ndarray, return_flag: bool = False):
    """Trilinear interpolation at points x (..., 3). Points outside the grid
    are clamped to its box; ``return_flag`` also returns the out-of-bounds mask."""
    g = sdf.grid
    x = np.asarray(x, dtype=float)
    shp = x.shape[:-1]
    x = x.reshape(-1, 3)
    u = (x - g.origin) / g.spacing
    hi = np.array(g.dims) - 1
    oob = np.any((u < -1e-9) | (u > hi + 1e-9), axis=1)
    u = np.clip(u, 0.0, hi)
    i0 = np.minimum(np.floor(u).astype(int), hi - 1)
    f = u - i0
    v = sdf.values
    out = np.zeros(len(x))
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1 - f[:, 1]
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1 - f[:, 2]
                out += wx * wy * wz * v[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    out = out.reshape(shp)
    return (out, oob.reshape(shp)) if return_flag else out


def trilinear_gradient(sdf: GridSdf, x: np.ndarray) -> np.ndarray:
    """Central differences of trilinear samples with step h."""
    x = np.asarray(x, dtype=float)
    h = sdf.grid.spacing
    grad = np.empty(x.shape)
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        grad[..., a] = (trilinear_sample(sdf, x + e) - trilinear_sample(sdf, x - e)) / (2 * h)
    return grad


# ----------------------------------------------------------------------------
# boundary provenance

_SHIFTS = [(ax, s) for ax in range(3) for s in (-1, 1)]


def _neighbour(arr: np.ndarray, ax: int, step: int, fill) -> np.ndarray:
    """arr shifted so that out[i] = arr[i + step along ax] (fill past the edge)."""
    out = np.full_like(arr, fill)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    if step == 1:
        src[ax], dst[ax] = slice(1, None), slice(None, -1)
    else:
        src[ax], dst[ax] = slice(None, -1), slice(1, None)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def classify_boundary(region_mask: np.ndarray | None, body_mask: np.ndarray,
                      region_sdf: GridSdf | None = None, spacing: float = 1.0) -> np.ndarray:
    """+1 where the closest point on the region boundary lies on the true body
    surface, -1 where it lies on an interior cut.

    Boundary nodes of the region voxelization are tagged "true" when a
    neighbour outside the region is also outside the body and "interior"
    when every such neighbour is inside the body. Each node takes the tag of
    the nearest tagged node; at equal distance the true tag wins. Nodes
    outside the body are always +1.
    """
    if region_mask is None:
        if region_sdf is None:
            raise ValueError("need a region mask or a region SDF")
        region_mask = region_sdf.values < 0
    if region_sdf is not None:
        spacing = region_sdf.grid.spacing
    region_mask = np.asarray(region_mask, bool)
    body_mask = np.asarray(body_mask, bool) | region_mask
    true_tag = np.zeros_like(region_mask)
    exposed = np.zeros_like(region_mask)
    for ax, s in _SHIFTS:
        nb_region = _neighbour(region_mask, ax, s, False)
        nb_body = _neighbour(body_mask, ax, s, False)
        exposed |= region_mask & ~nb_region
        true_tag |= region_mask & ~nb_region & ~nb_body
    interior_tag = exposed & ~true_tag
    labels = np.ones(region_mask.shape, dtype=np.int8)
    if not interior_tag.any():
        return labels
    if not true_tag.any():
        d_true = np.full(region_mask.shape, np.inf)
    else:
        d_true = ndimage.distance_transform_edt(~true_tag, sampling=spacing)
    d_int = ndimage.distance_transform_edt(~interior_tag, sampling=spacing)
    labels[(d_int < d_true) & body_mask] = -1
    return labels


# ----------------------------------------------------------------------------
# isosurface

def marching_cubes(sdf: GridSdf, iso: float = 0.0) -> TriMesh:
    """Iso-contour triangulation with outward (increasing value) orientation.
    An iso value outside the sampled range yields an empty mesh."""
    from skimage import measure

    v = sdf.values
    if not np.all(np.isfinite(v)):
        raise ValueError("marching cubes needs a fully known grid")
    if not (v.min() < iso < v.max()):
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    verts, faces, _, _ = measure.marching_cubes(v.astype(np.float64), level=iso,
                                                spacing=(sdf.spacing,) * 3,
                                                gradient_direction="descent")
    return TriMesh(verts + sdf.origin, faces)
