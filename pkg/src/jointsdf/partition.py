"""Overlapping joint subregions of the reference body.

Skin weights are diffused into the voxelized interior, thresholded into
seed regions, grown until every body node is covered and then dilated so
that neighbouring regions overlap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import linalg as splinalg
from scipy.spatial import cKDTree

from .distance_field import Grid, GridSdf, marching_cubes, read_grid_file, trilinear_sample, write_grid_file
from .mesh import TriMesh

_SIX = ndimage.generate_binary_structure(3, 1)


class PartitionError(ValueError):
    pass


@dataclass
class RegionPartition:
    grid: Grid
    members: np.ndarray          # (n_regions, nx, ny, nz) bool

    @property
    def region_count(self) -> int:
        return self.members.shape[0]

    def region(self, i: int) -> np.ndarray:
        return self.members[i]

    def coverage(self) -> np.ndarray:
        return self.members.any(axis=0)

    def bitmask(self) -> np.ndarray:
        if self.region_count > 32:
            raise PartitionError("bitmask files hold at most 32 regions")
        bits = np.zeros(self.grid.dims, dtype=np.uint32)
        for i in range(self.region_count):
            bits |= self.members[i].astype(np.uint32) << np.uint32(i)
        return bits

    @classmethod
    def from_bitmask(cls, grid: Grid, bits: np.ndarray, region_count: int) -> "RegionPartition":
        bits = bits.astype(np.uint32)
        members = np.stack([(bits >> np.uint32(i)) & 1 for i in range(region_count)]).astype(bool)
        return cls(grid, members)

    def save(self, path) -> None:
        write_grid_file(path, b"PRTN", self.grid, self.bitmask(), dtype="<u4")

    @classmethod
    def load(cls, path, region_count: int | None = None) -> "RegionPartition":
        grid, bits = read_grid_file(path, b"PRTN", dtype="<u4")
        if region_count is None:
            region_count = max(int(bits.max()).bit_length(), 1)
        return cls.from_bitmask(grid, bits, region_count)


# ----------------------------------------------------------------------------
# weights

def boundary_nodes(body_mask: np.ndarray) -> np.ndarray:
    """Body nodes with at least one 6-neighbour outside the body (or the grid)."""
    padded = np.pad(body_mask, 1, constant_values=False)
    eroded = ndimage.binary_erosion(padded, _SIX)[1:-1, 1:-1, 1:-1]
    return body_mask & ~eroded


def surface_boundary_values(vertices: np.ndarray, weights: np.ndarray, grid: Grid,
                            body_mask: np.ndarray, k: int = 4) -> np.ndarray:
    """Dirichlet data for diffuse_weights: body-boundary nodes take the
    inverse-distance blend of the skin weights of the k nearest surface
    vertices; every other node is NaN (free)."""
    out = np.full(grid.dims + (weights.shape[1],), np.nan)
    bnd = boundary_nodes(body_mask)
    pts = grid.nodes()[bnd]
    k = min(k, len(vertices))
    d, idx = cKDTree(vertices).query(pts, k=k)
    d, idx = d.reshape(len(pts), k), idx.reshape(len(pts), k)
    w = 1.0 / np.maximum(d, 1e-12) ** 2
    w /= w.sum(axis=1, keepdims=True)
    out[bnd] = np.einsum("nk,nkj->nj", w, weights[idx])
    return out


def diffuse_weights(boundary_values: np.ndarray, body_mask: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Discrete harmonic extension of per-joint weights over the body voxels.

    boundary_values: (nx, ny, nz, J) with Dirichlet data where finite and NaN
    on free nodes. Free nodes next to non-body nodes get a zero-flux
    condition. Returns (nx, ny, nz, J) weights (zero outside the body).
    """
    body = np.asarray(body_mask, bool)
    J = boundary_values.shape[-1]
    fixed = body & np.all(np.isfinite(boundary_values), axis=-1)
    free = body & ~fixed

    labels, n = ndimage.label(body, _SIX)
    if n:
        has_data = np.zeros(n + 1, bool)
        has_data[np.unique(labels[fixed])] = True
        if not np.all(has_data[1:]):
            raise PartitionError("a connected body component has no boundary weight data")

    out = np.zeros(body.shape + (J,))
    out[fixed] = boundary_values[fixed]
    n_free = int(free.sum())
    if n_free == 0:
        return out
    index = np.full(body.shape, -1, dtype=np.int64)
    index[free] = np.arange(n_free)
    rows, cols, vals = [], [], []
    diag = np.zeros(n_free)
    rhs = np.zeros((n_free, J))
    coords = np.argwhere(free)
    me = index[free]
    for ax in range(3):
        for step in (-1, 1):
            nb = coords.copy()
            nb[:, ax] += step
            ok = (nb[:, ax] >= 0) & (nb[:, ax] < body.shape[ax])
            nbc = tuple(nb[ok].T)
            src = me[ok]
            in_body = body[nbc]
            diag_add = np.zeros(n_free)
            np.add.at(diag_add, src[in_body], 1.0)
            diag += diag_add
            nb_free = free[nbc]
            m = in_body & nb_free
            rows.append(src[m])
            cols.append(index[nbc][m])
            vals.append(-np.ones(m.sum()))
            m = in_body & ~nb_free
            np.add.at(rhs, src[m], boundary_values[nbc][m])
    A = sparse.csr_matrix((np.concatenate(vals + [diag]),
                           (np.concatenate(rows + [np.arange(n_free)]),
                            np.concatenate(cols + [np.arange(n_free)]))),
                          shape=(n_free, n_free))
    solve = splinalg.factorized(A.tocsc())
    sol = np.stack([solve(rhs[:, j]) for j in range(J)], axis=1)
    resid = np.abs(A @ sol - rhs).max()
    if resid > tol:
        raise PartitionError(f"weight diffusion did not converge (residual {resid:.3g})")
    out[free] = sol
    return out


def extend_outside(field: np.ndarray, body_mask: np.ndarray) -> np.ndarray:
    """Copy each non-body node's value from its nearest body node."""
    if body_mask.all():
        return field.copy()
    _, idx = ndimage.distance_transform_edt(~body_mask, return_indices=True)
    return field[tuple(idx)]


# ----------------------------------------------------------------------------
# regions

def seed_regions(weights: np.ndarray, threshold: float, body_mask: np.ndarray | None = None) -> np.ndarray:
    """(J, nx, ny, nz) seed membership: node joins region i iff weight_i >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise PartitionError("threshold must lie in (0, 1)")
    seeds = np.moveaxis(weights >= threshold, -1, 0)
    if body_mask is not None:
        seeds &= body_mask[None]
    return seeds


def grow_regions(seeds: np.ndarray, body_mask: np.ndarray, grid: Grid | None = None) -> RegionPartition:
    """Multi-source BFS: unassigned body nodes join the region that reaches
    them first; simultaneous arrivals go to the lowest region index."""
    members = seeds & body_mask[None]
    unassigned = body_mask & ~members.any(axis=0)
    while unassigned.any():
        newly = np.zeros_like(unassigned)
        for r in range(members.shape[0]):
            reach = ndimage.binary_dilation(members[r], _SIX) & unassigned & ~newly
            members[r] |= reach
            newly |= reach
        if not newly.any():
            raise PartitionError(f"{int(unassigned.sum())} body nodes are unreachable from any seed")
        unassigned &= ~newly
    if grid is None:
        grid = Grid(np.zeros(3), 1.0, body_mask.shape)
    return RegionPartition(grid, members)


def dilate_regions(partition: RegionPartition, margin: int, body_mask: np.ndarray) -> RegionPartition:
    if margin < 0:
        raise PartitionError("margin must be non-negative")
    if margin == 0:
        return RegionPartition(partition.grid, partition.members.copy())
    grown = np.stack([ndimage.binary_dilation(m, _SIX, iterations=margin, mask=body_mask) | m
                      for m in partition.members])
    return RegionPartition(partition.grid, grown)


def covered_by_true_boundary(labels: list[np.ndarray], body_mask: np.ndarray) -> bool:
    """True when every body node has at least one region whose closest
    boundary point is on the true surface, i.e. the incorrect-boundary zones
    never cover a body node for all regions at once."""
    good = np.zeros(body_mask.shape, bool)
    for lab in labels:
        good |= lab > 0
    return bool(np.all(good[body_mask]))


# ----------------------------------------------------------------------------
# region surfaces

def region_field(body_sdf: GridSdf, members: np.ndarray, body_mask: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """Implicit function of region ∩ body: max of the body SDF and a smoothed
    cut field built from the region membership (extended outside the body
    by nearest body node so the cut only acts inside)."""
    ext = extend_outside(members.astype(float), body_mask)
    smooth = ndimage.gaussian_filter(ext, sigma, mode="nearest")
    cut = (0.5 - smooth) * 2.5 * body_sdf.spacing
    return np.maximum(body_sdf.values.astype(float), cut)


def region_surface(body_sdf: GridSdf, members: np.ndarray, body_mask: np.ndarray,
                   weights: np.ndarray) -> tuple[TriMesh, np.ndarray]:
    """Closed surface mesh of one region in the reference pose, plus skin
    weights for its vertices (trilinear samples of the diffused weight field)."""
    field = GridSdf(body_sdf.grid, region_field(body_sdf, members, body_mask))
    if np.any(np.isnan(field.values)):
        raise PartitionError("region field has unknown nodes")
    surf = marching_cubes(field, 0.0)
    if surf.is_empty():
        raise PartitionError("region is empty")
    ext = extend_outside(weights, body_mask)
    vw = np.stack([trilinear_sample(GridSdf(body_sdf.grid, ext[..., j]), surf.vertices)
                   for j in range(weights.shape[-1])], axis=1)
    vw = np.clip(vw, 0.0, None)
    vw /= vw.sum(axis=1, keepdims=True)
    return surf, vw
