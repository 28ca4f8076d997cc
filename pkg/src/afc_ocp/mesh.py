"""Conforming triangulations of polygonal domains.

The workhorse is the uniform lattice triangulation of the unit square in
which every cell of an M x M grid is split along its bottom-left to
top-right diagonal.  Generic conforming meshes can be built from raw node
and triangle arrays; edges, boundary detection, and node patches are always
derived from the triangle connectivity, never assumed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class TriangleMesh:
    """A conforming triangle mesh with derived patch structure.

    Attributes
    ----------
    nodes : ndarray, shape (n_nodes, 2)
        Vertex coordinates.
    triangles : ndarray, shape (n_triangles, 3)
        Vertex indices per triangle, counterclockwise.
    edges : ndarray, shape (n_edges, 2)
        Unique undirected edges with edges[e, 0] < edges[e, 1], sorted
        lexicographically.
    boundary_mask : ndarray of bool, shape (n_nodes,)
        True for nodes on the domain boundary (endpoints of edges shared by
        a single triangle).
    interior_index : ndarray of int, shape (n_nodes,)
        Position of each node in the interior ordering, -1 on the boundary.
    adjacency : tuple of ndarray
        adjacency[i] holds the sorted neighbour indices of node i.
    gamma : ndarray, shape (n_nodes,)
        Patch-geometry coefficients entering the limiter bounds; 1 is valid
        for point-symmetric patches, which the uniform lattice mesh has at
        every interior node.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    boundary_mask: np.ndarray
    interior_index: np.ndarray
    adjacency: tuple
    gamma: np.ndarray

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def interior_nodes(self):
        return np.flatnonzero(~self.boundary_mask)

    @property
    def n_interior(self):
        return int(np.count_nonzero(~self.boundary_mask))

    def triangle_areas(self):
        p = self.nodes[self.triangles]
        x, y = p[..., 0], p[..., 1]
        two_a = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (
            x[:, 2] - x[:, 0]
        ) * (y[:, 1] - y[:, 0])
        return 0.5 * two_a

    def node_patch_extrema(self, field, i):
        """Min and max of ``field`` over node i and its neighbours."""
        field = np.asarray(field)
        if field.shape != (self.n_nodes,):
            raise InvalidArgumentError(
                f"field has shape {field.shape}, expected ({self.n_nodes},)"
            )
        if not 0 <= i < self.n_nodes:
            raise InvalidArgumentError(f"node index {i} out of range")
        patch = np.append(self.adjacency[i], i)
        vals = field[patch]
        return float(vals.min()), float(vals.max())

    def patch_extrema(self, field):
        """Vectorized patch extrema: arrays (lo, hi) over all nodes.

        The patch of node i includes i itself, so lo <= field <= hi holds
        everywhere.
        """
        field = np.asarray(field, dtype=float)
        lo = field.copy()
        hi = field.copy()
        i, j = self.edges[:, 0], self.edges[:, 1]
        np.minimum.at(lo, i, field[j])
        np.minimum.at(lo, j, field[i])
        np.maximum.at(hi, i, field[j])
        np.maximum.at(hi, j, field[i])
        return lo, hi


def build_mesh(nodes, triangles, gamma=None):
    """Assemble a :class:`TriangleMesh` from raw arrays, deriving and
    validating all connectivity.

    Raises
    ------
    InvalidArgumentError
        For out-of-range indices, non-positive triangle orientation, or
        edges shared by more than two triangles.
    """
    nodes = np.ascontiguousarray(nodes, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if nodes.ndim != 2 or nodes.shape[1] != 2:
        raise InvalidArgumentError("nodes must have shape (n_nodes, 2)")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise InvalidArgumentError("triangles must have shape (n_triangles, 3)")
    if not np.all(np.isfinite(nodes)):
        raise InvalidArgumentError("node coordinates must be finite")
    n = nodes.shape[0]
    if triangles.min(initial=0) < 0 or triangles.max(initial=-1) >= n:
        raise InvalidArgumentError("triangle indices out of range")

    p = nodes[triangles]
    x, y = p[..., 0], p[..., 1]
    two_a = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (
        y[:, 1] - y[:, 0]
    )
    bad = np.flatnonzero(two_a <= 0)
    if bad.size:
        raise InvalidArgumentError(
            f"triangle {bad[0]} is degenerate or clockwise (signed area "
            f"{0.5 * two_a[bad[0]]:.3e})"
        )

    sides = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    sides = np.sort(sides, axis=1)
    edges, counts = np.unique(sides, axis=0, return_counts=True)
    if counts.max(initial=0) > 2:
        raise InvalidArgumentError("an edge is shared by more than two triangles")

    boundary_mask = np.zeros(n, dtype=bool)
    boundary_mask[edges[counts == 1].ravel()] = True

    interior_index = np.full(n, -1, dtype=np.int64)
    interior_index[~boundary_mask] = np.arange(n - boundary_mask.sum())

    ends = np.concatenate([edges[:, 0], edges[:, 1]])
    other = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.argsort(ends, kind="stable")
    deg = np.bincount(ends, minlength=n)
    offsets = np.concatenate([[0], np.cumsum(deg)])
    sorted_other = other[order]
    adjacency = tuple(
        np.sort(sorted_other[offsets[i] : offsets[i + 1]]) for i in range(n)
    )

    if gamma is None:
        gamma = np.ones(n)
    else:
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (n,):
            raise InvalidArgumentError("gamma must have one entry per node")
        if np.any(gamma < 0) or not np.all(np.isfinite(gamma)):
            raise InvalidArgumentError("gamma entries must be finite and nonnegative")

    return TriangleMesh(
        nodes=nodes,
        triangles=triangles,
        edges=edges,
        boundary_mask=boundary_mask,
        interior_index=interior_index,
        adjacency=adjacency,
        gamma=gamma,
    )


def build_uniform_unit_square(m):
    """Uniform triangulation of the unit square with mesh width 1/m.

    Nodes sit on the (m+1) x (m+1) lattice, numbered row by row so node
    iy*(m+1) + ix has coordinates (ix/m, iy/m).  Each grid cell splits along
    the bottom-left to top-right diagonal into two counterclockwise
    triangles.  Every interior node ends up with the same six-neighbour
    patch, symmetric about the node, so gamma = 1 throughout.
    """
    if m < 2:
        raise InvalidArgumentError(f"need at least 2 cells per side, got m={m}")
    side = np.linspace(0.0, 1.0, m + 1)
    xg, yg = np.meshgrid(side, side, indexing="xy")
    nodes = np.column_stack([xg.ravel(), yg.ravel()])

    idx = np.arange((m + 1) * (m + 1)).reshape(m + 1, m + 1)
    bl = idx[:-1, :-1].ravel()
    br = idx[:-1, 1:].ravel()
    tl = idx[1:, :-1].ravel()
    tr = idx[1:, 1:].ravel()
    triangles = np.empty((2 * m * m, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([bl, br, tr])
    triangles[1::2] = np.column_stack([bl, tr, tl])

    return build_mesh(nodes, triangles)
