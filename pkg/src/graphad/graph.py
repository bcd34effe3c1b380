"""Fixed grid topology: 8-connectivity plus self-loop, CSR neighbor lists.

Each node's neighbor slice is sorted ascending and contains the node itself,
so iteration (and therefore floating-point summation) order is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from .errors import DimensionError


@dataclass
class GridTopology:
    rows: int
    cols: int
    indptr: np.ndarray  # int64, length rows*cols + 1
    indices: np.ndarray  # int32, flat neighbor array
    # edge endpoint views derived once; edge e goes src[e] -> its neighbor dst[e]
    edge_src: np.ndarray = field(init=False)
    edge_dst: np.ndarray = field(init=False)
    counts: np.ndarray = field(init=False)
    # stable permutation sorting edges by dst; because the adjacency is
    # symmetric the permuted edges form the CSR of the transposed graph
    t_perm: np.ndarray = field(init=False)

    def __post_init__(self):
        self.counts = np.diff(self.indptr)
        self.edge_src = np.repeat(np.arange(self.rows * self.cols, dtype=np.int32),
                                  self.counts)
        self.edge_dst = self.indices
        self.t_perm = np.argsort(self.edge_dst, kind="stable")

    def aggregate(self, edge_values: np.ndarray, node_features: np.ndarray) -> np.ndarray:
        """out_i = sum over edges (i -> j) of edge_values_e * node_features_j."""
        n = self.num_nodes
        mat = csr_matrix((edge_values, self.indices, self.indptr), shape=(n, n))
        return mat @ node_features

    def aggregate_transpose(self, edge_values: np.ndarray,
                            node_features: np.ndarray) -> np.ndarray:
        """out_j = sum over edges (i -> j) of edge_values_e * node_features_i."""
        n = self.num_nodes
        mat = csr_matrix((edge_values[self.t_perm], self.edge_src[self.t_perm],
                          self.indptr), shape=(n, n))
        return mat @ node_features

    @property
    def num_nodes(self) -> int:
        return self.rows * self.cols

    @property
    def num_edges(self) -> int:
        return int(self.indices.size)

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr).astype(np.int64)


def build_grid_topology(rows: int, cols: int) -> GridTopology:
    """Neighbor lists N(i) over a rows x cols grid (Chebyshev distance <= 1)."""
    if rows < 2 or cols < 2:
        raise DimensionError(f"grid must be at least 2x2, got {rows}x{cols}")
    r = np.arange(rows)[:, None, None, None]
    c = np.arange(cols)[None, :, None, None]
    dr = np.array([-1, 0, 1])[None, None, :, None]
    dc = np.array([-1, 0, 1])[None, None, None, :]
    nr = r + dr
    nc = c + dc
    valid = (nr >= 0) & (nr < rows) & (nc >= 0) & (nc < cols)
    neigh = nr * cols + nc  # (rows, cols, 3, 3); row-major over (dr, dc) is ascending
    flat_valid = valid.reshape(rows * cols, 9)
    flat_neigh = neigh.reshape(rows * cols, 9)
    counts = flat_valid.sum(axis=1)
    indptr = np.zeros(rows * cols + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = flat_neigh[flat_valid].astype(np.int32)
    return GridTopology(rows, cols, indptr, indices)


def neighbors(topo: GridTopology, i: int) -> np.ndarray:
    """Ascending neighbor list of node ``i`` (includes ``i`` itself)."""
    if not 0 <= i < topo.num_nodes:
        raise IndexError(f"node index {i} out of range [0, {topo.num_nodes})")
    return topo.indices[topo.indptr[i] : topo.indptr[i + 1]]
