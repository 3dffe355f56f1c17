"""Regular 2D grid domains and their 4-connected graphs.

Nodes are numbered row-major: node i = row * nx + col, with x = col * dx and
y = row * dy. This ordering is shared by the dataset files and the graph, so
a flat field array and a grid always agree. Connectivity is 4-neighbor (no
diagonals), matching the 5-point stencils of the data generators.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """A uniform rectangular grid: nx * ny nodes with spacing dx = dy."""

    nx: int
    ny: int
    dx: float
    dy: float | None = None

    def __post_init__(self):
        if self.dy is None:
            object.__setattr__(self, "dy", self.dx)
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid needs nx, ny >= 2, got {self.nx}x{self.ny}")
        if self.dx <= 0 or self.dy <= 0:
            raise ValueError("grid spacing must be positive")
        # uniform spacing is assumed throughout (square cells)
        if abs(self.dx - self.dy) > 1e-12 * max(self.dx, self.dy):
            raise ValueError(f"dx and dy must match, got dx={self.dx}, dy={self.dy}")

    @property
    def node_count(self) -> int:
        return self.nx * self.ny

    @property
    def lx(self) -> float:
        return (self.nx - 1) * self.dx

    @property
    def ly(self) -> float:
        return (self.ny - 1) * self.dy

    def node_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.ny and 0 <= col < self.nx):
            raise ValueError(f"node ({row}, {col}) outside {self.nx}x{self.ny} grid")
        return row * self.nx + col

    def node_rowcol(self, i: int) -> tuple[int, int]:
        if not (0 <= i < self.node_count):
            raise ValueError(f"node id {i} outside [0, {self.node_count})")
        return i // self.nx, i % self.nx

    def coords(self) -> np.ndarray:
        """(node_count, 2) array of (x, y) positions, row-major order."""
        cols = np.arange(self.node_count) % self.nx
        rows = np.arange(self.node_count) // self.nx
        return np.column_stack([cols * self.dx, rows * self.dy])

    def boundary_flags(self) -> np.ndarray:
        """Boolean per-node array, True exactly on the grid perimeter."""
        rows = np.arange(self.node_count) // self.nx
        cols = np.arange(self.node_count) % self.nx
        return (rows == 0) | (rows == self.ny - 1) | (cols == 0) | (cols == self.nx - 1)


@dataclass(frozen=True)
class NodeMask:
    """Boundary flags plus the matching one-hot node-type feature.

    one_hot columns are (interior, boundary).
    """

    is_boundary: np.ndarray
    one_hot: np.ndarray


def build_node_mask(spec: GridSpec) -> NodeMask:
    flags = spec.boundary_flags()
    one_hot = np.column_stack([(~flags).astype(float), flags.astype(float)])
    return NodeMask(is_boundary=flags, one_hot=one_hot)


class GraphTopology:
    """Symmetric directed-edge graph with edges grouped by receiving node.

    Edges are canonically sorted by (receiver, sender); the per-node segment
    boundaries (recv_starts) make segment reductions over incoming messages
    cheap, and reverse_edge[k] gives the index of the opposite-direction edge
    so scatter-by-sender reuses the same segments.
    """

    def __init__(self, node_count: int, edges: np.ndarray, require_connected: bool = True):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= node_count):
            raise ValueError("edge endpoint outside node range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops not allowed")
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        self.edges = edges[order]
        self.node_count = node_count

        key = self.edges[:, 0] * node_count + self.edges[:, 1]
        if np.any(np.diff(key) == 0):
            raise ValueError("duplicate edges")
        rev_key = self.edges[:, 1] * node_count + self.edges[:, 0]
        pos = np.searchsorted(key, rev_key)
        if pos.size and (np.any(pos >= key.size) or np.any(key[pos] != rev_key)):
            raise ValueError("edge set is not symmetric")
        self.reverse_edge = pos

        self.degrees = np.bincount(self.edges[:, 0], minlength=node_count)
        self.recv_starts = np.concatenate([[0], np.cumsum(self.degrees)])
        if require_connected and (np.any(self.degrees == 0) or not self._connected()):
            raise ValueError("graph must be connected")

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        """Sorted array of nodes adjacent to i."""
        return self.edges[self.recv_starts[i]:self.recv_starts[i + 1], 1]

    def _connected(self) -> bool:
        seen = np.zeros(self.node_count, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            nxt = []
            for u in frontier:
                for v in self.neighbors(u):
                    if not seen[v]:
                        seen[v] = True
                        nxt.append(int(v))
            frontier = nxt
        return bool(seen.all())


def build_grid_graph(spec: GridSpec) -> GraphTopology:
    """4-connected lattice for the grid, 2*(nx*(ny-1) + ny*(nx-1)) directed edges."""
    nx, ny = spec.nx, spec.ny
    ids = np.arange(nx * ny).reshape(ny, nx)
    horiz = np.column_stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()])
    vert = np.column_stack([ids[:-1, :].ravel(), ids[1:, :].ravel()])
    one_way = np.vstack([horiz, vert])
    edges = np.vstack([one_way, one_way[:, ::-1]])
    return GraphTopology(nx * ny, edges)


def hop_distances_from(topo: GraphTopology, source: int) -> np.ndarray:
    """BFS distances from source to every node."""
    if not (0 <= source < topo.node_count):
        raise ValueError(f"node id {source} out of range")
    dist = np.full(topo.node_count, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in topo.neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(int(v))
    return dist

def hop_distance(topo: GraphTopology, i: int, j: int) -> int:
    """Shortest-path edge count between nodes i and j."""
    if not (0 <= j < topo.node_count):
        raise ValueError(f"node id {j} out of range")
    return int(hop_distances_from(topo, i)[j])


def graph_diameter(topo: GraphTopology) -> int:
    """Largest hop distance over all node pairs (BFS from every node)."""
    return max(int(hop_distances_from(topo, s).max()) for s in range(topo.node_count))


def save_grid(spec: GridSpec, path: str | Path) -> None:
    """Plain-text grid header; topology is reconstructed on load, never stored."""
    text = f"nx={spec.nx}\nny={spec.ny}\ndx={spec.dx!r}\ndy={spec.dy!r}\n"
    Path(path).write_text(text)


def load_grid(path: str | Path) -> GridSpec:
    fields = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        return GridSpec(
            nx=int(fields["nx"]), ny=int(fields["ny"]),
            dx=float(fields["dx"]), dy=float(fields["dy"]),
        )
    except KeyError as missing:
        raise ValueError(f"grid header missing field {missing}") from None
