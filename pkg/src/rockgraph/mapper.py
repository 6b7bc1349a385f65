"""Voxel volume to two-phase graph conversion.

The pipeline projects voxels onto one coordinate axis, covers that axis with
overlapping intervals, finds connected same-phase clusters inside each
interval slab (6-connectivity), and links clusters from consecutive
intervals that share voxels. It runs once per phase (solid, then pore) and
concatenates the results into a single node-attributed graph. Each node
carries a fixed 12-slot feature vector:

    [cx, cy, cz, a, b, c, point_count,
     degree, closeness, eigencentrality, pagerank, phase]

Geometry is in voxel units; the four graph metrics are computed on the
node's own phase subgraph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import metrics
from .voxel import PORE, SOLID, VoxelGrid

F_CX, F_CY, F_CZ, F_A, F_B, F_C, F_COUNT, F_DEGREE, F_CLOSENESS, F_EIGEN, F_PAGERANK, F_PHASE = range(12)
N_FEATURES = 12
FEATURE_NAMES = [
    "center_x", "center_y", "center_z", "extent_x", "extent_y", "extent_z",
    "point_count", "degree", "closeness", "eigencentrality", "pagerank", "phase",
]

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class MapperParams:
    n_intervals: int = 10
    overlap: float = 0.5
    axis: str = "x"

    def __post_init__(self):
        if self.n_intervals < 1:
            raise ValueError(f"n_intervals must be >= 1, got {self.n_intervals}")
        if not (0.0 <= self.overlap < 1.0):
            raise ValueError(f"overlap must be in [0, 1), got {self.overlap}")
        if self.axis not in _AXES:
            raise ValueError(f"axis must be one of {sorted(_AXES)}, got {self.axis!r}")

    @property
    def axis_index(self) -> int:
        return _AXES[self.axis]


@dataclass(frozen=True)
class CoverInterval:
    """Half-open [lo, hi) span of filter-axis coordinates, in voxel units."""

    index: int
    lo: float
    hi: float

    def coordinate_span(self) -> tuple[int, int]:
        """Integer coordinates covered: [first, last) with first = ceil(lo)."""
        return int(np.ceil(self.lo)), int(np.ceil(self.hi))


def build_cover(length: int, params: MapperParams) -> list[CoverInterval]:
    """Overlapping cover of [0, length).

    Base width w = length / n_intervals; interval i spans
    [i*w - p*w/2, (i+1)*w + p*w/2) clamped to the volume, where p is the
    overlap fraction. Consecutive intervals share a band of width p*w.
    """
    n = params.n_intervals
    if n > length:
        raise ValueError(f"n_intervals={n} exceeds axis length {length}")
    w = length / n
    ext = params.overlap * w / 2.0
    intervals = []
    for i in range(n):
        lo = max(0.0, i * w - ext)
        hi = min(float(length), (i + 1) * w + ext)
        intervals.append(CoverInterval(i, lo, hi))
    return intervals


@dataclass
class Cluster:
    """Connected same-phase voxel set inside one cover interval."""

    id: int
    phase: int
    interval_index: int
    coords: np.ndarray      # (m, 3) global integer voxel coordinates
    center: np.ndarray      # (3,) mean coordinate
    extents: np.ndarray     # (3,) bounding-box sizes in voxels
    point_count: int


def cluster_interval(grid: VoxelGrid, interval: CoverInterval, phase: int,
                     axis: int = 0) -> list[Cluster]:
    """Connected components (face adjacency) of one phase within a slab.

    Returns clusters in discovery (raster-scan) order; every qualifying
    voxel belongs to exactly one cluster.
    """
    vol = grid.volume()
    if axis != 0:
        vol = np.moveaxis(vol, axis, 0)
    x0, x1 = interval.coordinate_span()
    x0 = max(x0, 0)
    x1 = min(x1, vol.shape[0])
    if x0 >= x1:
        return []
    slab = vol[x0:x1]
    labels, n_labels = ndimage.label(slab == phase)
    if n_labels == 0:
        return []
    xs, ys, zs = np.nonzero(labels)
    lab = labels[xs, ys, zs]
    order = np.argsort(lab, kind="stable")
    xs, ys, zs, lab = xs[order], ys[order], zs[order], lab[order]
    bounds = np.searchsorted(lab, np.arange(1, n_labels + 2))
    coords_all = np.column_stack([xs + x0, ys, zs]).astype(np.int64)
    if axis != 0:
        # undo the moveaxis on coordinate columns
        perm = list(range(3))
        perm.insert(axis, perm.pop(0))
        coords_all = coords_all[:, perm]
    clusters = []
    for k in range(n_labels):
        pts = coords_all[bounds[k]:bounds[k + 1]]
        clusters.append(Cluster(
            id=k,
            phase=phase,
            interval_index=interval.index,
            coords=pts,
            center=pts.mean(axis=0),
            extents=(pts.max(axis=0) - pts.min(axis=0) + 1).astype(np.int64),
            point_count=pts.shape[0],
        ))
    return clusters


def node_feature_vector(cluster: Cluster, deg: float, clo: float, eig: float,
                        pr: float) -> np.ndarray:
    """Assemble the 12-slot node feature vector for one cluster."""
    out = np.empty(N_FEATURES, dtype=np.float64)
    out[F_CX:F_CZ + 1] = cluster.center
    out[F_A:F_C + 1] = cluster.extents
    out[F_COUNT] = cluster.point_count
    out[F_DEGREE] = deg
    out[F_CLOSENESS] = clo
    out[F_EIGEN] = eig
    out[F_PAGERANK] = pr
    out[F_PHASE] = cluster.phase
    return out


@dataclass
class RockGraph:
    """Node-attributed undirected graph built from a voxel volume.

    features: (n, 12) float matrix, one row per node (solid nodes first).
    phases:   (n,) uint8 phase per node.
    edges:    (m, 2) int array, i < j, lexicographically sorted.
    """

    params: MapperParams
    features: np.ndarray
    phases: np.ndarray
    edges: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]


def _linear_index(coords: np.ndarray, dims) -> np.ndarray:
    nx, ny, _ = dims
    return coords[:, 0] + nx * (coords[:, 1] + ny * coords[:, 2])


def _phase_edges(per_interval: list[list[Cluster]], intervals: list[CoverInterval],
                 grid: VoxelGrid, axis: int, offsets: list[int]) -> set[tuple[int, int]]:
    """Link clusters of consecutive intervals that share overlap-band voxels."""
    edges = set()
    for i in range(len(intervals) - 1):
        left, right = per_interval[i], per_interval[i + 1]
        if not left or not right:
            continue
        band_lo, band_hi = intervals[i + 1].lo, intervals[i].hi
        if band_lo >= band_hi:
            continue
        lin_l, cid_l = [], []
        for c in left:
            sel = c.coords[:, axis] >= band_lo
            if sel.any():
                lin_l.append(_linear_index(c.coords[sel], grid.dims))
                cid_l.append(np.full(int(sel.sum()), offsets[i] + c.id, dtype=np.int64))
        lin_r, cid_r = [], []
        for c in right:
            sel = c.coords[:, axis] < band_hi
            if sel.any():
                lin_r.append(_linear_index(c.coords[sel], grid.dims))
                cid_r.append(np.full(int(sel.sum()), offsets[i + 1] + c.id, dtype=np.int64))
        if not lin_l or not lin_r:
            continue
        lin_l = np.concatenate(lin_l)
        cid_l = np.concatenate(cid_l)
        lin_r = np.concatenate(lin_r)
        cid_r = np.concatenate(cid_r)
        # voxels are unique within one interval, so sort+search pairs them up
        order = np.argsort(lin_l)
        lin_l, cid_l = lin_l[order], cid_l[order]
        pos = np.searchsorted(lin_l, lin_r)
        pos_ok = pos < lin_l.size
        hit = pos_ok & (lin_l[np.minimum(pos, lin_l.size - 1)] == lin_r)
        for a, b in zip(cid_l[pos[hit]], cid_r[hit]):
            edges.add((int(a), int(b)))
    return edges


def build_graph(grid: VoxelGrid, params: MapperParams) -> RockGraph:
    """Run the per-phase pipeline and concatenate the two phase graphs.

    Node order is deterministic: solid clusters first (by interval, then
    discovery order), then pore clusters. Edges only ever join same-phase
    clusters from consecutive intervals.
    """
    axis = params.axis_index
    length = grid.dims[axis]
    intervals = build_cover(length, params)

    all_features = []
    all_phases = []
    all_edges = []
    base = 0
    for phase in (SOLID, PORE):
        per_interval = [cluster_interval(grid, iv, phase, axis) for iv in intervals]
        offsets = []
        count = 0
        for clusters in per_interval:
            offsets.append(base + count)
            count += len(clusters)
        local_offsets = [o - base for o in offsets]
        edges_local = _phase_edges(per_interval, intervals, grid, axis,
                                   local_offsets)
        sub = metrics.SimpleGraph(count, edges_local)
        deg = metrics.degree(sub)
        clo = metrics.closeness(sub)
        eig = metrics.eigencentrality(sub)
        pr = metrics.pagerank(sub)
        for clusters in per_interval:
            for c in clusters:
                gid = len(all_features)
                local = gid - base
                all_features.append(node_feature_vector(
                    c, float(deg[local]), clo[local], eig[local], pr[local]))
                all_phases.append(phase)
        for a, b in edges_local:
            i, j = base + a, base + b
            all_edges.append((min(i, j), max(i, j)))
        base += count

    features = np.array(all_features, dtype=np.float64).reshape(-1, N_FEATURES)
    phases = np.array(all_phases, dtype=np.uint8)
    if all_edges:
        edges = np.array(sorted(set(all_edges)), dtype=np.int64)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    return RockGraph(params=params, features=features, phases=phases, edges=edges)


def save_graph(graph: RockGraph, path) -> None:
    """Write the graph as stable-ordered JSON."""
    doc = {
        "format_version": 1,
        "params": {
            "n_intervals": graph.params.n_intervals,
            "overlap": graph.params.overlap,
            "axis": graph.params.axis,
        },
        "nodes": [
            {
                "id": i,
                "phase": int(graph.phases[i]),
                "feature": [float(v) for v in graph.features[i]],
            }
            for i in range(graph.n_nodes)
        ],
        "edges": [[int(a), int(b)] for a, b in graph.edges],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_graph(path) -> RockGraph:
    doc = json.loads(Path(path).read_text())
    params = MapperParams(**doc["params"])
    nodes = doc["nodes"]
    features = np.array([n["feature"] for n in nodes], dtype=np.float64).reshape(-1, N_FEATURES)
    phases = np.array([n["phase"] for n in nodes], dtype=np.uint8)
    edges = np.array(doc["edges"], dtype=np.int64).reshape(-1, 2)
    return RockGraph(params=params, features=features, phases=phases, edges=edges)
