"""Maximal-clearance centerline extraction for tubular meshes.

The guidance polyline follows the medial axis of the lumen. Interior
Voronoi vertices of the wall vertices approximate that axis; a shortest
path through them, weighted to prefer high clearance, links the inlet to
the outlet. A refinement pass then nudges each waypoint to a clearance
maximum within its own cross-section, and the result is resampled to a
uniform spacing.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import Voronoi

from cathnav.errors import ExtractionError
from cathnav.mesh import TriMesh, nearest_surface_point, signed_distance
from cathnav.validation import check_vector3


def extract_centerline(
    mesh: TriMesh,
    inlet: np.ndarray,
    outlet: np.ndarray,
    waypoint_spacing: float = 5.0,
) -> np.ndarray:
    """Ordered interior waypoints from inlet to outlet, spacing <= waypoint_spacing.

    The mesh must be watertight; callers with open scans should pass a
    precomputed centerline file to the scenario instead.
    """
    inlet = check_vector3(inlet, "inlet")
    outlet = check_vector3(outlet, "outlet")
    if waypoint_spacing <= 0.0:
        raise ValueError(f"waypoint_spacing must be positive, got {waypoint_spacing}")
    if len(mesh.faces) == 0 or len(mesh.vertices) < 8:
        raise ExtractionError("mesh is degenerate, supply a centerline file instead")
    if not mesh.is_watertight():
        raise ExtractionError("mesh is not watertight, supply a centerline file instead")

    nodes, clearance, edges = _interior_medial_graph(mesh)
    if len(nodes) < 2:
        raise ExtractionError("no interior medial vertices found")
    path = _clearance_weighted_path(nodes, clearance, edges, inlet, outlet)
    path = _refine_cross_sections(mesh, path)
    return resample_polyline(path, waypoint_spacing)


def _interior_medial_graph(mesh: TriMesh):
    """Interior Voronoi vertices of the wall points, their clearances, and edges."""
    vor = Voronoi(mesh.vertices)
    verts = vor.vertices
    clearance = np.array([-signed_distance(mesh, v) for v in verts])
    # keep vertices clearly inside; wall-hugging slivers are artifacts
    keep = clearance > 1e-3
    index_map = -np.ones(len(verts), dtype=np.int64)
    index_map[keep] = np.arange(keep.sum())

    edges = set()
    for ridge in vor.ridge_vertices:
        m = len(ridge)
        for k in range(m):
            a, b = ridge[k], ridge[(k + 1) % m]
            if a < 0 or b < 0:
                continue
            ia, ib = index_map[a], index_map[b]
            if ia < 0 or ib < 0 or ia == ib:
                continue
            edges.add((min(ia, ib), max(ia, ib)))
    edge_arr = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    return verts[keep], clearance[keep], edge_arr


def _clearance_weighted_path(nodes, clearance, edges, inlet, outlet):
    if len(edges) == 0:
        raise ExtractionError("medial graph has no edges")
    lengths = np.linalg.norm(nodes[edges[:, 1]] - nodes[edges[:, 0]], axis=1)
    # short hops through wide spaces are cheap, wall-hugging hops expensive
    weights = lengths / np.minimum(clearance[edges[:, 0]], clearance[edges[:, 1]])
    n = len(nodes)
    graph = coo_matrix(
        (np.concatenate([weights, weights]),
         (np.concatenate([edges[:, 0], edges[:, 1]]), np.concatenate([edges[:, 1], edges[:, 0]]))),
        shape=(n, n),
    ).tocsr()
    # nearest node biased toward high clearance, so cap-corner slivers lose
    src = int(np.argmin(np.linalg.norm(nodes - inlet, axis=1) - clearance))
    dst = int(np.argmin(np.linalg.norm(nodes - outlet, axis=1) - clearance))
    dist, pred = dijkstra(graph, indices=src, return_predecessors=True)
    if not np.isfinite(dist[dst]):
        raise ExtractionError("inlet and outlet are not connected through the lumen")
    order = [dst]
    while order[-1] != src:
        order.append(int(pred[order[-1]]))
    return nodes[order[::-1]]


def _refine_cross_sections(mesh: TriMesh, path: np.ndarray, iterations: int = 30, step: float = 0.3) -> np.ndarray:
    """Push interior waypoints toward the clearance maximum of their cross-section."""
    path = path.copy()
    for _ in range(iterations):
        if len(path) < 3:
            break
        tangents = np.zeros_like(path)
        tangents[1:-1] = path[2:] - path[:-2]
        tangents[0] = path[1] - path[0]
        tangents[-1] = path[-1] - path[-2]
        tangents /= np.maximum(np.linalg.norm(tangents, axis=1, keepdims=True), 1e-12)
        for i in range(len(path)):
            _, q, d = nearest_surface_point(mesh, path[i])
            away = path[i] - q
            norm = np.linalg.norm(away)
            if norm < 1e-12:
                continue
            away /= norm
            lateral = away - np.dot(away, tangents[i]) * tangents[i]
            path[i] = path[i] + step * min(d, 1.0) * lateral
        # light smoothing keeps the polyline from zigzagging between facets
        path[1:-1] = 0.5 * path[1:-1] + 0.25 * (path[:-2] + path[2:])
    return path


def resample_polyline(path: np.ndarray, spacing: float) -> np.ndarray:
    """Uniform arc-length resampling with actual spacing <= the requested one."""
    path = np.asarray(path, dtype=np.float64)
    if len(path) < 2:
        return path.copy()
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 1e-12])
    path = path[keep]
    if len(path) < 2:
        return path.copy()
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    n_out = max(int(np.ceil(total / spacing)) + 1, 2)
    si = np.linspace(0.0, total, n_out)
    return np.stack([np.interp(si, s, path[:, k]) for k in range(3)], axis=1)


def load_centerline_file(path) -> np.ndarray:
    """Read waypoints from text, one x y z triple per line, '#' comments."""
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#")[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ExtractionError(f"{path}:{lineno}: expected 3 coordinates, got {len(parts)}")
            pts.append([float(x) for x in parts])
    if len(pts) < 2:
        raise ExtractionError(f"{path}: a centerline needs at least 2 waypoints")
    return np.array(pts)


def save_centerline_file(path, waypoints: np.ndarray) -> None:
    lines = [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in np.asarray(waypoints)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
