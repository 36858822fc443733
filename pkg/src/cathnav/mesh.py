"""Triangle meshes for vessel walls.

Vessels are triangulated tubes. Faces are oriented so normals point out of
the lumen wall, away from the centerline; a point inside the lumen
therefore has negative signed distance. Ray casting and point-to-surface
queries run through numba kernels because they sit on the hot path of both
simulation stepping and observation building.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from cathnav.errors import ConfigError

_EPS = 1e-9


@dataclass(frozen=True)
class TriMesh:
    """Vertices (n, 3) in mm and faces (m, 3) as vertex indices."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must be (m, 3), got {f.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face indices out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def face_normals(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        n = np.cross(b - a, c - a)
        lens = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.maximum(lens, _EPS)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals (unnormalized cross products sum)."""
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        fn = np.cross(b - a, c - a)  # magnitude 2*area, weights by itself
        vn = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(vn, self.faces[:, k], fn)
        lens = np.linalg.norm(vn, axis=1, keepdims=True)
        return vn / np.maximum(lens, _EPS)

    def edge_list(self) -> np.ndarray:
        """Unique undirected edges as (k, 2) sorted index pairs."""
        e = np.concatenate(
            [self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]
        )
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    def is_watertight(self) -> bool:
        """True when every edge is shared by exactly two faces."""
        e = np.concatenate(
            [self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]
        )
        e = np.sort(e, axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.faces.tobytes())
        return h.hexdigest()


def load_obj(path) -> TriMesh:
    """Read an ASCII OBJ. Only v and f records are used; polygon faces are fanned."""
    vertices = []
    faces = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ConfigError(f"{path}:{lineno}: vertex needs 3 coordinates")
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise ConfigError(f"{path}:{lineno}: face needs at least 3 vertices")
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices or not faces:
        raise ConfigError(f"{path}: no triangles found")
    return TriMesh(vertices=np.array(vertices), faces=np.array(faces))


def save_obj(path, mesh: TriMesh) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# path helpers


def straight_path(length: float, n: int = 24, origin=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Polyline along +y starting at origin."""
    t = np.linspace(0.0, length, n)
    p = np.zeros((n, 3))
    p[:, 1] = t
    return p + np.asarray(origin, dtype=np.float64)


def bent_path(
    straight_length: float,
    arc_radius: float,
    arc_angle: float,
    n_straight: int = 12,
    n_arc: int = 20,
) -> np.ndarray:
    """Straight run along +y followed by an arc bending toward +x in the xy plane."""
    s = straight_path(straight_length, n_straight)
    ang = np.linspace(0.0, arc_angle, n_arc + 1)[1:]
    center = np.array([arc_radius, straight_length, 0.0])
    arc = np.stack(
        [
            center[0] - arc_radius * np.cos(ang),
            center[1] + arc_radius * np.sin(ang),
            np.zeros_like(ang),
        ],
        axis=1,
    )
    return np.concatenate([s, arc])


def arc_path(radius: float, angle: float, n: int = 24, origin=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Circular arc in the xy plane, starting at origin heading +y, bending toward +x."""
    ang = np.linspace(0.0, angle, n)
    center = np.asarray(origin, dtype=np.float64) + np.array([radius, 0.0, 0.0])
    return np.stack(
        [
            center[0] - radius * np.cos(ang),
            center[1] + radius * np.sin(ang),
            np.full_like(ang, center[2]),
        ],
        axis=1,
    )


def _transport_frames(path: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Parallel-transport normal/binormal frames along a polyline.

    Rotating the previous normal by the rotation aligning successive
    tangents avoids the twist a fixed reference axis would introduce at
    near-parallel configurations.
    """
    n = len(path)
    tangents = np.zeros((n, 3))
    tangents[:-1] = path[1:] - path[:-1]
    tangents[-1] = tangents[-2]
    tangents /= np.maximum(np.linalg.norm(tangents, axis=1, keepdims=True), _EPS)

    normals = np.zeros((n, 3))
    ref = np.array([1.0, 0.0, 0.0])
    if abs(np.dot(ref, tangents[0])) > 0.9:
        ref = np.array([0.0, 0.0, 1.0])
    normals[0] = np.cross(tangents[0], np.cross(ref, tangents[0]))
    normals[0] /= np.linalg.norm(normals[0])
    for i in range(1, n):
        t0, t1 = tangents[i - 1], tangents[i]
        axis = np.cross(t0, t1)
        s = np.linalg.norm(axis)
        c = np.dot(t0, t1)
        if s < _EPS:
            normals[i] = normals[i - 1]
            continue
        axis = axis / s
        v = normals[i - 1]
        # Rodrigues rotation by the angle between tangents
        normals[i] = v * c + np.cross(axis, v) * s + axis * np.dot(axis, v) * (1 - c)
        normals[i] /= np.linalg.norm(normals[i])
    binormals = np.cross(tangents, normals)
    return normals, binormals


def tube_along_path(
    path: np.ndarray, radius: float, n_around: int = 16, cap_ends: bool = False
) -> TriMesh:
    """Swept tube around a polyline, normals facing outward.

    With cap_ends the two openings are closed by triangle fans, producing a
    watertight surface (needed for interior/exterior queries and centerline
    extraction).
    """
    path = np.asarray(path, dtype=np.float64)
    if path.ndim != 2 or path.shape[1] != 3 or len(path) < 2:
        raise ValueError("path must be (n>=2, 3)")
    if radius <= 0 or n_around < 3:
        raise ValueError("radius must be positive and n_around >= 3")
    normals, binormals = _transport_frames(path)
    theta = np.linspace(0.0, 2.0 * np.pi, n_around, endpoint=False)
    ct, st = np.cos(theta), np.sin(theta)
    rings = (
        path[:, None, :]
        + radius * (normals[:, None, :] * ct[None, :, None] + binormals[:, None, :] * st[None, :, None])
    )
    vertices = rings.reshape(-1, 3)
    faces = []
    for i in range(len(path) - 1):
        for j in range(n_around):
            a = i * n_around + j
            b = i * n_around + (j + 1) % n_around
            c = (i + 1) * n_around + j
            d = (i + 1) * n_around + (j + 1) % n_around
            faces.append([a, b, d])
            faces.append([a, d, c])
    mesh = TriMesh(vertices=vertices, faces=np.array(faces))
    mesh = _orient_outward(mesh, path)
    if not cap_ends:
        return mesh

    tangents = np.zeros((len(path), 3))
    tangents[:-1] = path[1:] - path[:-1]
    tangents[-1] = tangents[-2]
    cap_faces = []
    verts = [mesh.vertices]
    start_center = len(mesh.vertices)
    verts.append(path[0][None, :])
    end_center = start_center + 1
    verts.append(path[-1][None, :])
    last_ring = (len(path) - 1) * n_around
    for j in range(n_around):
        cap_faces.append([start_center, j, (j + 1) % n_around])
        cap_faces.append([end_center, last_ring + j, last_ring + (j + 1) % n_around])
    capped = TriMesh(
        vertices=np.concatenate(verts), faces=np.concatenate([mesh.faces, np.array(cap_faces)])
    )
    # orient cap fans outward along the end tangents
    fn = capped.face_normals()
    faces = capped.faces.copy()
    n_side = len(mesh.faces)
    for k in range(n_side, len(faces)):
        outward = tangents[-1] if faces[k, 0] == end_center else -tangents[0]
        if np.dot(fn[k], outward) < 0.0:
            faces[k] = faces[k][[0, 2, 1]]
    return TriMesh(vertices=capped.vertices, faces=faces)


def _orient_outward(mesh: TriMesh, path: np.ndarray) -> TriMesh:
    """Flip any face whose normal points toward the sweep path."""
    fn = mesh.face_normals()
    centroids = mesh.vertices[mesh.faces].mean(axis=1)
    d = centroids[:, None, :] - path[None, :, :]
    nearest = np.argmin((d ** 2).sum(axis=2), axis=1)
    outward = centroids - path[nearest]
    flip = (fn * outward).sum(axis=1) < 0.0
    faces = mesh.faces.copy()
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return TriMesh(vertices=mesh.vertices, faces=faces)


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _ray_hit(origin, direction, vertices, faces, max_len):  # pragma: no cover - jit
    best = np.inf
    for k in range(faces.shape[0]):
        a = vertices[faces[k, 0]]
        e1 = vertices[faces[k, 1]] - a
        e2 = vertices[faces[k, 2]] - a
        # Moller-Trumbore
        px = direction[1] * e2[2] - direction[2] * e2[1]
        py = direction[2] * e2[0] - direction[0] * e2[2]
        pz = direction[0] * e2[1] - direction[1] * e2[0]
        det = e1[0] * px + e1[1] * py + e1[2] * pz
        if -1e-12 < det < 1e-12:
            continue
        inv = 1.0 / det
        tx = origin[0] - a[0]
        ty = origin[1] - a[1]
        tz = origin[2] - a[2]
        u = (tx * px + ty * py + tz * pz) * inv
        if u < -1e-9 or u > 1.0 + 1e-9:
            continue
        qx = ty * e1[2] - tz * e1[1]
        qy = tz * e1[0] - tx * e1[2]
        qz = tx * e1[1] - ty * e1[0]
        v = (direction[0] * qx + direction[1] * qy + direction[2] * qz) * inv
        if v < -1e-9 or u + v > 1.0 + 1e-9:
            continue
        t = (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv
        if 1e-9 < t < best and t <= max_len:
            best = t
    return best


@numba.njit(cache=True)
def _ray_fan(origin, directions, vertices, faces, max_len):  # pragma: no cover - jit
    out = np.empty(directions.shape[0])
    for i in range(directions.shape[0]):
        out[i] = _ray_hit(origin, directions[i], vertices, faces, max_len)
    return out


@numba.njit(cache=True)
def _closest_on_triangle(p, a, b, c):  # pragma: no cover - jit
    # Ericson, Real-Time Collision Detection: barycentric region walk
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab[0] * ap[0] + ab[1] * ap[1] + ab[2] * ap[2]
    d2 = ac[0] * ap[0] + ac[1] * ap[1] + ac[2] * ap[2]
    if d1 <= 0.0 and d2 <= 0.0:
        return a
    bp = p - b
    d3 = ab[0] * bp[0] + ab[1] * bp[1] + ab[2] * bp[2]
    d4 = ac[0] * bp[0] + ac[1] * bp[1] + ac[2] * bp[2]
    if d3 >= 0.0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        return a + ab * (d1 / (d1 - d3))
    cp = p - c
    d5 = ab[0] * cp[0] + ab[1] * cp[1] + ab[2] * cp[2]
    d6 = ac[0] * cp[0] + ac[1] * cp[1] + ac[2] * cp[2]
    if d6 >= 0.0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        return a + ac * (d2 / (d2 - d6))
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)))
    denom = 1.0 / (va + vb + vc)
    return a + ab * (vb * denom) + ac * (vc * denom)


@numba.njit(cache=True)
def _nearest_face(p, vertices, faces):  # pragma: no cover - jit
    best_d2 = np.inf
    best_k = -1
    best_q = np.zeros(3)
    for k in range(faces.shape[0]):
        q = _closest_on_triangle(p, vertices[faces[k, 0]], vertices[faces[k, 1]], vertices[faces[k, 2]])
        d2 = (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2
        if d2 < best_d2:
            best_d2 = d2
            best_k = k
            best_q = q
    return best_k, best_q, np.sqrt(best_d2)


def raycast(mesh: TriMesh, origin: np.ndarray, direction: np.ndarray, max_len: float) -> float:
    """Distance to the nearest surface hit along a unit direction, inf if none within max_len."""
    direction = np.asarray(direction, dtype=np.float64)
    n = np.linalg.norm(direction)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"direction must be unit length, got norm {n}")
    return float(
        _ray_hit(
            np.ascontiguousarray(origin, dtype=np.float64),
            np.ascontiguousarray(direction),
            mesh.vertices,
            mesh.faces,
            max_len,
        )
    )


def raycast_fan(mesh: TriMesh, origin: np.ndarray, directions: np.ndarray, max_len: float) -> np.ndarray:
    """Per-ray hit distances for a batch of unit directions (inf where no hit)."""
    directions = np.ascontiguousarray(directions, dtype=np.float64)
    return _ray_fan(
        np.ascontiguousarray(origin, dtype=np.float64), directions, mesh.vertices, mesh.faces, max_len
    )


def nearest_surface_point(mesh: TriMesh, point: np.ndarray):
    """(face index, closest point, distance) for the nearest bit of surface."""
    k, q, d = _nearest_face(np.ascontiguousarray(point, dtype=np.float64), mesh.vertices, mesh.faces)
    return int(k), q, float(d)


def signed_distance(mesh: TriMesh, point: np.ndarray) -> float:
    """Distance to the wall, negative inside the lumen (normals face outward)."""
    k, q, d = nearest_surface_point(mesh, point)
    normal = mesh.face_normals()[k]
    sign = 1.0 if np.dot(np.asarray(point, dtype=np.float64) - q, normal) >= 0.0 else -1.0
    return sign * d
