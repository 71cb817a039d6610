"""STL reading/writing and the triangle-mesh container."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyMeshError, MalformedStlError


@dataclass
class TriMesh:
    vertices: np.ndarray   # (n, 3) float64
    triangles: np.ndarray  # (m, 3) int64, indices into vertices

    def triangle_corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices
        t = self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def triangle_areas(self) -> np.ndarray:
        a, b, c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def _weld(raw_vertices: np.ndarray) -> TriMesh:
    """Collapse exactly-equal coordinates into shared vertices.

    ``raw_vertices`` is (3*m, 3), three consecutive rows per triangle.
    """
    unique, inverse = np.unique(raw_vertices, axis=0, return_inverse=True)
    triangles = inverse.reshape(-1, 3).astype(np.int64)
    return TriMesh(unique.astype(np.float64), triangles)


def load_stl(data: bytes) -> TriMesh:
    """Parse binary or ASCII STL bytes into a welded TriMesh.

    Binary files are recognized by their exact record length (a "solid"
    header alone does not make a file ASCII). Raises
    :class:`MalformedStlError` or :class:`EmptyMeshError`.
    """
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            return _load_binary(data, count)
    stripped = data.lstrip()
    if stripped.startswith(b"solid"):
        return _load_ascii(data)
    raise MalformedStlError("not a binary STL (length mismatch) and no ASCII header")


def _load_binary(data: bytes, count: int) -> TriMesh:
    if count == 0:
        raise EmptyMeshError("STL contains no triangles")
    records = np.frombuffer(data, dtype=np.uint8, count=50 * count, offset=84)
    records = records.reshape(count, 50)
    floats = records[:, :48].copy().view("<f4").reshape(count, 12)
    vertices = floats[:, 3:12].reshape(-1, 3).astype(np.float64)
    if not np.all(np.isfinite(vertices)):
        raise MalformedStlError("non-finite vertex coordinates")
    return _weld(vertices)


def _load_ascii(data: bytes) -> TriMesh:
    try:
        text = data.decode("ascii", errors="replace")
    except Exception as exc:  # defensive; replace never raises
        raise MalformedStlError(str(exc))
    tokens = text.split()
    vertices: list[list[float]] = []
    i = 0
    n = len(tokens)
    while i < n:
        tok = tokens[i].lower()
        if tok == "vertex":
            if i + 3 >= n:
                raise MalformedStlError("truncated vertex line")
            try:
                vertices.append([float(tokens[i + 1]),
                                 float(tokens[i + 2]),
                                 float(tokens[i + 3])])
            except ValueError:
                raise MalformedStlError(
                    f"bad vertex coordinates near token {i}: "
                    f"{tokens[i + 1:i + 4]}")
            i += 4
            continue
        i += 1
    if not vertices:
        raise EmptyMeshError("STL contains no triangles")
    if len(vertices) % 3 != 0:
        raise MalformedStlError("vertex count is not a multiple of 3")
    arr = np.array(vertices, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise MalformedStlError("non-finite vertex coordinates")
    return _weld(arr)


def write_stl(mesh: TriMesh) -> bytes:
    """Serialize a mesh to binary STL (useful for fixtures and checkers)."""
    a, b, c = mesh.triangle_corners()
    normals = np.cross(b - a, c - a)
    lengths = np.linalg.norm(normals, axis=1)
    nz = lengths > 0
    normals[nz] /= lengths[nz, None]
    count = len(mesh.triangles)
    out = bytearray(b"\0" * 80)
    out += struct.pack("<I", count)
    for i in range(count):
        out += struct.pack("<3f", *normals[i].astype(np.float32))
        out += struct.pack("<3f", *a[i].astype(np.float32))
        out += struct.pack("<3f", *b[i].astype(np.float32))
        out += struct.pack("<3f", *c[i].astype(np.float32))
        out += struct.pack("<H", 0)
    return bytes(out)
