"""Triangle meshes: OFF/OBJ reading and writing, translation/scale normalization."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateGeometryError, MeshParseError


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    id: str = ""

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64)
        faces = np.asarray(self.faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValueError(f"vertices must have shape (n, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must have shape (m, 3), got {faces.shape}")
        if len(vertices) < 3 or len(faces) < 1:
            raise ValueError("a mesh needs at least 3 vertices and 1 face")
        if faces.min() < 0 or faces.max() >= len(vertices):
            raise ValueError("face index out of range")
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def triangles(self):
        """Corner coordinates, shape ``(n_faces, 3, 3)``."""
        return self.vertices[self.faces]

    def face_areas(self):
        tri = self.triangles()
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def surface_centroid(self):
        """Area-weighted mean of the triangle centroids."""
        areas = self.face_areas()
        total = areas.sum()
        if not total > 0:
            raise DegenerateGeometryError("mesh has zero total surface area")
        centers = self.triangles().mean(axis=1)
        return (areas[:, None] * centers).sum(axis=0) / total

    def transformed(self, scale=1.0, translation=(0.0, 0.0, 0.0)):
        """Return ``scale * vertices + translation`` with the same faces."""
        v = scale * self.vertices + np.asarray(translation, dtype=np.float64)
        return TriangleMesh(v, self.faces, self.id)


def _fan(polygon):
    return [(polygon[0], polygon[k], polygon[k + 1]) for k in range(1, len(polygon) - 1)]


def _parse_floats(tokens, lineno, path, count=3):
    if len(tokens) < count:
        raise MeshParseError(f"expected {count} coordinates, got {len(tokens)}", lineno, path)
    try:
        values = [float(t) for t in tokens[:count]]
    except ValueError:
        raise MeshParseError(f"non-numeric coordinate in {tokens[:count]!r}", lineno, path) from None
    if not all(np.isfinite(values)):
        raise MeshParseError("non-finite coordinate", lineno, path)
    return values


def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_off(text, model_id="", path=None):
    lines = _content_lines(text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MeshParseError("empty file", 1, path) from None

    # some OFF writers put the counts on the header line ("OFF 8 12 0")
    tokens = header.split()
    if tokens[0] != "OFF":
        if tokens[0].startswith("OFF") and len(tokens[0]) > 3:
            tokens = ["OFF", tokens[0][3:]] + tokens[1:]
        else:
            raise MeshParseError(f"expected 'OFF' header, got {tokens[0]!r}", lineno, path)
    counts = tokens[1:]
    if not counts:
        try:
            lineno, count_line = next(lines)
        except StopIteration:
            raise MeshParseError("missing counts line", lineno + 1, path) from None
        counts = count_line.split()
    try:
        n_vertices, n_faces = int(counts[0]), int(counts[1])
    except (ValueError, IndexError):
        raise MeshParseError(f"malformed counts line {' '.join(counts)!r}", lineno, path) from None
    if n_vertices < 0 or n_faces < 0:
        raise MeshParseError("negative element count", lineno, path)

    vertices = []
    for _ in range(n_vertices):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshParseError(f"expected {n_vertices} vertices, file ended", lineno, path) from None
        vertices.append(_parse_floats(line.split(), lineno, path))

    faces = []
    for _ in range(n_faces):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshParseError(f"expected {n_faces} faces, file ended", lineno, path) from None
        tokens = line.split()
        try:
            k = int(tokens[0])
            polygon = [int(t) for t in tokens[1:k + 1]]
        except ValueError:
            raise MeshParseError(f"non-integer face entry in {line!r}", lineno, path) from None
        if k < 3:
            raise MeshParseError(f"polygon with {k} vertices", lineno, path)
        if len(polygon) != k:
            raise MeshParseError(f"face declares {k} vertices but lists {len(polygon)}", lineno, path)
        for index in polygon:
            if not 0 <= index < n_vertices:
                raise MeshParseError(
                    f"face index {index} out of range for {n_vertices} vertices", lineno, path)
        faces.extend(_fan(polygon))

    if n_vertices < 3 or not faces:
        raise MeshParseError("mesh needs at least 3 vertices and 1 face", lineno, path)
    return TriangleMesh(np.array(vertices), np.array(faces), model_id)


def parse_obj(text, model_id="", path=None):
    vertices = []
    polygons = []
    for lineno, line in _content_lines(text):
        tokens = line.split()
        if tokens[0] == "v":
            vertices.append(_parse_floats(tokens[1:], lineno, path))
        elif tokens[0] == "f":
            polygon = []
            for token in tokens[1:]:
                try:
                    index = int(token.split("/", 1)[0])
                except ValueError:
                    raise MeshParseError(f"non-integer face entry {token!r}", lineno, path) from None
                if index == 0:
                    raise MeshParseError("OBJ face index 0", lineno, path)
                # OBJ indices are 1-based; negative ones count back from the current end
                polygon.append(index - 1 if index > 0 else len(vertices) + index)
            if len(polygon) < 3:
                raise MeshParseError(f"polygon with {len(polygon)} vertices", lineno, path)
            polygons.append((lineno, polygon))
    faces = []
    for lineno, polygon in polygons:
        for index in polygon:
            if not 0 <= index < len(vertices):
                raise MeshParseError(
                    f"face index {index + 1} out of range for {len(vertices)} vertices", lineno, path)
        faces.extend(_fan(polygon))
    if len(vertices) < 3 or not faces:
        raise MeshParseError("mesh needs at least 3 vertices and 1 face", None, path)
    return TriangleMesh(np.array(vertices), np.array(faces), model_id)


def _infer_format(path):
    ext = os.path.splitext(str(path))[1].lower().lstrip(".")
    if ext not in ("off", "obj"):
        raise ValueError(f"cannot infer mesh format from extension of {path!r}")
    return ext


def load_mesh(path, format=None, model_id=None):
    """Read an OFF or OBJ file. Polygons with more than 3 corners are fan-triangulated."""
    format = (format or _infer_format(path)).lower()
    if model_id is None:
        model_id = os.path.splitext(os.path.basename(str(path)))[0]
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if format == "off":
        return parse_off(text, model_id, path)
    if format == "obj":
        return parse_obj(text, model_id, path)
    raise ValueError(f"unknown mesh format {format!r}")


def format_off(mesh):
    out = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    out += [" ".join(f"{c:.9g}" for c in v) for v in mesh.vertices]
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    return "\n".join(out) + "\n"


def format_obj(mesh):
    out = ["v " + " ".join(f"{c:.9g}" for c in v) for v in mesh.vertices]
    out += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    return "\n".join(out) + "\n"


def save_mesh(mesh, path, format=None):
    format = (format or _infer_format(path)).lower()
    text = {"off": format_off, "obj": format_obj}[format](mesh)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def normalize_pose(mesh):
    """Move the area-weighted surface centroid to the origin and scale to unit max radius.

    Rotation is left alone.
    """
    centroid = mesh.surface_centroid()
    centered = mesh.vertices - centroid
    radius = np.sqrt((centered ** 2).sum(axis=1)).max()
    if not radius > 0:
        raise DegenerateGeometryError("all vertices coincide with the centroid")
    return TriangleMesh(centered / radius, mesh.faces, mesh.id)
