"""Procedural shape corpus: seeded, deformed spheres, boxes, cylinders and tori."""

from __future__ import annotations

import os

import numpy as np
from scipy.spatial.transform import Rotation

from .evaluation import ClassLabels, format_cla
from .mesh import TriangleMesh, save_mesh

CLASSES = ("sphere", "box", "cylinder", "torus")


def icosphere(subdivisions=3, model_id="icosphere"):
    """Unit icosphere; every vertex lies exactly on the unit sphere."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriangleMesh(np.array(verts), np.array(faces), model_id)


def _grid_faces(rows, cols, offset=0, wrap_cols=False, wrap_rows=False):
    faces = []
    n_cols = cols if wrap_cols else cols - 1
    n_rows = rows if wrap_rows else rows - 1
    for i in range(n_rows):
        for j in range(n_cols):
            a = offset + i * cols + j
            b = offset + i * cols + (j + 1) % cols
            c = offset + ((i + 1) % rows) * cols + j
            d = offset + ((i + 1) % rows) * cols + (j + 1) % cols
            faces += [(a, b, d), (a, d, c)]
    return faces


def box_mesh(subdivisions=6, model_id="box"):
    """Axis-aligned cube ``[-1, 1]^3`` with each face split into an n x n grid.

    ``subdivisions=1`` gives the plain 12-triangle cube.
    """
    n = subdivisions + 1
    u = np.linspace(-1.0, 1.0, n)
    uu, vv = np.meshgrid(u, u, indexing="ij")
    verts, faces = [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            face = np.empty((n * n, 3))
            others = [k for k in range(3) if k != axis]
            face[:, axis] = sign
            face[:, others[0]] = uu.ravel()
            face[:, others[1]] = vv.ravel()
            faces += _grid_faces(n, n, offset=len(verts) * n * n)
            verts.append(face)
    return _weld(np.concatenate(verts), np.array(faces), model_id)


def _weld(vertices, faces, model_id):
    rounded = np.round(vertices, 12)
    _, first, inverse = np.unique(rounded, axis=0, return_index=True, return_inverse=True)
    return TriangleMesh(vertices[first], inverse.reshape(-1)[faces], model_id)


def cylinder_mesh(segments=32, rings=4, radius=1.0, height=2.0, model_id="cylinder"):
    phi = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    z = np.linspace(-height / 2, height / 2, rings + 1)
    side = np.stack([np.repeat(np.cos(phi)[None], rings + 1, 0) * radius,
                     np.repeat(np.sin(phi)[None], rings + 1, 0) * radius,
                     np.repeat(z[:, None], segments, 1)], axis=-1).reshape(-1, 3)
    faces = _grid_faces(rings + 1, segments, wrap_cols=True)
    verts = [side]
    bottom_center = len(side)
    top_center = bottom_center + 1
    verts.append(np.array([[0.0, 0.0, -height / 2], [0.0, 0.0, height / 2]]))
    top_row = rings * segments
    for j in range(segments):
        k = (j + 1) % segments
        faces.append((bottom_center, k, j))
        faces.append((top_center, top_row + j, top_row + k))
    return TriangleMesh(np.concatenate(verts), np.array(faces), model_id)


def torus_mesh(major=1.0, minor=0.35, segments=32, tube_segments=16, model_id="torus"):
    u = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    v = np.linspace(0.0, 2 * np.pi, tube_segments, endpoint=False)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    verts = np.stack([(major + minor * np.cos(vv)) * np.cos(uu),
                      (major + minor * np.cos(vv)) * np.sin(uu),
                      minor * np.sin(vv)], axis=-1).reshape(-1, 3)
    faces = _grid_faces(segments, tube_segments, wrap_cols=True, wrap_rows=True)
    return TriangleMesh(verts, np.array(faces), model_id)


def deform(mesh, rng, scale_jitter=0.15, bump=0.03, max_rotation_deg=15.0):
    """Random anisotropic scaling, a smooth radial bump field and a small rotation."""
    v = mesh.vertices * (1.0 + rng.uniform(-scale_jitter, scale_jitter, size=3))
    freq = rng.uniform(1.0, 3.0, size=3)
    phase = rng.uniform(0.0, 2 * np.pi, size=3)
    field = np.sin(v * freq + phase).sum(axis=1) / 3.0
    v = v * (1.0 + bump * field)[:, None]
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rng.uniform(0.0, max_rotation_deg))
    v = Rotation.from_rotvec(axis * angle).apply(v)
    return TriangleMesh(v, mesh.faces, mesh.id)


def make_shape(kind, rng, model_id=""):
    if kind == "sphere":
        base = icosphere(3)
    elif kind == "box":
        base = box_mesh(6)
    elif kind == "cylinder":
        base = cylinder_mesh(height=rng.uniform(1.6, 2.4))
    elif kind == "torus":
        base = torus_mesh(minor=rng.uniform(0.28, 0.42))
    else:
        raise ValueError(f"unknown shape kind {kind!r}")
    return TriangleMesh(deform(base, rng).vertices, base.faces, model_id)


def generate_dataset(out_dir, n_per_class=10, seed=0, classes=CLASSES):
    """Write ``meshes/<id>.off`` and ``classes.cla`` under ``out_dir``.

    Model ids are consecutive integers, grouped by class. Returns the labels.
    """
    mesh_dir = os.path.join(out_dir, "meshes")
    os.makedirs(mesh_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    pairs = []
    for c, kind in enumerate(classes):
        for k in range(n_per_class):
            model_id = str(c * n_per_class + k)
            mesh = make_shape(kind, rng, model_id)
            save_mesh(mesh, os.path.join(mesh_dir, f"{model_id}.off"))
            pairs.append((model_id, kind))
    labels = ClassLabels({m: k for m, k in pairs}, {k: "0" for k in classes})
    with open(os.path.join(out_dir, "classes.cla"), "w", encoding="utf-8") as fh:
        fh.write(format_cla(labels))
    return labels
