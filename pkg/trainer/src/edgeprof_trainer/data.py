"""Dataset preparation: mesh parsing, surface sampling, PCF export.

The real pipeline targets the 40-class CAD benchmark (12,311 meshes in
OFF format): download, parse, sample 1024 surface points per model with
area-weighted uniform sampling, center and scale each cloud into [-1, 1],
write PCF files and an 80/20 split manifest under a fixed seed.

A procedural shape dataset is included as a desk-scale stand-in for
environments without the real dataset; it exercises the identical
training path end to end.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from pathlib import Path

import numpy as np

from .codec import write_pcf

MODELNET40_URL = "http://modelnet.cs.princeton.edu/ModelNet40.zip"


class DatasetError(RuntimeError):
    pass


# --- OFF meshes ---------------------------------------------------------------

def parse_off(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse an OFF mesh into (vertices, triangles).

    Handles the common malformed header where the counts share the first
    line with the magic ("OFF123 456 0"). Polygons are fan-triangulated.
    """
    tokens: list[str] = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens:
        raise DatasetError("empty OFF file")
    if tokens[0] == "OFF":
        tokens = tokens[1:]
    elif tokens[0].startswith("OFF"):
        tokens = [tokens[0][3:]] + tokens[1:]
    else:
        raise DatasetError(f"not an OFF file: starts with {tokens[0]!r}")
    try:
        n_verts, n_faces = int(tokens[0]), int(tokens[1])
        cursor = 3  # counts line is (verts, faces, edges)
        verts = np.array([float(v) for v in tokens[cursor:cursor + 3 * n_verts]],
                         np.float64).reshape(n_verts, 3)
        cursor += 3 * n_verts
        tris: list[tuple[int, int, int]] = []
        for _ in range(n_faces):
            arity = int(tokens[cursor])
            face = [int(v) for v in tokens[cursor + 1:cursor + 1 + arity]]
            cursor += 1 + arity
            for j in range(1, arity - 1):
                tris.append((face[0], face[j], face[j + 1]))
    except (ValueError, IndexError) as exc:
        raise DatasetError(f"malformed OFF file: {exc}") from exc
    if not tris:
        raise DatasetError("OFF file has no faces")
    return verts, np.asarray(tris, np.int64)


def sample_surface(verts: np.ndarray, tris: np.ndarray, n: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Uniform area-weighted sampling of n points on a triangle mesh."""
    a = verts[tris[:, 0]]
    b = verts[tris[:, 1]]
    c = verts[tris[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total <= 0:
        raise DatasetError("degenerate mesh: zero total surface area")
    chosen = rng.choice(len(tris), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    points = (a[chosen] + u[:, None] * (b[chosen] - a[chosen])
              + v[:, None] * (c[chosen] - a[chosen]))
    return points.astype(np.float32)


def normalize_points(points: np.ndarray) -> np.ndarray:
    """Center on the centroid, scale by the max absolute coordinate."""
    points = points.astype(np.float32)
    centered = points - points.mean(axis=0)
    scale = np.max(np.abs(centered))
    if scale == 0.0:
        raise DatasetError("degenerate cloud: all points identical")
    return centered / scale


# --- real dataset -------------------------------------------------------------

def download_modelnet40(root: Path, url: str = MODELNET40_URL,
                        expected_sha256: str | None = None) -> Path:
    """Fetch and extract the CAD archive if not already present."""
    root = Path(root)
    extracted = root / "ModelNet40"
    if extracted.is_dir():
        return extracted
    root.mkdir(parents=True, exist_ok=True)
    archive = root / "ModelNet40.zip"
    if not archive.exists():
        import urllib.request
        try:
            urllib.request.urlretrieve(url, archive)  # noqa: S310 - fixed dataset URL
        except OSError as exc:
            raise DatasetError(f"dataset download failed from {url}: {exc}") from exc
    digest = hashlib.sha256(archive.read_bytes()).hexdigest()
    if expected_sha256 is not None and digest != expected_sha256:
        raise DatasetError(f"dataset integrity failure: sha256 {digest} != expected "
                           f"{expected_sha256}")
    with zipfile.ZipFile(archive) as zf:
        zf.extractall(root)
    if not extracted.is_dir():
        raise DatasetError(f"archive did not contain ModelNet40/ (sha256 {digest})")
    return extracted


def prepare_dataset(mesh_root: Path, out_dir: Path, points_per_cloud: int = 1024,
                    train_fraction: float = 0.8, seed: int = 42) -> dict:
    """Sample every OFF mesh to a normalized PCF; write an 80/20 manifest.

    The split is a seeded shuffle of the complete mesh list (the original
    train/test folder layout is ignored on purpose: the experiment re-splits
    the whole dataset).
    """
    mesh_root = Path(mesh_root)
    out_dir = Path(out_dir)
    classes = sorted(d.name for d in mesh_root.iterdir() if d.is_dir())
    if not classes:
        raise DatasetError(f"no class directories under {mesh_root}")
    rng = np.random.default_rng(seed)
    (out_dir / "clouds").mkdir(parents=True, exist_ok=True)

    entries = []
    for label, cls in enumerate(classes):
        for off_path in sorted((mesh_root / cls).rglob("*.off")):
            entries.append((off_path, label))
    if not entries:
        raise DatasetError(f"no OFF meshes under {mesh_root}")

    records = []
    for off_path, label in entries:
        verts, tris = parse_off(off_path.read_text())
        points = normalize_points(sample_surface(verts, tris, points_per_cloud, rng))
        rel = f"clouds/{off_path.stem}_{label}.pcf"
        write_pcf(out_dir / rel, points, label=label)
        records.append({"file": rel, "label": label})

    order = rng.permutation(len(records))
    n_train = int(round(train_fraction * len(records)))
    manifest = {
        "classes": classes,
        "points_per_cloud": points_per_cloud,
        "seed": seed,
        "sampler": "area-weighted-uniform",
        "train": [records[i] for i in order[:n_train]],
        "test": [records[i] for i in order[n_train:]],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


# --- procedural stand-in dataset ----------------------------------------------

# Ordered so small class counts pick mutually distinctive shapes first.
SHAPE_NAMES = ("sphere", "cube", "stick", "disk", "helix", "torus",
               "cylinder", "two_planes", "cone", "bowl")


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _points_sphere(n, t, u, rng):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _points_cube(n, t, u, rng):
    face = rng.integers(0, 6, n)
    pts = rng.uniform(-1, 1, (n, 3))
    pts[np.arange(n), face % 3] = np.where(face < 3, 1.0, -1.0)
    return pts


def _points_cylinder(n, t, u, rng):
    pts = np.stack([np.cos(t), np.sin(t), rng.uniform(-1, 1, n)], axis=1)
    caps = u < 0.25
    r = np.sqrt(rng.random(caps.sum()))
    tc = t[caps]
    pts[caps] = np.stack([r * np.cos(tc), r * np.sin(tc),
                          np.sign(rng.standard_normal(caps.sum()))], axis=1)
    return pts


def _points_cone(n, t, u, rng):
    h = np.sqrt(u)
    return np.stack([(1 - h) * np.cos(t), (1 - h) * np.sin(t), 2 * h - 1], axis=1)


def _points_torus(n, t, u, rng):
    phi = rng.random(n) * 2 * np.pi
    r_minor = 0.35
    return np.stack([(1 + r_minor * np.cos(phi)) * np.cos(t),
                     (1 + r_minor * np.cos(phi)) * np.sin(t),
                     r_minor * np.sin(phi)], axis=1)


def _points_disk(n, t, u, rng):
    r = np.sqrt(u)
    return np.stack([r * np.cos(t), r * np.sin(t), np.zeros(n)], axis=1)


def _points_helix(n, t, u, rng):
    s = u * 6 * np.pi
    return np.stack([0.8 * np.cos(s), 0.8 * np.sin(s), s / (3 * np.pi) - 1], axis=1)


def _points_two_planes(n, t, u, rng):
    return np.stack([rng.uniform(-1, 1, n), rng.uniform(-1, 1, n),
                     np.where(u < 0.5, 0.6, -0.6)], axis=1)


def _points_stick(n, t, u, rng):
    return np.stack([0.05 * np.cos(t), 0.05 * np.sin(t), rng.uniform(-1, 1, n)], axis=1)


def _points_bowl(n, t, u, rng):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v[:, 2] = np.abs(v[:, 2])
    return v


_SHAPE_GENERATORS = {
    "sphere": _points_sphere, "cube": _points_cube, "cylinder": _points_cylinder,
    "cone": _points_cone, "torus": _points_torus, "disk": _points_disk,
    "helix": _points_helix, "two_planes": _points_two_planes,
    "stick": _points_stick, "bowl": _points_bowl,
}


def make_shape(kind: int | str, n: int, rng: np.random.Generator) -> np.ndarray:
    name = SHAPE_NAMES[kind] if isinstance(kind, int) else kind
    if name not in _SHAPE_GENERATORS:
        raise DatasetError(f"unknown shape kind {kind!r}")
    t = rng.random(n) * 2 * np.pi
    u = rng.random(n)
    pts = _SHAPE_GENERATORS[name](n, t, u, rng)
    pts = pts @ _random_rotation(rng).T
    pts = pts * rng.uniform(0.9, 1.1, size=3)
    pts = pts + rng.normal(scale=0.01, size=pts.shape)
    return normalize_points(pts.astype(np.float32))


def make_shape_dataset(out_dir: Path, per_class_train: int = 40,
                       per_class_test: int = 10, points_per_cloud: int = 256,
                       num_classes: int = 10, seed: int = 42) -> dict:
    """Procedural 10-class dataset with the same manifest layout."""
    if not 1 <= num_classes <= len(SHAPE_NAMES):
        raise DatasetError(f"num_classes must be in [1, {len(SHAPE_NAMES)}]")
    out_dir = Path(out_dir)
    (out_dir / "clouds").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in range(num_classes):
        for split, count, bucket in (("train", per_class_train, train),
                                     ("test", per_class_test, test)):
            for i in range(count):
                pts = make_shape(label, points_per_cloud, rng)
                rel = f"clouds/{SHAPE_NAMES[label]}_{split}_{i}.pcf"
                write_pcf(out_dir / rel, pts, label=label)
                bucket.append({"file": rel, "label": label})
    manifest = {
        "classes": list(SHAPE_NAMES[:num_classes]),
        "points_per_cloud": points_per_cloud,
        "seed": seed,
        "sampler": "procedural-shapes",
        "train": train,
        "test": test,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
