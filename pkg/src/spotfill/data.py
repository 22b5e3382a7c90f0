"""Synthetic complete/partial point-cloud pairs, plus PLY and dataset files.

Four primitive surfaces (sphere, box, cylinder, torus) are sampled uniformly
by area, posed, cropped by a half-space to fake single-view incompleteness,
and jointly normalized to the unit sphere. Generation is reproducible: every
sample derives its own RNG from the master seed via splitmix64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, PointCloud, normalize_to_unit_sphere

KINDS = ("sphere", "box", "cylinder", "torus")


class PlyParseError(ValueError):
    """Malformed PLY input; message carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class ShapeSpec:
    """One posed primitive: kind, per-kind dimensions, rotation+translation, seed."""

    kind: str
    params: tuple[float, ...]
    rotation: np.ndarray      # [3,3] orthonormal
    translation: np.ndarray   # [3]
    seed: int

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if any(p <= 0 for p in self.params):
            raise ValueError(f"shape params must be positive, got {self.params}")
        if np.abs(self.rotation @ self.rotation.T - np.eye(3)).max() > 1e-9:
            raise ValueError("rotation must be orthonormal")


@dataclass
class Sample:
    """A training example: partial input, complete target, and provenance."""

    partial: PointCloud
    complete: PointCloud
    spec: ShapeSpec
    crop_direction: np.ndarray
    keep_fraction: float


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix, det fixed to +1."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _sphere_surface(params, n, rng):
    (radius,) = params
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius


def _box_surface(params, n, rng):
    lx, ly, lz = params
    areas = np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=(n, 2))
    pts = np.empty((n, 3))
    axis = face // 2                 # 0:x faces, 1:y faces, 2:z faces
    sign = np.where(face % 2 == 0, 0.5, -0.5)
    dims = np.array([lx, ly, lz])
    for a in range(3):
        m = axis == a
        others = [i for i in range(3) if i != a]
        pts[m, a] = sign[m] * dims[a]
        pts[np.ix_(m, others)] = u[m] * dims[others]
    return pts


def _cylinder_surface(params, n, rng):
    radius, height = params
    lateral = 2 * np.pi * radius * height
    cap = np.pi * radius * radius
    region = rng.choice(3, size=n, p=np.array([lateral, cap, cap]) / (lateral + 2 * cap))
    theta = rng.uniform(0, 2 * np.pi, size=n)
    pts = np.empty((n, 3))
    side = region == 0
    pts[side, 0] = radius * np.cos(theta[side])
    pts[side, 1] = radius * np.sin(theta[side])
    pts[side, 2] = rng.uniform(-height / 2, height / 2, size=int(side.sum()))
    for which, z in ((1, height / 2), (2, -height / 2)):
        m = region == which
        r = radius * np.sqrt(rng.uniform(0, 1, size=int(m.sum())))
        pts[m, 0] = r * np.cos(theta[m])
        pts[m, 1] = r * np.sin(theta[m])
        pts[m, 2] = z
    return pts


def _torus_surface(params, n, rng):
    major, minor = params
    u = rng.uniform(0, 2 * np.pi, size=n)
    # area element scales with major + minor*cos(v): rejection-sample v
    v = np.empty(n)
    filled = 0
    while filled < n:
        cand = rng.uniform(0, 2 * np.pi, size=2 * (n - filled))
        accept = rng.uniform(0, 1, size=cand.size) < (major + minor * np.cos(cand)) / (major + minor)
        take = cand[accept][: n - filled]
        v[filled : filled + take.size] = take
        filled += take.size
    ring = major + minor * np.cos(v)
    return np.stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)], axis=1)


_SURFACES = {
    "sphere": _sphere_surface,
    "box": _box_surface,
    "cylinder": _cylinder_surface,
    "torus": _torus_surface,
}


def sample_surface(spec: ShapeSpec, n: int, rng: np.random.Generator | None = None) -> PointCloud:
    """Uniform-by-area surface sampling of a posed primitive."""
    spec.validate()
    if n < 1:
        raise ValueError(f"need at least one point, got {n}")
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    local = _SURFACES[spec.kind](spec.params, n, rng)
    return PointCloud(local @ spec.rotation.T + spec.translation)


def crop_halfspace(cloud, direction: np.ndarray, keep_fraction: float,
                   target_n: int | None = None,
                   rng: np.random.Generator | None = None) -> PointCloud:
    """Keep the keep_fraction of points with smallest projection onto direction.

    With target_n, the kept set is resampled to exactly target_n points:
    repetition when too few, seeded subsampling when too many.
    """
    if not 0.0 < keep_fraction < 1.0:
        raise ValueError(f"keep_fraction must be in (0,1), got {keep_fraction}")
    pts = cloud.xyz if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    proj = pts @ d
    k = max(1, int(round(keep_fraction * pts.shape[0])))
    order = np.argsort(proj, kind="stable")
    kept = pts[order[:k]]
    if target_n is not None and target_n != k:
        rng = rng if rng is not None else np.random.default_rng(0)
        idx = rng.choice(k, size=target_n, replace=k < target_n)
        kept = kept[idx]
    return PointCloud(kept)


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return state, z ^ (z >> 31)


def _random_spec(kind: str, seed: int, rng: np.random.Generator) -> ShapeSpec:
    if kind == "sphere":
        params = (rng.uniform(0.5, 1.5),)
    elif kind == "box":
        params = tuple(rng.uniform(0.5, 2.0, size=3))
    elif kind == "cylinder":
        params = (rng.uniform(0.3, 1.0), rng.uniform(0.8, 2.5))
    else:  # torus
        minor = rng.uniform(0.15, 0.5)
        params = (rng.uniform(2.1 * minor, 1.2), minor)
    return ShapeSpec(kind=kind, params=params, rotation=random_rotation(rng),
                     translation=rng.uniform(-0.5, 0.5, size=3), seed=seed)


def make_sample(kind: str, seed: int, input_n: int, out_n: int) -> Sample:
    """Deterministic single sample: surface -> crop -> joint normalization."""
    rng = np.random.default_rng(seed)
    spec = _random_spec(kind, seed, rng)
    complete_raw = sample_surface(spec, out_n, rng)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    keep = float(rng.uniform(0.4, 0.7))
    partial_raw = crop_halfspace(complete_raw, direction, keep, target_n=input_n, rng=rng)
    complete, center, scale = normalize_to_unit_sphere(complete_raw)
    partial = PointCloud((partial_raw.xyz - center) / scale)
    return Sample(partial=partial, complete=complete, spec=spec,
                  crop_direction=direction, keep_fraction=keep)


def make_dataset(count: int, kinds: tuple[str, ...] = KINDS, seed: int = 0,
                 input_n: int = 512, out_n: int = 2048) -> list[Sample]:
    """`count` reproducible samples cycling a per-sample splitmix64 stream."""
    for kind in kinds:
        if kind not in KINDS:
            raise ValueError(f"unknown shape kind {kind!r}")
    samples = []
    state = seed
    for i in range(count):
        state, sub = _splitmix64(state)
        kind = kinds[i % len(kinds)]
        samples.append(make_sample(kind, sub, input_n, out_n))
    return samples


# -- PLY (ASCII 1.0, vertex-only) ------------------------------------------------


def write_ply(cloud, path: str) -> None:
    pts = cloud.xyz if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {pts.shape[0]}\n")
        fh.write("property float x\nproperty float y\nproperty float z\nend_header\n")
        for x, y, z in pts.astype(np.float32):
            fh.write(f"{x:.7g} {y:.7g} {z:.7g}\n")


def read_ply(path: str) -> PointCloud:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyParseError(1, "missing 'ply' magic")
    n_vertex = None
    body_at = None
    for i, line in enumerate(lines[1:], start=2):
        tok = line.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if tok[1:] != ["ascii", "1.0"]:
                raise PlyParseError(i, f"unsupported format {line.strip()!r}")
        elif tok[0] == "element":
            if tok[1] != "vertex":
                raise PlyParseError(i, f"unsupported element {tok[1]!r}")
            try:
                n_vertex = int(tok[2])
            except (IndexError, ValueError):
                raise PlyParseError(i, "bad element vertex count") from None
        elif tok[0] == "property":
            if tok[1] != "float" or tok[2] not in ("x", "y", "z"):
                raise PlyParseError(i, f"unsupported property {line.strip()!r}")
        elif tok[0] == "end_header":
            body_at = i
            break
        else:
            raise PlyParseError(i, f"unexpected header line {line.strip()!r}")
    if n_vertex is None or body_at is None:
        raise PlyParseError(len(lines), "header ended without element vertex / end_header")
    rows = []
    for i, line in enumerate(lines[body_at : body_at + n_vertex], start=body_at + 1):
        parts = line.split()
        if len(parts) != 3:
            raise PlyParseError(i, f"expected 3 coordinates, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise PlyParseError(i, f"bad float in {line.strip()!r}") from None
    if len(rows) != n_vertex:
        raise PlyParseError(len(lines), f"expected {n_vertex} vertices, found {len(rows)}")
    return PointCloud(np.asarray(rows))


# -- dataset binary format --------------------------------------------------------
#
# magic "SPDS", version u32, count u32, then per sample:
#   kind u8, param count u8, params f64..., rotation 9xf64, translation 3xf64,
#   seed u64, crop direction 3xf64, keep_fraction f64,
#   partial:  u32 n then 3n little-endian f32,
#   complete: u32 n then 3n little-endian f32.

_DS_MAGIC = b"SPDS"
_DS_VERSION = 1


def _write_cloud(fh, cloud: PointCloud) -> None:
    pts = np.ascontiguousarray(cloud.xyz, dtype="<f4")
    fh.write(struct.pack("<I", pts.shape[0]))
    fh.write(pts.tobytes())


def _read_cloud(fh) -> PointCloud:
    (n,) = struct.unpack("<I", fh.read(4))
    data = np.frombuffer(fh.read(12 * n), dtype="<f4").reshape(n, 3)
    return PointCloud(data.astype(np.float64))


def write_sample(fh, sample: Sample) -> None:
    spec = sample.spec
    fh.write(struct.pack("<BB", KINDS.index(spec.kind), len(spec.params)))
    fh.write(struct.pack(f"<{len(spec.params)}d", *spec.params))
    fh.write(np.asarray(spec.rotation, dtype="<f8").tobytes())
    fh.write(np.asarray(spec.translation, dtype="<f8").tobytes())
    fh.write(struct.pack("<Q", spec.seed & 0xFFFFFFFFFFFFFFFF))
    fh.write(np.asarray(sample.crop_direction, dtype="<f8").tobytes())
    fh.write(struct.pack("<d", sample.keep_fraction))
    _write_cloud(fh, sample.partial)
    _write_cloud(fh, sample.complete)


def read_sample(fh) -> Sample:
    kind_i, n_params = struct.unpack("<BB", fh.read(2))
    params = struct.unpack(f"<{n_params}d", fh.read(8 * n_params))
    rotation = np.frombuffer(fh.read(72), dtype="<f8").reshape(3, 3).copy()
    translation = np.frombuffer(fh.read(24), dtype="<f8").copy()
    (seed,) = struct.unpack("<Q", fh.read(8))
    direction = np.frombuffer(fh.read(24), dtype="<f8").copy()
    (keep,) = struct.unpack("<d", fh.read(8))
    partial = _read_cloud(fh)
    complete = _read_cloud(fh)
    spec = ShapeSpec(kind=KINDS[kind_i], params=params, rotation=rotation,
                     translation=translation, seed=seed)
    return Sample(partial=partial, complete=complete, spec=spec,
                  crop_direction=direction, keep_fraction=keep)


def save_dataset(path: str, samples: list[Sample]) -> None:
    with open(path, "wb") as fh:
        fh.write(_DS_MAGIC)
        fh.write(struct.pack("<II", _DS_VERSION, len(samples)))
        for s in samples:
            write_sample(fh, s)


def load_dataset(path: str) -> list[Sample]:
    with open(path, "rb") as fh:
        if fh.read(4) != _DS_MAGIC:
            raise GeometryError(f"{path}: not a dataset file (bad magic)")
        version, count = struct.unpack("<II", fh.read(8))
        if version != _DS_VERSION:
            raise GeometryError(f"{path}: unsupported dataset version {version}")
        return [read_sample(fh) for _ in range(count)]
