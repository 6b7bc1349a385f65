"""Segmented 3D binary microstructures: representation, synthesis, raw IO.

Phase encoding is fixed: 0 = pore, 1 = solid. Voxel data is stored flat in
x-fastest order (index = x + nx*(y + ny*z)), matching common micro-CT raw
exports, with a JSON header sidecar next to the payload file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import RawFormatError

PORE = 0
SOLID = 1
PHASE_CONVENTION = "0=pore,1=solid"


@dataclass(frozen=True)
class VoxelGrid:
    """Dense binary voxel volume.

    dims: (nx, ny, nz) voxel counts.
    resolution: voxel edge length in meters.
    data: flat uint8 array, x-fastest order, values in {0, 1}.

    Immutable after construction; the data buffer is marked read-only.
    """

    dims: tuple[int, int, int]
    resolution: float
    data: np.ndarray

    def __post_init__(self):
        nx, ny, nz = (int(d) for d in self.dims)
        if nx <= 0 or ny <= 0 or nz <= 0:
            raise ValueError(f"dims must be positive, got {self.dims}")
        if not (self.resolution > 0.0):
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        data = np.ascontiguousarray(self.data, dtype=np.uint8).ravel()
        if data.size != nx * ny * nz:
            raise ValueError(
                f"data length {data.size} does not match dims {nx}x{ny}x{nz}"
            )
        if data.size and data.max() > 1:
            raise ValueError("phase labels must be 0 (pore) or 1 (solid)")
        data.setflags(write=False)
        object.__setattr__(self, "dims", (nx, ny, nz))
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(self, "data", data)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def volume(self) -> np.ndarray:
        """Read-only (nx, ny, nz) view indexed as volume[x, y, z]."""
        return self.data.reshape(self.dims, order="F")

    @classmethod
    def from_volume(cls, vol: np.ndarray, resolution: float) -> "VoxelGrid":
        vol = np.asarray(vol, dtype=np.uint8)
        if vol.ndim != 3:
            raise ValueError(f"expected a 3D array, got shape {vol.shape}")
        return cls(tuple(vol.shape), resolution, vol.flatten(order="F"))


def porosity(grid: VoxelGrid) -> float:
    """Fraction of pore voxels, in [0, 1]."""
    return int(np.count_nonzero(grid.data == PORE)) / grid.n_voxels


def sphere_params(dims, n_spheres: int, radius_range, seed: int) -> np.ndarray:
    """Deterministic per-sphere (cx, cy, cz, r) stream for a given seed.

    Each sphere consumes a fixed number of draws, so the first n spheres of
    two streams with the same seed are identical regardless of n_spheres.
    """
    rlo, rhi = float(radius_range[0]), float(radius_range[1])
    if not (0.0 < rlo <= rhi):
        raise ValueError(f"radius_range must be positive with lo <= hi, got {radius_range}")
    if n_spheres < 0:
        raise ValueError("n_spheres must be >= 0")
    rng = np.random.default_rng(seed)
    out = np.empty((n_spheres, 4), dtype=np.float64)
    for i in range(n_spheres):
        u = rng.random(4)
        out[i, 0] = u[0] * dims[0]
        out[i, 1] = u[1] * dims[1]
        out[i, 2] = u[2] * dims[2]
        out[i, 3] = rlo + u[3] * (rhi - rlo)
    return out


def _paint_sphere(vol: np.ndarray, cx: float, cy: float, cz: float, r: float) -> None:
    nx, ny, nz = vol.shape
    x0, x1 = max(0, int(np.floor(cx - r))), min(nx, int(np.ceil(cx + r)) + 1)
    y0, y1 = max(0, int(np.floor(cy - r))), min(ny, int(np.ceil(cy + r)) + 1)
    z0, z1 = max(0, int(np.floor(cz - r))), min(nz, int(np.ceil(cz + r)) + 1)
    if x0 >= x1 or y0 >= y1 or z0 >= z1:
        return
    xs, ys, zs = np.ogrid[x0:x1, y0:y1, z0:z1]
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 + (zs - cz) ** 2 <= r * r
    sub = vol[x0:x1, y0:y1, z0:z1]
    sub[inside] = SOLID


def rasterize_spheres(dims, spheres, resolution: float = 2e-6) -> VoxelGrid:
    """Union of solid spheres on a pore background.

    A voxel (x, y, z) is solid if its center lies inside any sphere, i.e.
    (x-cx)^2 + (y-cy)^2 + (z-cz)^2 <= r^2.
    """
    nx, ny, nz = (int(d) for d in dims)
    if nx <= 0 or ny <= 0 or nz <= 0:
        raise ValueError(f"dims must be positive, got {dims}")
    vol = np.zeros((nx, ny, nz), dtype=np.uint8)
    for cx, cy, cz, r in np.atleast_2d(np.asarray(spheres, dtype=np.float64)).reshape(-1, 4):
        _paint_sphere(vol, cx, cy, cz, r)
    return VoxelGrid.from_volume(vol, resolution)


def gen_sphere_pack(dims, n_spheres: int, radius_range, seed: int,
                    resolution: float = 2e-6) -> VoxelGrid:
    """Synthesize a random sphere pack; deterministic for a fixed seed."""
    nx, ny, nz = (int(d) for d in dims)
    if nx <= 0 or ny <= 0 or nz <= 0:
        raise ValueError(f"dims must be positive, got {dims}")
    if n_spheres == 0:
        return VoxelGrid.from_volume(np.zeros((nx, ny, nz), dtype=np.uint8), resolution)
    spheres = sphere_params((nx, ny, nz), n_spheres, radius_range, seed)
    return rasterize_spheres((nx, ny, nz), spheres, resolution)


def gen_sphere_pack_to_porosity(dims, target_porosity: float, radius_range, seed: int,
                                resolution: float = 2e-6, max_spheres: int = 10000) -> VoxelGrid:
    """Add spheres from the seeded stream until porosity <= target_porosity.

    Porosity is non-increasing per added sphere, so this terminates with the
    first prefix of the stream whose porosity reaches the target (or at
    max_spheres).
    """
    nx, ny, nz = (int(d) for d in dims)
    if nx <= 0 or ny <= 0 or nz <= 0:
        raise ValueError(f"dims must be positive, got {dims}")
    if not (0.0 <= target_porosity <= 1.0):
        raise ValueError("target_porosity must be in [0, 1]")
    rlo, rhi = float(radius_range[0]), float(radius_range[1])
    if not (0.0 < rlo <= rhi):
        raise ValueError(f"radius_range must be positive with lo <= hi, got {radius_range}")
    rng = np.random.default_rng(seed)
    vol = np.zeros((nx, ny, nz), dtype=np.uint8)
    total = nx * ny * nz
    for _ in range(max_spheres):
        if np.count_nonzero(vol == PORE) / total <= target_porosity:
            break
        u = rng.random(4)
        _paint_sphere(vol, u[0] * nx, u[1] * ny, u[2] * nz, rlo + u[3] * (rhi - rlo))
    return VoxelGrid.from_volume(vol, resolution)


def subcube(grid: VoxelGrid, origin, size) -> VoxelGrid:
    """Copy of the axis-aligned region [origin, origin+size); resolution kept."""
    ox, oy, oz = (int(v) for v in origin)
    sx, sy, sz = (int(v) for v in size)
    nx, ny, nz = grid.dims
    if min(sx, sy, sz) <= 0:
        raise ValueError(f"size must be positive, got {size}")
    if min(ox, oy, oz) < 0 or ox + sx > nx or oy + sy > ny or oz + sz > nz:
        raise ValueError(f"region origin={origin} size={size} exceeds dims {grid.dims}")
    vol = grid.volume()[ox:ox + sx, oy:oy + sy, oz:oz + sz]
    return VoxelGrid.from_volume(vol, grid.resolution)


def _header_path(path) -> Path:
    return Path(str(path) + ".json")


def write_raw(grid: VoxelGrid, path) -> None:
    """Write the uint8 payload plus a '<path>.json' header sidecar."""
    path = Path(path)
    path.write_bytes(grid.data.tobytes())
    nx, ny, nz = grid.dims
    header = {
        "nx": nx,
        "ny": ny,
        "nz": nz,
        "resolution_m": grid.resolution,
        "phase_convention": PHASE_CONVENTION,
    }
    _header_path(path).write_text(json.dumps(header, indent=2) + "\n")


def read_raw(path) -> VoxelGrid:
    """Read a raw voxel volume written by write_raw."""
    path = Path(path)
    hpath = _header_path(path)
    if not hpath.exists():
        raise RawFormatError(f"missing header sidecar {hpath}")
    try:
        header = json.loads(hpath.read_text())
        nx, ny, nz = int(header["nx"]), int(header["ny"]), int(header["nz"])
        resolution = float(header["resolution_m"])
        convention = header["phase_convention"]
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise RawFormatError(f"malformed header {hpath}: {exc}") from exc
    if convention != PHASE_CONVENTION:
        raise RawFormatError(
            f"unsupported phase convention {convention!r} (expected {PHASE_CONVENTION!r})"
        )
    payload = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    if payload.size != nx * ny * nz:
        raise RawFormatError(
            f"payload has {payload.size} voxels, header says {nx}x{ny}x{nz}"
        )
    return VoxelGrid((nx, ny, nz), resolution, payload)
