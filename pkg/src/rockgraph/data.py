"""Sample manifests, synthetic labels, splits, standardization, metrics."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .physics import DemParams, ElasticModuli, dem_moduli
from .voxel import VoxelGrid, porosity


@dataclass(frozen=True)
class Sample:
    id: str
    graph_path: str
    voxel_path: str
    subcube_size: int
    porosity: float
    labels: ElasticModuli | None = None


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]


def make_split(ids, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> Split:
    """Deterministic shuffled split into contiguous train/val/test slices.

    Val and test counts are floor(n * ratio); the remainder goes to train.
    When a nonzero ratio floors to zero and n >= 3, that partition is
    bumped to one sample so no labeled partition comes back empty.
    """
    ids = list(ids)
    if not ids:
        raise ValueError("ids must be nonempty")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    r_train, r_val, r_test = (float(r) for r in ratios)
    if abs(r_train + r_val + r_test - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    n = len(ids)
    n_val = int(np.floor(n * r_val))
    n_test = int(np.floor(n * r_test))
    if n >= 3:
        if r_val > 0 and n_val == 0:
            n_val = 1
        if r_test > 0 and n_test == 0:
            n_test = 1
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in perm]
    n_train = n - n_val - n_test
    return Split(
        train=tuple(shuffled[:n_train]),
        val=tuple(shuffled[n_train:n_train + n_val]),
        test=tuple(shuffled[n_train + n_val:]),
    )


def sample_seed(global_seed: int, sample_id: str) -> int:
    """Stable per-sample seed derived by hashing (global_seed, id)."""
    digest = hashlib.sha256(f"{global_seed}:{sample_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def synth_labels(grid: VoxelGrid, dem_params: DemParams, noise_sigma: float = 0.0,
                 seed: int = 0) -> ElasticModuli:
    """DEM moduli at the grid's porosity plus optional Gaussian noise.

    Noise is drawn independently per modulus with std noise_sigma (GPa) and
    the result is clamped at >= 0. Deterministic for a fixed seed.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    base = dem_moduli(dem_params, porosity(grid))
    if noise_sigma == 0.0:
        return base
    noise = np.random.default_rng(seed).normal(0.0, noise_sigma, 2)
    return ElasticModuli(max(base.k + noise[0], 0.0), max(base.mu + noise[1], 0.0))


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-score transform; constant features pass through."""

    mean: np.ndarray
    std: np.ndarray


def fit_standardizer(vectors) -> Standardizer:
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if x.shape[0] < 1:
        raise ValueError("need at least one vector")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return Standardizer(mean=mean, std=std)


def apply_standardizer(s: Standardizer, x) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - s.mean) / s.std


def invert_standardizer(s: Standardizer, x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * s.std + s.mean


def mse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("pred and truth must have equal nonzero shapes")
    return float(((pred - truth) ** 2).mean())


def r2(pred, truth) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("pred and truth must have equal nonzero shapes")
    ss_tot = float(((truth - truth.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("truth is constant, R^2 undefined")
    return 1.0 - float(((truth - pred) ** 2).sum()) / ss_tot


MANIFEST_HEADER = ["id", "graph_path", "voxel_path", "subcube_size", "porosity",
                   "k_gpa", "mu_gpa"]


def write_manifest(samples, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for s in samples:
            row = [s.id, s.graph_path, s.voxel_path, str(s.subcube_size),
                   repr(float(s.porosity))]
            if s.labels is None:
                row += ["", ""]
            else:
                row += [repr(s.labels.k), repr(s.labels.mu)]
            writer.writerow(row)


def read_manifest(path) -> list[Sample]:
    samples = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise ValueError(
                f"manifest header {reader.fieldnames} != expected {MANIFEST_HEADER}"
            )
        for row in reader:
            labels = None
            if row["k_gpa"] and row["mu_gpa"]:
                labels = ElasticModuli(float(row["k_gpa"]), float(row["mu_gpa"]))
            samples.append(Sample(
                id=row["id"],
                graph_path=row["graph_path"],
                voxel_path=row["voxel_path"],
                subcube_size=int(row["subcube_size"]),
                porosity=float(row["porosity"]),
                labels=labels,
            ))
    return samples


def write_split(split: Split, path) -> None:
    """Plain-text split file with one [section] per partition."""
    lines = []
    for name in ("train", "val", "test"):
        lines.append(f"[{name}]")
        lines.extend(getattr(split, name))
    Path(path).write_text("\n".join(lines) + "\n")


def read_split(path) -> Split:
    parts = {"train": [], "val": [], "test": []}
    current = None
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in parts:
                raise ValueError(f"unknown split section {current!r}")
        elif current is None:
            raise ValueError("split file must start with a [section] header")
        else:
            parts[current].append(line)
    return Split(train=tuple(parts["train"]), val=tuple(parts["val"]),
                 test=tuple(parts["test"]))
