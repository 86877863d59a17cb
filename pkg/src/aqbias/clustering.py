"""K-means clustering of stations on min-max normalized geographic features.

Latitude/longitude are treated as plane coordinates; every selected feature
is normalized to [0, 1] so features carry equal weight. Constant columns
normalize to 0. Ties anywhere break toward the lowest index so results are
deterministic for a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError
from .stations import (
    FEATURE_ELEVATION,
    FEATURE_LAT_LON,
    FEATURE_URBANIZATION,
    Station,
    StationRegistry,
    validate_feature_selection,
)

SERIAL_VERSION = 1


def feature_columns(selection: Sequence[str]) -> tuple[str, ...]:
    """Column names for a selection; lat_lon expands to two columns."""
    names: list[str] = []
    for feat in selection:
        if feat == FEATURE_LAT_LON:
            names.extend(["latitude", "longitude"])
        elif feat == FEATURE_ELEVATION:
            names.append("elevation")
        elif feat == FEATURE_URBANIZATION:
            names.append("ruca")
    return tuple(names)


def _raw_row(station: Station, columns: Sequence[str]) -> list[float]:
    row = []
    for name in columns:
        value = getattr(station, name)
        if value is None:
            raise DataError(
                f"station {station.station_id} lacks feature {name}; "
                "filter_for_clustering must run first"
            )
        row.append(float(value))
    return row


@dataclass
class FeatureMatrix:
    """Normalized station features, one row per station."""

    station_ids: tuple[str, ...]
    selection: tuple[str, ...]
    feature_names: tuple[str, ...]
    rows: np.ndarray  # (n_stations, n_features), entries in [0, 1]
    norm_stats: tuple[tuple[float, float], ...]  # per-feature (min, max)

    @property
    def n_stations(self) -> int:
        return len(self.station_ids)


def normalize_features(raw: np.ndarray, norm_stats: Sequence[tuple[float, float]]) -> np.ndarray:
    """Apply stored min-max stats; constant features map to 0."""
    raw = np.asarray(raw, dtype=float)
    out = np.zeros_like(raw)
    for j, (lo, hi) in enumerate(norm_stats):
        span = hi - lo
        if span > 0.0:
            out[..., j] = (raw[..., j] - lo) / span
    return out


def build_feature_matrix(registry: StationRegistry, features: Iterable[str]) -> FeatureMatrix:
    """Min-max normalize the selected features across the registry's stations.

    The registry must already be filtered to stations possessing every
    selected feature.
    """
    selection = validate_feature_selection(features)
    if len(registry) < 2:
        raise DataError(f"clustering needs at least 2 stations, got {len(registry)}")
    columns = feature_columns(selection)
    raw = np.array([_raw_row(st, columns) for st in registry])
    norm_stats = tuple((float(raw[:, j].min()), float(raw[:, j].max())) for j in range(raw.shape[1]))
    return FeatureMatrix(
        station_ids=registry.ids,
        selection=selection,
        feature_names=columns,
        rows=normalize_features(raw, norm_stats),
        norm_stats=norm_stats,
    )


def station_feature_row(station: Station, clustering: "Clustering") -> np.ndarray:
    """Normalized feature row for one station, using the clustering's stats."""
    raw = np.array(_raw_row(station, clustering.feature_names))
    return normalize_features(raw, clustering.norm_stats)


@dataclass
class Clustering:
    """K-means result: assignment, centroids, and the sum-of-squares objective."""

    k: int
    feature_selection: tuple[str, ...]
    feature_names: tuple[str, ...]
    norm_stats: tuple[tuple[float, float], ...]
    centroids: np.ndarray  # (k, n_features) in normalized space
    assignment: dict[str, int]
    objective: float
    seed: int

    def members(self, cluster: int) -> tuple[str, ...]:
        return tuple(sid for sid, c in self.assignment.items() if c == cluster)

    def cluster_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for c in self.assignment.values():
            sizes[c] += 1
        return sizes

    def to_json_dict(self) -> dict:
        return {
            "version": SERIAL_VERSION,
            "k": self.k,
            "feature_selection": list(self.feature_selection),
            "feature_names": list(self.feature_names),
            "norm_stats": [[lo, hi] for lo, hi in self.norm_stats],
            "centroids": self.centroids.tolist(),
            "assignment": dict(self.assignment),
            "objective": self.objective,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Clustering":
        try:
            return cls(
                k=int(data["k"]),
                feature_selection=tuple(data["feature_selection"]),
                feature_names=tuple(data["feature_names"]),
                norm_stats=tuple((float(lo), float(hi)) for lo, hi in data["norm_stats"]),
                centroids=np.array(data["centroids"], dtype=float),
                assignment={str(s): int(c) for s, c in data["assignment"].items()},
                objective=float(data["objective"]),
                seed=int(data["seed"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed clustering JSON: {exc}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Clustering":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _sq_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, shape (n_points, n_centers)."""
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted seeding: each new center drawn proportional to D^2."""
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = _sq_distances(points, centers[:1]).min(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with chosen centers
            centers[i] = points[rng.integers(n)]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
        idx = min(idx, n - 1)
        centers[i] = points[idx]
        d2 = np.minimum(d2, _sq_distances(points, centers[i : i + 1])[:, 0])
    return centers


def _lloyd(
    points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int
) -> tuple[np.ndarray, np.ndarray, float]:
    centers = _seed_centroids(points, k, rng)
    labels = np.argmin(_sq_distances(points, centers), axis=1)
    for _ in range(max_iter):
        for c in range(k):
            mask = labels == c
            if mask.any():
                centers[c] = points[mask].mean(axis=0)
            else:
                # re-seed an emptied cluster at the point farthest from its
                # current assignment's centroid
                residual = _sq_distances(points, centers)[np.arange(len(points)), labels]
                centers[c] = points[int(np.argmax(residual))]
        new_labels = np.argmin(_sq_distances(points, centers), axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    # final means so the stored centroids match the stored assignment exactly
    for c in range(k):
        mask = labels == c
        if mask.any():
            centers[c] = points[mask].mean(axis=0)
    objective = float(_sq_distances(points, centers)[np.arange(len(points)), labels].sum())
    return centers, labels, objective


def kmeans(
    matrix: FeatureMatrix,
    k: int,
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 100,
) -> Clustering:
    """Best-of-restarts Lloyd iterations with distance-weighted seeding.

    Deterministic for a fixed seed; the best (lowest) objective across
    restarts wins, earliest restart on ties.
    """
    if k <= 0:
        raise ConfigError(f"k must be positive, got {k}")
    if restarts <= 0:
        raise ConfigError(f"restarts must be positive, got {restarts}")
    if max_iter <= 0:
        raise ConfigError(f"max_iter must be positive, got {max_iter}")
    n = matrix.n_stations
    if k > n:
        raise ConfigError(f"k={k} exceeds the {n} available stations")

    root = np.random.SeedSequence(seed)
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    for child in root.spawn(restarts):
        rng = np.random.default_rng(child)
        centers, labels, objective = _lloyd(matrix.rows, k, rng, max_iter)
        if best is None or objective < best[0]:
            best = (objective, centers, labels)
    assert best is not None
    objective, centers, labels = best

    return Clustering(
        k=k,
        feature_selection=matrix.selection,
        feature_names=matrix.feature_names,
        norm_stats=matrix.norm_stats,
        centroids=centers,
        assignment={sid: int(c) for sid, c in zip(matrix.station_ids, labels)},
        objective=objective,
        seed=seed,
    )


def assign_to_cluster(clustering: Clustering, feature_row: np.ndarray) -> int:
    """Index of the nearest centroid; ties break toward the lowest index."""
    row = np.asarray(feature_row, dtype=float)
    if row.shape != (clustering.centroids.shape[1],):
        raise ConfigError(
            f"feature row has shape {row.shape}, expected ({clustering.centroids.shape[1]},)"
        )
    d2 = ((clustering.centroids - row) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def recompute_objective(clustering: Clustering, matrix: FeatureMatrix) -> float:
    """Objective recomputed from scratch; used to check stored consistency."""
    total = 0.0
    for sid, row in zip(matrix.station_ids, matrix.rows):
        c = clustering.assignment[sid]
        total += float(((row - clustering.centroids[c]) ** 2).sum())
    return total
