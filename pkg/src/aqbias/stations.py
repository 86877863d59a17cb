"""Station metadata registry and feature-based filtering.

Stations are keyed by opaque string IDs (AirNow-style IDs such as
"60793001" would lose leading zeros as integers). Elevation and the RUCA
urbanization code come precomputed in the metadata CSV; stations missing a
feature are dropped only by experiments that cluster on that feature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import ConfigError, ParseError, ValidationError

# Feature selection tokens accepted by filter_for_clustering and the clusterer.
FEATURE_LAT_LON = "lat_lon"
FEATURE_ELEVATION = "elevation"
FEATURE_URBANIZATION = "urbanization"
FEATURE_CHOICES = (FEATURE_LAT_LON, FEATURE_ELEVATION, FEATURE_URBANIZATION)

_CSV_HEADER = ["station_id", "latitude", "longitude", "elevation", "ruca"]


@dataclass(frozen=True)
class Station:
    """One observation site with the features used for clustering."""

    station_id: str
    latitude: float
    longitude: float
    elevation: float | None = None
    ruca: int | None = None
    missing_fraction: float = 0.0

    def __post_init__(self) -> None:
        if not self.station_id:
            raise ValidationError("station_id must be non-empty")
        if not -90.0 <= self.latitude <= 90.0:
            raise ValidationError(
                f"station {self.station_id}: latitude {self.latitude} outside [-90, 90]"
            )
        if not -180.0 <= self.longitude <= 180.0:
            raise ValidationError(
                f"station {self.station_id}: longitude {self.longitude} outside [-180, 180]"
            )
        if self.ruca is not None and not (
            isinstance(self.ruca, int) and 1 <= self.ruca <= 10
        ):
            raise ValidationError(
                f"station {self.station_id}: ruca {self.ruca!r} not an integer in [1, 10]"
            )
        if not 0.0 <= self.missing_fraction <= 1.0:
            raise ValidationError(
                f"station {self.station_id}: missing_fraction {self.missing_fraction} outside [0, 1]"
            )

    def has_feature(self, feature: str) -> bool:
        if feature == FEATURE_LAT_LON:
            return True
        if feature == FEATURE_ELEVATION:
            return self.elevation is not None
        if feature == FEATURE_URBANIZATION:
            return self.ruca is not None
        raise ConfigError(f"unknown clustering feature {feature!r}")


class StationRegistry:
    """Ordered, duplicate-free collection of stations.

    Insertion order is preserved so that indices derived downstream
    (feature matrices, cluster assignments) are reproducible.
    """

    def __init__(self, stations: Iterable[Station]):
        self._stations: tuple[Station, ...] = tuple(stations)
        self._by_id: dict[str, Station] = {}
        for st in self._stations:
            if st.station_id in self._by_id:
                raise ValidationError(f"duplicate station_id {st.station_id!r}")
            self._by_id[st.station_id] = st

    @property
    def stations(self) -> tuple[Station, ...]:
        return self._stations

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(st.station_id for st in self._stations)

    def __len__(self) -> int:
        return len(self._stations)

    def __iter__(self) -> Iterator[Station]:
        return iter(self._stations)

    def __contains__(self, station_id: str) -> bool:
        return station_id in self._by_id

    def get(self, station_id: str) -> Station:
        try:
            return self._by_id[station_id]
        except KeyError:
            raise KeyError(f"unknown station_id {station_id!r}") from None

    def subset(self, station_ids: Iterable[str]) -> "StationRegistry":
        """Registry restricted to the given ids, original order kept."""
        keep = set(station_ids)
        return StationRegistry(st for st in self._stations if st.station_id in keep)

    def with_missing_fractions(self, fractions: Mapping[str, float]) -> "StationRegistry":
        """Copy of the registry with missing_fraction updated where provided."""
        return StationRegistry(
            replace(st, missing_fraction=fractions.get(st.station_id, st.missing_fraction))
            for st in self._stations
        )


def _parse_optional_float(cell: str) -> float | None:
    cell = cell.strip()
    return float(cell) if cell else None


def _parse_optional_int(cell: str) -> int | None:
    cell = cell.strip()
    if not cell:
        return None
    value = float(cell)
    if value != int(value):
        raise ValueError(f"not an integer: {cell}")
    return int(value)


def load_station_metadata(path: str | Path) -> StationRegistry:
    """Load the station metadata CSV.

    Expected header: station_id,latitude,longitude,elevation,ruca.
    Empty elevation/ruca cells yield absent fields; row order is preserved.
    """
    path = Path(path)
    stations: list[Station] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if [h.strip() for h in header] != _CSV_HEADER:
            raise ParseError(
                f"{path}: expected header {','.join(_CSV_HEADER)!r}, got {','.join(header)!r}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(_CSV_HEADER):
                raise ParseError(f"{path}:{row_no}: expected {len(_CSV_HEADER)} cells, got {len(row)}")
            try:
                station = Station(
                    station_id=row[0].strip(),
                    latitude=float(row[1]),
                    longitude=float(row[2]),
                    elevation=_parse_optional_float(row[3]),
                    ruca=_parse_optional_int(row[4]),
                )
            except ValidationError as exc:
                raise ValidationError(f"{path}:{row_no}: {exc}") from None
            except ValueError as exc:
                raise ParseError(f"{path}:{row_no}: {exc}") from None
            stations.append(station)
    try:
        return StationRegistry(stations)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def validate_feature_selection(features: Iterable[str]) -> tuple[str, ...]:
    """Normalize a feature selection, requiring lat_lon to be present."""
    selection = tuple(features)
    for feat in selection:
        if feat not in FEATURE_CHOICES:
            raise ConfigError(
                f"unknown clustering feature {feat!r}; choose from {FEATURE_CHOICES}"
            )
    if len(set(selection)) != len(selection):
        raise ConfigError(f"duplicate features in selection {selection}")
    if FEATURE_LAT_LON not in selection:
        raise ConfigError("feature selection must include lat_lon")
    return selection


def filter_for_clustering(registry: StationRegistry, features: Iterable[str]) -> StationRegistry:
    """Keep only stations that possess every selected feature.

    Idempotent; the result is always a subsequence of the input ordering.
    """
    selection = validate_feature_selection(features)
    return StationRegistry(
        st for st in registry if all(st.has_feature(f) for f in selection)
    )
