"""Loading and alignment of hourly observations and 48-hour forecast files.

All timestamps are UTC. Hour h of the forecast file issued on date d maps
to the absolute time (d 13:00 GMT + h hours); observations are matched to
forecast hours through that mapping.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, ParseError, ValidationError
from .stations import StationRegistry

FILE_HOURS = 48
FORECAST_START_HOUR = 13  # GMT
INVALID_SENTINEL = -999.0

OZONE = "ozone"
PM25 = "pm25"

_VARIABLES = {
    OZONE: (
        "ozone",
        "temperature",
        "ground_radiation",
        "pbl_height",
        "wind_direction",
        "wind_speed",
        "nox",
        "noy",
        "time_of_day",
    ),
    PM25: (
        "pm25",
        "ground_radiation",
        "wind_direction",
        "wind_speed",
        "time_of_day",
        "rc_rn",
    ),
}

_FORECAST_NAME_RE = re.compile(r"forecast_(\d{4}-\d{2}-\d{2})\.csv$")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered physical-variable layout for one pollutant mode."""

    pollutant: str
    variables: tuple[str, ...]

    @classmethod
    def for_pollutant(cls, pollutant: str) -> "FeatureSchema":
        try:
            return cls(pollutant, _VARIABLES[pollutant])
        except KeyError:
            raise ValidationError(
                f"unknown pollutant {pollutant!r}; expected one of {sorted(_VARIABLES)}"
            ) from None

    def index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise KeyError(f"{name!r} not a {self.pollutant} variable") from None

    @property
    def target_variable(self) -> str:
        """The forecast's own pollutant prediction (baseline for evaluation)."""
        return self.variables[0]

    def __len__(self) -> int:
        return len(self.variables)


@dataclass(frozen=True)
class FeatureVector:
    """Named view over one forecast hour's physical variables."""

    schema: FeatureSchema
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.schema),):
            raise ValidationError(
                f"feature vector has {self.values.shape} values for "
                f"{len(self.schema)} {self.schema.pollutant} variables"
            )
        wd = self["wind_direction"]
        if not 0.0 <= wd < 360.0:
            raise ValidationError(f"wind_direction {wd} outside [0, 360)")

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.schema.index(name)])


def parse_timestamp(text: str) -> datetime:
    """Parse an hour-aligned UTC timestamp; returns a naive UTC datetime."""
    cleaned = text.strip()
    if cleaned.endswith("Z"):
        cleaned = cleaned[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(cleaned)
    except ValueError:
        raise ParseError(f"unparseable timestamp {text!r}") from None
    if dt.tzinfo is not None:
        if dt.utcoffset() != timedelta(0):
            raise ParseError(f"timestamp {text!r} is not UTC")
        dt = dt.replace(tzinfo=None)
    if dt.minute or dt.second or dt.microsecond:
        raise ParseError(f"timestamp {text!r} is not aligned to an hour")
    return dt


_EPOCH = datetime(2000, 1, 1)


def _hour_index(dt: datetime) -> int:
    return int((dt - _EPOCH) // timedelta(hours=1))


@dataclass
class ObservationSeries:
    """Hourly pollutant concentrations on a contiguous grid with a validity mask."""

    station_id: str
    start_time: datetime
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        if len(self.values) != len(self.valid):
            raise ValidationError(
                f"station {self.station_id}: values/valid length mismatch "
                f"({len(self.values)} vs {len(self.valid)})"
            )
        bad = self.valid & ~(np.isfinite(self.values) & (self.values >= 0.0))
        if bad.any():
            hour = int(np.argmax(bad))
            raise ValidationError(
                f"station {self.station_id}: invalid concentration "
                f"{self.values[hour]} marked valid at hour offset {hour}"
            )

    def __len__(self) -> int:
        return len(self.values)

    @property
    def valid_fraction(self) -> float:
        return float(self.valid.mean()) if len(self.valid) else 0.0

    @property
    def missing_fraction(self) -> float:
        return 1.0 - self.valid_fraction

    def value_at(self, when: datetime) -> tuple[float, bool]:
        """Concentration at an absolute hour; out-of-range hours are invalid."""
        offset = _hour_index(when) - _hour_index(self.start_time)
        if offset < 0 or offset >= len(self.values):
            return float("nan"), False
        return float(self.values[offset]), bool(self.valid[offset])


@dataclass
class ForecastFile:
    """One issuance day's 48 hourly feature vectors per station."""

    issue_date: date
    schema: FeatureSchema
    per_station: dict[str, np.ndarray] = field(default_factory=dict)
    valid: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for sid, arr in self.per_station.items():
            if arr.shape != (FILE_HOURS, len(self.schema)):
                raise ValidationError(
                    f"forecast {self.issue_date} station {sid}: expected "
                    f"({FILE_HOURS}, {len(self.schema)}) array, got {arr.shape}"
                )
            if self.valid[sid].shape != (FILE_HOURS,):
                raise ValidationError(
                    f"forecast {self.issue_date} station {sid}: bad mask shape"
                )

    @property
    def start_time(self) -> datetime:
        return datetime(
            self.issue_date.year, self.issue_date.month, self.issue_date.day, FORECAST_START_HOUR
        )

    def hour_time(self, hour: int) -> datetime:
        return self.start_time + timedelta(hours=hour)

    @property
    def station_ids(self) -> tuple[str, ...]:
        return tuple(self.per_station)

    def feature_vector(self, station_id: str, hour: int) -> FeatureVector:
        return FeatureVector(self.schema, self.per_station[station_id][hour])

    def restricted_to(self, station_ids: Iterable[str]) -> "ForecastFile":
        """Copy with exactly the given stations; absent ones become all-invalid."""
        n_vars = len(self.schema)
        per_station: dict[str, np.ndarray] = {}
        valid: dict[str, np.ndarray] = {}
        for sid in station_ids:
            if sid in self.per_station:
                per_station[sid] = self.per_station[sid]
                valid[sid] = self.valid[sid]
            else:
                per_station[sid] = np.zeros((FILE_HOURS, n_vars))
                valid[sid] = np.zeros(FILE_HOURS, dtype=bool)
        return ForecastFile(self.issue_date, self.schema, per_station, valid)


def load_observations(path: str | Path, pollutant: str) -> dict[str, ObservationSeries]:
    """Load the observation CSV into per-station contiguous hourly series.

    Header: station_id,timestamp_utc,value. An empty value cell or -999
    marks an invalid hour; hours absent from the file are invalid too.
    """
    FeatureSchema.for_pollutant(pollutant)  # validates the mode early
    path = Path(path)
    per_station: dict[str, dict[int, tuple[float, bool]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["station_id", "timestamp_utc", "value"]:
            raise ParseError(f"{path}: expected header 'station_id,timestamp_utc,value'")
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ParseError(f"{path}:{row_no}: expected 3 cells, got {len(row)}")
            sid = row[0].strip()
            try:
                when = parse_timestamp(row[1])
            except ParseError as exc:
                raise ParseError(f"{path}:{row_no}: {exc}") from None
            cell = row[2].strip()
            if not cell:
                value, ok = float("nan"), False
            else:
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(f"{path}:{row_no}: unparseable value {cell!r}") from None
                if value == INVALID_SENTINEL:
                    value, ok = float("nan"), False
                elif value < 0.0:
                    raise ValidationError(
                        f"{path}:{row_no}: negative concentration {value} for station {sid}"
                    )
                else:
                    ok = True
            per_station.setdefault(sid, {})[_hour_index(when)] = (value, ok)

    series: dict[str, ObservationSeries] = {}
    for sid, hours in per_station.items():
        first, last = min(hours), max(hours)
        n = last - first + 1
        values = np.full(n, np.nan)
        valid = np.zeros(n, dtype=bool)
        for hour, (value, ok) in hours.items():
            values[hour - first] = value
            valid[hour - first] = ok
        start = _EPOCH + timedelta(hours=first)
        series[sid] = ObservationSeries(sid, start, values, valid)
    return series


def _issue_date_from_name(path: Path) -> date:
    match = _FORECAST_NAME_RE.search(path.name)
    if not match:
        raise ParseError(
            f"{path}: cannot infer issue date; expected name forecast_YYYY-MM-DD.csv"
        )
    return date.fromisoformat(match.group(1))


def load_forecast_file(
    path: str | Path, pollutant: str, issue_date: date | None = None
) -> ForecastFile:
    """Load one 48-hour forecast CSV.

    Header: station_id,hour_index,<variable columns for the pollutant mode>.
    Stations with fewer than 48 rows get the missing hours marked invalid.
    """
    path = Path(path)
    schema = FeatureSchema.for_pollutant(pollutant)
    if issue_date is None:
        issue_date = _issue_date_from_name(path)

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        header = [h.strip() for h in header]
        expected = {"station_id", "hour_index", *schema.variables}
        unknown = [h for h in header if h not in expected]
        if unknown:
            raise ParseError(f"{path}: unknown variable columns {unknown} for {pollutant} mode")
        missing = sorted(expected - set(header))
        if missing:
            raise ParseError(f"{path}: missing columns {missing} for {pollutant} mode")
        col = {name: header.index(name) for name in header}
        var_cols = [col[name] for name in schema.variables]
        wd_idx = schema.index("wind_direction")

        per_station: dict[str, np.ndarray] = {}
        valid: dict[str, np.ndarray] = {}
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{row_no}: expected {len(header)} cells, got {len(row)}")
            sid = row[col["station_id"]].strip()
            try:
                hour = int(row[col["hour_index"]])
            except ValueError:
                raise ParseError(f"{path}:{row_no}: unparseable hour_index") from None
            if not 0 <= hour < FILE_HOURS:
                raise ParseError(f"{path}:{row_no}: hour_index {hour} outside [0, {FILE_HOURS - 1}]")
            try:
                values = np.array([float(row[c]) for c in var_cols])
            except ValueError:
                raise ParseError(f"{path}:{row_no}: unparseable variable value") from None
            if not 0.0 <= values[wd_idx] < 360.0:
                raise ValidationError(
                    f"{path}:{row_no}: wind_direction {values[wd_idx]} outside [0, 360)"
                )
            if sid not in per_station:
                per_station[sid] = np.zeros((FILE_HOURS, len(schema)))
                valid[sid] = np.zeros(FILE_HOURS, dtype=bool)
            if valid[sid][hour]:
                raise ParseError(f"{path}:{row_no}: duplicate hour {hour} for station {sid}")
            per_station[sid][hour] = values
            valid[sid][hour] = True

    return ForecastFile(issue_date, schema, per_station, valid)


def load_forecast_dir(directory: str | Path, pollutant: str) -> list[ForecastFile]:
    """Load every forecast_YYYY-MM-DD.csv in a directory, sorted by issue date."""
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if _FORECAST_NAME_RE.search(p.name))
    if not paths:
        raise DataError(f"{directory}: no forecast_YYYY-MM-DD.csv files found")
    return [load_forecast_file(p, pollutant) for p in paths]


@dataclass
class AlignedDataset:
    """Stations present in metadata, observations, and the forecast collection."""

    registry: StationRegistry
    observations: dict[str, ObservationSeries]
    forecasts: list[ForecastFile]
    pollutant: str

    @property
    def schema(self) -> FeatureSchema:
        return FeatureSchema.for_pollutant(self.pollutant)

    @property
    def dates(self) -> tuple[date, ...]:
        return tuple(f.issue_date for f in self.forecasts)

    def forecast_for(self, issue: date) -> ForecastFile:
        for f in self.forecasts:
            if f.issue_date == issue:
                return f
        raise KeyError(f"no forecast file issued on {issue}")


def align(
    registry: StationRegistry,
    observations: Mapping[str, ObservationSeries],
    forecast_files: Iterable[ForecastFile],
) -> AlignedDataset:
    """Intersect the three station universes and recompute missing fractions.

    A station survives only if it has metadata, observations, and appears in
    every forecast file. Files with no stations at all constrain nothing
    (they model whole-day data gaps); downstream windowing discards their
    hours through the validity masks.
    """
    files = sorted(forecast_files, key=lambda f: f.issue_date)
    if not files:
        raise DataError("no forecast files to align")
    seen_dates: set[date] = set()
    for f in files:
        if f.issue_date in seen_dates:
            raise ValidationError(f"duplicate forecast issue date {f.issue_date}")
        seen_dates.add(f.issue_date)
    pollutant = files[0].schema.pollutant

    kept = set(registry.ids) & set(observations)
    for f in files:
        if f.per_station:
            kept &= set(f.per_station)
    if not kept:
        raise DataError("no stations common to metadata, observations, and forecasts")

    aligned_registry = registry.subset(kept).with_missing_fractions(
        {sid: observations[sid].missing_fraction for sid in kept}
    )
    ordered_ids = aligned_registry.ids
    return AlignedDataset(
        registry=aligned_registry,
        observations={sid: observations[sid] for sid in ordered_ids},
        forecasts=[f.restricted_to(ordered_ids) for f in files],
        pollutant=pollutant,
    )
