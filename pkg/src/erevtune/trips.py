"""Trip telemetry ingestion.

Trip files are UTF-8 delimiter-separated text with a header row and seven
canonical columns::

    time_s, speed_mps, distance_m, soc_pct, engine_on, batt_volts, batt_amps

Cells may be blank; a blank cell is a *missing* measurement, never zero.
Files with different header names are adapted through a column mapping
(canonical name -> header used in the file). All internal units are SI;
miles appear only at the controller/report boundary.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyInputError, TripParseError, TripValidationError

METERS_PER_MILE = 1609.344

CANONICAL_COLUMNS = (
    "time_s",
    "speed_mps",
    "distance_m",
    "soc_pct",
    "engine_on",
    "batt_volts",
    "batt_amps",
)

# Distance sensors quantize; dips up to this many meters are jitter, not errors.
DISTANCE_JITTER_M = 1.0


@dataclass(frozen=True)
class RawSample:
    """One telemetry row. ``None`` marks a missing measurement."""

    t: float
    v: float | None = None
    d: float | None = None
    soc: float | None = None
    engine_on: bool | None = None
    v_batt: float | None = None
    i_batt: float | None = None


@dataclass(frozen=True)
class RawTrip:
    """An ingested trip: validated samples at a nominal fixed period."""

    vehicle_id: str
    samples: tuple[RawSample, ...]
    sample_period: float

    def __post_init__(self):
        if len(self.samples) < 2:
            raise TripValidationError("a trip needs at least 2 samples")
        if self.sample_period <= 0:
            raise TripValidationError("sample period must be positive")
        ts = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise TripValidationError("timestamps must be strictly increasing")

    @property
    def duration_s(self) -> float:
        return self.samples[-1].t - self.samples[0].t

    def last_distance_m(self) -> float | None:
        """Final recorded cumulative distance, if any row carried one."""
        for s in reversed(self.samples):
            if s.d is not None:
                return s.d
        return None

    def column(self, name: str) -> np.ndarray:
        """One channel as a float array with NaN for missing values."""
        attr = {
            "time_s": "t", "speed_mps": "v", "distance_m": "d",
            "soc_pct": "soc", "engine_on": "engine_on",
            "batt_volts": "v_batt", "batt_amps": "i_batt",
        }[name]
        out = np.empty(len(self.samples))
        for i, s in enumerate(self.samples):
            val = getattr(s, attr)
            out[i] = math.nan if val is None else float(val)
        return out


@dataclass(frozen=True)
class TripSummary:
    vehicle_id: str
    distance_mi: float | None
    duration_s: float
    start_soc: float | None
    end_soc: float | None
    fuel_l: float | None = None
    n_samples: int = 0


def _parse_float(cell: str, row: int, column: str) -> float | None:
    cell = cell.strip()
    if cell == "" or cell.lower() in ("nan", "na"):
        return None
    try:
        return float(cell)
    except ValueError:
        raise TripParseError(f"bad numeric value {cell!r} in column {column}", row=row)


def _parse_bool(cell: str, row: int, column: str) -> bool | None:
    cell = cell.strip().lower()
    if cell in ("", "nan", "na"):
        return None
    if cell in ("1", "true", "t", "yes", "on"):
        return True
    if cell in ("0", "false", "f", "no", "off", "0.0"):
        return False
    try:
        return bool(float(cell))
    except ValueError:
        raise TripParseError(f"bad boolean value {cell!r} in column {column}", row=row)


def parse_trip_file(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    vehicle_id: str | None = None,
    delimiter: str = ",",
) -> RawTrip:
    """Parse one trip file into a :class:`RawTrip`.

    ``schema`` maps canonical column names to the header names used in the
    file; omitted entries default to the canonical name itself. Rows whose
    timestamp does not advance are dropped with a warning. A cumulative
    distance that decreases by more than the jitter tolerance aborts the
    parse.
    """
    path = Path(path)
    mapping = dict.fromkeys(CANONICAL_COLUMNS)
    for name in CANONICAL_COLUMNS:
        mapping[name] = (schema or {}).get(name, name)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        if reader.fieldnames is None:
            raise EmptyInputError(f"{path}: empty trip file")
        header = [h.strip() for h in reader.fieldnames]
        if mapping["time_s"] not in header:
            raise TripParseError(
                f"{path}: missing required time column {mapping['time_s']!r}"
            )

        samples: list[RawSample] = []
        dropped = 0
        prev_t = -math.inf
        running_max_d = -math.inf
        for idx, row in enumerate(reader, start=2):  # header is row 1
            def cell(name: str) -> str:
                return row.get(mapping[name]) or ""

            t = _parse_float(cell("time_s"), idx, "time_s")
            if t is None:
                raise TripParseError("missing timestamp", row=idx)
            if t <= prev_t:
                dropped += 1
                continue
            v = _parse_float(cell("speed_mps"), idx, "speed_mps")
            d = _parse_float(cell("distance_m"), idx, "distance_m")
            soc = _parse_float(cell("soc_pct"), idx, "soc_pct")
            engine = _parse_bool(cell("engine_on"), idx, "engine_on")
            v_batt = _parse_float(cell("batt_volts"), idx, "batt_volts")
            i_batt = _parse_float(cell("batt_amps"), idx, "batt_amps")

            if v is not None and v < 0:
                raise TripValidationError(f"row {idx}: negative speed {v}")
            if soc is not None and not 0 <= soc <= 100:
                raise TripValidationError(f"row {idx}: soc {soc} outside [0, 100]")
            if d is not None:
                if d < running_max_d - DISTANCE_JITTER_M:
                    raise TripValidationError(
                        f"row {idx}: distance decreases ({d} m after "
                        f"{running_max_d} m)"
                    )
                running_max_d = max(running_max_d, d)

            prev_t = t
            samples.append(RawSample(t, v, d, soc, engine, v_batt, i_batt))

    if not samples:
        raise EmptyInputError(f"{path}: no data rows")
    if dropped:
        warnings.warn(
            f"{path}: dropped {dropped} rows with non-increasing timestamps",
            stacklevel=2,
        )
    if len(samples) < 2:
        raise TripValidationError(f"{path}: a trip needs at least 2 samples")

    diffs = np.diff([s.t for s in samples])
    period = float(np.median(diffs))
    return RawTrip(
        vehicle_id=vehicle_id or path.stem,
        samples=tuple(samples),
        sample_period=period,
    )


def write_trip_file(trip: RawTrip, path: str | Path, delimiter: str = ",") -> Path:
    """Write a trip in the canonical 7-column format. Missing cells are blank.

    Floats are written with ``repr`` so a parse -> write -> parse cycle is
    bit-exact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def fmt(val) -> str:
        if val is None:
            return ""
        if isinstance(val, bool):
            return "1" if val else "0"
        return repr(float(val))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(CANONICAL_COLUMNS)
        for s in trip.samples:
            writer.writerow(
                [fmt(s.t), fmt(s.v), fmt(s.d), fmt(s.soc),
                 fmt(s.engine_on), fmt(s.v_batt), fmt(s.i_batt)]
            )
    return path


def trip_summary(trip: RawTrip) -> TripSummary:
    """Distance, duration, and SOC endpoints of an ingested trip."""
    last_d = trip.last_distance_m()
    socs = [s.soc for s in trip.samples if s.soc is not None]
    return TripSummary(
        vehicle_id=trip.vehicle_id,
        distance_mi=None if last_d is None else last_d / METERS_PER_MILE,
        duration_s=trip.duration_s,
        start_soc=socs[0] if socs else None,
        end_soc=socs[-1] if socs else None,
        fuel_l=None,
        n_samples=len(trip.samples),
    )


# ---------------------------------------------------------------------------
# Generic delimited tables (plot data, reports). Same dialect as trip files.
# ---------------------------------------------------------------------------

def write_table(
    path: str | Path,
    columns: Mapping[str, Sequence],
    delimiter: str = ",",
) -> Path:
    """Write named numeric columns as delimiter-separated text."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    lengths = {len(columns[n]) for n in names}
    if len(lengths) > 1:
        raise ValueError(f"columns have unequal lengths: {lengths}")
    n = lengths.pop() if lengths else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(names)
        for i in range(n):
            row = []
            for name in names:
                val = columns[name][i]
                if val is None or (isinstance(val, float) and math.isnan(val)):
                    row.append("")
                elif isinstance(val, (bool, np.bool_)):
                    row.append("1" if val else "0")
                elif isinstance(val, str):
                    row.append(val)
                else:
                    row.append(repr(float(val)))
            writer.writerow(row)
    return path


def read_table(path: str | Path, delimiter: str = ",") -> dict[str, np.ndarray]:
    """Read a delimited numeric table back into named float arrays.

    Blank cells become NaN; non-numeric columns come back as object arrays.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: empty table")
        raw_cols: list[list[str]] = [[] for _ in header]
        for row in reader:
            for i, cell in enumerate(row):
                raw_cols[i].append(cell)

    out: dict[str, np.ndarray] = {}
    for name, raw in zip(header, raw_cols):
        try:
            out[name] = np.array(
                [math.nan if c.strip() == "" else float(c) for c in raw]
            )
        except ValueError:
            out[name] = np.array(raw, dtype=object)
    return out
