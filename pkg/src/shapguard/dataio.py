"""Household power data: CSV ingestion, hourly resampling, windowing and a
synthetic household generator.

Raw frames carry watt readings at whatever cadence the meter produced
(REFIT logs every 6-8 s). :func:`resample_hourly` turns them into one mean
reading per clock hour, and :func:`make_windows` builds min-max normalized
sliding windows of appliance channels with the next hour's aggregate as the
regression target.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1
HOUR = 3600


class DataError(ValueError):
    """Input data violates the ingestion or windowing contract."""


class MissingColumns(DataError):
    pass


class DuplicateTimestamp(DataError):
    pass


class NonMonotoneTimestamps(DataError):
    pass


class TooManyMalformedRows(DataError):
    pass


class GapTooLong(DataError):
    pass


@dataclass(frozen=True)
class TimeSeriesFrame:
    timestamps: np.ndarray  # epoch seconds, strictly increasing
    aggregate: np.ndarray  # watts
    channels: np.ndarray  # (N, D) watts
    channel_names: tuple[str, ...]
    house_id: str = "house"
    interpolated: np.ndarray | None = None  # hourly frames: True where a reading was filled
    malformed_rows: int = 0

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        agg = np.asarray(self.aggregate, dtype=np.float64)
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim == 1:
            ch = ch[:, None]
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "aggregate", agg)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        n = len(ts)
        if agg.shape != (n,) or ch.shape[0] != n:
            raise DataError("aggregate and channel arrays must match the timestamp count")
        if ch.shape[1] != len(self.channel_names):
            raise DataError("channel_names does not match the number of channels")
        if n > 1:
            steps = np.diff(ts)
            if np.any(steps == 0):
                raise DuplicateTimestamp(f"duplicate timestamp {ts[1:][steps == 0][0]!r}")
            if np.any(steps < 0):
                raise NonMonotoneTimestamps("timestamps are not strictly increasing")
        if np.any(agg < 0) or np.any(ch < 0):
            raise DataError("power readings must be non-negative")
        if not (np.isfinite(agg).all() and np.isfinite(ch).all() and np.isfinite(ts).all()):
            raise DataError("non-finite values in frame")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[1]

    def equals(self, other: TimeSeriesFrame) -> bool:
        return (
            self.channel_names == other.channel_names
            and self.house_id == other.house_id
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.aggregate, other.aggregate)
            and np.array_equal(self.channels, other.channels)
        )


# ------------------------------------------------------------------ ingestion


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`ingest_csv`.

    ``appliances=None`` takes every column that is not the timestamp,
    the aggregate, or listed in ``ignore``.
    """

    timestamp: str = "timestamp"
    aggregate: str = "aggregate"
    appliances: tuple[str, ...] | None = None
    ignore: tuple[str, ...] = ()


# REFIT cleaned-data layout: Time,Unix,Aggregate,Appliance1..Appliance9,Issues
REFIT_SCHEMA = CsvSchema(
    timestamp="Unix",
    aggregate="Aggregate",
    appliances=tuple(f"Appliance{i}" for i in range(1, 10)),
    ignore=("Time", "Issues"),
)


def parse_timestamp(text: str) -> float:
    """Epoch seconds from either a number or an ISO-8601 string (naive = UTC)."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def ingest_csv(
    path,
    schema: CsvSchema | None = None,
    house_id: str | None = None,
    malformed_tolerance: float = 0.05,
    reorder_tolerance: float = 0.0,
) -> TimeSeriesFrame:
    """Parse a household CSV into a :class:`TimeSeriesFrame`.

    Rows that fail to parse (wrong field count, non-numeric or negative power,
    bad timestamp) are dropped and counted; more than ``malformed_tolerance``
    of the rows being malformed is an error. Rows that arrive out of order by
    at most ``reorder_tolerance`` seconds are re-sorted, anything worse raises.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumns(f"{path}: empty file") from None
        if schema.appliances is None:
            skip = {schema.timestamp, schema.aggregate, *schema.ignore}
            appliances = [h for h in header if h not in skip]
        else:
            appliances = list(schema.appliances)
        missing = [c for c in (schema.timestamp, schema.aggregate, *appliances) if c not in header]
        if missing:
            raise MissingColumns(f"{path}: missing columns {missing}")
        if not appliances:
            raise MissingColumns(f"{path}: no appliance columns")
        i_ts = header.index(schema.timestamp)
        i_agg = header.index(schema.aggregate)
        i_app = [header.index(a) for a in appliances]

        ts, agg, ch = [], [], []
        total = bad = 0
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            total += 1
            try:
                if len(row) != len(header):
                    raise ValueError("field count")
                t = parse_timestamp(row[i_ts])
                a = float(row[i_agg])
                c = [float(row[j]) for j in i_app]
                if not all(math.isfinite(v) and v >= 0 for v in [a, *c]) or not math.isfinite(t):
                    raise ValueError("bad value")
            except ValueError:
                bad += 1
                continue
            ts.append(t)
            agg.append(a)
            ch.append(c)

    if total == 0:
        raise DataError(f"{path}: no data rows")
    if bad / total > malformed_tolerance:
        raise TooManyMalformedRows(f"{path}: {bad} of {total} rows malformed (> {malformed_tolerance:.0%})")
    if bad:
        log.warning("%s: dropped %d malformed rows of %d", path, bad, total)

    ts_arr = np.asarray(ts, dtype=np.float64)
    agg_arr = np.asarray(agg, dtype=np.float64)
    ch_arr = np.asarray(ch, dtype=np.float64).reshape(len(ts), len(appliances))
    steps = np.diff(ts_arr)
    if np.any(steps < 0):
        running_max = np.maximum.accumulate(ts_arr)
        if np.max(running_max - ts_arr) > reorder_tolerance:
            raise NonMonotoneTimestamps(f"{path}: timestamps go backwards beyond the reorder tolerance")
        order = np.argsort(ts_arr, kind="stable")
        ts_arr, agg_arr, ch_arr = ts_arr[order], agg_arr[order], ch_arr[order]
    dup = np.diff(ts_arr) == 0
    if np.any(dup):
        raise DuplicateTimestamp(f"{path}: duplicate timestamp {ts_arr[1:][dup][0]!r}")
    return TimeSeriesFrame(
        timestamps=ts_arr,
        aggregate=agg_arr,
        channels=ch_arr,
        channel_names=tuple(appliances),
        house_id=house_id or path.stem,
        malformed_rows=bad,
    )


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 2**53 else repr(float(v))


def write_csv(frame: TimeSeriesFrame, path) -> Path:
    """Write a frame in the ingest layout (epoch-second timestamps, exact floats)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "aggregate", *frame.channel_names])
        for i in range(len(frame)):
            w.writerow([_fmt(frame.timestamps[i]), _fmt(frame.aggregate[i]), *(_fmt(v) for v in frame.channels[i])])
    return path


# ----------------------------------------------------------------- resampling


def resample_hourly(frame: TimeSeriesFrame, edge_tolerance: float = 60.0, max_gap_hours: int = 24) -> TimeSeriesFrame:
    """Mean power per clock hour over the hours the frame fully covers.

    An hour ``[h, h + 3600)`` counts as covered when it starts at or after the
    first reading and ends no later than ``edge_tolerance`` seconds after the
    last one. Empty hours are linearly interpolated from their neighbours and
    flagged in ``interpolated``; a run of more than ``max_gap_hours`` empty
    hours raises :class:`GapTooLong`.
    """
    ts = frame.timestamps
    if len(ts) == 0:
        raise DataError("empty frame")
    first = int(math.ceil(ts[0] / HOUR))
    last = int(math.floor((ts[-1] + edge_tolerance) / HOUR)) - 1
    n_hours = last - first + 1
    if n_hours < 2:
        raise DataError(f"frame covers {max(n_hours, 0)} full hours; need at least 2")

    bins = np.floor(ts / HOUR).astype(np.int64) - first
    keep = (bins >= 0) & (bins < n_hours)
    bins = bins[keep]
    counts = np.bincount(bins, minlength=n_hours)
    values = np.column_stack([frame.aggregate, frame.channels])[keep]
    sums = np.zeros((n_hours, values.shape[1]))
    np.add.at(sums, bins, values)
    empty = counts == 0
    hourly = np.zeros_like(sums)
    hourly[~empty] = sums[~empty] / counts[~empty, None]

    if empty.any():
        longest = run = 0
        for e in empty:
            run = run + 1 if e else 0
            longest = max(longest, run)
        if longest > max_gap_hours:
            raise GapTooLong(f"{longest} consecutive hours without readings (limit {max_gap_hours})")
        filled = np.flatnonzero(~empty)
        for j in range(values.shape[1]):
            hourly[empty, j] = np.interp(np.flatnonzero(empty), filled, hourly[filled, j])
        log.info("%s: interpolated %d empty hours", frame.house_id, int(empty.sum()))

    stamps = (np.arange(n_hours) + first) * float(HOUR)
    return TimeSeriesFrame(
        timestamps=stamps,
        aggregate=hourly[:, 0],
        channels=hourly[:, 1:],
        channel_names=frame.channel_names,
        house_id=frame.house_id,
        interpolated=empty,
        malformed_rows=frame.malformed_rows,
    )


# ------------------------------------------------------------------ windowing


@dataclass
class WindowedDataset:
    inputs: np.ndarray  # (N, T, D) normalized appliance channels
    targets: np.ndarray  # (N,) normalized aggregate at the hour after each window
    target_timestamps: np.ndarray  # (N,) epoch seconds of each target hour
    feature_names: tuple[str, ...]
    norm_params: dict[str, tuple[float, float]]  # per feature and "aggregate": (min, max)
    split_tag: str
    house_id: str = "house"
    zero_range: tuple[str, ...] = ()
    clipped_values: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split_tag not in ("train", "test", "validation"):
            raise ValueError(f"unknown split_tag {self.split_tag!r}")

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def window(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]

    @property
    def target_hours(self) -> np.ndarray:
        return ((self.target_timestamps // HOUR) % 24).astype(np.int64)

    def subset(self, idx, split_tag: str | None = None) -> WindowedDataset:
        idx = np.asarray(idx)
        return WindowedDataset(
            inputs=self.inputs[idx],
            targets=self.targets[idx],
            target_timestamps=self.target_timestamps[idx],
            feature_names=self.feature_names,
            norm_params=self.norm_params,
            split_tag=split_tag or self.split_tag,
            house_id=self.house_id,
            zero_range=self.zero_range,
            meta=dict(self.meta),
        )

    def denormalize_targets(self, values) -> np.ndarray:
        lo, hi = self.norm_params["aggregate"]
        return np.asarray(values) * (hi - lo) + lo


def split_boundary(n_rows: int, split_spec, timestamps: np.ndarray | None = None) -> int:
    """Row index of the first test row.

    ``split_spec`` is either a train fraction in (0, 1) or a dict
    ``{"boundary": epoch_seconds}`` naming the first test hour.
    """
    if isinstance(split_spec, dict):
        t = float(split_spec["boundary"])
        if timestamps is None or not timestamps[0] < t <= timestamps[-1]:
            raise DataError(f"split boundary {t} outside the frame span")
        return int(np.searchsorted(timestamps, t, side="left"))
    frac = float(split_spec)
    if not 0.0 < frac < 1.0:
        raise DataError(f"train fraction must lie in (0, 1), got {frac}")
    return int(math.floor(frac * n_rows))


def fit_minmax(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return values.min(axis=0), values.max(axis=0)


def apply_minmax(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = (values - lo) / safe
    return np.where(span > 0, out, 0.0)


def _windows(rows: np.ndarray, target: np.ndarray, stamps: np.ndarray, T: int):
    n = len(target) - T
    if n <= 0:
        return np.zeros((0, T, rows.shape[1])), np.zeros(0), np.zeros(0)
    idx = np.arange(n)[:, None] + np.arange(T)[None, :]
    return rows[idx], target[T:].copy(), stamps[T:].copy()


def make_windows(frame: TimeSeriesFrame, T: int = 24, split_spec=0.8) -> tuple[WindowedDataset, WindowedDataset]:
    """Chronological train/test windows with train-fitted min-max scaling.

    Rows before the split boundary belong to train, the rest to test. A
    window (its T input hours plus the target hour) must lie wholly inside
    one split, so nothing straddles the boundary. Scaling statistics come from
    the train rows only; test values falling outside the train range are
    clipped to [0, 1] and counted.
    """
    if T < 2:
        raise DataError(f"window length must be >= 2, got {T}")
    n = len(frame)
    b = split_boundary(n, split_spec, frame.timestamps)
    if b <= T or n - b <= T:
        raise DataError(f"too few hours for one window per split (rows={n}, boundary={b}, T={T})")

    ch, agg = frame.channels, frame.aggregate
    lo, hi = fit_minmax(ch[:b])
    alo, ahi = fit_minmax(agg[:b, None])
    names = frame.channel_names
    zero_range = tuple(name for name, l, h in zip(names, lo, hi) if not h > l)
    norm = {name: (float(l), float(h)) for name, l, h in zip(names, lo, hi)}
    norm["aggregate"] = (float(alo[0]), float(ahi[0]))

    out = []
    for tag, rows in (("train", slice(0, b)), ("test", slice(b, n))):
        x = apply_minmax(ch[rows], lo, hi)
        y = apply_minmax(agg[rows, None], alo, ahi)[:, 0]
        clipped = int(np.sum((x < 0) | (x > 1)) + np.sum((y < 0) | (y > 1)))
        x, y = np.clip(x, 0.0, 1.0), np.clip(y, 0.0, 1.0)
        X, Y, S = _windows(x, y, frame.timestamps[rows], T)
        out.append(
            WindowedDataset(
                inputs=X,
                targets=Y,
                target_timestamps=S,
                feature_names=names,
                norm_params=norm,
                split_tag=tag,
                house_id=frame.house_id,
                zero_range=zero_range,
                clipped_values=clipped,
                meta={"boundary_row": b, "boundary_timestamp": float(frame.timestamps[b]), "n_rows": n},
            )
        )
    return out[0], out[1]


def chronological_validation(train: WindowedDataset, fraction: float = 0.1):
    """Split off the last ``fraction`` of training windows for validation."""
    n = len(train)
    n_val = max(1, int(round(fraction * n)))
    if n - n_val < 1:
        raise DataError("training set too small for a validation split")
    return train.subset(np.arange(n - n_val)), train.subset(np.arange(n - n_val, n), "validation")


def save_dataset(ds: WindowedDataset, stem) -> tuple[Path, Path]:
    """Write ``<stem>.json`` (manifest) and ``<stem>.bin`` (payload).

    Payload layout, little-endian float64, concatenated in this order:
    ``inputs`` (N*T*D, C order), ``targets`` (N), ``target_timestamps`` (N).
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    N, T, D = ds.inputs.shape
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "house_id": ds.house_id,
        "split_tag": ds.split_tag,
        "feature_names": list(ds.feature_names),
        "norm_params": {k: list(v) for k, v in ds.norm_params.items()},
        "zero_range": list(ds.zero_range),
        "clipped_values": ds.clipped_values,
        "shape": {"n": N, "window": T, "features": D},
        "payload": {
            "file": stem.name + ".bin",
            "dtype": "<f8",
            "order": ["inputs", "targets", "target_timestamps"],
        },
        "meta": ds.meta,
    }
    payload = np.concatenate([ds.inputs.reshape(-1), ds.targets, ds.target_timestamps]).astype("<f8")
    bin_path = stem.with_suffix(".bin")
    bin_path.write_bytes(payload.tobytes())
    json_path = stem.with_suffix(".json")
    json_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return json_path, bin_path


def load_dataset(stem) -> WindowedDataset:
    stem = Path(stem)
    json_path = stem if stem.suffix == ".json" else stem.with_suffix(".json")
    manifest = json.loads(json_path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise DataError(f"{json_path}: unsupported format_version {manifest.get('format_version')}")
    shape = manifest["shape"]
    N, T, D = shape["n"], shape["window"], shape["features"]
    flat = np.frombuffer((json_path.parent / manifest["payload"]["file"]).read_bytes(), dtype="<f8")
    if flat.size != N * T * D + 2 * N:
        raise DataError(f"{json_path}: payload size mismatch")
    return WindowedDataset(
        inputs=flat[: N * T * D].reshape(N, T, D).copy(),
        targets=flat[N * T * D : N * T * D + N].copy(),
        target_timestamps=flat[N * T * D + N :].copy(),
        feature_names=tuple(manifest["feature_names"]),
        norm_params={k: tuple(v) for k, v in manifest["norm_params"].items()},
        split_tag=manifest["split_tag"],
        house_id=manifest["house_id"],
        zero_range=tuple(manifest["zero_range"]),
        clipped_values=manifest["clipped_values"],
        meta=manifest.get("meta", {}),
    )


# ------------------------------------------------------------------ synthetic


@dataclass(frozen=True)
class ApplianceSpec:
    name: str
    schedule: tuple[float, ...]  # 24 hour-of-day duty probabilities in [0, 1]
    mean_watts: float
    jitter: float = 0.1  # relative std of on-state power
    persistence: float = 0.0  # probability of staying on into the next hour
    trend: float = 0.0  # this appliance's own linear change of activity over the span

    def __post_init__(self):
        if self.trend <= -1.0:
            raise ValueError(f"{self.name}: trend must exceed -1")
        if not 0.0 <= self.persistence < 1.0:
            raise ValueError(f"{self.name}: persistence must lie in [0, 1)")
        if len(self.schedule) != 24:
            raise ValueError(f"{self.name}: schedule needs 24 hourly entries")
        if any(not 0.0 <= p <= 1.0 for p in self.schedule):
            raise ValueError(f"{self.name}: schedule entries must lie in [0, 1]")
        if self.mean_watts < 0 or self.jitter < 0:
            raise ValueError(f"{self.name}: mean_watts and jitter must be non-negative")


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    days: int
    appliances: tuple[ApplianceSpec, ...]
    occupancy_profile: tuple[float, ...] = (1.0,) * 24
    base_load: float = 50.0
    cadence_s: int = HOUR  # seconds between readings; 3600 yields hourly frames
    start: int = 1_380_585_600  # 2013-10-01 00:00 UTC
    house_id: str = "synthetic"
    drift: float = 0.0  # linear change of activity over the span, as a fraction

    def __post_init__(self):
        if self.days < 2:
            raise ValueError("days must be >= 2")
        if len(self.appliances) < 2:
            raise ValueError("at least 2 appliances are required")
        if len(self.occupancy_profile) != 24:
            raise ValueError("occupancy_profile needs 24 hourly weights")
        if HOUR % self.cadence_s != 0:
            raise ValueError("cadence_s must divide 3600")
        if self.start % HOUR != 0:
            raise ValueError("start must fall on an hour boundary")


def daily_schedule(floor: float, *spans: tuple[int, int, float]) -> tuple[float, ...]:
    """24 hourly duty probabilities: ``floor`` everywhere except the
    ``(start, end, level)`` spans, where ``end`` is exclusive and may wrap past midnight."""
    out = [floor] * 24
    for start, end, level in spans:
        for k in range((end - start) % 24 or 24):
            out[(start + k) % 24] = level
    return tuple(out)


def generate_synthetic(cfg: SynthConfig) -> TimeSeriesFrame:
    """Deterministic synthetic household.

    Each appliance is a two-state chain over hours: it switches on with
    probability ``schedule[hour] * occupancy[hour]``, scaled by a per-day
    activity factor, the household ``drift`` and the appliance's own
    ``trend``. Once on it stays on with probability ``persistence`` or
    restarts with the switch-on probability.
    An on hour runs for a random duty fraction as one contiguous burst at
    jittered power. The aggregate is the channel sum plus a constant base load.
    """
    rng = np.random.default_rng(cfg.seed)
    n_hours = cfg.days * 24
    per_hour = HOUR // cfg.cadence_s
    D = len(cfg.appliances)
    hod = np.arange(n_hours) % 24
    occupancy = np.asarray(cfg.occupancy_profile)[hod]
    ramp = np.arange(n_hours) / max(n_hours - 1, 1)
    trend = 1.0 + cfg.drift * ramp
    # one day-level activity factor per day, shared by all appliances
    daily = rng.uniform(0.7, 1.3, size=cfg.days)[np.arange(n_hours) // 24]

    readings = np.zeros((n_hours * per_hour, D))
    for j, app in enumerate(cfg.appliances):
        own = 1.0 + app.trend * ramp
        p = np.clip(np.asarray(app.schedule)[hod] * occupancy * daily * trend * own, 0.0, 1.0)
        u = rng.random(n_hours)
        on = np.zeros(n_hours, dtype=bool)
        prev = False
        for h in range(n_hours):
            prev = u[h] < (app.persistence + (1.0 - app.persistence) * p[h] if prev else p[h])
            on[h] = prev
        duty = np.where(on, rng.uniform(0.3, 1.0, size=n_hours), 0.0)
        power = app.mean_watts * np.clip(1.0 + app.jitter * rng.standard_normal(n_hours), 0.0, None)
        if per_hour == 1:
            readings[:, j] = duty * power
            continue
        slots = np.round(duty * per_hour).astype(np.int64)
        offset = (rng.random(n_hours) * (per_hour - slots + 1)).astype(np.int64)
        k = np.arange(per_hour)[None, :]
        mask = (k >= offset[:, None]) & (k < (offset + slots)[:, None])
        readings[:, j] = (mask * power[:, None]).reshape(-1)

    stamps = cfg.start + np.arange(n_hours * per_hour, dtype=np.float64) * cfg.cadence_s
    aggregate = readings.sum(axis=1) + cfg.base_load
    return TimeSeriesFrame(
        timestamps=stamps,
        aggregate=aggregate,
        channels=readings,
        channel_names=tuple(a.name for a in cfg.appliances),
        house_id=cfg.house_id,
    )


def default_appliances(n: int = 6) -> tuple[ApplianceSpec, ...]:
    """A household of up to nine REFIT-like appliances."""
    catalogue = [
        ApplianceSpec("fridge", daily_schedule(0.55), 90.0, 0.05, 0.5),
        ApplianceSpec("kettle", daily_schedule(0.02, (6, 9, 0.5), (17, 22, 0.6)), 2000.0, 0.05, 0.05),
        ApplianceSpec("television", daily_schedule(0.05, (18, 24, 0.85)), 120.0, 0.1, 0.75),
        ApplianceSpec("washing_machine", daily_schedule(0.0, (9, 13, 0.3)), 500.0, 0.2, 0.5),
        ApplianceSpec("microwave", daily_schedule(0.01, (12, 14, 0.4), (18, 20, 0.5)), 900.0, 0.1, 0.1),
        ApplianceSpec("computer", daily_schedule(0.1, (8, 18, 0.7)), 150.0, 0.1, 0.8),
        ApplianceSpec("dishwasher", daily_schedule(0.0, (20, 23, 0.35)), 1200.0, 0.1, 0.4),
        ApplianceSpec("tumble_dryer", daily_schedule(0.0, (14, 17, 0.2)), 2200.0, 0.1, 0.5),
        ApplianceSpec("freezer", daily_schedule(0.45), 70.0, 0.05, 0.5),
    ]
    if not 2 <= n <= len(catalogue):
        raise ValueError(f"n must lie in [2, {len(catalogue)}]")
    return tuple(catalogue[:n])


DEFAULT_OCCUPANCY: tuple[float, ...] = tuple(
    [0.3] * 6 + [0.9, 1.0, 0.8] + [0.6] * 8 + [1.0] * 5 + [0.7, 0.4]
)
