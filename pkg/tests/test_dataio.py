import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from shapguard import dataio as dio

START = 1_380_585_600  # an hour boundary


def write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def frame_of(agg, channels, start=START, step=3600.0, names=None):
    channels = np.asarray(channels, dtype=float)
    return dio.TimeSeriesFrame(
        timestamps=start + step * np.arange(len(agg)),
        aggregate=np.asarray(agg, dtype=float),
        channels=channels,
        channel_names=names or tuple(f"a{j}" for j in range(channels.shape[1])),
        house_id="h",
    )


def two_appliances(schedule_a, schedule_b):
    return (
        dio.ApplianceSpec("a", schedule_a, 300.0),
        dio.ApplianceSpec("b", schedule_b, 800.0),
    )


# ------------------------------------------------------------------- ingest


def test_three_row_ingest(tmp_path):
    p = write_rows(tmp_path / "h.csv", ["timestamp", "aggregate", "fridge", "kettle"],
                   [[START, 150, 100, 0], [START + 8, 2150, 100, 2000], ["2013-10-01T00:00:16", 140, 90, 0]])
    f = dio.ingest_csv(p)
    np.testing.assert_array_equal(f.timestamps, [START, START + 8, START + 16])
    assert f.channel_names == ("fridge", "kettle")
    assert f.house_id == "h"


def test_duplicate_timestamp(tmp_path):
    p = write_rows(tmp_path / "h.csv", ["timestamp", "aggregate", "x"], [[START, 1, 1], [START, 2, 2], [START + 6, 3, 3]])
    with pytest.raises(dio.DuplicateTimestamp):
        dio.ingest_csv(p)


def test_missing_columns(tmp_path):
    p = write_rows(tmp_path / "h.csv", ["timestamp", "fridge"], [[START, 1]])
    with pytest.raises(dio.MissingColumns):
        dio.ingest_csv(p)


def test_backwards_timestamps(tmp_path):
    rows = [[START + 6 * i, 1, 1] for i in range(10)]
    rows[4][0] = START - 100
    p = write_rows(tmp_path / "h.csv", ["timestamp", "aggregate", "x"], rows)
    with pytest.raises(dio.NonMonotoneTimestamps):
        dio.ingest_csv(p)


def test_small_reorder_is_tolerated(tmp_path):
    rows = [[START + 6 * i, i, i] for i in range(10)]
    rows[3], rows[4] = rows[4], rows[3]
    p = write_rows(tmp_path / "h.csv", ["timestamp", "aggregate", "x"], rows)
    f = dio.ingest_csv(p, reorder_tolerance=10)
    assert np.all(np.diff(f.timestamps) > 0)
    np.testing.assert_array_equal(f.aggregate, np.arange(10.0))


def test_malformed_rows_counted_up_to_tolerance(tmp_path):
    rows = [[START + 6 * i, 5, 5] for i in range(40)]
    rows[7] = [START + 42, "n/a", 5]
    p = write_rows(tmp_path / "ok.csv", ["timestamp", "aggregate", "x"], rows)
    assert dio.ingest_csv(p).malformed_rows == 1
    rows[8] = [START + 48, -3, 5]
    rows[9] = [START + 54, 5]
    p = write_rows(tmp_path / "bad.csv", ["timestamp", "aggregate", "x"], rows)
    with pytest.raises(dio.TooManyMalformedRows):
        dio.ingest_csv(p)


def test_refit_layout_has_nine_channels(tmp_path):
    rng = np.random.default_rng(0)
    t = START + np.cumsum(rng.uniform(6, 8, size=300))
    header = ["Time", "Unix", "Aggregate", *[f"Appliance{i}" for i in range(1, 10)], "Issues"]
    rows = []
    for ts in t:
        ch = rng.uniform(0, 100, size=9).round(1)
        rows.append(["2013-10-01 00:00:00", int(ts), round(ch.sum() + 40, 1), *ch, 0])
    p = write_rows(tmp_path / "CLEAN_House1.csv", header, rows)
    f = dio.ingest_csv(p, dio.REFIT_SCHEMA, house_id="house1")
    assert f.n_channels == 9
    assert len(f) == 300


def test_csv_round_trip(tmp_path):
    f = dio.generate_synthetic(dio.SynthConfig(seed=3, days=2, appliances=dio.default_appliances(4), cadence_s=600))
    again = dio.ingest_csv(dio.write_csv(f, tmp_path / "f.csv"), house_id=f.house_id)
    assert again.equals(f)


# ---------------------------------------------------------------- resampling


def test_constant_hour():
    n = 600
    f = frame_of(np.full(2 * n, 100.0), np.full((2 * n, 1), 100.0), step=6.0)
    h = dio.resample_hourly(f)
    np.testing.assert_array_equal(h.aggregate, [100.0, 100.0])


def test_half_and_half():
    n = 600
    agg = np.concatenate([np.zeros(n // 2), np.full(n // 2, 200.0), np.full(n, 50.0)])
    h = dio.resample_hourly(frame_of(agg, agg[:, None], step=6.0))
    assert h.aggregate[0] == 100.0
    assert h.channels[0, 0] == 100.0


def test_synthetic_48h_gives_48_rows():
    cfg = dio.SynthConfig(seed=1, days=2, appliances=dio.default_appliances(3), cadence_s=6)
    raw = dio.generate_synthetic(cfg)
    assert len(raw) == 48 * 600  # generator oracle: 600 readings per hour
    assert len(dio.resample_hourly(raw)) == 48


def test_energy_conservation():
    cfg = dio.SynthConfig(seed=2, days=2, appliances=dio.default_appliances(5), cadence_s=6)
    raw = dio.generate_synthetic(cfg)
    hourly = dio.resample_hourly(raw)
    energy = hourly.aggregate.sum() * 3600.0
    trapz = integrate.trapezoid(raw.aggregate, raw.timestamps)
    assert abs(energy - trapz) / trapz < 0.02


def test_gap_interpolated_and_flagged():
    agg = np.arange(6, dtype=float) * 10
    f = frame_of(agg, agg[:, None])
    keep = np.array([0, 1, 4, 5])
    sparse = dio.TimeSeriesFrame(f.timestamps[keep], f.aggregate[keep], f.channels[keep], f.channel_names, "h")
    h = dio.resample_hourly(sparse, edge_tolerance=3600)
    np.testing.assert_allclose(h.aggregate, agg)
    np.testing.assert_array_equal(h.interpolated, [False, False, True, True, False, False])


def test_gap_too_long():
    f = frame_of(np.ones(2), np.ones((2, 1)), step=30 * 3600.0)
    with pytest.raises(dio.GapTooLong):
        dio.resample_hourly(f, edge_tolerance=3600)


# ----------------------------------------------------------------- windowing


def brute_force_windows(n, boundary, T):
    """Start indices whose T inputs and target all sit in one split."""
    train = [i for i in range(n - T) if i + T < boundary]
    test = [i for i in range(n - T) if i >= boundary]
    return train, test


def test_hundred_rows_window_counts():
    f = frame_of(np.arange(100.0), np.arange(100.0)[:, None])
    train, test = dio.make_windows(f, T=24, split_spec=0.75)
    want_train, want_test = brute_force_windows(100, 75, 24)
    assert len(train) == len(want_train) == 51
    assert len(test) == len(want_test) == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(30, 200), st.floats(0.3, 0.8), st.integers(2, 12))
def test_windows_match_enumeration_and_never_straddle(n, frac, T):
    f = frame_of(np.arange(n, dtype=float), np.arange(n, dtype=float)[:, None] * 2)
    b = dio.split_boundary(n, frac)
    if b <= T or n - b <= T:
        with pytest.raises(dio.DataError):
            dio.make_windows(f, T, frac)
        return
    train, test = dio.make_windows(f, T, frac)
    want_train, want_test = brute_force_windows(n, b, T)
    assert (len(train), len(test)) == (len(want_train), len(want_test))
    # window i covers hours [i, i + T) and predicts hour i + T
    assert np.all(train.target_timestamps < f.timestamps[b])
    assert np.all(test.target_timestamps >= f.timestamps[b])
    lo, hi = 0.0, 2.0 * (b - 1)
    np.testing.assert_allclose(train.inputs[:, :, 0] * (hi - lo) + lo, 2.0 * (np.arange(len(train))[:, None] + np.arange(T)))


def test_norm_fitted_on_train_rows_only():
    agg = np.concatenate([np.linspace(0, 10, 80), np.full(20, 1000.0)])
    f = frame_of(agg, agg[:, None])
    train, test = dio.make_windows(f, T=4, split_spec=0.8)
    assert train.norm_params["aggregate"] == (0.0, 10.0)
    assert train.norm_params["a0"] == (0.0, 10.0)
    assert np.all(test.targets == 1.0)
    assert test.clipped_values > 0


def test_constant_channel_maps_to_zero():
    n = 60
    f = frame_of(np.arange(n, dtype=float), np.column_stack([np.full(n, 7.0), np.arange(n, dtype=float)]))
    train, test = dio.make_windows(f, T=5)
    assert train.zero_range == ("a0",)
    assert np.all(train.inputs[:, :, 0] == 0.0)
    assert np.all(test.inputs[:, :, 0] == 0.0)


def test_window_split_proportion():
    assert 12_248 / (12_248 + 3_063) == pytest.approx(0.8, abs=0.001)


def test_boundary_by_timestamp():
    f = frame_of(np.arange(50.0), np.arange(50.0)[:, None])
    train, _ = dio.make_windows(f, T=3, split_spec={"boundary": START + 40 * 3600})
    assert train.meta["boundary_row"] == 40


def test_too_few_rows():
    f = frame_of(np.arange(10.0), np.arange(10.0)[:, None])
    with pytest.raises(dio.DataError):
        dio.make_windows(f, T=24)


def test_chronological_validation():
    f = frame_of(np.arange(200.0), np.arange(200.0)[:, None])
    train, _ = dio.make_windows(f, T=5)
    fit, val = dio.chronological_validation(train, 0.1)
    assert len(fit) + len(val) == len(train)
    assert fit.target_timestamps.max() < val.target_timestamps.min()
    assert val.split_tag == "validation"


def test_dataset_round_trip(tmp_path):
    f = dio.generate_synthetic(dio.SynthConfig(seed=4, days=4, appliances=dio.default_appliances(3)))
    train, _ = dio.make_windows(f, T=6)
    dio.save_dataset(train, tmp_path / "train")
    back = dio.load_dataset(tmp_path / "train")
    assert back.inputs.tobytes() == train.inputs.tobytes()
    assert back.targets.tobytes() == train.targets.tobytes()
    assert back.feature_names == train.feature_names
    assert back.norm_params == train.norm_params
    assert back.split_tag == "train"


# ----------------------------------------------------------------- synthetic


def test_synthetic_is_seeded():
    cfg = dio.SynthConfig(seed=7, days=3, appliances=dio.default_appliances(6))
    assert dio.generate_synthetic(cfg).equals(dio.generate_synthetic(cfg))


def test_disjoint_schedules_aggregate_is_sum_plus_base():
    apps = two_appliances(dio.daily_schedule(0.0, (0, 12, 0.9)), dio.daily_schedule(0.0, (12, 24, 0.9)))
    f = dio.generate_synthetic(dio.SynthConfig(seed=1, days=5, appliances=apps, base_load=40.0))
    np.testing.assert_allclose(f.aggregate, f.channels.sum(axis=1) + 40.0, rtol=0, atol=1e-9)
    hours = (f.timestamps // 3600).astype(int) % 24
    assert np.all(f.channels[hours >= 12, 0] == 0)
    assert np.all(f.channels[hours < 12, 1] == 0)


def test_kettle_evening_exceeds_morning():
    f = dio.generate_synthetic(dio.SynthConfig(seed=5, days=30, appliances=dio.default_appliances(2)))
    hours = (f.timestamps // 3600).astype(int) % 24
    evening = f.channels[(hours >= 17) & (hours < 22), 1].mean()
    night = f.channels[(hours >= 0) & (hours < 5), 1].mean()
    assert evening > night


def test_appliance_trend_raises_late_activity():
    app = dio.ApplianceSpec("x", dio.daily_schedule(0.3), 100.0, trend=2.0)
    f = dio.generate_synthetic(dio.SynthConfig(seed=0, days=60, appliances=(app, dio.ApplianceSpec("y", dio.daily_schedule(0.3), 1.0))))
    half = len(f) // 2
    assert f.channels[half:, 0].mean() > 1.5 * f.channels[:half, 0].mean()


@pytest.mark.parametrize("bad", [
    dict(days=1),
    dict(appliances=dio.default_appliances(2)[:1]),
    dict(occupancy_profile=(1.0,) * 23),
])
def test_synth_config_validation(bad):
    kw = dict(seed=0, days=3, appliances=dio.default_appliances(3))
    kw.update(bad)
    with pytest.raises(ValueError):
        dio.SynthConfig(**kw)
