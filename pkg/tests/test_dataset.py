import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capsule_proprio import capsule_sim as cs
from capsule_proprio.dataset import (
    HEADER,
    Criterion,
    Dataset,
    Record,
    Standardizer,
    TargetScaler,
    filter_near_limit,
    near_limit_mask,
    read_csv,
    split,
    standardize,
    write_csv,
)
from capsule_proprio.errors import ConfigError, ParseError, ValidationError


@pytest.fixture(scope="module")
def data():
    traj = cs.generate_trajectory(cs.TrajectoryConfig(), 0)
    return Dataset.from_simulation(cs.simulate(cs.default_geometry(0), traj, seed=0))


def test_header_schema():
    assert len(HEADER) == 67
    assert HEADER[:2] == ("t", "adc0_data0")
    assert HEADER[60] == "adc3_data14"
    assert HEADER[-6:] == ("x", "y", "z", "roll", "pitch", "yaw")


def test_csv_round_trip(data, tmp_path):
    path = tmp_path / "d.csv"
    write_csv(data, path)
    back = read_csv(path)
    assert back == data
    assert len(back) == 1263
    assert path.read_text().splitlines()[0] == ",".join(HEADER)


def test_csv_round_trip_from_records(tmp_path):
    recs = [Record(0.1 * i, tuple(range(i, i + 60)), cs.Pose(1e-3 * i, 0, 0, 1.23456789012, -0.5, 3.0)) for i in range(4)]
    write_csv(recs, tmp_path / "r.csv")
    assert list(read_csv(tmp_path / "r.csv")) == recs


def _write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n")


def test_missing_column_is_parse_error(tmp_path):
    header = ",".join(h for h in HEADER if h != "adc3_data14")
    _write_lines(tmp_path / "bad.csv", [header])
    with pytest.raises(ParseError, match="line 1"):
        read_csv(tmp_path / "bad.csv")


def test_short_row_is_parse_error(tmp_path):
    row = ["0.0"] + ["314"] * 59 + ["0"] * 6
    _write_lines(tmp_path / "bad.csv", [",".join(HEADER), ",".join(row)])
    with pytest.raises(ParseError, match="line 2"):
        read_csv(tmp_path / "bad.csv")


def test_count_above_ceiling_is_validation_error(tmp_path):
    good = ["0.0"] + ["314"] * 60 + ["0"] * 6
    bad = ["0.1"] + ["314"] * 10 + ["700"] + ["314"] * 49 + ["0"] * 6
    _write_lines(tmp_path / "bad.csv", [",".join(HEADER), ",".join(good), ",".join(bad)])
    with pytest.raises(ValidationError, match="line 3"):
        read_csv(tmp_path / "bad.csv")


def test_non_numeric_is_parse_error(tmp_path):
    row = ["0.0"] + ["314"] * 60 + ["0", "0", "0", "abc", "0", "0"]
    _write_lines(tmp_path / "bad.csv", [",".join(HEADER), ",".join(row)])
    with pytest.raises(ParseError, match="line 2"):
        read_csv(tmp_path / "bad.csv")


def test_empty_file(tmp_path):
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(ParseError):
        read_csv(tmp_path / "e.csv")


def test_split_sizes():
    s = split(1263, 0.2, 0)
    assert len(s.test) == 253 and len(s.train) == 1010
    assert len(split(5, 0.2, 0).test) == 1


def test_split_disjoint_exhaustive_deterministic():
    a, b = split(100, 0.2, 9), split(100, 0.2, 9)
    assert np.array_equal(a.test, b.test) and np.array_equal(a.train, b.train)
    assert set(a.test).isdisjoint(a.train)
    assert sorted(np.concatenate([a.test, a.train])) == list(range(100))
    assert not np.array_equal(a.test, split(100, 0.2, 10).test)


def test_split_errors():
    with pytest.raises(ConfigError):
        split(100, 1.0)
    with pytest.raises(ConfigError):
        split(100, 0.0)
    with pytest.raises(ConfigError):
        split(4, 0.2)


def test_near_limit_filters():
    poses = np.zeros((6, 6))
    poses[1, 3] = 25.0
    poses[2, 4] = -71.0
    poses[3, 5] = 75.0
    poses[4, 0] = -0.0025
    poses[5, 3] = 20.0  # strictly greater is required
    assert list(np.flatnonzero(near_limit_mask(poses, "twist"))) == [1]
    assert list(np.flatnonzero(near_limit_mask(poses, Criterion.BEND))) == [2, 3]
    assert list(np.flatnonzero(near_limit_mask(poses, "pushpull"))) == [4]


def test_identity_records_give_empty_subsets():
    d = Dataset(np.arange(4) * 0.1, np.full((4, 60), 314), np.zeros((4, 6)))
    for c in Criterion:
        assert len(filter_near_limit(d, c)) == 0
        assert filter_near_limit(list(d), c) == []


def test_subset_sizes_order_of_magnitude(data):
    reference = {"twist": 415, "bend": 207, "pushpull": 75}
    for name, ref in reference.items():
        n = len(filter_near_limit(data, name))
        assert ref / 10 <= n <= ref * 10


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-45, 45), min_size=1, max_size=20), st.integers(0, 20))
def test_filter_distributes_over_concatenation(rolls, cut):
    recs = [Record(0.1 * i, (314,) * 60, cs.Pose(roll=r)) for i, r in enumerate(rolls)]
    a, b = recs[:cut], recs[cut:]
    assert filter_near_limit(a + b, "twist") == filter_near_limit(a, "twist") + filter_near_limit(b, "twist")


def test_standardizer_constant_channel():
    X = np.column_stack([np.arange(10.0), np.full(10, 7.0)])
    Z = Standardizer().fit_transform(X)
    assert np.all(Z[:, 1] == 0.0)
    assert Z[:, 0].std() == pytest.approx(1.0)


def test_standardizer_min_scale_floor():
    X = np.column_stack([np.arange(100.0) * 10, 628 + np.tile([0.0, -2.0], 50)])
    s = Standardizer(min_scale=20.0).fit(X)
    assert s.scale_[1] == 20.0 and s.scale_[0] == X[:, 0].std()
    np.testing.assert_allclose(s.inverse_transform(s.transform(X)), X)


def test_target_modes():
    y = np.array([[0.01, 0, 0, 90.0, 0, 0], [0.0, 0.002, 0, 0, -45.0, 10.0]])
    rm = TargetScaler("radians_meters").fit(y).transform(y)
    assert rm[0, 3] == pytest.approx(np.pi / 2, abs=1e-15)
    assert rm[0, 0] == 0.01
    raw = TargetScaler("raw").fit(y).transform(y)
    assert np.array_equal(raw, y)
    std = TargetScaler("standardized").fit(y)
    np.testing.assert_allclose(std.inverse_transform(std.transform(y)), y, atol=1e-15)
    with pytest.raises(ValueError):
        TargetScaler("furlongs").fit(y)


def test_standardize_has_no_test_leakage(data):
    sp = split(data, 0.2, 0)
    a = standardize(data, sp)
    counts = data.counts.copy()
    poses = data.poses.copy()
    counts[sp.test] = np.where(counts[sp.test] > 300, 0, 628)
    poses[sp.test] += 5.0
    b = standardize(Dataset(data.t, counts, poses), sp)
    assert np.array_equal(a.standardizer.mean_, b.standardizer.mean_)
    assert np.array_equal(a.standardizer.scale_, b.standardizer.scale_)
    assert np.array_equal(a.target_scaler.offset_, b.target_scaler.offset_)
    assert np.array_equal(a.X_train, b.X_train)


def test_standardize_rejects_empty_train(data):
    from capsule_proprio.dataset import Split

    with pytest.raises(ValueError):
        standardize(data, Split(np.array([], dtype=int), np.arange(10), 0.2, 0))


def test_dataset_validates_counts():
    with pytest.raises(ValidationError):
        Dataset([0.0], np.full((1, 60), 629), np.zeros((1, 6)))
