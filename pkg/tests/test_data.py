import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covshift.data import (
    BACKWARD,
    FEATURES,
    FORWARD,
    MISSING,
    OBSERVED,
    Dataset,
    HourlyGrid,
    PatientGrid,
    apply_norm,
    cohort_to_dataset,
    concat,
    fit_norm,
    hourly_segment,
    impute,
    load_cohort,
    load_dataset_csv,
    load_wide,
    normalize,
    save_dataset_csv,
    snapshot,
)
from covshift.exceptions import DataError, SchemaError

HEADER = "patient_id,timestamp_hours,measurement,value,label,anchor_hour\n"
nan = np.nan


def write(tmp_path, text, name="c.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def grid_of(values, label=0, anchor=None):
    values = np.asarray(values, dtype=float)
    prov = np.where(np.isnan(values), MISSING, OBSERVED).astype(np.int8)
    return HourlyGrid((PatientGrid("p", label, anchor, values, prov),))


# -- loading -------------------------------------------------------------------


def test_three_rows_one_kind(tmp_path):
    p = write(tmp_path, HEADER + "p1,0,hr,80,0,\np1,1,hr,82,0,\np1,2.5,hr,85,0,\n")
    rec = load_cohort(p)
    assert len(rec) == 1
    assert rec["p1"].count("heart_rate") == 3
    np.testing.assert_array_equal(rec["p1"].values["heart_rate"], [80, 82, 85])


def test_missing_label_column_named(tmp_path):
    p = write(tmp_path, "patient_id,timestamp_hours,measurement,value,anchor_hour\np,0,hr,80,\n")
    with pytest.raises(SchemaError, match="label"):
        load_cohort(p)


def test_fixture_hand_counts(fixture_cohort):
    rec = load_cohort(fixture_cohort)
    assert rec.patient_ids == ["A", "B"]
    a_counts = {"heart_rate": 3, "respiratory_rate": 2, "spo2": 1, "temperature": 2, "sbp": 2, "dbp": 1}
    b_counts = {"heart_rate": 3, "respiratory_rate": 1, "spo2": 1, "temperature": 1, "sbp": 1, "dbp": 1}
    assert {k: rec["A"].count(k) for k in FEATURES} == a_counts
    assert {k: rec["B"].count(k) for k in FEATURES} == b_counts
    assert rec["A"].label == 1 and rec["B"].label == 0


@pytest.mark.parametrize(
    "body, match",
    [
        ("p,0,hr,80,0,\np,0,hr,81,0,\n", "row 3: duplicate"),
        ("p,0,hr,80,2,\n", "row 2"),
        ("p,0,hr,eighty,0,\n", "row 2.*value"),
        ("p,0,temp,98.6,0,\n", "temperature"),
        ("p,0,bp,80,0,\n", "unknown measurement"),
        ("p,0,hr,80,0,\np,1,hr,80,1,\n", "changes within patient"),
        ("p,0,hr,inf,0,\n", "row 2"),
    ],
)
def test_loader_rejects(tmp_path, body, match):
    with pytest.raises(DataError, match=match):
        load_cohort(write(tmp_path, HEADER + body))


def test_wide_format(tmp_path):
    text = (
        "patient_id,hour,hr,rr,spo2,temp,sbp,dbp,label\n"
        "w,0,80,,97,37,120,80,1\n"
        "w,2,90,16,,,,,1\n"
    )
    grid = load_wide(write(tmp_path, text))
    v = grid.patients[0].values
    assert v.shape == (3, 6)
    assert np.isnan(v[1]).all()
    data = snapshot(impute(grid))
    # last hour: hr observed 90, rr observed 16, the rest carried forward
    np.testing.assert_array_equal(data.X[0], [120, 80, 90, 16, 97, 37])


# -- gridding ------------------------------------------------------------------


def test_two_values_in_hour_average(tmp_path):
    p = write(tmp_path, HEADER + "p,0,hr,70,0,\np,3.1,hr,80,0,\np,3.9,hr,90,0,\n")
    grid = hourly_segment(load_cohort(p))
    v = grid.patients[0].values[:, FEATURES.index("heart_rate")]
    assert v[3] == 85
    assert v[0] == 70
    assert np.isnan(v[1]) and np.isnan(v[2])


def test_fixture_grid_matches_hand_built(fixture_cohort):
    grid = hourly_segment(load_cohort(fixture_cohort))
    a, b = grid.patients
    hand_a = np.array([
        [nan, nan, 85, 16, 97, 37.0],
        [125, nan, nan, 20, nan, nan],
        [nan, 70, 100, nan, nan, 38.0],
    ])
    hand_b = np.array([
        [110, 65, 70, 14, 99, 36.6],
        [nan, nan, 76, nan, nan, nan],
    ])
    np.testing.assert_array_equal(a.values, hand_a)
    np.testing.assert_array_equal(b.values, hand_b)
    assert a.anchor == 2 and b.anchor is None


def test_segment_invariant_to_row_order(tmp_path, fixture_cohort):
    lines = fixture_cohort.read_text().splitlines()
    body = lines[1:]
    rng = np.random.default_rng(0)
    shuffled = [body[i] for i in rng.permutation(len(body))]
    p = write(tmp_path, "\n".join([lines[0], *shuffled]) + "\n")
    g1, g2 = hourly_segment(load_cohort(fixture_cohort)), hourly_segment(load_cohort(p))
    by_id = {q.patient_id: q for q in g2.patients}
    for q in g1.patients:
        np.testing.assert_array_equal(q.values, by_id[q.patient_id].values)


# -- imputation ----------------------------------------------------------------


def test_impute_forward_then_backward():
    col = [nan, 80, nan, 90]
    vals = np.full((4, 6), 1.0)
    vals[:, 0] = col
    out = impute(grid_of(vals)).patients[0]
    np.testing.assert_array_equal(out.values[:, 0], [80, 80, 80, 90])
    np.testing.assert_array_equal(out.provenance[:, 0], [BACKWARD, OBSERVED, FORWARD, OBSERVED])


def test_impute_fully_observed_unchanged(rng):
    vals = rng.normal(size=(5, 6))
    out = impute(grid_of(vals)).patients[0]
    np.testing.assert_array_equal(out.values, vals)
    assert (out.provenance == OBSERVED).all()


def test_impute_rejects_never_observed_kind():
    vals = np.ones((3, 6))
    vals[:, 4] = nan
    with pytest.raises(DataError, match="spo2"):
        impute(grid_of(vals))


def naive_fill(col):
    """Two explicit passes: carry forward, then fill the leading gap backward."""
    out = list(col)
    last = None
    for i, v in enumerate(out):
        if np.isnan(v):
            if last is not None:
                out[i] = last
        else:
            last = v
    nxt = None
    for i in range(len(out) - 1, -1, -1):
        if np.isnan(out[i]):
            out[i] = nxt
        else:
            nxt = out[i]
    return out


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_impute_matches_two_pass_oracle(hours, seed):
    rng = np.random.default_rng(seed)
    vals = rng.integers(40, 120, size=(hours, 6)).astype(float)
    mask = rng.random((hours, 6)) < 0.6
    mask[rng.integers(0, hours, 6), np.arange(6)] = False  # keep one observation per kind
    vals[mask] = nan
    out = impute(grid_of(vals)).patients[0]
    for j in range(6):
        np.testing.assert_array_equal(out.values[:, j], naive_fill(vals[:, j]))
    observed = ~np.isnan(vals)
    np.testing.assert_array_equal(out.values[observed], vals[observed])


# -- snapshot ------------------------------------------------------------------


def test_snapshot_row_extraction(rng):
    vals = rng.normal(size=(8, 6))
    data = snapshot(impute(grid_of(vals, label=1, anchor=5)))
    assert data.X.shape == (1, 6)
    np.testing.assert_array_equal(data.X[0], vals[5])
    assert data.y[0] == 1


def test_snapshot_anchor_out_of_range():
    with pytest.raises(DataError, match="anchor"):
        snapshot(impute(grid_of(np.ones((3, 6)))), anchor=3)


def test_fixture_end_to_end(fixture_cohort):
    data = cohort_to_dataset(fixture_cohort)
    assert data.X.shape == (2, 6)
    assert data.feature_names == FEATURES
    np.testing.assert_array_equal(data.X[0], [125, 70, 100, 20, 97, 38.0])
    np.testing.assert_array_equal(data.X[1], [110, 65, 76, 14, 99, 36.6])
    np.testing.assert_array_equal(data.y, [1, 0])
    assert data.ids == ("A", "B")


# -- Dataset and normalization ------------------------------------------------


@pytest.mark.parametrize(
    "X, y, names",
    [
        ([[1.0, nan]], [0], ("a", "b")),
        ([[1.0, 2.0]], [2], ("a", "b")),
        ([[1.0, 2.0]], [0], ("a", "a")),
        ([[1.0, 2.0]], [0, 1], ("a", "b")),
        (np.zeros((0, 2)), [], ("a", "b")),
    ],
)
def test_dataset_invariants(X, y, names):
    with pytest.raises(DataError):
        Dataset(X, y, names)


def test_dataset_is_read_only():
    d = Dataset([[1.0], [2.0]], [0, 1], ("a",))
    with pytest.raises(ValueError):
        d.X[0, 0] = 5


def test_two_point_normalization():
    d = Dataset([[1.0], [3.0]], [0, 1], ("a",))
    z, stats = normalize(d)
    assert stats.mean[0] == 2 and stats.std[0] == pytest.approx(np.sqrt(2))
    np.testing.assert_allclose(z.X[:, 0], [-1 / np.sqrt(2), 1 / np.sqrt(2)])
    # sample convention: the z-scored column has unit sample std
    assert z.X[:, 0].std(ddof=1) == pytest.approx(1.0)


def test_zero_variance_rejected():
    with pytest.raises(DataError, match="b"):
        fit_norm(Dataset([[1.0, 5.0], [2.0, 5.0]], [0, 1], ("a", "b")))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 50), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_normalize_properties(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(50, 20, size=(n, d))
    data = Dataset(X, rng.integers(0, 2, n), tuple(f"f{j}" for j in range(d)))
    z, stats = normalize(data)
    assert np.all(np.abs(z.X.mean(axis=0)) <= 1e-10)
    assert np.all(np.abs(z.X.std(axis=0, ddof=1) - 1) <= 1e-10)
    np.testing.assert_allclose(stats.invert(z.X), X, rtol=1e-10)


def test_apply_norm_uses_given_stats(rng):
    tr = Dataset(rng.normal(size=(20, 2)), rng.integers(0, 2, 20), ("a", "b"))
    te = Dataset(rng.normal(3, 1, size=(10, 2)), rng.integers(0, 2, 10), ("a", "b"))
    stats = fit_norm(tr)
    out = apply_norm(te, stats)
    np.testing.assert_allclose(out.X, (te.X - tr.X.mean(0)) / tr.X.std(0, ddof=1))


def test_dataset_csv_round_trip(tmp_path, rng):
    d = Dataset(rng.normal(size=(7, 3)), rng.integers(0, 2, 7), ("x", "y2", "z"))
    save_dataset_csv(d, tmp_path / "d.csv")
    back = load_dataset_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.X, d.X)
    np.testing.assert_array_equal(back.y, d.y)
    assert back.feature_names == d.feature_names


def test_concat_and_subset(rng):
    a = Dataset(rng.normal(size=(3, 2)), [0, 1, 0], ("a", "b"), ids=("r0", "r1", "r2"))
    b = Dataset(rng.normal(size=(2, 2)), [1, 1], ("a", "b"), ids=("s0", "s1"))
    c = concat([a, b])
    assert c.n == 5 and c.ids[-1] == "s1"
    assert c.subset([0, 4]).ids == ("r0", "s1")
