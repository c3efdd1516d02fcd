import numpy as np
import pandas as pd
import pytest

from ewrace.panel_data import (
    CrisisEvent,
    DataError,
    Horizon,
    PipelineStep,
    RawPanel,
    TransformSpec,
    apply_pipeline,
    apply_publication_lags,
    build_dataset,
    format_quarter,
    hp_trend,
    hp_trend_one_sided,
    label_and_filter,
    merge_events,
    parse_quarter,
    read_events_csv,
    read_panel_csv,
    transform,
    write_events_csv,
    write_panel_csv,
)


def q(text):
    return parse_quarter(text)


def one_country(values, start="2000Q1", kinds=None, country="AA"):
    cols = {k: np.asarray(v, dtype=float) for k, v in values.items()}
    n = len(next(iter(cols.values())))
    return RawPanel.from_arrays([country] * n, np.arange(n) + q(start), cols, kinds)


def dense_hp(y, lam):
    # dense oracle: solve (I + lam D'D) x = y with D the second-difference matrix
    n = len(y)
    D = np.zeros((n - 2, n))
    for i in range(n - 2):
        D[i, i:i + 3] = (1.0, -2.0, 1.0)
    return np.linalg.solve(np.eye(n) + lam * D.T @ D, y)


# -- quarters --------------------------------------------------------------------------

def test_quarter_round_trip():
    for text in ("1976Q1", "2005Q2", "2014Q3"):
        assert format_quarter(q(text)) == text
    assert q("2007Q1") + 2 == q("2007Q3")


@pytest.mark.parametrize("bad", ["2007Q5", "2007-1", "Q1 2007", ""])
def test_bad_quarter_rejected(bad):
    with pytest.raises(ValueError):
        parse_quarter(bad)


# -- HP filter -------------------------------------------------------------------------

@pytest.mark.parametrize("lam", [1.0, 1600.0, 400_000.0])
def test_hp_reproduces_constants_and_lines(lam):
    t = np.arange(30, dtype=float)
    assert np.allclose(hp_trend_one_sided(np.full(30, 3.5), lam), 3.5, atol=1e-8)
    assert np.allclose(hp_trend_one_sided(2.0 + 0.3 * t, lam), 2.0 + 0.3 * t, atol=1e-8)


def test_hp_one_sided_matches_dense_oracle():
    t = np.arange(1, 41, dtype=float)
    y = np.sin(t / 8) + t / 20
    one_sided = hp_trend_one_sided(y, 1600.0)
    assert one_sided[-1] == pytest.approx(dense_hp(y, 1600.0)[-1], abs=1e-10)
    assert np.allclose(hp_trend(y, 1600.0), dense_hp(y, 1600.0), atol=1e-10)


def test_hp_one_sided_prefix_property():
    rng = np.random.default_rng(1)
    y = np.cumsum(rng.normal(size=60))
    full = hp_trend_one_sided(y, 1600.0)
    for cut in (10, 25, 59):
        assert np.array_equal(hp_trend_one_sided(y[:cut], 1600.0), full[:cut])


def test_hp_warmup_copies_raw_values():
    y = np.array([1.0, 5.0, 2.0, 7.0, 3.0])
    assert np.array_equal(hp_trend_one_sided(y)[:3], y[:3])


def test_hp_rejects_non_finite_with_position():
    with pytest.raises(ValueError, match="position 2"):
        hp_trend_one_sided([1.0, 2.0, np.nan, 4.0])


# -- transforms ------------------------------------------------------------------------

def test_annual_growth():
    raw = one_country({"x": [1, 1, 1, 1, 2]})
    g = transform(raw, TransformSpec("annual_growth", source="x")).to_numpy()
    assert np.isnan(g[:4]).all()
    assert g[4] == 1.0


def test_trend_deviations_of_constant_and_line():
    n = 30
    raw = one_country({"c": np.full(n, 4.0), "l": 1.0 + 0.5 * np.arange(n)})
    for kind in ("abs_trend_dev", "rel_trend_dev"):
        dev = transform(raw, TransformSpec(kind, source="c")).to_numpy()
        assert np.isnan(dev[:3]).all()
        assert np.allclose(dev[3:], 0.0, atol=1e-8)
    dev = transform(raw, TransformSpec("abs_trend_dev", source="l", hp_lambda=1600)).to_numpy()
    assert np.max(np.abs(dev[3:])) < 1e-8


def test_rel_trend_dev_zero_trend_is_missing():
    raw = one_country({"z": np.zeros(8)})
    dev = transform(raw, TransformSpec("rel_trend_dev", source="z")).to_numpy()
    assert np.isnan(dev).all()


def test_ratio_and_pipeline_keep_keys():
    raw = RawPanel.from_arrays(["AA"] * 6 + ["BB"] * 6, list(range(100, 106)) * 2,
                               {"num": np.arange(12.0), "den": np.r_[np.ones(11), 0.0]})
    steps = [PipelineStep("r", TransformSpec("ratio", numerator="num", denominator="den")),
             PipelineStep("g", TransformSpec("annual_growth", source="r"), lag="market")]
    out = apply_pipeline(raw, steps)
    assert out.indicators == ["r", "g"]
    assert out.kinds == {"r": "accounting", "g": "market"}
    assert out.frame[["country", "quarter"]].equals(raw.frame[["country", "quarter"]])
    assert np.isnan(out.frame["r"].iloc[-1])
    # missingness only grows: growth is undefined wherever the ratio is
    assert (out.frame["g"].isna() >= out.frame["r"].isna()).all()


def test_transform_spec_validation():
    with pytest.raises(ValueError):
        TransformSpec("ratio", numerator="a")
    with pytest.raises(ValueError):
        TransformSpec("abs_trend_dev", source="a", hp_lambda=0.0)
    assert TransformSpec("abs_trend_dev", source="a").hp_lambda == 400_000.0


# -- publication lags ------------------------------------------------------------------

def test_publication_lags():
    raw = one_country({"acc": np.arange(8.0), "mkt": np.arange(8.0)}, start="2007Q1",
                      kinds={"acc": "accounting", "mkt": "market"})
    lagged = apply_publication_lags(raw)
    f = lagged.frame.set_index("quarter")
    assert f.loc[q("2007Q3"), "acc"] == 0.0 and np.isnan(f.loc[q("2007Q2"), "acc"])
    assert f.loc[q("2007Q2"), "mkt"] == 0.0 and np.isnan(f.loc[q("2007Q1"), "mkt"])
    with pytest.raises(ValueError, match="already"):
        apply_publication_lags(lagged)


def test_lags_do_not_cross_countries():
    raw = RawPanel.from_arrays(["AA", "AA", "BB", "BB"], [0, 1, 0, 1], {"x": [1.0, 2, 3, 4]},
                               {"x": "market"})
    x = apply_publication_lags(raw).frame["x"].to_numpy()
    assert np.isnan(x[[0, 2]]).all() and x[1] == 1.0 and x[3] == 3.0


# -- labels ----------------------------------------------------------------------------

def test_single_event_labels_by_hand():
    raw = one_country({"x": np.zeros(40)}, start="2003Q1")
    ev = [CrisisEvent("AA", q("2008Q1"), q("2008Q4"))]
    obs = {format_quarter(o.quarter): o for o in label_and_filter(raw, ev, Horizon(5, 12))}
    ones = [k for k, o in obs.items() if o.usable and o.label == 1]
    # 12..5 quarters before 2008Q1 is 2005Q1..2006Q4
    expected = [format_quarter(i) for i in range(q("2005Q1"), q("2006Q4") + 1)]
    assert sorted(ones) == expected
    for k in ("2007Q1", "2007Q2", "2007Q3", "2007Q4"):
        assert not obs[k].usable
    # crisis quarters and the 8 quarters after the event end are excluded too
    for i in range(q("2008Q1"), q("2010Q4") + 1):
        assert not obs[format_quarter(i)].usable
    assert obs["2011Q1"].usable and obs["2011Q1"].label == 0
    assert obs["2004Q4"].usable and obs["2004Q4"].label == 0


def test_no_events_all_zero():
    raw = one_country({"x": np.zeros(12)})
    obs = label_and_filter(raw, [])
    assert all(o.usable and o.label == 0 for o in obs)


def test_event_near_series_start_no_padding():
    raw = one_country({"x": np.zeros(20)}, start="2000Q1")
    obs = label_and_filter(raw, [CrisisEvent("AA", q("2002Q1"), q("2002Q2"))])
    assert len(obs) == 20
    ones = [o.quarter for o in obs if o.label == 1]
    assert ones == list(range(q("2000Q1"), q("2000Q4") + 1))


def test_exclusion_wins_over_labeling():
    raw = one_country({"x": np.zeros(60)}, start="2000Q1")
    events = [CrisisEvent("AA", q("2001Q1"), q("2001Q2")),
              CrisisEvent("AA", q("2005Q1"), q("2005Q2"))]
    data = build_dataset(raw, events)
    post = (data.quarters >= q("2001Q1")) & (data.quarters <= q("2003Q2"))
    assert not data.usable[post].any()
    assert (data.y[~data.usable] == 0).all()
    # every label-1 row is 5..12 quarters before some start
    starts = np.array([e.start for e in events])
    for qq in data.quarters[data.y == 1]:
        assert np.any((starts - qq >= 5) & (starts - qq <= 12))


def test_merge_events():
    evs = [CrisisEvent("AA", 10, 12), CrisisEvent("AA", 13, 15), CrisisEvent("AA", 20, 21)]
    assert merge_events(evs) == [CrisisEvent("AA", 10, 15), CrisisEvent("AA", 20, 21)]
    with pytest.raises(ValueError):
        CrisisEvent("AA", 5, 4)


def test_horizon_validation():
    with pytest.raises(ValueError):
        Horizon(0, 4)
    with pytest.raises(ValueError):
        Horizon(6, 5)


# -- CSV -------------------------------------------------------------------------------

def test_csv_round_trip(tmp_path):
    raw = RawPanel.from_arrays(["AA", "AA", "BB"], [q("2000Q1"), q("2000Q2"), q("2000Q1")],
                               {"x": [1.5, np.nan, -2.0]})
    write_panel_csv(raw, tmp_path / "p.csv")
    back = read_panel_csv(tmp_path / "p.csv")
    pd.testing.assert_frame_equal(back.frame, raw.frame)
    evs = [CrisisEvent("AA", q("2008Q1"), q("2009Q4"))]
    write_events_csv(evs, tmp_path / "e.csv")
    assert read_events_csv(tmp_path / "e.csv") == evs


def test_malformed_row_reports_line(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("country,quarter,x\nAA,2000Q1,1.0\nAA,2000Q2,abc\n")
    with pytest.raises(DataError, match=":3:"):
        read_panel_csv(p)
    p.write_text("country,quarter,x\nAA,2000Q9,1.0\n")
    with pytest.raises(DataError, match=":2:"):
        read_panel_csv(p)


def test_quarters_must_increase():
    with pytest.raises(DataError):
        RawPanel.from_arrays(["AA", "AA"], [5, 5], {"x": [1.0, 2.0]})


def test_unknown_kind_rejected():
    with pytest.raises(DataError):
        RawPanel.from_arrays(["AA"], [0], {"x": [1.0]}, {"x": "weekly"})


def test_complete_case_estimation():
    raw = one_country({"x": [1.0, np.nan, 3.0], "z": [1.0, 2.0, np.nan]})
    data = build_dataset(raw, [])
    assert data.complete.tolist() == [True, False, False]
    X, y = data.estimation_arrays()
    assert X.shape == (1, 2)
