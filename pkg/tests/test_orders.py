import io

import numpy as np
import pytest

from warehouse_rl.orders import (COLUMNS, OrderRecord, PreprocessError, PreprocessParams, ingest_orders,
                                 make_real_scenarios, preprocess, scale_to_total, seasonality_score,
                                 synthetic_order_rows, write_order_rows)

SMALL = dict(product_count=16, retailer_count=8, order_band=(20, 100_000))


def _stream(text):
    return io.StringIO(text)


def test_ingest_brace_set_row():
    text = "customer_id; product_id; days_since_first_order; day_of_week\nc1; {p1,p2}; 0; 3\n"
    records, errors = ingest_orders(_stream(text), delimiter=";")
    assert errors == []
    assert records == [OrderRecord("c1", frozenset({"p1", "p2"}), 0, 3)]


def test_ingest_unquoted_braces_with_comma_delimiter():
    text = ",".join(COLUMNS) + "\nc1,{p1,p2},4,1\n"
    records, errors = ingest_orders(_stream(text))
    assert not errors and records[0].product_ids == {"p1", "p2"}


def test_ingest_groups_rows_into_orders():
    text = ",".join(COLUMNS) + "\nc1,p1,0,3\nc1,p2,0,3\nc1,p1,5,1\n"
    records, _ = ingest_orders(_stream(text))
    assert sorted((r.days_since_first_order, sorted(r.product_ids)) for r in records) == \
        [(0, ["p1", "p2"]), (5, ["p1"])]


def test_ingest_empty():
    assert ingest_orders(_stream("")) == ([], [])


def test_ingest_row_errors_carry_line_numbers():
    text = ",".join(COLUMNS) + "\nc1,p1,0,9\nc1,p1,x,1\nc2,p3,2,2\n"
    records, errors = ingest_orders(_stream(text))
    assert [e.line for e in errors] == [2, 3]
    assert "day_of_week" in errors[0].message
    assert len(records) == 1


def test_ingest_missing_column():
    with pytest.raises(ValueError, match="day_of_week"):
        ingest_orders(_stream("customer_id,product_id,days_since_first_order\nc1,p1,0\n"))


def test_ingest_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest_orders(tmp_path / "nope.csv")


def test_seasonality_constant_is_zero():
    assert seasonality_score(np.full(200, 3.0), 70) == 0.0
    assert seasonality_score(1 + np.sin(np.arange(200) / 20), 70) > 0


def test_scaling_exact_and_idempotent():
    rng = np.random.default_rng(0)
    d = rng.uniform(0, 5, size=(40, 3, 2))
    once = scale_to_total(d, 1234.5)
    np.testing.assert_allclose(once.sum(axis=(0, 2)), 1234.5, rtol=1e-6)
    np.testing.assert_allclose(scale_to_total(once, 1234.5), once, rtol=1e-12)


@pytest.fixture(scope="module")
def records():
    buf = io.StringIO()
    import csv
    w = csv.writer(buf)
    w.writerow(COLUMNS)
    w.writerows(synthetic_order_rows(120, 40, seed=3))
    buf.seek(0)
    recs, errors = ingest_orders(buf)
    assert not errors
    return recs


def test_short_customers_excluded(records):
    extra = [OrderRecord("short", frozenset({"p0"}), d, 0) for d in (0, 100, 200)]
    res = preprocess(records + extra, PreprocessParams(**SMALL))
    assert res.meta["customers_kept"] == preprocess(records, PreprocessParams(**SMALL)).meta["customers_kept"]


def test_preprocess_shapes_scaling_and_disjoint_splits(records):
    p = PreprocessParams(**SMALL, per_product_total=5000.0)
    res = preprocess(records, p)
    assert res.train.values.shape[1:] == (8, 4) and res.eval.values.shape[1:] == (8, 4)
    assert res.train.T_ext >= p.T + p.predictdays
    assert not set(res.meta["train_products"]) & set(res.meta["eval_products"])
    assert not set(res.meta["train_retailers"]) & set(res.meta["eval_retailers"])
    full = np.concatenate([res.train.values, res.eval.values], axis=1)
    assert np.all(full >= 0)


def test_preprocess_scaling_before_split(records):
    # scaling runs on the full retailer set before the split, so a product's total over all
    # retailers equals the target; each split holds part of it
    p = PreprocessParams(**SMALL, per_product_total=5000.0)
    res = preprocess(records, p)
    assert np.all(res.train.values.sum(axis=(0, 2)) < 5000.0 * (1 + 1e-6))


def test_preprocess_deterministic(records):
    a = preprocess(records, PreprocessParams(**SMALL, seed=4))
    b = preprocess(records, PreprocessParams(**SMALL, seed=4))
    assert np.array_equal(a.train.values, b.train.values) and a.meta == b.meta


@pytest.mark.parametrize("override, stage", [
    (dict(retailer_count=10_000), "customer filter"),
    (dict(order_band=(10**9, 10**10)), "order-count band"),
    (dict(T=10_000), "horizon"),
])
def test_preprocess_names_failing_stage(records, override, stage):
    with pytest.raises(PreprocessError) as e:
        preprocess(records, PreprocessParams(**{**SMALL, **override}))
    assert e.value.stage == stage


def test_real_scenarios(records, tmp_path):
    out, meta = make_real_scenarios(records, PreprocessParams(**SMALL), seed=1)
    (tr, dtr), (ev, dev) = out["train"], out["eval"]
    assert (tr.P, tr.R, ev.P, ev.R) == (8, 4, 8, 4)
    tr.check_demand(dtr)
    assert tr.meta["split"] == "train" and ev.meta["split"] == "eval"


def test_write_rows_roundtrip(tmp_path):
    rows = synthetic_order_rows(3, 5, seed=0)
    write_order_rows(tmp_path / "o.csv", rows)
    records, errors = ingest_orders(tmp_path / "o.csv")
    assert not errors
    assert sum(len(r.product_ids) for r in records) == len(rows)
