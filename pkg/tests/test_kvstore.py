import math
import random

import pytest

from cvcloudsim.engine import Engine
from cvcloudsim.kvstore import KvStore, UnknownTableError
from cvcloudsim.latency import LatencyModel


def make_store(download_mean=None):
    engine = Engine(seed=1)
    model = None
    if download_mean is not None:
        model = LatencyModel("download", math.log(download_mean), 0.0)
    store = KvStore(engine, download_model=model,
                    download_rng=engine.rng_stream("download"))
    store.create_table("trajectory")
    store.create_table("feedback")
    return engine, store


def test_put_bumps_versions():
    _, store = make_store()
    first = store.put("trajectory", "v1", {"n": 1}, at=0)
    second = store.put("trajectory", "v1", {"n": 2}, at=5)
    assert (first.version, second.version) == (1, 2)


def test_unknown_table_errors():
    _, store = make_store()
    with pytest.raises(UnknownTableError):
        store.put("nope", "k", {}, at=0)
    with pytest.raises(UnknownTableError):
        store.get("nope", "k", at=0)
    with pytest.raises(UnknownTableError):
        store.subscribe("nope", "", lambda rec, at: None)


def test_get_semantics():
    _, store = make_store()
    assert store.get("trajectory", "k", at=100) is None
    store.put("trajectory", "k", {"n": 1}, at=5)
    assert store.get("trajectory", "k", at=5) == {"n": 1}
    assert store.get("trajectory", "k", at=4) is None
    store.put("trajectory", "k", {"n": 2}, at=9)
    assert store.get("trajectory", "k", at=100) == {"n": 2}


def test_get_sequence_matches_put_sequence():
    _, store = make_store()
    times = [3, 7, 11, 20]
    for i, t in enumerate(times):
        store.put("trajectory", "k", {"n": i}, at=t)
    seen = [store.get("trajectory", "k", at=t) for t in times]
    assert seen == [{"n": i} for i in range(len(times))]


def test_trigger_dispatched_once_per_put():
    _, store = make_store()
    seen = []
    store.add_trigger("trajectory", seen.append)
    store.put("trajectory", "v1#1", {"vehicle_id": "v1"}, at=0)
    assert len(seen) == 1
    assert seen[0].key == "v1#1"
    assert seen[0].stream_seq == 1


def test_two_triggers_both_fire():
    _, store = make_store()
    a, b = [], []
    store.add_trigger("trajectory", a.append)
    store.add_trigger("trajectory", b.append)
    store.put("trajectory", "k", {}, at=0)
    assert len(a) == len(b) == 1


def test_stream_seq_gap_free_and_per_key_version_order():
    _, store = make_store()
    rng = random.Random(4)
    keys = ["a", "b", "c"]
    for t in range(50):
        store.put("trajectory", rng.choice(keys), {"t": t}, at=t)
    stream = store.stream("trajectory")
    assert [e.stream_seq for e in stream] == list(range(1, 51))
    per_key = {}
    for event in stream:
        per_key.setdefault(event.key, []).append(event.new_value["t"])
    for values in per_key.values():
        assert values == sorted(values)


def test_subscription_delivery_with_sampled_delay():
    engine, store = make_store(download_mean=84)
    arrivals = []
    store.subscribe("feedback", "seg-", lambda rec, at: arrivals.append((rec.key, at)))
    store.put("feedback", "seg-1", {"avg": 30}, at=100)
    engine.drain()
    assert arrivals == [("seg-1", 184)]


def test_no_replay_for_pre_subscription_writes():
    engine, store = make_store(download_mean=84)
    arrivals = []
    store.put("feedback", "seg-1", {"avg": 30}, at=0)
    store.subscribe("feedback", "seg-", lambda rec, at: arrivals.append(at))
    engine.drain()
    assert arrivals == []


def test_fan_out_two_subscribers():
    engine, store = make_store(download_mean=84)
    a, b = [], []
    store.subscribe("feedback", "seg-", lambda rec, at: a.append(at))
    store.subscribe("feedback", "seg-1", lambda rec, at: b.append(at))
    store.put("feedback", "seg-1", {}, at=0)
    engine.drain()
    assert len(a) == len(b) == 1


def test_prefix_must_match():
    engine, store = make_store(download_mean=84)
    arrivals = []
    store.subscribe("feedback", "seg-2", lambda rec, at: arrivals.append(at))
    store.put("feedback", "seg-1", {}, at=0)
    engine.drain()
    assert arrivals == []


def test_unsubscribe_stops_deliveries():
    engine, store = make_store(download_mean=84)
    arrivals = []
    sub = store.subscribe("feedback", "", lambda rec, at: arrivals.append(at))
    store.put("feedback", "seg-1", {}, at=0)
    store.unsubscribe(sub)
    store.put("feedback", "seg-1", {}, at=1)
    engine.drain()
    assert len(arrivals) == 1
    assert store.subscriptions("feedback") == []


def test_delivery_conservation_counts():
    engine, store = make_store(download_mean=84)
    arrivals = []
    n_subs = 3
    for _ in range(n_subs):
        store.subscribe("feedback", "seg-", lambda rec, at: arrivals.append(at))
    n_matching = 5
    for t in range(n_matching):
        store.put("feedback", f"seg-{t}", {}, at=t)
    store.put("feedback", "other", {}, at=10)
    engine.drain()
    assert len(arrivals) == n_matching * n_subs


def test_scan_recent_window_boundaries():
    _, store = make_store()
    for t in (0, 1, 5, 10):
        store.put("trajectory", f"k{t}", {"t": t}, at=t)
    hits = store.scan_recent("trajectory", "", window_ms=10, at=10)
    # (0, 10]: the record at exactly at - window is excluded
    assert [r.value["t"] for r in hits] == [1, 5, 10]


def test_scan_recent_orders_by_time_then_key():
    _, store = make_store()
    store.put("trajectory", "b", {}, at=5)
    store.put("trajectory", "a", {}, at=5)
    store.put("trajectory", "c", {}, at=4)
    hits = store.scan_recent("trajectory", "", window_ms=100, at=10)
    assert [(r.write_time, r.key) for r in hits] == [(4, "c"), (5, "a"), (5, "b")]


def test_scan_recent_requires_positive_window():
    _, store = make_store()
    with pytest.raises(ValueError):
        store.scan_recent("trajectory", "", window_ms=0, at=10)


def test_scan_recent_against_brute_force():
    rng = random.Random(42)
    for _ in range(200):
        _, store = make_store()
        records = []
        t = 0
        for i in range(rng.randint(0, 120)):
            t += rng.randint(0, 4)
            key = rng.choice(["va", "vb", "wc"]) + f"#{i}"
            store.put("trajectory", key, {"i": i}, at=t)
            records.append((key, i, t))
        prefix = rng.choice(["", "v", "va", "w"])
        window = rng.randint(1, 30)
        at = rng.randint(0, t + 5)
        got = [(r.key, r.value["i"]) for r in
               store.scan_recent("trajectory", prefix, window, at)]
        keep = [(wt, key, i) for key, i, wt in records
                if key.startswith(prefix) and at - window < wt <= at]
        keep.sort()
        assert got == [(key, i) for _, key, i in keep]


def test_out_of_order_write_rejected():
    _, store = make_store()
    store.put("trajectory", "k", {}, at=10)
    with pytest.raises(ValueError):
        store.put("trajectory", "k", {}, at=5)


def test_dump_table(tmp_path):
    _, store = make_store()
    store.put("trajectory", "k", {"n": 1}, at=0)
    store.put("trajectory", "k", {"n": 2}, at=4)
    store.put("trajectory", "a", {"n": 9}, at=1)
    doc = store.dump_table("trajectory")
    assert list(doc) == ["a", "k"]
    assert doc["k"] == {"value": {"n": 2}, "version": 2, "write_time": 4}
    path = tmp_path / "dump.json"
    store.write_dump("trajectory", path)
    assert path.read_text().endswith("}\n")
