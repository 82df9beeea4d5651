"""
Tests for snapshots, the trade log and crash recovery
"""

import json
import os

import pytest

from interval_markets.errors import BadArgs, ConfigError, LogCorrupt, SnapshotCorrupt, StateLocked
from interval_markets.models.liquidity import LiquiditySchedule
from interval_markets.models.market_models import EngineDescriptor, TradeRecord
from interval_markets.services.dense_lmsr import DenseLmsr
from interval_markets.services.lcmm_tree import LcmmTree
from interval_markets.services.lmsr_tree import LmsrTree
from interval_markets.services.market_store import (
    MarketStore,
    create_engine,
    log_path_for,
    read_trade_log,
    rebuild,
)
from interval_markets.strategies import interval
from interval_markets.utils.file_utils import FileLock, parse_key_value


def test_log_path_sits_next_to_state():
    assert log_path_for("/tmp/market.json") == "/tmp/market.trades.jsonl"


@pytest.mark.parametrize("engine", [
    LmsrTree(1.0),
    DenseLmsr(1.0, 3),
    LcmmTree(LiquiditySchedule.geometric(1.0, 0.5)),
])
def test_snapshot_round_trip(state_path, engine):
    store = MarketStore(state_path)
    store.create(engine)
    store.buy(interval("1/8", "3/4"), 1.0)
    cost, record = store.buy(interval("1/2", "1"), -0.5)
    assert record.seq == 2

    loaded, last_seq = store.load()
    assert last_seq == 2
    assert type(loaded) is type(engine)
    replayed = rebuild(store.read_snapshot().engine, store.read_log())
    query = interval("1/4", "7/8")
    assert loaded.price(query) == pytest.approx(replayed.price(query), abs=1e-12)
    assert loaded.audit.collected == pytest.approx(replayed.audit.collected)


def test_create_refuses_to_overwrite(state_path):
    store = MarketStore(state_path)
    store.create(LmsrTree(1.0))
    with pytest.raises(BadArgs):
        store.create(LmsrTree(2.0))
    store.create(LmsrTree(2.0), overwrite=True)
    assert store.load()[0].b == 2.0


def test_snapshot_behind_log_is_caught_up(state_path):
    store = MarketStore(state_path)
    store.create(LmsrTree(1.0))
    store.buy(interval("0", "1/2"), 1.0)
    stale = open(state_path).read()
    store.buy(interval("1/4", "1"), 2.0)
    # crash between the log append and the snapshot write
    with open(state_path, "w") as f:
        f.write(stale)
    market, last_seq = store.load()
    assert last_seq == 2
    reference = rebuild(EngineDescriptor(type="lmsr_tree", b=1.0), store.read_log())
    assert market.price(interval("1/4", "1/2")) == pytest.approx(reference.price(interval("1/4", "1/2")))


def test_lock_blocks_second_writer(state_path):
    store = MarketStore(state_path)
    store.create(LmsrTree(1.0))
    with FileLock(state_path):
        with pytest.raises(StateLocked):
            store.buy(interval("0", "1/2"), 1.0)
    assert not os.path.exists(f"{state_path}.lock")
    store.buy(interval("0", "1/2"), 1.0)


def test_corrupt_snapshot(state_path):
    store = MarketStore(state_path)
    store.create(LmsrTree(1.0))
    data = json.loads(open(state_path).read())
    data["format_version"] = 99
    with open(state_path, "w") as f:
        f.write(json.dumps(data))
    with pytest.raises(SnapshotCorrupt):
        store.load()


def test_broken_node_list_is_corrupt(state_path):
    store = MarketStore(state_path)
    store.create(LmsrTree(1.0))
    store.buy(interval("1/4", "1"), 1.0)
    data = json.loads(open(state_path).read())
    data["nodes"] = data["nodes"][:1]
    with open(state_path, "w") as f:
        f.write(json.dumps(data))
    with pytest.raises(SnapshotCorrupt):
        store.load()


def test_log_gap_is_reported(tmp_path):
    log = tmp_path / "gap.trades.jsonl"
    first = TradeRecord(seq=1, lo="0", hi="1/2", shares=1.0, cost=0.5, engine="lmsr_tree")
    third = first.model_copy(update={"seq": 3})
    log.write_text(first.model_dump_json() + "\n" + third.model_dump_json() + "\n")
    with pytest.raises(LogCorrupt) as excinfo:
        read_trade_log(str(log))
    assert excinfo.value.seq == 2


def test_unparseable_log_line(tmp_path):
    log = tmp_path / "bad.trades.jsonl"
    log.write_text('{"seq": 1, "lo": "1/3", "hi": "1", "shares": 1, "cost": 0, "engine": "lcmm"}\n')
    with pytest.raises(LogCorrupt):
        read_trade_log(str(log))


def test_trade_records_store_canonical_endpoints():
    record = TradeRecord(seq=1, lo="0.5", hi="4/2^2", shares=1.0, cost=0.1, engine="dense")
    assert (record.lo, record.hi) == ("1/2^1", "1/2^0")
    assert record.interval == interval("1/2", "1")


def test_rebuild_stops_at_upto(state_path):
    store = MarketStore(state_path)
    descriptor = EngineDescriptor(type="dense", b=1.0, precision=2)
    store.create(create_engine(descriptor))
    store.buy(interval("0", "1/4"), 1.0)
    store.buy(interval("1/4", "1"), 1.0)
    partial = rebuild(descriptor, store.read_log(), upto=1)
    assert partial.price(interval("0", "1/4")) == pytest.approx(0.47536689, abs=1e-8)


def test_key_value_parsing():
    assert parse_key_value("a = 1\n# note\nb=x  # trailing\n") == {"a": "1", "b": "x"}
    with pytest.raises(ConfigError):
        parse_key_value("a = 1\na = 2\n")
    with pytest.raises(ConfigError):
        parse_key_value("just words\n")
