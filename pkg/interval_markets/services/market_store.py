"""
Market store for interval markets
Keeps a JSON snapshot next to a JSONL trade log; the log is the source of
truth and the snapshot a cache of the state after its last_seq trades
"""

import json
import math
import os
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from interval_markets.errors import BadArgs, LogCorrupt, MarketError, SnapshotCorrupt
from interval_markets.models.dyadic import Interval
from interval_markets.models.liquidity import LiquiditySchedule
from interval_markets.models.market_models import EngineDescriptor, Snapshot, TradeRecord
from interval_markets.services.dense_lmsr import DenseLmsr
from interval_markets.services.lcmm_tree import LcmmTree
from interval_markets.services.lmsr_tree import LmsrTree
from interval_markets.utils.file_utils import (
    FileLock,
    append_line,
    atomic_write_text,
    iter_lines,
    read_text,
)
from interval_markets.utils.safe_logger import market_logger

Engine = Union[LmsrTree, LcmmTree, DenseLmsr]

REPLAY_COST_TOLERANCE = 1e-9


def log_path_for(state_path: str) -> str:
    """`market.json` -> `market.trades.jsonl`"""
    root, _ = os.path.splitext(state_path)
    return f"{root}.trades.jsonl"


# ---------------- engines and descriptors -----------------

def create_engine(descriptor: EngineDescriptor) -> Engine:
    if descriptor.type == "lmsr_tree":
        if descriptor.b is None:
            raise BadArgs("lmsr-tree needs --b")
        return LmsrTree(descriptor.b, descriptor.precision)
    if descriptor.type == "dense":
        if descriptor.b is None or descriptor.precision is None:
            raise BadArgs("dense needs --b and --K")
        return DenseLmsr(descriptor.b, descriptor.precision)
    if descriptor.schedule is None:
        raise BadArgs("lcmm needs a liquidity schedule")
    return LcmmTree(LiquiditySchedule.from_descriptor(descriptor.schedule))


def describe_engine(engine: Engine) -> EngineDescriptor:
    if isinstance(engine, LmsrTree):
        return EngineDescriptor(type="lmsr_tree", b=engine.b, precision=engine.precision)
    if isinstance(engine, DenseLmsr):
        return EngineDescriptor(type="dense", b=engine.b, precision=engine.K)
    return EngineDescriptor(type="lcmm", schedule=engine.schedule.descriptor())


def engine_type(engine: Engine) -> str:
    return describe_engine(engine).type


def take_snapshot(engine: Engine, last_seq: int) -> Snapshot:
    if isinstance(engine, DenseLmsr):
        nodes = [[int(i), float(engine.theta[i])] for i in np.flatnonzero(engine.theta)]
    else:
        nodes = [list(record) for record in engine.to_records()]
    return Snapshot(engine=describe_engine(engine), nodes=nodes,
                    collected=engine.audit.collected, last_seq=last_seq)


def restore_snapshot(snapshot: Snapshot) -> Engine:
    """Engine state from a snapshot; the audit holds only the collected total"""
    descriptor = snapshot.engine
    try:
        if descriptor.type == "lmsr_tree":
            engine = LmsrTree.from_records(descriptor.b, [tuple(node) for node in snapshot.nodes],
                                           descriptor.precision)
        elif descriptor.type == "lcmm":
            schedule = LiquiditySchedule.from_descriptor(descriptor.schedule or {})
            engine = LcmmTree.from_records(schedule, [tuple(node) for node in snapshot.nodes])
        else:
            engine = create_engine(descriptor)
            for index, theta in snapshot.nodes:
                engine.theta[int(index)] = theta
    except (MarketError, ValueError, TypeError, IndexError, KeyError) as e:
        raise SnapshotCorrupt("Snapshot does not describe a valid market", str(e))
    engine.audit.collected = snapshot.collected
    return engine


def replay(engine: Engine, records: List[TradeRecord]) -> Engine:
    """Re-execute logged buys; charges that differ from the log are reported"""
    for record in records:
        charged = engine.buy(record.interval, record.shares)
        if not math.isclose(charged, record.cost, rel_tol=REPLAY_COST_TOLERANCE, abs_tol=REPLAY_COST_TOLERANCE):
            market_logger.warning("Replayed cost differs from the log",
                                  {"seq": record.seq, "logged": record.cost, "replayed": charged})
    return engine


# ---------------- store -----------------

class MarketStore:
    def __init__(self, state_path: str):
        self.state_path = state_path
        self.log_path = log_path_for(state_path)

    def exists(self) -> bool:
        return os.path.exists(self.state_path)

    def lock(self) -> FileLock:
        return FileLock(self.state_path)

    def read_snapshot(self) -> Snapshot:
        text = read_text(self.state_path)
        try:
            return Snapshot.model_validate_json(text)
        except PydanticValidationError as e:
            raise SnapshotCorrupt(f"Cannot load {self.state_path}", str(e.errors()[0]["msg"]))

    def write_snapshot(self, engine: Engine, last_seq: int) -> Snapshot:
        snapshot = take_snapshot(engine, last_seq)
        atomic_write_text(self.state_path, snapshot.model_dump_json(indent=2))
        return snapshot

    def read_log(self) -> List[TradeRecord]:
        return read_trade_log(self.log_path)

    def create(self, engine: Engine, overwrite: bool = False) -> Snapshot:
        if self.exists() and not overwrite:
            raise BadArgs("State file already exists", self.state_path)
        with self.lock():
            atomic_write_text(self.log_path, "")
            snapshot = self.write_snapshot(engine, 0)
        market_logger.info("Market created", {"state": self.state_path, "engine": snapshot.engine.type})
        return snapshot

    def load(self) -> Tuple[Engine, int]:
        """Snapshot state plus any logged trades it does not yet include"""
        snapshot = self.read_snapshot()
        engine = restore_snapshot(snapshot)
        pending = [record for record in self.read_log() if record.seq > snapshot.last_seq]
        if pending:
            market_logger.warning("Snapshot behind trade log, replaying",
                                  {"snapshot_seq": snapshot.last_seq, "pending": len(pending)})
            replay(engine, pending)
        return engine, snapshot.last_seq + len(pending)

    def buy(self, interval: Interval, shares: float) -> Tuple[float, TradeRecord]:
        """Execute a buy: log first, then the snapshot"""
        with self.lock():
            engine, last_seq = self.load()
            cost = engine.buy(interval, shares)
            record = TradeRecord(seq=last_seq + 1, lo=str(interval.lo), hi=str(interval.hi),
                                 shares=shares, cost=cost, engine=engine_type(engine))
            append_line(self.log_path, record.model_dump_json())
            self.write_snapshot(engine, record.seq)
        market_logger.info("Trade executed", {"seq": record.seq, "interval": str(interval),
                                              "shares": shares, "cost": cost})
        return cost, record


def read_trade_log(log_path: str) -> List[TradeRecord]:
    """All records, checking that seq runs 1, 2, 3, ... without gaps"""
    records = []
    expected = 1
    for number, line in iter_lines(log_path):
        try:
            record = TradeRecord.model_validate(json.loads(line))
        except (json.JSONDecodeError, PydanticValidationError, MarketError) as e:
            raise LogCorrupt(expected, f"line {number}: {e}")
        if record.seq != expected:
            raise LogCorrupt(expected, f"line {number} has seq {record.seq}")
        records.append(record)
        expected += 1
    return records


def rebuild(descriptor: EngineDescriptor, records: List[TradeRecord], upto: Optional[int] = None) -> Engine:
    """Fresh engine with the first `upto` logged buys replayed"""
    engine = create_engine(descriptor)
    return replay(engine, records if upto is None else records[:upto])
