"""
Pydantic models for persisted market state and the trade log
"""

from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator

from interval_markets.models.dyadic import Interval, parse_dyadic

FORMAT_VERSION = 1

EngineType = Literal["lmsr_tree", "lcmm", "dense"]


class TradeRecord(BaseModel):
    """One executed buy, as written to the JSONL trade log"""
    seq: int = Field(..., ge=1, description="Position in the log, starting at 1")
    op: Literal["buy"] = "buy"
    lo: str = Field(..., description="Lower endpoint as num/2^prec")
    hi: str = Field(..., description="Upper endpoint as num/2^prec")
    shares: float
    cost: float
    engine: EngineType

    @field_validator("lo", "hi")
    @classmethod
    def canonical_dyadic(cls, value: str) -> str:
        return str(parse_dyadic(value))

    @property
    def interval(self) -> Interval:
        return Interval(parse_dyadic(self.lo), parse_dyadic(self.hi))


class EngineDescriptor(BaseModel):
    """Engine type and its liquidity arguments"""
    type: EngineType
    b: Optional[float] = Field(None, gt=0, description="LMSR liquidity (lmsr_tree, dense)")
    precision: Optional[int] = Field(None, ge=1, le=62, description="Outcome precision K (dense, optional for lmsr_tree)")
    schedule: Optional[Dict[str, Any]] = Field(None, description="Liquidity schedule descriptor (lcmm)")


class Snapshot(BaseModel):
    """Cached market state; the trade log stays the source of truth"""
    format_version: int = FORMAT_VERSION
    engine: EngineDescriptor
    nodes: List[List[Union[int, float]]] = Field(default_factory=list, description="Engine-specific node records")
    collected: float = 0.0
    last_seq: int = Field(0, ge=0, description="Sequence number of the last trade folded into this snapshot")

    @field_validator("format_version")
    @classmethod
    def supported_version(cls, value: int) -> int:
        if value != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {value}")
        return value
