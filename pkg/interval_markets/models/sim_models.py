"""
Pydantic models for simulation configs and results
"""

import math
import re
from typing import Dict, List, Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from interval_markets.errors import ConfigError

_LMSR_FORM = re.compile(r"^lmsr@(\d+)$")
_LCMM_FORM = re.compile(r"^lcmm@(\d+:[0-9.eE+-]+(?:/\d+:[0-9.eE+-]+)*)$")


class MarketSpec(BaseModel):
    """A market maker configuration: `lmsr@8` or `lcmm@4:0.5/8:0.5`"""
    model_config = ConfigDict(frozen=True)

    name: str
    kind: Literal["lmsr", "lcmm"]
    precision: Optional[int] = Field(None, ge=1, le=62)
    fractions: Dict[int, float] = Field(default_factory=dict, description="Budget fraction per funded level")

    @model_validator(mode="after")
    def check_kind(self) -> "MarketSpec":
        if self.kind == "lmsr" and self.precision is None:
            raise ValueError("lmsr market needs a precision")
        if self.kind == "lcmm":
            if not self.fractions:
                raise ValueError("lcmm market needs level fractions")
            if any(level < 1 or level > 62 for level in self.fractions):
                raise ValueError("lcmm levels must lie in 1..62")
            if any(f <= 0.0 for f in self.fractions.values()):
                raise ValueError("lcmm fractions must be positive")
            if abs(math.fsum(self.fractions.values()) - 1.0) > 1e-9:
                raise ValueError("lcmm fractions must sum to 1")
        return self

    @property
    def resolution(self) -> int:
        """Precision candidate endpoints are rounded to"""
        if self.kind == "lmsr":
            return self.precision
        return max(self.fractions)

    @classmethod
    def parse(cls, text: str) -> "MarketSpec":
        text = text.strip()
        match = _LMSR_FORM.match(text)
        if match:
            return cls(name=text, kind="lmsr", precision=int(match.group(1)))
        match = _LCMM_FORM.match(text)
        if match:
            fractions = {}
            for part in match.group(1).split("/"):
                level, share = part.split(":")
                fractions[int(level)] = float(share)
            return cls(name=text, kind="lcmm", fractions=fractions)
        raise ValueError(f"cannot parse market '{text}'")


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class SimConfig(BaseModel):
    """Agent-based convergence experiment"""
    model_config = ConfigDict(extra="forbid")

    n_traders: int = Field(10, ge=1)
    true_signal: float = Field(0.4, ge=0.0, le=1.0)
    signal_step: int = Field(16, ge=2, description="Trader i observes n_i = signal_step * i coin flips")
    K: int = Field(10, ge=1, le=16, description="Outcome precision of beliefs and wealth")
    candidates_per_turn: int = Field(50, ge=1)
    budget: float = Field(8.0, gt=0.0)
    markets: List[MarketSpec] = Field(
        default_factory=lambda: [MarketSpec.parse(text) for text in ("lmsr@4", "lmsr@8", "lcmm@4:0.5/8:0.5")])
    levels: List[int] = Field(default_factory=lambda: [4, 8])
    n_traces: int = Field(40, ge=1)
    max_steps: int = Field(1000, ge=0)
    quiescence_tol: float = Field(1e-9, ge=0.0)
    seed: int = Field(0, ge=0, lt=2 ** 64)

    @field_validator("markets", mode="before")
    @classmethod
    def parse_markets(cls, value):
        items = _split_list(value)
        return [MarketSpec.parse(item) if isinstance(item, str) else item for item in items]

    @field_validator("levels", mode="before")
    @classmethod
    def parse_levels(cls, value):
        return _split_list(value)

    @model_validator(mode="after")
    def check_resolutions(self) -> "SimConfig":
        if not self.markets:
            raise ValueError("markets: at least one market is required")
        if not self.levels or any(level < 1 or level > self.K for level in self.levels):
            raise ValueError(f"levels: must lie in 1..K={self.K}")
        for market in self.markets:
            if market.resolution > self.K:
                raise ValueError(f"markets: {market.name} is finer than K={self.K}")
        return self

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "SimConfig":
        """Build from parsed key=value text; the offending key is reported"""
        for key in values:
            if key not in cls.model_fields:
                raise ConfigError(key, "unknown key")
        try:
            return cls(**dict(values))
        except ValidationError as e:
            error = e.errors()[0]
            message = error["msg"].removeprefix("Value error, ")
            if error["loc"]:
                raise ConfigError(str(error["loc"][0]), message)
            # model-level checks name their key before the colon
            key, _, detail = message.partition(": ")
            raise ConfigError(key, detail or message)


class ConvergenceRecord(BaseModel):
    """KL(clearing || market) at one resolution after one step of one trace"""
    trace: int
    step: int
    market: str
    level: int
    kl: float = Field(..., ge=0.0)
    cumulative_cost: float
