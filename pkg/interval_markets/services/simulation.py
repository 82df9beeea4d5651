"""
Agent-based convergence experiments

Exponential-utility traders with Beta beliefs trade interval securities
against a market maker; after every step the market's distribution is
compared with the market-clearing price (the equal-weight logarithmic pool of
the beliefs) at several resolutions.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar
from scipy.special import betaincinv, rel_entr, softmax
from scipy.stats import beta as beta_dist

from interval_markets.config import settings
from interval_markets.errors import DegenerateBelief
from interval_markets.models.dyadic import Dyadic, Interval
from interval_markets.models.liquidity import LOG2, LiquiditySchedule
from interval_markets.models.sim_models import ConvergenceRecord, MarketSpec, SimConfig
from interval_markets.services.lcmm_tree import LcmmTree
from interval_markets.services.lmsr_tree import LmsrTree
from interval_markets.services.rng import SplitMix64
from interval_markets.utils.safe_logger import market_logger

SHARE_BOUND = 64.0
SHARE_TOLERANCE = 1e-8
MASS_FLOOR = 1e-300
MAX_RESAMPLES = 100

Market = Union[LmsrTree, LcmmTree]


# ---------------- traders -----------------

@dataclass
class Trader:
    id: int
    alpha: float
    beta: float
    # net position per outcome bin at the simulation precision
    wealth: Optional[np.ndarray] = field(default=None, repr=False)
    _beliefs: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _adjusted: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise DegenerateBelief("Beta belief parameters must be positive", f"a={self.alpha}, b={self.beta}")

    def belief(self, K: int) -> np.ndarray:
        if K not in self._beliefs:
            self._beliefs[K] = bin_masses(self.alpha, self.beta, K)
        return self._beliefs[K]

    def adjusted_belief(self, K: int) -> np.ndarray:
        """Belief tilted by current holdings, q(w) e^{-W(w)}, normalized"""
        q = self.belief(K)
        if self.wealth is None or not self.wealth.any():
            return q
        if K not in self._adjusted:
            self._adjusted[K] = softmax(np.log(np.maximum(q, MASS_FLOOR)) - self.wealth)
        return self._adjusted[K]

    def settle(self, interval: Interval, shares: float, cost: float, K: int) -> None:
        if self.wealth is None:
            self.wealth = np.zeros(1 << K)
        self._adjusted.clear()
        self.wealth -= cost
        self.wealth[interval.lo.scaled(K):interval.hi.scaled(K)] += shares


def bin_masses(alpha: float, beta: float, K: int) -> np.ndarray:
    """Beta(alpha, beta) mass of each of the 2^K equal bins.

    Lower-half bins difference the cdf, upper-half bins the survival
    function, so small tail masses do not cancel."""
    edges = np.linspace(0.0, 1.0, (1 << K) + 1)
    cdf = beta_dist.cdf(edges, alpha, beta)
    sf = beta_dist.sf(edges, alpha, beta)
    lower = cdf[1:] - cdf[:-1]
    upper = sf[:-1] - sf[1:]
    masses = np.where(edges[:-1] < 0.5, lower, upper)
    return np.maximum(masses, 0.0)


def sample_traders(cfg: SimConfig, rng: SplitMix64) -> List[Trader]:
    """a_i ~ Binomial(p, n_i) with n_i = signal_step * i, clamped to [1, n_i - 1]"""
    traders = []
    for i in range(1, cfg.n_traders + 1):
        n = cfg.signal_step * i
        a = min(max(rng.binomial(n, cfg.true_signal), 1), n - 1)
        traders.append(Trader(id=i - 1, alpha=float(a), beta=float(n - a)))
    return traders


def clearing_price(traders: Sequence[Trader], K: int) -> np.ndarray:
    """Equal-weight logarithmic pool of the traders' beliefs over 2^K bins"""
    if not traders:
        raise DegenerateBelief("Clearing price needs at least one trader")
    beliefs = np.stack([trader.belief(K) for trader in traders])
    vanished = (beliefs <= 0.0).all(axis=0)
    if vanished.any():
        raise DegenerateBelief("Every trader gives zero mass to a bin",
                               f"bin {int(np.argmax(vanished))} of {1 << K}")
    log_pool = np.log(np.maximum(beliefs, MASS_FLOOR)).mean(axis=0)
    return softmax(log_pool)


def coarsen(distribution: np.ndarray, level: int) -> np.ndarray:
    return distribution.reshape(1 << level, -1).sum(axis=1)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats; q is floored at 1e-300"""
    return float(rel_entr(p, np.maximum(q, MASS_FLOOR)).sum())


# ---------------- markets -----------------

def build_market(spec: MarketSpec, budget: float) -> Market:
    """Budget-limited market: worst-case loss equals `budget`"""
    if spec.kind == "lmsr":
        return LmsrTree(budget / (spec.precision * LOG2), precision=spec.precision)
    schedule = LiquiditySchedule.split(budget, spec.fractions)
    return LcmmTree(schedule)


def market_distribution(market: Market, level: int) -> np.ndarray:
    """Bin prices at `level`, each priced directly so tiny bins keep their
    relative accuracy. An LMSR coarser than `level` is split evenly below its
    own precision, as are coarse leaves through the fractional-leaf rule"""
    native = level
    if isinstance(market, LmsrTree) and market.precision is not None:
        native = min(level, market.precision)
    bins = np.array([market.price(Interval(Dyadic(j, native), Dyadic(j + 1, native))) for j in range(1 << native)])
    spread = 1 << (level - native)
    return np.repeat(bins / spread, spread)


def cost_curve(market: Market, interval: Interval) -> Callable[[float], float]:
    if isinstance(market, LmsrTree):
        return market.cost_curve(interval)
    return lambda shares: market.cost(interval, shares)


def optimal_shares(trader: Trader, market: Market, interval: Interval, K: int,
                   quiescence_tol: float = 1e-9) -> Tuple[float, float]:
    """Expected-utility-maximizing shares of `interval` and the utility gain.

    With adjusted belief q and Z = sum q(w) e^{-W(w)}, buying s shares at
    cost c(s) changes expected utility by Z (1 - q e^{c-s} - (1-q) e^{c})."""
    adjusted = trader.adjusted_belief(K)
    q = float(adjusted[interval.lo.scaled(K):interval.hi.scaled(K)].sum())
    if not 0.0 < q < 1.0:
        return 0.0, 0.0
    curve = cost_curve(market, interval)

    def loss(shares: float) -> float:
        c = curve(shares)
        return q * math.exp(c - shares) + (1.0 - q) * math.exp(c)

    result = minimize_scalar(loss, bounds=(-SHARE_BOUND, SHARE_BOUND), method="bounded",
                             options={"xatol": SHARE_TOLERANCE})
    scale = 1.0 if trader.wealth is None else float(np.dot(trader.belief(K), np.exp(-trader.wealth)))
    gain = scale * (1.0 - float(result.fun))
    if gain <= quiescence_tol:
        return 0.0, 0.0
    return float(result.x), gain


def sample_candidates(trader: Trader, rng: SplitMix64, count: int, precision: int) -> List[Interval]:
    """Intervals with both endpoints drawn from the trader's belief, rounded
    to `precision`; degenerate draws are resampled"""
    candidates = []
    for _ in range(count):
        for _ in range(MAX_RESAMPLES):
            draws = betaincinv(trader.alpha, trader.beta, rng.uniforms(2))
            lo, hi = sorted(Dyadic.from_float_rounded(float(x), precision) for x in draws)
            if lo < hi:
                candidates.append(Interval(lo, hi))
                break
    return candidates


# ---------------- traces -----------------

@dataclass(frozen=True)
class TradeEvent:
    step: int
    trader: int
    interval: Optional[Interval]
    shares: float
    cost: float
    gain: float

    @property
    def idle(self) -> bool:
        return self.shares == 0.0


@dataclass(frozen=True)
class Quiescent:
    step: int


class Simulation:
    """One trace of one market; arrivals and candidate draws depend only on
    (seed, trace, step), so traces of different markets stay aligned"""

    def __init__(self, cfg: SimConfig, spec: MarketSpec, trace: int, traders: Optional[List[Trader]] = None):
        self.cfg = cfg
        self.spec = spec
        self.trace = trace
        self.market = build_market(spec, cfg.budget)
        self.traders = traders if traders is not None else \
            sample_traders(cfg, SplitMix64.derive(cfg.seed, "traders", trace))
        self.arrivals = SplitMix64.derive(cfg.seed, "arrivals", trace)
        self.steps = 0
        self.cumulative_cost = 0.0
        self.quiescent = False

    def _best_trade(self, trader: Trader, rng: SplitMix64) -> Tuple[Optional[Interval], float, float]:
        best: Tuple[Optional[Interval], float, float] = (None, 0.0, 0.0)
        for candidate in sample_candidates(trader, rng, self.cfg.candidates_per_turn, self.spec.resolution):
            shares, gain = optimal_shares(trader, self.market, candidate, self.cfg.K, self.cfg.quiescence_tol)
            if gain > best[2]:
                best = (candidate, shares, gain)
        return best

    def _anyone_wants_to_trade(self) -> bool:
        for trader in self.traders:
            rng = SplitMix64.derive(self.cfg.seed, "sweep", self.trace, self.steps, trader.id)
            if self._best_trade(trader, rng)[0] is not None:
                return True
        return False

    def step(self) -> Union[TradeEvent, Quiescent]:
        self.steps += 1
        trader = self.traders[self.arrivals.randbelow(len(self.traders))]
        rng = SplitMix64.derive(self.cfg.seed, "candidates", self.trace, self.steps)
        interval, shares, gain = self._best_trade(trader, rng)

        if interval is None:
            if not self._anyone_wants_to_trade():
                self.quiescent = True
                return Quiescent(self.steps)
            return TradeEvent(self.steps, trader.id, None, 0.0, 0.0, 0.0)

        cost = self.market.buy(interval, shares)
        trader.settle(interval, shares, cost, self.cfg.K)
        self.cumulative_cost += cost
        return TradeEvent(self.steps, trader.id, interval, shares, cost, gain)

    def records(self, clearing: np.ndarray) -> List[ConvergenceRecord]:
        return [
            ConvergenceRecord(
                trace=self.trace,
                step=self.steps,
                market=self.spec.name,
                level=level,
                kl=max(kl_divergence(coarsen(clearing, level), market_distribution(self.market, level)), 0.0),
                cumulative_cost=self.cumulative_cost,
            )
            for level in self.cfg.levels
        ]


def run_trace(cfg: SimConfig, spec: MarketSpec, trace: int) -> List[ConvergenceRecord]:
    simulation = Simulation(cfg, spec, trace)
    clearing = clearing_price(simulation.traders, cfg.K)
    records = simulation.records(clearing)
    while simulation.steps < cfg.max_steps:
        event = simulation.step()
        if isinstance(event, Quiescent):
            break
        records.extend(simulation.records(clearing))
    market_logger.debug("Trace finished", {"market": spec.name, "trace": trace,
                                           "steps": simulation.steps, "quiescent": simulation.quiescent})
    return records


def _run_job(job: Tuple[SimConfig, MarketSpec, int]) -> List[ConvergenceRecord]:
    return run_trace(*job)


def run_experiment(cfg: SimConfig, workers: Optional[int] = None) -> List[ConvergenceRecord]:
    """Every market on every trace; output order does not depend on `workers`"""
    jobs = [(cfg, spec, trace) for spec in cfg.markets for trace in range(cfg.n_traces)]
    workers = settings.sim_workers if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(job) for job in jobs]
    records = [record for result in results for record in result]
    market_logger.info("Experiment finished", {"markets": [spec.name for spec in cfg.markets],
                                               "traces": cfg.n_traces, "records": len(records)})
    return records


def records_frame(records: Iterable[ConvergenceRecord]) -> pd.DataFrame:
    columns = ["trace", "step", "market", "level", "kl", "cumulative_cost"]
    return pd.DataFrame([record.model_dump() for record in records], columns=columns)


def mean_curves(records: Iterable[ConvergenceRecord]) -> pd.DataFrame:
    """Mean KL over traces per (market, level, step); a trace that went
    quiescent keeps its last value for the remaining steps"""
    frame = records_frame(records)
    if frame.empty:
        return pd.DataFrame(columns=["market", "level", "step", "kl"])
    curves = []
    for (market, level), group in frame.groupby(["market", "level"], sort=False):
        wide = group.pivot(index="step", columns="trace", values="kl")
        wide = wide.reindex(range(int(wide.index.max()) + 1)).ffill()
        curves.append(pd.DataFrame({"market": market, "level": level,
                                    "step": wide.index, "kl": wide.mean(axis=1).to_numpy()}))
    return pd.concat(curves, ignore_index=True)


def final_kl(records: Iterable[ConvergenceRecord]) -> pd.DataFrame:
    """Mean KL at the last step of each (market, level) curve"""
    curves = mean_curves(records)
    return curves.sort_values("step").groupby(["market", "level"], sort=False).tail(1).reset_index(drop=True)


def sweep_budgets(cfg: SimConfig, budgets: Sequence[float], workers: Optional[int] = None) -> pd.DataFrame:
    """Final mean KL per (budget, market, level)"""
    frames = []
    for budget in budgets:
        result = final_kl(run_experiment(cfg.model_copy(update={"budget": float(budget)}), workers))
        result.insert(0, "budget", float(budget))
        frames.append(result)
    return pd.concat(frames, ignore_index=True)


def information_floor(clearing: np.ndarray, coarse: int, fine: int) -> float:
    """KL at level `fine` of the best distribution resolved only to `coarse`:
    the clearing price coarsened, then split evenly"""
    coarse_mass = coarsen(clearing, coarse)
    refined = np.repeat(coarse_mass / (1 << (fine - coarse)), 1 << (fine - coarse))
    return kl_divergence(coarsen(clearing, fine), refined)
