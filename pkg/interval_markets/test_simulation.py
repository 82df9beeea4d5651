"""
Tests for the agent-based convergence experiments
"""

import math

import numpy as np
import pytest

from interval_markets.errors import ConfigError, DegenerateBelief
from interval_markets.models.dyadic import Dyadic
from interval_markets.models.sim_models import ConvergenceRecord, MarketSpec, SimConfig
from interval_markets.services.lcmm_tree import LcmmTree
from interval_markets.services.lmsr_tree import LmsrTree
from interval_markets.services.rng import SplitMix64
from interval_markets.services.simulation import (
    Quiescent,
    Simulation,
    TradeEvent,
    Trader,
    bin_masses,
    build_market,
    clearing_price,
    coarsen,
    final_kl,
    information_floor,
    kl_divergence,
    market_distribution,
    mean_curves,
    optimal_shares,
    records_frame,
    run_experiment,
    run_trace,
    sample_candidates,
    sample_traders,
)
from interval_markets.strategies import interval


def small_config(**overrides) -> SimConfig:
    values = dict(n_traders=3, K=6, candidates_per_turn=4, markets="lmsr@4, lcmm@2:0.5/4:0.5",
                  levels="2, 4", n_traces=2, max_steps=4, seed=7)
    values.update(overrides)
    return SimConfig(**values)


# ---------------- random streams -----------------

def test_splitmix_reference_output():
    assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF


def test_derived_streams_are_reproducible():
    first = SplitMix64.derive(3, "arrivals", 1)
    again = SplitMix64.derive(3, "arrivals", 1)
    other = SplitMix64.derive(3, "arrivals", 2)
    draws = [first.next_u64() for _ in range(4)]
    assert draws == [again.next_u64() for _ in range(4)]
    assert draws != [other.next_u64() for _ in range(4)]


def test_bounded_draws():
    rng = SplitMix64(11)
    assert all(0 <= rng.randbelow(5) < 5 for _ in range(200))
    assert 0 <= rng.binomial(20, 0.4) <= 20
    assert ((rng.uniforms(100) >= 0.0) & (rng.uniforms(100) < 1.0)).all()
    with pytest.raises(ValueError):
        rng.randbelow(0)


# ---------------- beliefs and prices -----------------

def test_bin_masses_form_a_distribution():
    masses = bin_masses(3.0, 3.0, 4)
    assert masses.sum() == pytest.approx(1.0)
    assert masses == pytest.approx(masses[::-1])


def test_beta_parameters_must_be_positive():
    with pytest.raises(DegenerateBelief):
        Trader(id=0, alpha=0.0, beta=2.0)


def test_clearing_price_of_one_trader_is_its_belief():
    trader = Trader(id=0, alpha=4.0, beta=6.0)
    assert clearing_price([trader], 5) == pytest.approx(trader.belief(5))
    with pytest.raises(DegenerateBelief):
        clearing_price([], 5)


def test_coarsen_and_kl():
    p = np.full(8, 0.125)
    assert coarsen(p, 1) == pytest.approx([0.5, 0.5])
    assert kl_divergence(p, p) == pytest.approx(0.0)
    assert kl_divergence(np.array([0.5, 0.5]), np.array([0.9, 0.1])) > 0.0


def test_information_floor():
    clearing = bin_masses(5.0, 3.0, 6)
    assert information_floor(clearing, 4, 4) == pytest.approx(0.0, abs=1e-12)
    assert information_floor(clearing, 2, 4) > 0.0


# ---------------- markets and traders -----------------

def test_budget_limited_markets():
    lmsr = build_market(MarketSpec.parse("lmsr@8"), 8.0)
    assert isinstance(lmsr, LmsrTree)
    assert lmsr.loss_bound() == pytest.approx(8.0)
    lcmm = build_market(MarketSpec.parse("lcmm@4:0.5/8:0.5"), 8.0)
    assert isinstance(lcmm, LcmmTree)
    assert lcmm.loss_bound() == pytest.approx(8.0, abs=1e-6)
    assert market_distribution(lcmm, 3) == pytest.approx(np.full(8, 0.125))


def test_optimal_shares_move_toward_belief():
    trader = Trader(id=0, alpha=8.0, beta=2.0)
    market = LmsrTree(1.0, precision=4)
    upper = interval("1/2", "1")
    shares, gain = optimal_shares(trader, market, upper, 4)
    assert shares > 0.0 and gain > 0.0

    cost = market.buy(upper, shares)
    trader.settle(upper, shares, cost, 4)
    again, _ = optimal_shares(trader, market, upper, 4)
    assert abs(again) < 1e-3


def test_candidates_stay_on_the_market_grid():
    trader = Trader(id=0, alpha=2.0, beta=5.0)
    candidates = sample_candidates(trader, SplitMix64(5), 20, 4)
    assert len(candidates) == 20
    assert all(c.lo.prec <= 4 and c.hi.prec <= 4 and c.lo < c.hi for c in candidates)


# ---------------- traces -----------------

def test_step_records_trade_or_quiescence():
    cfg = small_config()
    simulation = Simulation(cfg, cfg.markets[0], trace=0)
    event = simulation.step()
    assert isinstance(event, (TradeEvent, Quiescent))
    if isinstance(event, TradeEvent) and not event.idle:
        assert simulation.cumulative_cost == pytest.approx(event.cost)


def test_trace_is_deterministic():
    cfg = small_config()
    first = run_trace(cfg, cfg.markets[1], 0)
    assert first == run_trace(cfg, cfg.markets[1], 0)
    assert first[0].step == 0
    assert {record.level for record in first} == {2, 4}
    assert all(record.kl >= 0.0 for record in first)


def test_experiment_covers_every_market_and_trace():
    cfg = small_config(max_steps=2)
    frame = records_frame(run_experiment(cfg, workers=1))
    assert set(frame["market"]) == {"lmsr@4", "lcmm@2:0.5/4:0.5"}
    assert set(frame["trace"]) == {0, 1}


@pytest.mark.slow
def test_parallel_run_matches_serial():
    cfg = small_config(max_steps=3)
    assert run_experiment(cfg, workers=2) == run_experiment(cfg, workers=1)


def test_mean_curves_carry_quiescent_traces_forward():
    def record(trace, step, kl):
        return ConvergenceRecord(trace=trace, step=step, market="lmsr@4", level=4, kl=kl, cumulative_cost=0.0)

    records = [record(0, 0, 3.0), record(0, 1, 2.0), record(0, 2, 1.0), record(1, 0, 5.0), record(1, 1, 4.0)]
    curves = mean_curves(records)
    assert list(curves["kl"]) == pytest.approx([4.0, 3.0, 2.5])
    last = final_kl(records)
    assert (int(last["step"][0]), float(last["kl"][0])) == (2, 2.5)


# ---------------- configuration -----------------

def test_market_spec_parsing():
    spec = MarketSpec.parse("lcmm@4:0.5/8:0.5")
    assert spec.kind == "lcmm" and spec.resolution == 8
    assert MarketSpec.parse("lmsr@6").resolution == 6
    with pytest.raises(ValueError):
        MarketSpec.parse("amm@6")


def test_config_from_key_values():
    cfg = SimConfig.from_mapping({"n_traders": "4", "markets": "lmsr@4", "levels": "2,4", "seed": "9"})
    assert cfg.n_traders == 4 and cfg.levels == [2, 4] and cfg.seed == 9
    assert SimConfig().markets[2].name == "lcmm@4:0.5/8:0.5"


@pytest.mark.parametrize("values, key", [
    ({"traders": "4"}, "traders"),
    ({"n_traders": "zero"}, "n_traders"),
    ({"levels": "4, 12"}, "levels"),
    ({"markets": "lmsr@12"}, "markets"),
    ({"markets": "lcmm@4:0.5/8:0.4"}, "markets"),
])
def test_config_errors_name_the_key(values, key):
    with pytest.raises(ConfigError) as excinfo:
        SimConfig.from_mapping(values)
    assert excinfo.value.key == key


def test_tail_price_of_the_upper_half():
    market = LmsrTree(1.0)
    assert market.tail_price(Dyadic(1, 1)) == pytest.approx(0.5)


# ---------------- equilibrium and dynamics -----------------

def test_mirrored_beliefs_pool_symmetrically():
    pool = clearing_price([Trader(id=0, alpha=2.0, beta=1.0), Trader(id=1, alpha=1.0, beta=2.0)], 6)
    assert pool.sum() == pytest.approx(1.0)
    assert pool == pytest.approx(pool[::-1], abs=1e-12)


def test_first_trader_signal_matches_binomial_mean():
    cfg = SimConfig(n_traders=1)
    rng = SplitMix64(2024)
    draws = np.array([sample_traders(cfg, rng)[0].alpha for _ in range(10_000)])
    sigma = math.sqrt(16 * 0.4 * 0.6)
    assert abs(draws.mean() - 6.4) <= 3.0 * sigma / math.sqrt(draws.size)


def test_certain_signal_is_clamped_below_the_flip_count():
    traders = sample_traders(SimConfig(n_traders=2, true_signal=1.0), SplitMix64(3))
    assert [(t.alpha, t.beta) for t in traders] == [(15.0, 1.0), (31.0, 1.0)]


@pytest.mark.parametrize("markets", ["lmsr@4", "lcmm@2:0.5/4:0.5"])
def test_trades_conserve_wealth_and_revenue(markets):
    cfg = small_config(markets=markets, max_steps=8)
    simulation = Simulation(cfg, cfg.markets[0], trace=0)
    market = simulation.market
    outcomes = [Dyadic(j, cfg.K) for j in range(1 << cfg.K)]

    def holdings():
        return sum(np.zeros(1 << cfg.K) if t.wealth is None else t.wealth.copy() for t in simulation.traders)

    def market_maker_position():
        return market.audit.collected - np.array([market.total_payout(w) for w in outcomes])

    for _ in range(cfg.max_steps):
        traders_before, market_before = holdings(), market_maker_position()
        event = simulation.step()
        if isinstance(event, Quiescent):
            break
        traders_change = holdings() - traders_before
        revenue = market_maker_position() - market_before
        assert traders_change == pytest.approx(-revenue, abs=1e-10)


def test_quiescence_is_absorbing():
    cfg = small_config(markets="lmsr@4")
    agreeing = [Trader(id=0, alpha=1.0, beta=1.0), Trader(id=1, alpha=1.0, beta=1.0)]
    simulation = Simulation(cfg, cfg.markets[0], trace=0, traders=agreeing)
    assert isinstance(simulation.step(), Quiescent)
    assert simulation.quiescent
    for _ in range(3):
        assert isinstance(simulation.step(), Quiescent)
        assert not simulation._anyone_wants_to_trade()


def test_zero_step_experiment_measures_the_uniform_market():
    cfg = small_config(max_steps=0, n_traces=1)
    traders = sample_traders(cfg, SplitMix64.derive(cfg.seed, "traders", 0))
    clearing = clearing_price(traders, cfg.K)
    records = run_experiment(cfg, workers=1)
    assert {record.step for record in records} == {0}
    for record in records:
        uniform = np.full(1 << record.level, 1.0 / (1 << record.level))
        assert record.kl == pytest.approx(kl_divergence(coarsen(clearing, record.level), uniform), abs=1e-12)


def test_coarse_market_never_beats_the_information_floor():
    cfg = small_config(K=8, markets="lmsr@4", levels="8", n_traces=1, max_steps=25)
    traders = sample_traders(cfg, SplitMix64.derive(cfg.seed, "traders", 0))
    floor = information_floor(clearing_price(traders, cfg.K), 4, 8)
    records = run_trace(cfg, cfg.markets[0], 0)
    assert len(records) > 1
    assert all(record.kl >= floor - 1e-9 for record in records)


def test_coarse_market_distribution_is_split_evenly():
    market = LmsrTree(1.0, precision=2)
    market.buy(interval("1/4", "1/2"), 1.5)
    coarse = market_distribution(market, 2)
    assert market_distribution(market, 4) == pytest.approx(np.repeat(coarse / 4, 4), abs=1e-15)


def test_default_lcmm_survives_its_first_trades():
    cfg = SimConfig(max_steps=2, candidates_per_turn=10, n_traces=1)
    records = run_trace(cfg, cfg.markets[2], 0)
    assert records[-1].step >= 1
    assert all(math.isfinite(record.kl) for record in records)


@pytest.mark.slow
def test_default_lcmm_trace_runs_without_degenerate_prices():
    cfg = SimConfig(max_steps=60, candidates_per_turn=20, n_traces=1)
    records = run_trace(cfg, cfg.markets[2], 0)
    assert all(math.isfinite(record.kl) and record.kl >= 0.0 for record in records)


@pytest.mark.slow
def test_tiny_liquidity_equilibrium_is_the_log_pool():
    b = 1e-3
    cfg = SimConfig(n_traders=2, signal_step=2, K=2, candidates_per_turn=6, budget=b * 2 * math.log(2),
                    markets="lmsr@2", levels="2", n_traces=1, max_steps=30_000, seed=5)
    simulation = Simulation(cfg, cfg.markets[0], trace=0)
    assert simulation.market.b == pytest.approx(b)
    while simulation.steps < cfg.max_steps and not simulation.quiescent:
        simulation.step()
    pool = clearing_price(simulation.traders, cfg.K)
    assert kl_divergence(pool, market_distribution(simulation.market, cfg.K)) <= 1e-2


@pytest.mark.slow
def test_resolution_tradeoff_between_markets():
    cfg = SimConfig(candidates_per_turn=10, n_traces=3, max_steps=400)
    records = run_experiment(cfg, workers=1)
    curves = mean_curves(records)
    fine = final_kl(records).set_index(["market", "level"])["kl"]
    assert fine[("lmsr@8", 8)] < fine[("lmsr@4", 8)]
    assert fine[("lcmm@4:0.5/8:0.5", 8)] < fine[("lmsr@4", 8)]

    early = curves[(curves["level"] == 4) & (curves["step"] <= cfg.max_steps // 4)]
    coarse = early.groupby("market")["kl"].mean()
    assert coarse["lmsr@4"] < coarse["lmsr@8"]
