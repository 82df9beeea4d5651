"""
Command-line interface for interval markets
Create markets, query and trade, replay logs, audit losses and run simulations
"""

import functools
from typing import List, Optional, Tuple

import typer

from interval_markets.errors import BadArgs, MarketError, ParseError
from interval_markets.models.dyadic import Interval
from interval_markets.models.liquidity import LiquiditySchedule
from interval_markets.models.market_models import EngineDescriptor
from interval_markets.models.sim_models import SimConfig
from interval_markets.services.lcmm_tree import LcmmTree
from interval_markets.services.lmsr_tree import LmsrTree
from interval_markets.services.market_store import (
    MarketStore,
    create_engine,
    describe_engine,
    read_trade_log,
    rebuild,
)
from interval_markets.services.simulation import final_kl, records_frame, run_experiment, sweep_budgets
from interval_markets.utils.file_utils import atomic_write_text, read_key_value_file
from interval_markets.utils.safe_logger import market_logger

app = typer.Typer(help="Interval securities markets over [0,1): LMSR tree, multi-resolution LCMM, dense oracle.",
                  no_args_is_help=True)

ENGINE_NAMES = {"lmsr-tree": "lmsr_tree", "lcmm": "lcmm", "dense": "dense"}

# Upper precision for exhaustive atom audits
MAX_AUDIT_PRECISION = 24


def fmt(value: float) -> str:
    """12 significant digits, trailing zeros kept"""
    return f"{value:#.12g}"


def handle_errors(command):
    """Report MarketError on stderr and exit with its code"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except MarketError as e:
            market_logger.error(f"{command.__name__} failed", str(e))
            typer.echo(f"error: {e}", err=True)
            raise typer.Exit(code=e.exit_code)
    return wrapper


def parse_floats(text: str, option: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ParseError(f"{option} expects comma-separated numbers", text)


def parse_split(text: str) -> dict:
    """`4:0.5/8:0.5` -> {4: 0.5, 8: 0.5}"""
    fractions = {}
    try:
        for part in text.replace(",", "/").split("/"):
            level, share = part.split(":")
            fractions[int(level)] = float(share)
    except ValueError:
        raise ParseError("--split expects level:fraction pairs such as 4:0.5/8:0.5", text)
    return fractions


def build_descriptor(engine: str, b: Optional[float], K: Optional[int], levels: Optional[str],
                     geometric: Optional[Tuple[float, float]], budget: Optional[float],
                     split: Optional[str]) -> EngineDescriptor:
    if engine not in ENGINE_NAMES:
        raise BadArgs("Unknown engine", f"{engine}; expected one of {', '.join(ENGINE_NAMES)}")
    kind = ENGINE_NAMES[engine]
    if kind == "lcmm":
        choices = [levels is not None, geometric is not None, split is not None]
        if sum(choices) != 1:
            raise BadArgs("lcmm needs exactly one of --levels, --geometric or --split")
        if levels is not None:
            schedule = LiquiditySchedule.explicit(parse_floats(levels, "--levels"))
        elif geometric is not None:
            schedule = LiquiditySchedule.geometric(*geometric)
        else:
            if budget is None:
                raise BadArgs("--split needs --budget")
            schedule = LiquiditySchedule.split(budget, parse_split(split))
        return EngineDescriptor(type="lcmm", schedule=schedule.descriptor())
    if b is None:
        raise BadArgs(f"{engine} needs --b")
    if not b > 0:
        raise BadArgs("Liquidity b must be positive", f"b={b}")
    if kind == "dense" and K is None:
        raise BadArgs("dense needs --K")
    if K is not None and not 1 <= K <= 62:
        raise BadArgs("K must lie in 1..62", f"K={K}")
    return EngineDescriptor(type=kind, b=b, precision=K)


def describe_bound(engine) -> str:
    if isinstance(engine, LmsrTree) and engine.precision is None:
        return f"loss bound per bit of precision {fmt(engine.loss_bound(1))}"
    return f"loss bound {fmt(engine.loss_bound())}"


@app.command("new")
@handle_errors
def cmd_new(
    state: str = typer.Argument(..., help="Snapshot file to create"),
    engine: str = typer.Option("lmsr-tree", "--engine", help="lmsr-tree, lcmm or dense"),
    b: Optional[float] = typer.Option(None, "--b", help="LMSR liquidity"),
    K: Optional[int] = typer.Option(None, "--K", help="Outcome precision (required for dense)"),
    levels: Optional[str] = typer.Option(None, "--levels", help="lcmm: explicit b_1,...,b_K"),
    geometric: Optional[Tuple[float, float]] = typer.Option(None, "--geometric", help="lcmm: b1 and ratio"),
    budget: Optional[float] = typer.Option(None, "--budget", help="lcmm with --split: worst-case loss budget"),
    split: Optional[str] = typer.Option(None, "--split", help="lcmm: level:fraction pairs, e.g. 4:0.5/8:0.5"),
    force: bool = typer.Option(False, "--force", help="Overwrite an existing market"),
):
    """Create a fresh market and print its loss bound"""
    descriptor = build_descriptor(engine, b, K, levels, geometric, budget, split)
    market = create_engine(descriptor)
    MarketStore(state).create(market, overwrite=force)
    typer.echo(describe_bound(market))


@app.command("price")
@handle_errors
def cmd_price(
    state: str = typer.Argument(..., help="Snapshot file"),
    lo: str = typer.Argument(..., help="Lower endpoint, a/2^k or an exact decimal"),
    hi: str = typer.Argument(..., help="Upper endpoint"),
):
    """Price of the interval security [lo, hi)"""
    market, _ = MarketStore(state).load()
    typer.echo(fmt(market.price(Interval.parse(lo, hi))))


@app.command("cost")
@handle_errors
def cmd_cost(
    state: str = typer.Argument(..., help="Snapshot file"),
    lo: str = typer.Argument(...),
    hi: str = typer.Argument(...),
    shares: float = typer.Argument(..., help="Shares to buy; negative sells"),
):
    """What buying `shares` of [lo, hi) would cost, without trading"""
    market, _ = MarketStore(state).load()
    typer.echo(fmt(market.cost(Interval.parse(lo, hi), shares)))


@app.command("buy")
@handle_errors
def cmd_buy(
    state: str = typer.Argument(..., help="Snapshot file"),
    lo: str = typer.Argument(...),
    hi: str = typer.Argument(...),
    shares: float = typer.Argument(..., help="Shares to buy; negative sells"),
):
    """Buy shares of [lo, hi); the trade is logged before the snapshot is rewritten"""
    cost, _ = MarketStore(state).buy(Interval.parse(lo, hi), shares)
    typer.echo(fmt(cost))


@app.command("replay")
@handle_errors
def cmd_replay(
    log: str = typer.Argument(..., help="JSONL trade log"),
    engine: str = typer.Option("lmsr-tree", "--engine", help="lmsr-tree, lcmm or dense"),
    b: Optional[float] = typer.Option(None, "--b"),
    K: Optional[int] = typer.Option(None, "--K"),
    levels: Optional[str] = typer.Option(None, "--levels"),
    geometric: Optional[Tuple[float, float]] = typer.Option(None, "--geometric"),
    budget: Optional[float] = typer.Option(None, "--budget"),
    split: Optional[str] = typer.Option(None, "--split"),
    write: Optional[str] = typer.Option(None, "--write", help="Also write the rebuilt state as a snapshot here"),
):
    """Rebuild a market from its log and print the final price of every logged interval"""
    descriptor = build_descriptor(engine, b, K, levels, geometric, budget, split)
    records = read_trade_log(log)
    market = rebuild(descriptor, records)
    seen = set()
    for record in records:
        interval = record.interval
        if interval in seen:
            continue
        seen.add(interval)
        typer.echo(f"{interval} {fmt(market.price(interval))}")
    if write is not None:
        store = MarketStore(write)
        with store.lock():
            store.write_snapshot(market, len(records))
    market_logger.info("Replay finished", {"trades": len(records), "engine": descriptor.type})


@app.command("audit")
@handle_errors
def cmd_audit(
    state: str = typer.Argument(..., help="Snapshot file"),
    precision: Optional[int] = typer.Option(None, "--precision", help="Audit only the 2^K outcomes j/2^K"),
):
    """Replay the log and report revenue, worst-case loss and the loss bound.

    An LCMM whose levels disagree by more than the coherence tolerance fails
    with exit code 3."""
    store = MarketStore(state)
    snapshot = store.read_snapshot()
    records = store.read_log()
    market = rebuild(snapshot.engine, records)
    if precision is not None and not 1 <= precision <= MAX_AUDIT_PRECISION:
        raise BadArgs(f"--precision must lie in 1..{MAX_AUDIT_PRECISION}", f"precision={precision}")
    loss = market.audit.worst_case_loss(precision)
    bound = market.loss_bound(precision) if isinstance(market, LmsrTree) else market.loss_bound()
    typer.echo(f"trades {len(records)}")
    typer.echo(f"collected {fmt(market.audit.collected)}")
    typer.echo(f"worst-case loss {fmt(loss)}")
    typer.echo(f"loss bound {fmt(bound)}")
    if loss > bound + 1e-9:
        market_logger.warning("Audited loss exceeds the bound", {"loss": loss, "bound": bound})
    if isinstance(market, LcmmTree):
        typer.echo(f"coherence violation {fmt(market.check_coherence())}")


@app.command("show")
@handle_errors
def cmd_show(state: str = typer.Argument(..., help="Snapshot file")):
    """Engine, node count, trade count and loss bound"""
    market, last_seq = MarketStore(state).load()
    descriptor = describe_engine(market)
    typer.echo(f"engine {descriptor.model_dump_json(exclude_none=True)}")
    if hasattr(market, "iter_nodes"):
        typer.echo(f"nodes {sum(1 for _ in market.iter_nodes())}")
    else:
        typer.echo(f"outcomes {market.n_outcomes}")
    typer.echo(f"trades {last_seq}")
    typer.echo(describe_bound(market))
    if isinstance(market, LcmmTree):
        typer.echo(f"coherence violation {fmt(market.coherence_violation())}")


@app.command("simulate")
@handle_errors
def cmd_simulate(
    config: str = typer.Argument(..., help="key = value simulation config"),
    out: str = typer.Argument(..., help="CSV output path"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Process pool width for traces"),
):
    """Run the convergence experiment and write one CSV row per (trace, step, level)"""
    cfg = SimConfig.from_mapping(read_key_value_file(config))
    records = run_experiment(cfg, workers)
    atomic_write_text(out, records_frame(records).to_csv(index=False))
    for row in final_kl(records).itertuples(index=False):
        market_logger.print(f"{row.market} level {row.level} step {row.step} mean kl {fmt(row.kl)}")


@app.command("sweep")
@handle_errors
def cmd_sweep(
    config: str = typer.Argument(..., help="key = value simulation config"),
    out: str = typer.Argument(..., help="CSV output path"),
    budgets: str = typer.Option(..., "--budgets", help="Comma-separated loss budgets, e.g. 1,2,4,8,16"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Process pool width for traces"),
):
    """Final mean KL per (budget, market, level) over a range of loss budgets"""
    cfg = SimConfig.from_mapping(read_key_value_file(config))
    values = parse_floats(budgets, "--budgets")
    if not values or any(not budget > 0 for budget in values):
        raise BadArgs("--budgets needs positive values", budgets)
    frame = sweep_budgets(cfg, values, workers)
    atomic_write_text(out, frame.to_csv(index=False))
    for row in frame.itertuples(index=False):
        market_logger.print(f"budget {fmt(row.budget)} {row.market} level {row.level} mean kl {fmt(row.kl)}")


def main():
    app()


if __name__ == "__main__":
    main()
