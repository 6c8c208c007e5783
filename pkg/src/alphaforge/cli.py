"""Command-line interface.

Exit codes: 2 = expression/config parse error, 3 = data error,
4 = evaluation error.  Report commands write delimited data plus a PNG
rendering into the run directory, along with the resolved configuration
so runs are self-describing.
"""

from __future__ import annotations

import pathlib
import sys

import click
import numpy as np

from . import __version__, evaluator, grammar as gr, marketdata, metrics
from . import miner as miner_mod
from . import plots, spacecount
from .config import ConfigError, describe_defaults, load_config
from .exprtree import ArityError, Node, ParseError, parse, to_text
from .pool import PoolError

EXIT_PARSE = 2
EXIT_DATA = 3
EXIT_EVAL = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _parse_expr(text: str) -> Node:
    try:
        return parse(text)
    except ParseError as exc:
        click.echo(f"error: {exc}", err=True)
        click.echo(f"  {text}", err=True)
        click.echo(f"  {' ' * exc.pos}^", err=True)
        sys.exit(EXIT_PARSE)
    except ArityError as exc:
        _fail(EXIT_PARSE, str(exc))


def _load_panel(path: str):
    try:
        return marketdata.load_csv(path)
    except (OSError, marketdata.DataError) as exc:
        _fail(EXIT_DATA, str(exc))


def _load_cfg(path):
    try:
        return load_config(path)
    except (ConfigError, OSError) as exc:
        _fail(EXIT_PARSE, str(exc))


def _prepare_run_dir(out_dir: str, cfg) -> pathlib.Path:
    run = pathlib.Path(out_dir)
    run.mkdir(parents=True, exist_ok=True)
    (run / "resolved-config.ini").write_text(cfg.to_ini())
    (run / "versions.txt").write_text(
        f"alphaforge {__version__}\nnumpy {np.__version__}\n"
        f"python {sys.version.split()[0]}\n"
    )
    return run


def _build_grammar(cfg):
    level, max_length, b_ref = cfg.grammar_args()
    try:
        return gr.build_grammar(level, max_length, b_ref)
    except gr.GrammarError as exc:
        _fail(EXIT_PARSE, str(exc))


def _split_panels(cfg, panel):
    d = cfg.values["data"]
    train = marketdata.filter_days(
        panel, d["start"] or None, d["end"] or None
    )
    valid = None
    if d["valid_start"] or d["valid_end"]:
        valid = marketdata.filter_days(
            panel, d["valid_start"] or None, d["valid_end"] or None
        )
    return train, valid


common_options = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="INI config file; unset keys use documented defaults."),
    click.option("--seed", type=int, default=None,
                 help="Override the run.seed config key."),
    click.option("--out-dir", default="alphaforge-run", show_default=True,
                 help="Directory for reports, data files and figures."),
    click.option("--deterministic", is_flag=True,
                 help="Force single-leaf search batching for bit-stable "
                      "runs."),
]


def _with_common(fn):
    for opt in reversed(common_options):
        fn = opt(fn)
    return fn


@click.group(epilog="Config keys and defaults:\n\n" + describe_defaults())
@click.version_option(__version__)
def main():
    """Grammar-guided alpha factor mining toolkit."""


# ---------------------------------------------------------------------------
# mine / refine
# ---------------------------------------------------------------------------

def _mining_setup(config_path, seed, deterministic, data):
    cfg = _load_cfg(config_path)
    if seed is not None:
        cfg.values["run"]["seed"] = seed
    data_path = data or cfg.get("data", "csv_path")
    if not data_path:
        _fail(EXIT_DATA, "no data file given (use --data or data.csv_path)")
    panel = _load_panel(data_path)
    grammar = _build_grammar(cfg)
    net_cfg = cfg.net_config(grammar.num_actions)
    mcts_cfg = cfg.mcts_config(deterministic)
    miner_cfg = cfg.miner_config()
    return cfg, panel, grammar, net_cfg, mcts_cfg, miner_cfg


def _history_csv(history: list[dict]) -> str:
    cols = list(history[0].keys())
    lines = [",".join(cols)]
    lines += [",".join(str(row[c]) for c in cols) for row in history]
    return "\n".join(lines)


@main.command()
@_with_common
@click.option("--data", type=click.Path(), default=None,
              help="Panel CSV; overrides data.csv_path.")
def mine(config_path, seed, out_dir, deterministic, data):
    """Mine a factor pool from panel data."""
    cfg, panel, grammar, net_cfg, mcts_cfg, miner_cfg = _mining_setup(
        config_path, seed, deterministic, data
    )
    run = _prepare_run_dir(out_dir, cfg)
    horizon = cfg.get("target", "horizon")
    train, valid = _split_panels(cfg, panel)
    try:
        targets = marketdata.forward_return(train, horizon)
        valid_targets = (
            marketdata.forward_return(valid, horizon)
            if valid is not None else None
        )
        result = miner_mod.mine(
            train, targets, grammar, cfg.get("run", "seed"),
            net_cfg=net_cfg, mcts_cfg=mcts_cfg, cfg=miner_cfg,
            valid_panel=valid, valid_targets=valid_targets,
            on_epoch=lambda row: click.echo(
                f"epoch {row['epoch']}: pool={row['pool_size']} "
                f"train_ic={row['train_ic']:.4f} "
                f"valid_ic={row['valid_ic']:.4f}"
            ),
        )
    except (evaluator.EvalError, metrics.MetricsError, PoolError,
            ValueError) as exc:
        _fail(EXIT_EVAL, str(exc))
    result.pool.save(run / "pool.tsv")
    (run / "training.csv").write_text(_history_csv(result.history))
    if result.history:
        plots.render_training_curve(result.history, run / "training.png")
    from . import neural
    neural.save_params(result.params, run / "params.bin")
    click.echo(f"pool of {len(result.pool)} factors, "
               f"combined IC {result.pool.combined_ic:.4f}")
    click.echo(f"outputs in {run}")


@main.command()
@_with_common
@click.argument("expression")
@click.option("--data", type=click.Path(), default=None,
              help="Panel CSV; overrides data.csv_path.")
def refine(config_path, seed, out_dir, deterministic, expression, data):
    """Refine a seed factor by re-deriving its masked half."""
    cfg, panel, grammar, net_cfg, mcts_cfg, miner_cfg = _mining_setup(
        config_path, seed, deterministic, data
    )
    seed_expr = _parse_expr(expression)
    run = _prepare_run_dir(out_dir, cfg)
    horizon = cfg.get("target", "horizon")
    train, _ = _split_panels(cfg, panel)
    try:
        targets = marketdata.forward_return(train, horizon)
        result = miner_mod.refine(
            seed_expr, train, targets, grammar, cfg.get("run", "seed"),
            net_cfg=net_cfg, mcts_cfg=mcts_cfg, cfg=miner_cfg,
            on_epoch=lambda row: click.echo(
                f"epoch {row['epoch']}: best |IC| {row['best_ic']:.4f} "
                f"{row['best_expr']}"
            ),
        )
    except gr.GrammarError as exc:
        _fail(EXIT_PARSE, str(exc))
    except (evaluator.EvalError, metrics.MetricsError, ValueError) as exc:
        _fail(EXIT_EVAL, str(exc))
    (run / "refined.txt").write_text(
        f"seed\t{to_text(seed_expr)}\n"
        f"seed_abs_ic\t{result.seed_ic}\n"
        f"prefix\t{result.prefix}\n"
        f"refined\t{to_text(result.expr)}\n"
        f"refined_abs_ic\t{result.ic}\n"
    )
    if result.history:
        (run / "refine.csv").write_text(_history_csv(result.history))
        plots.render_training_curve(result.history, run / "refine.png")
    click.echo(f"seed |IC| {result.seed_ic}, refined |IC| {result.ic:.4f}")
    click.echo(f"refined factor: {to_text(result.expr)}")


# ---------------------------------------------------------------------------
# eval / backtest
# ---------------------------------------------------------------------------

@main.command("eval")
@click.argument("expression")
@click.argument("data_path", type=click.Path())
@click.option("--horizon", type=int, default=20, show_default=True,
              help="Forward-return horizon in trading days.")
def eval_cmd(expression, data_path, horizon):
    """Print IC, RankIC, ICIR, RankICIR for a factor expression."""
    expr = _parse_expr(expression)
    panel = _load_panel(data_path)
    try:
        targets = marketdata.forward_return(panel, horizon)
        scores = evaluator.evaluate(expr, panel)
        summary = metrics.ic_summary(scores, targets)
        if summary["ic"] is None:
            raise metrics.MetricsError("no day yields a defined IC")
    except (evaluator.EvalError, metrics.MetricsError, ValueError) as exc:
        _fail(EXIT_EVAL, str(exc))
    for key in ("ic", "rank_ic", "icir", "rank_icir"):
        val = summary[key]
        text = "undefined" if val is None else f"{val:.6f}"
        click.echo(f"{key}\t{text}")


@main.command()
@_with_common
@click.argument("expression")
@click.argument("data_path", type=click.Path())
def backtest(config_path, seed, out_dir, deterministic, expression,
             data_path):
    """Run the daily top-k/drop-n strategy on a factor's scores."""
    cfg = _load_cfg(config_path)
    expr = _parse_expr(expression)
    panel = _load_panel(data_path)
    run = _prepare_run_dir(out_dir, cfg)
    b = cfg.values["backtest"]
    horizon = cfg.get("target", "horizon")
    try:
        scores = evaluator.evaluate(expr, panel)
        targets = marketdata.forward_return(panel, horizon)
        report = metrics.backtest_topk(
            scores, panel["close"], b["k"], b["n"],
            fee_rate=b["fee_rate"], risk_free_daily=b["risk_free_daily"],
        )
        summary = metrics.ic_summary(scores, targets)
        report.ic = summary["ic"]
        report.rank_ic = summary["rank_ic"]
        report.icir = summary["icir"]
        report.rank_icir = summary["rank_icir"]
    except (evaluator.EvalError, metrics.MetricsError, ValueError) as exc:
        _fail(EXIT_EVAL, str(exc))
    (run / "report.txt").write_text(report.to_text() + "\n")
    (run / "nav.csv").write_text(report.nav_csv() + "\n")
    plots.render_nav(report.nav_series, run / "nav.png")
    click.echo(report.to_text())
    click.echo(f"outputs in {run}")


# ---------------------------------------------------------------------------
# count-space / gen-synth / grammar
# ---------------------------------------------------------------------------

@main.command("count-space")
@click.option("--grammar", "level", default="sem", show_default=True,
              type=click.Choice(["syn", "sem", "semk"]),
              help="Grammar level whose census seeds the counts.")
@click.option("--max-n", type=int, default=50, show_default=True)
@click.option("--k", type=int, default=None,
              help="Length bound for the truncated column.")
@click.option("--out-dir", default=None,
              help="Also write space.csv and space.png here.")
def count_space(level, max_n, k, out_dir):
    """Cumulative search-space sizes by expression length."""
    grammar = gr.build_grammar(
        level, max_length=k if level == "semk" else None
    )
    census = spacecount.GrammarCensus.from_grammar(grammar)
    if level == "semk" and k is None:
        k = 10
    rows = spacecount.cumulative_table(census, max_n, k=k)
    csv_text = spacecount.table_csv(rows)
    click.echo(csv_text)
    if out_dir is not None:
        run = pathlib.Path(out_dir)
        run.mkdir(parents=True, exist_ok=True)
        (run / "space.csv").write_text(csv_text + "\n")
        plots.render_space_growth(rows, run / "space.png")


@main.command("gen-synth")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--stocks", type=int, default=10, show_default=True)
@click.option("--days", type=int, default=300, show_default=True)
@click.option("--expr", default="Mean(close,20)", show_default=True,
              help="Planted factor expression.")
@click.option("--strength", type=float, default=0.9, show_default=True)
@click.option("--horizon", type=int, default=20, show_default=True)
@click.option("--out", type=click.Path(), required=True,
              help="Output CSV path.")
def gen_synth(seed, stocks, days, expr, strength, horizon, out):
    """Generate a synthetic market with a planted signal."""
    planted = _parse_expr(expr)
    try:
        panel, _ = marketdata.synth_market(
            seed, stocks, days, planted, strength, horizon=horizon
        )
    except (marketdata.DataError, evaluator.EvalError, ValueError) as exc:
        _fail(EXIT_DATA, str(exc))
    marketdata.save_csv(panel, out)
    click.echo(f"wrote {days} days x {stocks} stocks to {out}")


@main.group("grammar")
def grammar_group():
    """Grammar inspection."""


@grammar_group.command("dump")
@click.option("--level", default="semk", show_default=True,
              type=click.Choice(["syn", "sem", "semk"]))
@click.option("--max-length", type=int, default=10, show_default=True)
def grammar_dump(level, max_length):
    """Print the production-rule table (id, lhs, rhs, delta_k)."""
    try:
        grammar = gr.build_grammar(level, max_length)
    except gr.GrammarError as exc:
        _fail(EXIT_PARSE, str(exc))
    click.echo(grammar.dump())


if __name__ == "__main__":
    main()
