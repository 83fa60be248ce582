"""Command-line interface: train, generate, evaluate, motifs, stats and run."""

import functools
import time
from pathlib import Path
from typing import Any, Optional

import click

from src.checkpoint import load_checkpoint, save_checkpoint
from src.errors import ConfigError, ShapeError, TempographError
from src.generator import attachment_for, generate_ba, generate_er, generate_tgae
from src.logging_config import logger
from src.model import train
from src.motifs import count_temporal_motifs
from src.reports import evaluate_graphs, write_loss_history, write_motifs, write_report, write_series
from src.rng import RandomStreams
from src.settings import DEFAULT_THREADS, RunConfig, dump_run_config, load_run_config
from src.tgraph import (
    EdgeListIndex,
    TemporalGraph,
    compact_edge_list,
    load_edge_list,
    parse_edge_list,
    write_edge_list,
)

GENERATOR_HEADER = "# generator="


def handle_errors(command):
    """Turns library errors into their exit codes."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return command(*args, **kwargs)
        except TempographError as e:
            logger.error("%s failed: %s", ctx.info_name, e)
            click.echo(f"Error: {e}", err=True)
            ctx.exit(e.exit_code)

    return wrapper


def _threads(ctx: click.Context, config: Optional[RunConfig] = None) -> int:
    if ctx.obj.get("threads"):
        return ctx.obj["threads"]
    return config.threads if config is not None else DEFAULT_THREADS


def _load_graph(path: Path, binning: Optional[int] = None, indexed: bool = False) -> TemporalGraph:
    return load_edge_list(path, binning=binning, compact=not indexed)


def _load_generated(path: Path, index: EdgeListIndex) -> TemporalGraph:
    """Reads a generated edge list: tempograph output as written, anything else
    through the original's id and timestamp mapping."""
    text = path.read_text(encoding="utf-8")
    if any(line.startswith(GENERATOR_HEADER) for line in text.splitlines()):
        return parse_edge_list(text, compact=False)
    logger.info("%s has no generator header, mapping it like the original", path)
    return compact_edge_list(text, index=index)[0]


def _align(g: TemporalGraph, reference: TemporalGraph) -> TemporalGraph:
    """Re-declares a generated graph on the reference's node and timestamp range."""
    if g.T > reference.T:
        logger.error("Generated graph has %d snapshots, original has %d", g.T, reference.T)
        raise ShapeError(f"generated graph has {g.T} snapshots, original has {reference.T}")
    if (g.n, g.T) == (reference.n, reference.T):
        return g
    return TemporalGraph(max(g.n, reference.n), reference.T, g.edges)


def _sample_path(out: Path, sample: int, samples: int) -> Path:
    if samples == 1:
        return out
    return out.with_name(f"{out.stem}_{sample}{out.suffix}")


def _overrides(**flags: Any) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    for key, value in flags.items():
        if value is None:
            continue
        section, _, name = key.partition("__")
        if name:
            overrides.setdefault(section, {})[name] = value
        else:
            overrides[key] = value
    return overrides


@click.group()
@click.option("--threads", type=click.IntRange(min=1), envvar="TEMPOGRAPH_THREADS", help="Worker cap.")
@click.option("--verbose", "-v", is_flag=True, help="Log debug detail.")
@click.pass_context
def cli(ctx: click.Context, threads: Optional[int], verbose: bool):
    """Learn temporal graph autoencoders, generate graphs and evaluate them."""
    ctx.ensure_object(dict)
    ctx.obj["threads"] = threads
    if verbose:
        logger.setLevel("DEBUG")


def run_options(command):
    for option in reversed(
        [
            click.option("--config", "-c", type=click.Path(path_type=Path), help="TOML run configuration."),
            click.option("--dataset", type=click.Path(path_type=Path), help="Edge-list file."),
            click.option("--seed", type=int, help="Root random seed."),
            click.option("--out-dir", type=click.Path(path_type=Path), help="Output directory."),
            click.option("--epochs", type=int, help="Training epochs."),
            click.option("--binning", type=click.IntRange(min=1), help="Equal-width snapshot bins."),
        ]
    ):
        command = option(command)
    return command


def _resolve(config, dataset, seed, out_dir, epochs, binning) -> RunConfig:
    return load_run_config(
        config,
        _overrides(dataset=dataset, seed=seed, out_dir=out_dir, binning=binning, train__epochs=epochs),
    )


def _train(cfg: RunConfig, threads: int) -> tuple[TemporalGraph, Any]:
    g = _load_graph(cfg.dataset, cfg.binning)
    started = time.perf_counter()
    result = train(g, cfg.model, cfg.variant, cfg.train, cfg.seed, threads)
    logger.info("train stage took %.2fs", time.perf_counter() - started)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.model, out / "checkpoint.tgae", cfg.seed)
    write_loss_history(result.history, out / "loss.csv", cfg.seed)
    (out / "resolved_config.toml").write_text(dump_run_config(cfg), encoding="utf-8")
    return g, result


@cli.command("train")
@run_options
@click.pass_context
@handle_errors
def train_command(ctx, config, dataset, seed, out_dir, epochs, binning):
    """Train a model and write checkpoint.tgae, loss.csv and resolved_config.toml."""
    cfg = _resolve(config, dataset, seed, out_dir, epochs, binning)
    _, result = _train(cfg, _threads(ctx, cfg))
    click.echo(f"Trained {len(result.history)} epochs, final loss {result.history[-1].loss:.6f}")


@cli.command("generate")
@click.option("--checkpoint", type=click.Path(path_type=Path), help="Trained model (tgae only).")
@click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output edge-list file.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--samples", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--baseline", type=click.Choice(["tgae", "er", "ba"]), default="tgae", show_default=True)
@click.option("--binning", type=click.IntRange(min=1))
@click.option("--passes", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--widen", is_flag=True, help="Score all nodes instead of the temporal neighborhood.")
@click.option("--m-attach", type=click.IntRange(min=1), help="B-A attachment count.")
@click.pass_context
@handle_errors
def generate_command(ctx, checkpoint, dataset, out, seed, samples, baseline, binning, passes, widen, m_attach):
    """Generate temporal graphs with exactly as many edges as DATASET."""
    g = _load_graph(dataset, binning)
    written = generate_graphs(
        g, out, seed, samples, baseline, checkpoint, passes, widen, m_attach, _threads(ctx)
    )
    for path in written:
        click.echo(str(path))


def generate_graphs(
    g: TemporalGraph,
    out: Path,
    seed: int,
    samples: int,
    baseline: str = "tgae",
    checkpoint: Optional[Path] = None,
    passes: int = 1,
    widen: bool = False,
    m_attach: Optional[int] = None,
    threads: int = 1,
    model=None,
    batch_size: int = 256,
) -> list[Path]:
    streams = RandomStreams(seed)
    if baseline == "tgae" and model is None:
        if checkpoint is None:
            raise ConfigError("--checkpoint is required for the tgae generator")
        model = load_checkpoint(checkpoint).model
    if model is not None and (model.n, model.T) != (g.n, g.T):
        logger.error("Checkpoint shape n=%d, T=%d does not match dataset n=%d, T=%d", model.n, model.T, g.n, g.T)
        raise ConfigError(f"checkpoint was trained on n={model.n}, T={model.T}; dataset has n={g.n}, T={g.T}")
    if baseline == "ba" and m_attach is None:
        m_attach = attachment_for(g)

    started = time.perf_counter()
    paths = []
    for sample in range(samples):
        if baseline == "er":
            generated = generate_er(g.n, g.snapshot_edge_counts(), streams, sample)
        elif baseline == "ba":
            generated = generate_ba(g.n, m_attach, g.T, streams, sample)
        else:
            generated = generate_tgae(model, g, streams, passes, sample, widen, batch_size, threads)
        path = _sample_path(Path(out), sample, samples)
        write_edge_list(generated, path, header=[f"seed={seed}", f"sample={sample}", f"generator={baseline}"])
        paths.append(path)
    logger.info("generate stage took %.2fs", time.perf_counter() - started)
    return paths


@cli.command("evaluate")
@click.argument("original", type=click.Path(exists=True, path_type=Path))
@click.argument("generated", nargs=-1, required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out-dir", type=click.Path(path_type=Path), default=Path("report"), show_default=True)
@click.option("--delta", type=click.IntRange(min=0), help="Motif window (default ceil(T/10)).")
@click.option("--sigma-k", type=click.FloatRange(min=0, min_open=True), default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed recorded in the report.")
@click.option("--binning", type=click.IntRange(min=1))
@click.pass_context
@handle_errors
def evaluate_command(ctx, original, generated, out_dir, delta, sigma_k, seed, binning):
    """Compare GENERATED edge lists against ORIGINAL."""
    with open(original, encoding="utf-8") as handle:
        g, index = compact_edge_list(handle, binning)
    others = [_align(_load_generated(path, index), g) for path in generated]
    report = evaluate_graphs(g, others, delta, sigma_k, seed, _threads(ctx))
    path = write_report(report, out_dir)
    click.echo(str(path))


@cli.command("motifs")
@click.argument("graph", type=click.Path(exists=True, path_type=Path))
@click.option("--delta", type=click.IntRange(min=0))
@click.option("--out", type=click.Path(path_type=Path), default=Path("motifs.csv"), show_default=True)
@click.option("--indexed", is_flag=True, help="Keep node ids and timestamp indices as written.")
@click.option("--binning", type=click.IntRange(min=1))
@click.pass_context
@handle_errors
def motifs_command(ctx, graph, delta, out, indexed, binning):
    """Write the 36-class temporal motif histogram of GRAPH."""
    g = _load_graph(graph, binning, indexed)
    histogram = count_temporal_motifs(g, delta, _threads(ctx))
    write_motifs(histogram, out)
    click.echo(f"{histogram.total} motif instances (delta={histogram.delta}) -> {out}")


@cli.command("stats")
@click.argument("graph", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=Path("stats.csv"), show_default=True)
@click.option("--indexed", is_flag=True, help="Keep node ids and timestamp indices as written.")
@click.option("--binning", type=click.IntRange(min=1))
@handle_errors
def stats_command(graph, out, indexed, binning):
    """Write the snapshot statistic series of GRAPH."""
    g = _load_graph(graph, binning, indexed)
    write_series(g, out)
    click.echo(str(out))


@cli.command("run")
@run_options
@click.pass_context
@handle_errors
def run_command(ctx, config, dataset, seed, out_dir, epochs, binning):
    """Train, generate and evaluate in one go from a single configuration."""
    cfg = _resolve(config, dataset, seed, out_dir, epochs, binning)
    threads = _threads(ctx, cfg)
    g, result = _train(cfg, threads)
    out = Path(cfg.out_dir)
    paths = generate_graphs(
        g,
        out / "generated.txt",
        cfg.seed,
        cfg.generate.samples,
        passes=cfg.generate.passes,
        widen=cfg.generate.widen,
        threads=threads,
        model=result.model,
        batch_size=cfg.generate.batch_size,
    )
    generated = [_align(_load_graph(path, indexed=True), g) for path in paths]
    report = evaluate_graphs(g, generated, cfg.evaluate.delta, cfg.evaluate.sigma_k, cfg.seed, threads)
    click.echo(str(write_report(report, out)))
