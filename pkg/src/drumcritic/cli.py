"""Operator command line: serve the API, run proxy simulations, rank loops
with critic ensembles, and export session audio."""

import os

# small-matrix workloads: multithreaded BLAS only adds sync overhead, and
# single-threaded kernels keep results bitwise reproducible
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import json
import sys
import time
from multiprocessing import Pool, cpu_count
from pathlib import Path

import click


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _load_service_config(config_path, default_simulation=False):
    from .config import ServiceConfig, load_config, simulation_session_config

    if config_path is not None:
        return load_config(config_path)
    if default_simulation:
        return ServiceConfig(session=simulation_session_config())
    return load_config(None)


def _resolve_library(library_opt, cfg):
    """Library from --library, then config, then a generated demo set."""
    from .audio import load_library
    from .demolib import make_demo_library

    if library_opt:
        return load_library(library_opt)
    if cfg.library_dir:
        return load_library(cfg.library_dir)
    demo_dir = Path(cfg.data_dir) / "demo-samples"
    if not demo_dir.is_dir() or not any(demo_dir.glob("*.wav")):
        click.echo(f"no sample library configured; writing demo one-shots to {demo_dir}", err=True)
        make_demo_library(demo_dir)
    return load_library(demo_dir)


@click.group()
def main():
    """Interactive drum-loop generation with a per-user learned critic."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), help="flat key=value config file")
@click.option("--library", "library_opt", type=click.Path(), help="sample directory override")
def serve(config_path, library_opt):
    """Run the HTTP session API (and the client bundle, when configured)."""
    import uvicorn

    from .config import dump_config
    from .service import create_app

    try:
        cfg = _load_service_config(config_path)
        if library_opt:
            from dataclasses import replace

            cfg = replace(cfg, library_dir=str(library_opt))
        if not cfg.library_dir:
            library = _resolve_library(None, cfg)
            from dataclasses import replace

            cfg = replace(cfg, library_dir=str(library.directory))
        app = create_app(cfg)
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"serving on http://{cfg.host}:{cfg.port}  (library: {cfg.library_dir})")
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")


def _simulate_worker(payload):
    from .audio import load_library
    from .config import parse_config, simulation_session_config
    from .simulate import make_proxy, simulate_session

    config_text, library_dir, proxy_spec, seed = payload
    if config_text is None:
        session_config = simulation_session_config()
    else:
        session_config = parse_config(config_text).session
    library = load_library(library_dir)
    proxy = make_proxy(**proxy_spec)
    t0 = time.perf_counter()
    session = simulate_session(proxy, session_config, seed, library)
    result = session.compute_results()
    phase2 = [
        {
            "source": e.source_model,
            "score": e.score,
            "fallback": e.fallback,
        }
        for lid in session.queue
        for e in [session.loops[lid]]
    ]
    return {
        "seed": seed,
        "theta_init": result.theta_init,
        "theta_final": result.theta_final,
        "delta_theta": result.delta_theta,
        "phase1_likes": sum(
            1 for r in session.ratings if r.phase == "I" and r.rating == "like"
        ),
        "phase2": phase2,
        "seconds": time.perf_counter() - t0,
    }


@main.command()
@click.option("--proxy", "proxy_name", default="density",
              type=click.Choice(["density", "always_like", "always_dislike"]))
@click.option("--seeds", default=5, show_default=True, help="number of sessions (seeds base..base+n-1)")
@click.option("--base-seed", default=1, show_default=True)
@click.option("--min-hits", default=4, show_default=True)
@click.option("--max-hits", default=12, show_default=True)
@click.option("--blacklist", default="", help="comma-separated sample ids the proxy rejects")
@click.option("--config", "config_path", type=click.Path(), help="config file (defaults to the simulation profile)")
@click.option("--library", "library_opt", type=click.Path(), help="sample directory override")
@click.option("--jobs", default=0, help="parallel sessions (0 = min(seeds, cpus))")
@click.option("--json", "json_out", type=click.Path(), help="also write results as JSON")
def simulate(proxy_name, seeds, base_seed, min_hits, max_hits, blacklist, config_path,
             library_opt, jobs, json_out):
    """Run the full 80+60 protocol with a proxy rater, once per seed."""
    try:
        cfg = _load_service_config(config_path, default_simulation=True)
        library = _resolve_library(library_opt, cfg)
    except Exception as exc:
        _fail(str(exc))

    config_text = Path(config_path).read_text() if config_path else None
    proxy_spec = {"name": proxy_name}
    if proxy_name == "density":
        proxy_spec.update(
            min_hits=min_hits,
            max_hits=max_hits,
            blacklist=tuple(s.strip() for s in blacklist.split(",") if s.strip()),
        )
    seed_list = [base_seed + i for i in range(seeds)]
    payloads = [(config_text, str(library.directory), proxy_spec, s) for s in seed_list]
    jobs = jobs or min(len(seed_list), max(1, cpu_count()))
    t0 = time.perf_counter()
    if jobs > 1 and len(seed_list) > 1:
        with Pool(processes=jobs) as pool:
            rows = pool.map(_simulate_worker, payloads)
    else:
        rows = [_simulate_worker(p) for p in payloads]
    wall = time.perf_counter() - t0

    from .session import ExperimentResult
    from .simulate import summarize_results

    results = [ExperimentResult(r["theta_init"], r["theta_final"], r["delta_theta"]) for r in rows]
    summary = summarize_results(results)
    click.echo(f"{'seed':>6} {'theta_init':>11} {'theta_final':>12} {'delta_theta':>12} "
               f"{'p1_likes':>9} {'p2_fallback':>12} {'time':>8}")
    for r in rows:
        fallback = sum(1 for e in r["phase2"] if e["fallback"])
        click.echo(f"{r['seed']:>6} {r['theta_init']:>11.3f} {r['theta_final']:>12.3f} "
                   f"{r['delta_theta']:>+12.3f} {r['phase1_likes']:>9} "
                   f"{fallback:>9}/{len(r['phase2'])} {r['seconds']:>7.0f}s")
    click.echo(
        f"aggregate: median dTheta {summary['median_delta_theta']:+.3f}, "
        f"mean {summary['mean_theta_init']:.3f} -> {summary['mean_theta_final']:.3f}, "
        f"improved {int(summary['fraction_improved'] * len(rows))}/{len(rows)}, "
        f"wall {wall:.0f}s"
    )
    blob = {"runs": rows, "summary": summary, "wall_seconds": wall}
    click.echo(json.dumps(blob["summary"]))
    if json_out:
        Path(json_out).write_text(json.dumps(blob, indent=1))


@main.command()
@click.option("--checkpoints", "ckpt_dir", required=True, type=click.Path(exists=True),
              help="directory of *.ckpt critic checkpoints")
@click.option("--loops", "loops_path", required=True, type=click.Path(exists=True),
              help="loops.json file or directory of loop-record JSON files")
@click.option("--library", "library_opt", type=click.Path(), required=True)
@click.option("--top", default=5, show_default=True)
@click.option("--bottom", default=5, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default="./ranked", show_default=True)
def rank(ckpt_dir, loops_path, library_opt, top, bottom, out_dir):
    """Rank loops by mean critic-ensemble score; export the extremes as WAV."""
    from .audio import encode_wav, load_library, render_bar
    from .critic import load_checkpoint
    from .patterns import record_to_loop
    from .session import ensemble_rank

    try:
        library = load_library(library_opt)
        critics = [load_checkpoint(p.read_bytes()) for p in sorted(Path(ckpt_dir).glob("*.ckpt"))]
        if not critics:
            raise ValueError(f"no *.ckpt files in {ckpt_dir}")
        loops_path = Path(loops_path)
        records = []
        if loops_path.is_dir():
            for p in sorted(loops_path.glob("*.json")):
                blob = json.loads(p.read_text())
                records.extend(blob if isinstance(blob, list) else [blob])
        else:
            blob = json.loads(loops_path.read_text())
            records = blob if isinstance(blob, list) else [blob]
        loops = [record_to_loop(r) for r in records]
        if not loops:
            raise ValueError("no loop records found")
        ranked = ensemble_rank(critics, loops, library)
    except Exception as exc:
        _fail(str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(ranked)
    click.echo(f"{n} loops ranked by {len(critics)} critics")
    chosen = [("best", i, ranked[i]) for i in range(min(top, n))]
    chosen += [("worst", i, ranked[n - 1 - i]) for i in range(min(bottom, n))]
    for kind, i, (loop, mean) in chosen:
        name = f"{kind}{i + 1:02d}_{loop.id[:12]}.wav"
        (out / name).write_bytes(encode_wav(render_bar(loop, library)))
        click.echo(f"{kind}{i + 1:>2} score {mean:.4f} -> {name}")


@main.command()
@click.option("--session", "session_dir", required=True, type=click.Path(exists=True))
@click.option("--library", "library_opt", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="defaults to <session>/audio-export")
def export(session_dir, library_opt, out_dir):
    """Re-render every loop of a persisted session to WAV files."""
    from .audio import encode_wav, load_library, render_bar
    from .patterns import record_to_loop

    try:
        library = load_library(library_opt)
        records = json.loads((Path(session_dir) / "loops.json").read_text())
    except Exception as exc:
        _fail(str(exc))
    out = Path(out_dir) if out_dir else Path(session_dir) / "audio-export"
    out.mkdir(parents=True, exist_ok=True)
    for record in records:
        loop = record_to_loop(record)
        (out / f"{loop.id}.wav").write_bytes(encode_wav(render_bar(loop, library)))
    click.echo(f"exported {len(records)} loops to {out}")


@main.group()
def config():
    """Configuration inspection."""


@config.command("dump")
@click.option("--config", "config_path", type=click.Path(), help="file to resolve (else defaults)")
@click.option("--profile", type=click.Choice(["serve", "simulation"]), default="serve",
              show_default=True, help="which built-in defaults to show when no file is given")
def config_dump(config_path, profile):
    """Print the fully-resolved configuration in the accepted format."""
    from .config import dump_config

    try:
        cfg = _load_service_config(config_path, default_simulation=(profile == "simulation"))
    except Exception as exc:
        _fail(str(exc))
    click.echo(dump_config(cfg), nl=False)


@main.command("demo-library")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=2024, show_default=True)
def demo_library(out_dir, seed):
    """Synthesize the bundled demo one-shot collection into a directory."""
    from .demolib import make_demo_library

    ids = make_demo_library(out_dir, seed=seed)
    click.echo(f"wrote {len(ids)} samples to {out_dir}")


if __name__ == "__main__":
    main()
