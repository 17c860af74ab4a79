"""Benchmark command-line interface.

Exit codes: 0 success, 2 configuration error, 3 divergence-dominated run
(more than half the trials aborted).
"""
from __future__ import annotations

import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bench import (ExperimentConfig, TuneSpace, default_tune_objective,
                    plot_data as reshape_plot_data, presets as get_preset,
                    run_trials, sweep as run_sweep, tuned_presets, tune as run_tune)
from .config_io import (ConfigError, config_from_dict, emit_config,
                        load_toml, sweep_from_dict)

EXIT_CONFIG = 2
EXIT_DIVERGED = 3


@click.group()
@click.version_option(__version__, prog_name="bench")
def main():
    """Decomposition benchmark for binding-based representations."""


def _load_config(path: str) -> ExperimentConfig:
    try:
        return config_from_dict(load_toml(path))
    except (ConfigError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _apply_overrides(cfg: ExperimentConfig, seed, trials) -> ExperimentConfig:
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    if trials is not None:
        cfg = replace(cfg, trials=int(trials))
    return cfg


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--threads", type=int, default=1)
@click.option("--out", type=click.Path(), default=None,
              help="Write per-trial records (JSONL) here.")
def run(config_path, seed, trials, threads, out):
    """Run one experiment config and print its summary."""
    cfg = _apply_overrides(_load_config(config_path), seed, trials)
    records, summary = run_trials(cfg, threads=threads)
    if out:
        with open(out, "w") as fh:
            for r in records:
                fh.write(json.dumps(r.to_dict()) + "\n")
    click.echo(f"solver={summary.solver} trials={summary.trials} "
               f"mean_accuracy={summary.mean_accuracy:.4f} "
               f"stderr={summary.stderr:.4f} diverged={summary.diverged} "
               f"mean_iterations={summary.mean_iterations:.1f}")
    if summary.diverged > summary.trials / 2:
        sys.exit(EXIT_DIVERGED)


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--threads", type=int, default=1)
@click.option("--out", type=click.Path(), default=".")
def sweep(spec_path, seed, trials, threads, out):
    """Run a sweep spec; writes summary CSV and per-trial JSONL."""
    try:
        spec = sweep_from_dict(load_toml(spec_path))
    except (ConfigError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    base = _apply_overrides(spec.base, seed, trials)
    spec = replace(spec, base=base)
    rows = run_sweep(spec, threads=threads, out_dir=out)
    for row in rows:
        click.echo(f"{row['sweep']}={row['axis_value']} {row['solver']}: "
                   f"{row['mean_accuracy']:.4f} ± {row['stderr']:.4f}")


@main.command()
@click.option("--space", "space_path", type=click.Path(exists=True), default=None,
              help="TOML/JSON with [tune] range overrides and optional "
                   "[objective] experiment sections.")
@click.option("--budget", type=int, required=True)
@click.option("--solver", type=str, default="similarity")
@click.option("--seed", type=int, default=0)
@click.option("--trials", type=int, default=None)
@click.option("--threads", type=int, default=1)
@click.option("--out", type=click.Path(), default="tuned.toml")
def tune(space_path, budget, solver, seed, trials, threads, out):
    """Random-search the solver tunables; writes the best config as TOML."""
    space = TuneSpace()
    objective = None
    if space_path is not None:
        try:
            tree = load_toml(space_path)
            ranges = tree.pop("tune", {})
            space = TuneSpace(**{k: tuple(v) if isinstance(v, list) else v
                                 for k, v in ranges.items()})
            if tree:
                objective = config_from_dict(tree)
        except (ConfigError, TypeError, OSError) as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
    if objective is None:
        objective = default_tune_objective(solver)
    if trials is not None:
        objective = replace(objective, trials=trials)
    log_path = Path(out).with_suffix(".log.jsonl")
    log_path.unlink(missing_ok=True)
    t0 = time.time()
    best, log = run_tune(space, budget, objective, seed=seed, threads=threads,
                         log_path=log_path)
    best_acc = max(e["accuracy"] for e in log)
    Path(out).write_text(emit_config(best))
    click.echo(f"evaluated {len(log)} configs in {time.time()-t0:.0f}s; "
               f"best validation accuracy {best_acc:.4f}; wrote {out}")


@main.command()
@click.argument("name")
@click.option("--emit", is_flag=True, help="Print the full config as TOML.")
@click.option("--tuned", is_flag=True,
              help="Use the shipped re-tuned operating point.")
@click.option("--out", type=click.Path(), default=None)
def preset(name, emit, tuned, out):
    """Show or emit a named solver preset."""
    try:
        cfg = tuned_presets(name) if tuned else get_preset(name)
    except KeyError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    text = emit_config(cfg)
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    elif emit:
        click.echo(text)
    else:
        s = cfg.sampler
        click.echo(f"{name}: T={s.steps} R={s.restarts} rho={s.restart_ratio} "
                   f"eta={cfg.coupling.eta} schedule={cfg.coupling.guidance_schedule} "
                   f"clip={cfg.coupling.cond_clip_ratio} "
                   f"sigma0={cfg.schedule.sigma0} temp={cfg.prior.softmax_temp} "
                   f"lambda={cfg.coupling.reg_lambda}")


@main.command("plot-data")
@click.argument("results", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
def plot_data_cmd(results, out):
    """Reshape a sweep summary CSV into figure-ready long format."""
    rows = reshape_plot_data(results, out)
    if out:
        click.echo(f"wrote {out} ({len(rows)} rows)")
    else:
        for r in rows[:20]:
            click.echo(f"{r['axis_value']},{r['solver']},{r['metric']},{r['value']}")


@main.command()
@click.option("--dim", type=int, default=1000)
@click.option("--size", type=int, default=64)
@click.option("--repeats", type=int, default=200)
def kernels(dim, size, repeats):
    """Benchmark the compiled kernel backend against the numpy fallback."""
    from . import _kernels

    rng = np.random.default_rng(0)
    centers = rng.choice((-1.0, 1.0), size=(dim, size))
    state = rng.standard_normal(dim)
    offs = np.zeros(size)
    vec = rng.standard_normal(dim)

    backends = ["python"]
    try:
        _kernels.use_backend("compiled")
        backends.append("compiled")
    except ValueError:
        click.echo("compiled backend unavailable; showing python only")

    cases = {
        "mixture_softmax": lambda: _kernels.mixture_softmax(centers, state, 0.01, offs),
        "jacobian_apply": lambda: _kernels.softmax_jacobian_apply(
            centers, np.full(size, 1.0 / size), vec, 0.5, 0.1),
        "autoassoc_sign": lambda: _kernels.autoassoc_sign(centers, vec),
    }
    click.echo(f"kernel timings (dim={dim}, size={size}, {repeats} calls):")
    times: dict[tuple[str, str], float] = {}
    for backend in backends:
        _kernels.use_backend(backend)
        for label, fn in cases.items():
            fn()
            t0 = time.perf_counter()
            for _ in range(repeats):
                fn()
            dt = (time.perf_counter() - t0) / repeats
            times[(label, backend)] = dt
            click.echo(f"  {label:18s} {backend:9s} {dt*1e6:9.1f} us/call")
    if "compiled" in backends:
        for label in cases:
            ratio = times[(label, "python")] / times[(label, "compiled")]
            click.echo(f"  {label:18s} speedup x{ratio:.2f}")
    _kernels.use_backend(backends[-1])


if __name__ == "__main__":
    main()
