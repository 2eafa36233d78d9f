"""Command-line front end.

Exit codes: 0 success, 2 invalid configuration or usage, 3 runtime failure,
4 a self-test check failed.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import ConfigError, ExperimentConfig, default_config
from .tagfile import TagFileError
from .tagstream import StreamError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 2, 3, 4


def _load(config, mode, seed, **extra) -> ExperimentConfig:
    if config:
        overrides = {"mode": mode, "seed": seed, **extra}
        return ExperimentConfig.load(config, **overrides)
    base = default_config(mode or "remote")
    changes = {k: v for k, v in {"seed": seed, **extra}.items() if v is not None}
    return base.replace(**changes).validate()


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def _guard(fn):
    """Map library errors onto exit codes."""
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(str(exc), err=True)
            sys.exit(EXIT_CONFIG)
        except (TagFileError, StreamError, OSError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


common = [
    click.option("--config", type=click.Path(exists=True, dir_okay=False), help="key = value scenario file"),
    click.option("--mode", type=click.Choice(["local", "remote"]), default=None),
    click.option("--seed", type=int, default=None),
    click.option("--out", type=click.Path(dir_okay=False), default=None, help="write output here instead of stdout"),
]


def with_common(fn):
    for opt in reversed(common):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Simulate and analyze entanglement swapping over a lossy free-space link."""


@main.command()
@with_common
@click.option("--duration", type=float, default=None, help="override duration_s")
@click.option("--export-tags", "export_dir", type=click.Path(file_okay=False), default=None,
              help="also write lapalma.swtg and tenerife.swtg here")
@click.option("--print-config", is_flag=True, help="print the resolved configuration and exit")
@_guard
def run(config, mode, seed, out, duration, export_dir, print_config):
    """Simulate a scenario and print its report."""
    from .pipeline import run as run_pipeline

    cfg = _load(config, mode, seed, duration_s=duration)
    if print_config:
        _emit(cfg.to_text(), out)
        return
    _emit(run_pipeline(cfg, export_dir).to_text(), out)


def _floats(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}")


@main.command()
@with_common
@click.option("--delta-l", default="0,0.05,0.1,0.15,0.2,0.25,0.3", help="path-length mismatches in mm")
@click.option("--rates", default="15000,60000,130000,240000", help="2-fold rates in Hz")
@_guard
def sweep(config, mode, seed, out, delta_l, rates):
    """Visibility over a path-length mismatch x 2-fold rate grid."""
    from .pipeline import sweep as run_sweep

    cfg = _load(config, mode or "local", seed)
    _emit(run_sweep(cfg, _floats(delta_l), _floats(rates)).to_text(), out)


@main.command()
@with_common
@click.argument("lapalma", type=click.Path(exists=True, dir_okay=False))
@click.argument("tenerife", type=click.Path(exists=True, dir_okay=False))
@_guard
def analyze(config, mode, seed, out, lapalma, tenerife):
    """Extract swap events from two tag files and print the report."""
    from .pipeline import analyze as run_analyze

    cfg = _load(config, mode, seed)
    _emit(run_analyze(cfg, lapalma, tenerife).to_text(), out)


@main.command()
@with_common
@_guard
def selftest(config, mode, seed, out):
    """Run the built-in invariant checks."""
    from .selftest import run_checks

    results = run_checks(seed if seed is not None else 1)
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}  {detail}" for name, ok, detail in results]
    _emit("\n".join(lines) + "\n", out)
    if not all(ok for _, ok, _ in results):
        sys.exit(EXIT_CHECK)


if __name__ == "__main__":
    main()
