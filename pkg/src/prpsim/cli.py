"""Command line: ``prpsim run | analyze | compare``."""

from __future__ import annotations

import logging
import sys

import click

from .core import parse_duration
from .mac import ConfigError
from .runner import analyze, compare, run_scenario
from .scenario import load_config
from .trace import TraceError


class Duration(click.ParamType):
    name = "duration"

    def convert(self, value, param, ctx):
        try:
            return parse_duration(value)
        except ValueError as e:
            self.fail(str(e), param, ctx)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Simulate and analyse redundant Wi-Fi links."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
              help="Scenario YAML, or a manifest.json from an earlier run.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--duration", type=Duration(), default=None, help="Override the run duration, e.g. 10min.")
def run(config_path, out_dir, seed, duration):
    """Simulate a scenario and write traces, summary and manifest."""
    scenario = load_config(config_path, seed=seed, duration=duration)
    out = run_scenario(scenario, out_dir)
    click.echo((out_dir.rstrip("/") + "/summary.txt") + " written")


@cli.command(name="analyze")
@click.argument("traces", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Report directory.")
@click.option("--tau", type=Duration(), default=None, help="Joint-tail threshold (default 5ms).")
@click.option("--bin-width", type=Duration(), default=None, help="PDF bin width (default 1us).")
def analyze_cmd(traces, out_dir, tau, bin_width):
    """Summaries, CCDF/PDF curves and, for two channel traces, independence."""
    analyze(traces, out_dir, tau=tau, bin_width=bin_width)
    with open(f"{out_dir}/report.txt") as fh:
        click.echo(fh.read(), nl=False)


@cli.command(name="compare")
@click.argument("trace_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("trace_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False), help="Also write compare.txt here.")
def compare_cmd(trace_a, trace_b, out_dir):
    """Side-by-side statistics of two traces."""
    click.echo(compare(trace_a, trace_b, out_dir), nl=False)


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="prpsim", standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except (ConfigError, TraceError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    except ValueError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    sys.exit(0)
