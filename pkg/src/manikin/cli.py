"""Command-line interface: run, serve, replay, verify, bench."""

from __future__ import annotations

import json
import sys

import click

from manikin import backend
from manikin.errors import ManikinError


@click.group()
@click.version_option(package_name="manikin")
def main():
    """Passive-control simulation engine for articulated virtual humans."""


def _load(scenario, set_overrides):
    from manikin.scenario import bundled_scenario_path, load_scenario
    import os

    path = scenario
    if not os.path.exists(path) and not path.endswith(".json"):
        bundled = bundled_scenario_path(path)
        if os.path.exists(bundled):
            path = bundled
    return load_scenario(path, set_overrides)


@main.command()
@click.argument("scenario")
@click.option("--out", type=click.Path(), default=None, help="Write the CSV trace here.")
@click.option("--set", "set_", multiple=True, metavar="KEY=VALUE",
              help="Override a scenario field (dotted path, JSON value).")
@click.option("--summary-json", is_flag=True, help="Print the summary as JSON.")
def run(scenario, out, set_, summary_json):
    """Run SCENARIO (a file path or a bundled name) to completion."""
    from manikin.world import run_scenario

    try:
        summary = run_scenario(_load(scenario, set_), out=out)
    except ManikinError as err:
        raise click.ClickException(str(err))
    summary.pop("_world", None)
    if summary_json:
        click.echo(json.dumps(summary, indent=1))
    else:
        for key, value in summary.items():
            click.echo(f"{key}: {value}")
    if out:
        click.echo(f"trace written to {out}")


@main.command()
@click.argument("scenario")
@click.option("--addr", default="127.0.0.1:8700", metavar="HOST:PORT")
@click.option("--speed", default=1.0, show_default=True,
              help="Pacing factor; 0 runs as fast as possible.")
@click.option("--record", type=click.Path(), default=None,
              help="Write the session command log (JSONL) here.")
@click.option("--out", type=click.Path(), default=None, help="Write the CSV trace here.")
@click.option("--set", "set_", multiple=True, metavar="KEY=VALUE")
def serve(scenario, addr, speed, record, out, set_):
    """Serve SCENARIO live over a WebSocket for the cockpit."""
    from manikin.server import serve_scenario

    host, _, port = addr.partition(":")
    try:
        summary = serve_scenario(
            _load(scenario, set_), host=host or "127.0.0.1",
            port=int(port or 8700), speed=speed, record=record, trace_out=out,
        )
    except ManikinError as err:
        raise click.ClickException(str(err))
    for key, value in summary.items():
        click.echo(f"{key}: {value}")


@main.command()
@click.argument("scenario")
@click.argument("session", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="Write the CSV trace here.")
@click.option("--set", "set_", multiple=True, metavar="KEY=VALUE")
def replay(scenario, session, out, set_):
    """Re-run a recorded live SESSION of SCENARIO headlessly."""
    from manikin.server import replay as replay_session

    try:
        summary = replay_session(_load(scenario, set_), session, out=out)
    except ManikinError as err:
        raise click.ClickException(str(err))
    summary.pop("_world", None)
    for key, value in summary.items():
        click.echo(f"{key}: {value}")


@main.command()
@click.option("--only", multiple=True, type=int, help="Run only these criterion numbers.")
def verify(only):
    """Run the acceptance suite on the bundled scenarios."""
    from manikin.acceptance import run_all

    click.echo(f"backend: {backend.active_name()}")
    results = run_all(indices=set(only) or None, echo=click.echo)
    failed = [r for r in results if not r.passed]
    click.echo(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    sys.exit(1 if failed else 0)


@main.command()
@click.option("--scenario", default="drill_guided", show_default=True)
@click.option("--steps", default=500, show_default=True)
@click.option("--repeats", default=3, show_default=True)
def bench(scenario, steps, repeats):
    """Compare per-step cost of the compiled and pure-python kernel backends."""
    import time

    from manikin.world import World

    scn = _load(scenario, ())
    rows = []
    for name in backend.available():
        backend.use(name)
        best = None
        for _ in range(repeats):
            world = World(scn)
            t0 = time.perf_counter()
            world.run(min(steps, world.n_steps_total))
            dt = (time.perf_counter() - t0) / world.step_index
            best = dt if best is None else min(best, dt)
        rows.append((name, best * 1e3))
    click.echo(f"scenario {scn.name}: {min(steps, int(round(scn.duration / scn.dt)))} steps, "
               f"best of {repeats}")
    base = dict(rows).get("python")
    for name, ms in rows:
        note = ""
        if base and name != "python":
            note = f"  ({base / ms:.2f}x vs python)"
        click.echo(f"  {name:>8}: {ms:.3f} ms/step{note}")


if __name__ == "__main__":
    main()
