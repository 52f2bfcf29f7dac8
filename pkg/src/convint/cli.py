"""Thin command-line shell over the harness backends."""

import sys

import click

from . import harness


def _load_config(config, preset, seed, out, tolerance, q_max=None):
    if (config is None) == (preset is None):
        raise click.UsageError("give exactly one of --config or --preset")
    cfg = harness.RunConfig.from_file(config) if config \
        else harness.preset(preset)
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.out = out
    if tolerance is not None:
        cfg.tolerance = tolerance
    if q_max is not None:
        cfg.q_max = q_max
    return cfg


config_opt = click.option("--config", type=click.Path(exists=True),
                          default=None, help="YAML run configuration.")
preset_opt = click.option("--preset", default=None,
                          type=click.Choice(sorted(harness.PRESETS)),
                          help="Built-in desk-scale configuration.")
seed_opt = click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1),
                        default=None, help="Override the run seed.")
out_opt = click.option("--out", type=click.Path(), default=None,
                       help="Output directory.")
tol_opt = click.option("--tolerance", type=float, default=None,
                       help="Residual acceptance tolerance.")


@click.group()
def main():
    """Convex-integration construction runs for the stochastically forced
    Boussinesq system.  CONVINT_THREADS caps the FFT worker count."""


@main.command()
@out_opt
@seed_opt
def check(out, seed):
    """Run the fast invariant battery; nonzero exit on any failure."""
    code, rows = harness.cmd_check(out=out, seed=seed or 0)
    width = max(len(r["check"]) for r in rows)
    for r in rows:
        click.echo("%-*s  %10.3g  (tol %.3g)  %s"
                   % (width, r["check"], r["value"], r["tol"],
                      "ok" if r["pass"] else "FAIL"))
    sys.exit(code)


@main.command()
@config_opt
@preset_opt
@seed_opt
@out_opt
@tol_opt
@click.option("--q-max", type=click.IntRange(0, 64), default=None,
              help="Deepest level to construct.")
def iterate(config, preset, seed, out, tolerance, q_max):
    """Build the iterates level by level, checkpointing each one."""
    cfg = _load_config(config, preset, seed, out, tolerance, q_max)
    report = harness.cmd_iterate(cfg, progress=click.echo)
    click.echo("report: %s/report.json" % cfg.out)
    for q, summary in report["audit_summary"].items():
        click.echo("audit level %s: %s" % (q, summary))


@main.command("stopping-time")
@config_opt
@preset_opt
@seed_opt
@out_opt
@click.option("--levels", default="1.5,2,4",
              help="Comma-separated list of noise caps L.")
@click.option("--samples", type=click.IntRange(1), default=50,
              help="Independent noise realizations per L.")
def stopping_time(config, preset, seed, out, levels, samples):
    """Estimate the law of the stopping time T_L over noise realizations."""
    cfg = _load_config(config, preset, seed, out, None)
    L_list = [float(x) for x in levels.split(",") if x.strip()]
    summary = harness.cmd_stopping_time(cfg, L_list, samples, out=cfg.out)
    click.echo("samples: %d per L" % summary["samples"])
    click.echo("survival monotone in L: %s (worst violation %.3g)"
               % (summary["monotone_in_L"],
                  summary["worst_monotonicity_violation"]))
    click.echo("tables: %s/stopping_time.{csv,json}" % cfg.out)


@main.command()
@click.argument("run_dir", type=click.Path(exists=True))
def report(run_dir):
    """Render figures and summary tables for a finished run directory."""
    written = harness.cmd_report(run_dir)
    for path in written:
        click.echo(str(path))


if __name__ == "__main__":
    main()
