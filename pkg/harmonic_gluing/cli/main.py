import sys

import click
import wandb

from ..errors import GluingError
from ..experiments import COMMANDS, load_config
from ..utils import flatten_nested_dictionaries


def _run(ctx: click.Context, command: str) -> None:
    options = ctx.obj
    try:
        config = load_config(options["config"]).override(
            seed=options["seed"], out=options["out"], jobs=options["jobs"]
        )
        project = options["wandb_project"] or config.tracking.project
        if project:
            wandb.init(
                project=project,
                entity=config.tracking.entity or None,
                job_type=command,
                config=flatten_nested_dictionaries(config.to_dict()),
            )
        record = COMMANDS[command](config, quiet=options["quiet"])
    except GluingError as error:
        wandb.termerror(str(error))
        sys.exit(1)
    finally:
        if wandb.run is not None:
            wandb.finish()
    if not record.passed:
        sys.exit(1)


@click.group()
@click.option("--config", "config", default=None, help="Path to a TOML run config")
@click.option("--seed", type=int, default=None, help="Seed of every random probe")
@click.option("--out", default=None, help="Output directory of the run")
@click.option("--jobs", type=int, default=None, help="Worker processes for sweep cells")
@click.option(
    "--wandb-project",
    default=None,
    help="Weights & Biases project to log the run to; overrides `[tracking] project`",
)
@click.option("--quiet", is_flag=True, default=False, help="Hide progress bars and passing checks")
@click.pass_context
def cli(ctx, config, seed, out, jobs, wandb_project, quiet):
    """Glue two harmonic spheres at a point and audit every step of the construction."""
    ctx.obj = {
        "config": config,
        "seed": seed,
        "out": out,
        "jobs": jobs,
        "wandb_project": wandb_project,
        "quiet": quiet,
    }


@cli.command()
@click.pass_context
def check(ctx):
    """Geometry, linearization, norm, cutoff and energy invariants."""
    _run(ctx, "check")


@cli.command("residual-scaling")
@click.pass_context
def residual_scaling(ctx):
    """Residual of the preglued map over a δR sweep and its fitted slope."""
    _run(ctx, "residual-scaling")


@cli.command()
@click.pass_context
def contraction(ctx):
    """Defect of the approximate inverse over the sweep, per region."""
    _run(ctx, "contraction")


@cli.command()
@click.pass_context
def glue(ctx):
    """Solve for the harmonic map, or the extended solution, at every sweep cell."""
    _run(ctx, "glue")


@cli.command()
@click.pass_context
def norms(ctx):
    """Weighted norm closed forms and embedding constant estimates."""
    _run(ctx, "norms")


if __name__ == "__main__":
    cli()
