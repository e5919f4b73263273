"""Command-line interface.

Subcommands: ``exact`` (brute-force value), ``bound <method>`` (one bound
on one model), ``experiment`` (a configured grid to CSV) and ``trace``
(per-iteration solver convergence to CSV).

Exit codes: 0 on success, 1 for configuration or input errors, 2 for hard
solver failures.
"""

from __future__ import annotations

import csv
import sys

import click
import numpy as np

from . import exact as exact_mod
from .harness import (ConfigError, ExperimentConfig, load_config, make_method,
                      run_experiment, write_csv)
from .model import (GraphTopology, ParameterScheme, dump_model, load_model,
                    random_tree, sample_parameters)
from .qtsolver import SolverConfig, primal_dual_solve
from .features import base_feature_set
from .model import parameter_matrix

# configuration mistakes (bad flags included) exit with 1, per the contract
click.UsageError.exit_code = 1

_SOLVER_ERRORS = (np.linalg.LinAlgError, FloatingPointError, RuntimeError,
                  AssertionError)


def _model_options(fn):
    decorators = [
        click.option("--model", "model_path", type=click.Path(exists=True),
                     help="Read the model from a file instead of sampling."),
        click.option("--d", type=int, default=None, help="Number of spins."),
        click.option("--graph", type=click.Choice(["independent", "tree", "complete"]),
                     default="complete", show_default=True),
        click.option("--scheme", type=click.Choice(["gaussian", "logdet", "trw"]),
                     default="gaussian", show_default=True),
        click.option("--coupling", type=click.Choice(["attractive", "mixed", "repulsive"]),
                     default=None),
        click.option("--strength", type=float, default=None),
        click.option("--seed", type=int, default=0, show_default=True),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


def _build_model(model_path, d, graph, scheme, coupling, strength, seed):
    if model_path is not None:
        with open(model_path) as fh:
            return load_model(fh.read())
    if d is None:
        raise click.UsageError("either --model or --d is required")
    if graph == "independent":
        topo = GraphTopology.independent(d)
    elif graph == "complete":
        topo = GraphTopology.complete(d)
    else:
        topo = random_tree(d, seed)
    if scheme == "gaussian":
        spec = ParameterScheme("gaussian")
    else:
        if coupling is None or strength is None:
            raise click.UsageError(f"{scheme} scheme needs --coupling and --strength")
        spec = ParameterScheme(scheme, coupling, strength)
    return sample_parameters(spec, topo, d, seed)


@click.group()
def main():
    """Certified upper bounds on Ising log-partition functions."""


@main.command("exact")
@_model_options
@click.option("--epsilon", type=float, default=1.0, show_default=True)
@click.option("--dump", is_flag=True, help="Also print the sampled model.")
def exact_cmd(model_path, d, graph, scheme, coupling, strength, seed,
              epsilon, dump):
    """Brute-force log-partition value of a model."""
    model = _build_model(model_path, d, graph, scheme, coupling, strength, seed)
    try:
        value = exact_mod.log_partition(model, epsilon)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    if dump:
        click.echo(dump_model(model), nl=False)
    click.echo(f"log_partition = {value:.12f}")


@main.command("bound")
@click.argument("method")
@_model_options
@click.option("--epsilon", type=float, default=1.0, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--max-iter", type=int, default=200_000, show_default=True)
def bound_cmd(method, model_path, d, graph, scheme, coupling, strength, seed,
              epsilon, tol, max_iter):
    """One bound on one model; METHOD is a harness method token."""
    model = _build_model(model_path, d, graph, scheme, coupling, strength, seed)
    pseudo = ExperimentConfig(
        experiment_id="cli", d=model.d, graph="complete", scheme="gaussian",
        methods=("qt",), tol=tol, max_iter=max_iter)
    try:
        est = make_method(method, pseudo, epsilon=epsilon)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    try:
        est.fit(model)
    except _SOLVER_ERRORS as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(2)
    click.echo(f"bound = {est.bound_:.12f}")
    if getattr(est, "gap_", None) is not None:
        click.echo(f"gap = {est.gap_:.3e}")
    click.echo(f"converged = {str(bool(est.converged_)).lower()}")


@main.command("experiment")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--tol", type=float, default=None, help="Override the solver tolerance.")
@click.option("--max-iter", type=int, default=None, help="Override the iteration cap.")
@click.option("--workers", type=int, default=None,
              help="Parallel grid cells (or set ISINGBOUND_WORKERS).")
def experiment_cmd(config_path, out_path, seed, tol, max_iter, workers):
    """Run an experiment grid and persist one CSV row per solve."""
    from dataclasses import replace

    try:
        config = load_config(config_path)
        overrides = {}
        if seed is not None:
            overrides["seed"] = seed
        if tol is not None:
            overrides["tol"] = tol
        if max_iter is not None:
            overrides["max_iter"] = max_iter
        if overrides:
            config = replace(config, **overrides)
    except (ConfigError, OSError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(1)
    try:
        records = run_experiment(config, workers=workers)
    except _SOLVER_ERRORS as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(2)
    write_csv(records, out_path)
    click.echo(f"wrote {len(records)} rows to {out_path}")


@main.command("trace")
@_model_options
@click.option("--epsilon", type=float, default=1.0, show_default=True)
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--max-iter", type=int, default=200_000, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def trace_cmd(model_path, d, graph, scheme, coupling, strength, seed,
              epsilon, tol, max_iter, out_path):
    """Per-iteration convergence trace of the primal-dual solver."""
    model = _build_model(model_path, d, graph, scheme, coupling, strength, seed)
    features = base_feature_set(model.d)
    config = SolverConfig(tolerance=tol, max_iterations=max_iter, epsilon=epsilon)
    try:
        result = primal_dual_solve(parameter_matrix(model, features), features,
                                   config, collect_trace=True)
    except _SOLVER_ERRORS as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(2)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "primal", "dual", "gap"])
        for it, primal, dual, gap in result.trace:
            writer.writerow([it, format(primal, ".17g"), format(dual, ".17g"),
                             format(gap, ".17g")])
    click.echo(f"wrote {len(result.trace)} checkpoints to {out_path} "
               f"(converged={str(result.converged).lower()})")


if __name__ == "__main__":
    main()
