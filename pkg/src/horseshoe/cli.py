"""Command-line interface: ``horseshoe elicit | fit | experiment``.

Every command writes a ``manifest.json`` holding its full parameter record
and seed. Passing that file back through ``--config`` reruns the command
with identical settings. Exit codes: 0 success, 1 runtime failure, 2 usage
or validation error.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from pathlib import Path

import click
import numpy as np

from horseshoe.elicitation import (
    TauPrior,
    sample_meff_prior,
    solve_tau_for_meff,
    summarize_meff,
)
from horseshoe.sampler import SamplerConfig
from horseshoe.shrinkage import BINOMIAL, GAUSSIAN, ShrinkageContext, SlabSpec

OUTPUT_ENV = "HORSESHOE_OUTPUT_DIR"
DEFAULT_OUTPUT = "horseshoe-out"

logger = logging.getLogger("horseshoe")


class UsageFailure(click.ClickException):
    exit_code = 2


class RuntimeFailure(click.ClickException):
    exit_code = 1


def _load_config(ctx, param, value):
    """Eager ``--config`` callback: a manifest's params become option defaults."""
    if value is None:
        return None
    try:
        data = json.loads(Path(value).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.BadParameter(f"cannot read config {value}: {exc}") from exc
    params = data.get("params", data)
    if data.get("command") not in (None, ctx.info_name):
        raise click.BadParameter(f"config is for command {data['command']!r}")
    ctx.default_map = {**(ctx.default_map or {}), **params}
    return value


config_option = click.option(
    "--config", type=click.Path(dir_okay=False), callback=_load_config, is_eager=True,
    expose_value=False, help="JSON manifest (or params mapping) supplying option defaults.")


def _output_dir(out) -> Path:
    path = Path(out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise RuntimeFailure(f"output directory {path} is not writable: {exc}") from exc
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)}")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def _run_config(ctx: click.Context) -> dict:
    params = {k: v for k, v in ctx.params.items()}
    if params.get("out") is not None:
        params["out"] = str(params["out"])
    return {"command": ctx.info_name, "params": params, "seed": params.get("seed")}


def _tau_prior(kind, scale, dof, tau0, relative) -> TauPrior:
    """Build the global-scale prior; half-Cauchy(0, tau0) is the default with --p0."""
    if kind is None:
        if tau0 is None:
            raise UsageFailure("supply --p0 or --tau-prior")
        kind = "half_cauchy"
    if scale is None:
        if tau0 is None:
            if kind == "fixed":
                raise UsageFailure("--tau-prior fixed needs --tau-scale or --p0")
            scale = 1.0
        else:
            scale = tau0
    try:
        return TauPrior(kind, float(scale), dof if kind == "half_t" else None, relative)
    except ValueError as exc:
        raise UsageFailure(str(exc)) from exc


TAU_KINDS = click.Choice(list(TauPrior.KINDS))


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Sparse Bayesian GLMs with horseshoe-type priors."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------- elicit


@cli.command()
@config_option
@click.option("--tau-prior", "tau_prior", type=TAU_KINDS, default=None)
@click.option("--tau-scale", type=float, default=None)
@click.option("--tau-dof", type=float, default=None)
@click.option("--p0", type=float, default=None, help="Prior guess of relevant predictors.")
@click.option("--D", "D", type=int, required=True, help="Number of predictors.")
@click.option("--n", type=int, default=1, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--local-dof", type=float, default=1.0, show_default=True)
@click.option("--draws", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.pass_context
def elicit(ctx, tau_prior, tau_scale, tau_dof, p0, D, n, sigma, local_dof, draws, seed, out):
    """Prior draws of the effective number of nonzero coefficients."""
    try:
        context = ShrinkageContext(n, D, sigma)
        tau0 = None
        if p0 is not None:
            tau0 = solve_tau_for_meff(p0, local_dof, context)
        if draws < 1:
            raise ValueError("--draws must be >= 1")
        if not local_dof > 0:
            raise ValueError("--local-dof must be positive")
    except ValueError as exc:
        raise UsageFailure(str(exc)) from exc
    prior = _tau_prior(tau_prior, tau_scale, tau_dof, tau0, False)
    path = _output_dir(out)
    if tau0 is not None:
        click.echo(f"tau0 = {tau0:.6g}")

    try:
        meff = sample_meff_prior(prior, local_dof, context, draws, seed=seed)
        summary = summarize_meff(meff)
    except Exception as exc:  # noqa: BLE001
        raise RuntimeFailure(str(exc)) from exc
    run = _run_config(ctx)
    _write_csv(path / "meff_draws.csv", ["draw", "tau", "meff"],
               zip(range(draws), meff.tau, meff.values))
    _write_json(path / "meff_summary.json",
                {"run_config": run, "tau_prior": prior.to_dict(), "tau0": tau0,
                 **summary.to_dict()})
    _write_json(path / "manifest.json", run)
    click.echo(f"m_eff mean {summary.mean:.4g}, median {summary.quantiles[0.5]:.4g}; "
               f"wrote {path}")


# ---------------------------------------------------------------- fit


def read_csv_dataset(path, target: str, family):
    """Parse a headed numeric CSV into ``(X, y, feature_names)``."""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise UsageFailure(f"cannot read {path}: {exc}") from exc
    if not rows or not rows[0]:
        raise UsageFailure(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    if target not in header:
        raise UsageFailure(f"{path}: target column {target!r} not in header")
    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise UsageFailure(f"{path}: line {i} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise UsageFailure(f"{path}: non-numeric value {cell!r} at line {i}, "
                                   f"column {header[j]!r}") from None
            if not math.isfinite(values[i - 2, j]):
                raise UsageFailure(f"{path}: non-finite value at line {i}, column {header[j]!r}")
    if values.shape[0] == 0:
        raise UsageFailure(f"{path}: no data rows")
    t = header.index(target)
    y = values[:, t]
    names = tuple(h for k, h in enumerate(header) if k != t)
    X = np.delete(values, t, axis=1)
    if family.name == "binomial" and not np.all((y == 0) | (y == 1)):
        bad = int(np.flatnonzero((y != 0) & (y != 1))[0]) + 2
        raise UsageFailure(f"{path}: bernoulli target must be 0 or 1 (line {bad})")
    return X, y, names


SLAB_KINDS = click.Choice(["infinite", "fixed", "inverse_gamma", "student_t"])


def _slab(kind, scale, df) -> SlabSpec:
    try:
        if kind == "infinite":
            return SlabSpec.infinite()
        if kind == "fixed":
            return SlabSpec.fixed(scale)
        if kind == "student_t":
            return SlabSpec.student_t(df, scale)
        return SlabSpec.inverse_gamma(df / 2.0, df * scale**2 / 2.0)
    except (TypeError, ValueError) as exc:
        raise UsageFailure(f"invalid slab: {exc}") from exc


@cli.command("fit")
@config_option
@click.option("--data", "data_path", type=click.Path(dir_okay=False), required=True)
@click.option("--target", default="y", show_default=True)
@click.option("--family", type=click.Choice(["gaussian", "bernoulli"]), default="gaussian",
              show_default=True)
@click.option("--test", "test_path", type=click.Path(dir_okay=False), default=None)
@click.option("--no-standardize", is_flag=True, help="Keep predictors on their raw scale.")
@click.option("--p0", type=float, default=None)
@click.option("--tau-prior", "tau_prior", type=TAU_KINDS, default=None)
@click.option("--tau-scale", type=float, default=None)
@click.option("--tau-dof", type=float, default=None)
@click.option("--local-dof", type=float, default=1.0, show_default=True)
@click.option("--slab", "slab_kind", type=SLAB_KINDS, default="student_t", show_default=True)
@click.option("--slab-scale", type=float, default=2.0, show_default=True)
@click.option("--slab-df", type=float, default=4.0, show_default=True)
@click.option("--intercept-sd", type=float, default=None,
              help="Prior sd of the intercept [default: flat (gaussian), 5 (bernoulli)].")
@click.option("--parameterization", type=click.Choice(["noncentered", "decomposed"]),
              default="noncentered", show_default=True)
@click.option("--chains", type=int, default=4, show_default=True)
@click.option("--warmup", type=int, default=1000, show_default=True)
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--target-accept", type=float, default=0.8, show_default=True)
@click.option("--max-depth", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.pass_context
def fit_cmd(ctx, data_path, target, family, test_path, no_standardize, p0, tau_prior,
            tau_scale, tau_dof, local_dof, slab_kind, slab_scale, slab_df, intercept_sd,
            parameterization, chains, warmup, samples, target_accept, max_depth, seed, out):
    """Fit a shrinkage GLM to a CSV dataset."""
    from horseshoe.models import Dataset, PriorSpec, fit, plugin_sigma, posterior_meff, \
        predictive_metrics

    fam = GAUSSIAN if family == "gaussian" else BINOMIAL
    X, y, names = read_csv_dataset(data_path, target, fam)
    try:
        config = SamplerConfig(chains=chains, warmup=warmup, samples=samples,
                               target_accept=target_accept, max_depth=max_depth, seed=seed)
        data = Dataset.from_raw(X, y, fam, standardize_columns=not no_standardize, names=names)
        tau0 = None
        if p0 is not None:
            sigma = 1.0 if family == "gaussian" else plugin_sigma(data)
            tau0 = solve_tau_for_meff(p0, local_dof, data.shrinkage_context(sigma))
        tp = _tau_prior(tau_prior, tau_scale, tau_dof, tau0, family == "gaussian")
        if intercept_sd is None:
            intercept_sd = math.inf if family == "gaussian" else 5.0
        prior = PriorSpec(tp, local_dof=local_dof, slab=_slab(slab_kind, slab_scale, slab_df),
                          intercept_sd=intercept_sd, parameterization=parameterization)
        test = None
        if test_path is not None:
            Xt, yt, tnames = read_csv_dataset(test_path, target, fam)
            if tnames != names:
                raise ValueError("test columns do not match training columns")
            test = Dataset(data.transform_new(Xt), yt, fam)
    except ValueError as exc:
        raise UsageFailure(str(exc)) from exc
    path = _output_dir(out)

    try:
        res = fit(data, prior, config)
        meff = posterior_meff(res.draws, data).values
        metrics = predictive_metrics(res.draws, test) if test is not None else None
    except Exception as exc:  # noqa: BLE001
        raise RuntimeFailure(f"fitting failed: {exc}") from exc

    d = res.draws
    beta = d.flat("beta")
    sds = data.column_sds if data.standardized else np.ones(data.D)
    means = data.column_means if data.standardized else np.zeros(data.D)
    beta_raw = beta / sds
    b0 = d.flat("beta0")
    b0_raw = b0 - beta_raw @ means
    extras = [k for k in ("tau", "c", "sigma") if k in d.params]
    S = beta.shape[0]
    chain = np.repeat(np.arange(d.n_chains), d.n_draws)
    it = np.tile(np.arange(d.n_draws), d.n_chains)
    header = (["chain", "draw", "intercept"] + list(names) + [f"std:{n}" for n in names]
              + extras + ["meff", "divergent"])
    cols = ([chain, it, b0_raw] + [beta_raw[:, j] for j in range(data.D)]
            + [beta[:, j] for j in range(data.D)] + [d.flat(k) for k in extras]
            + [meff, d.divergent.reshape(-1)])
    _write_csv(path / "draws.csv", header, ([c[s] for c in cols] for s in range(S)))

    run = _run_config(ctx)

    def describe(v):
        q = np.quantile(v, [0.05, 0.5, 0.95])
        return {"mean": float(np.mean(v)), "sd": float(np.std(v, ddof=1)),
                "q05": float(q[0]), "q50": float(q[1]), "q95": float(q[2])}

    summary = {
        "run_config": run,
        "prior": prior.to_dict(),
        "tau0": tau0,
        "standardization": {"standardized": data.standardized, "columns": list(names),
                            "means": means.tolist(), "sds": sds.tolist()},
        "coefficients": {n: describe(beta_raw[:, j]) for j, n in enumerate(names)},
        "coefficients_standardized": {n: describe(beta[:, j]) for j, n in enumerate(names)},
        "intercept": describe(b0_raw),
        "meff": describe(meff),
        **{k: describe(d.flat(k)) for k in extras},
        "predictive": metrics,
    }
    diag = res.diagnostics
    diagnostics = {
        "run_config": run,
        "divergence_fraction": diag.divergence_fraction,
        "n_divergent": diag.n_divergent,
        "warmup_divergent": d.warmup_divergent.tolist(),
        "max_rhat": diag.max_rhat(),
        "min_ess_bulk": diag.min_ess(),
        "step_size": d.step_size.tolist(),
        "mean_tree_depth": float(d.tree_depth.mean()),
        "rhat": {k: np.atleast_1d(v).tolist() for k, v in diag.rhat.items()},
        "ess_bulk": {k: np.atleast_1d(v).tolist() for k, v in diag.ess_bulk.items()},
    }
    _write_json(path / "summary.json", summary)
    _write_json(path / "diagnostics.json", _nan_to_none(diagnostics))
    _write_json(path / "manifest.json", run)
    click.echo(f"{S} draws, {diag.n_divergent} divergent, max R-hat {diag.max_rhat():.3f}; "
               f"wrote {path}")


def _nan_to_none(obj):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# ---------------------------------------------------------------- experiment

EXPERIMENTS = ("toy", "toy-scaling", "separable", "correlated")


def _floats(ctx, param, value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        value = ",".join(str(v) for v in value)
    try:
        return tuple(float(v) for v in str(value).split(",") if v.strip())
    except ValueError as exc:
        raise click.BadParameter("expected comma-separated numbers") from exc


@cli.command()
@config_option
@click.argument("name", type=click.Choice(EXPERIMENTS))
@click.option("--A", "A", callback=_floats, default=None,
              help="Comma-separated signal levels (toy).")
@click.option("--reps", type=int, default=None, help="Replications (toy).")
@click.option("--chains", type=int, default=None)
@click.option("--warmup", type=int, default=None)
@click.option("--samples", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.pass_context
def experiment(ctx, name, A, reps, chains, warmup, samples, seed, out):
    """Run a seeded synthetic experiment and write its tables."""
    from dataclasses import replace

    from horseshoe import experiments as ex

    defaults = {"toy": ex.TOY_SAMPLER, "toy-scaling": ex.SCALING_SAMPLER,
                "separable": ex.SEPARABLE_SAMPLER, "correlated": ex.CORRELATED_SAMPLER}[name]
    overrides = {k: v for k, v in (("chains", chains), ("warmup", warmup),
                                   ("samples", samples)) if v is not None}
    try:
        sampler = replace(defaults, **overrides)
        toy_cfg = None
        if name == "toy":
            kw = {}
            if A is not None:
                kw["A"] = A
            if reps is not None:
                kw["replications"] = reps
            toy_cfg = ex.ToyConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageFailure(str(exc)) from exc
    path = _output_dir(out)
    run = _run_config(ctx)
    run["sampler"] = sampler.__dict__

    try:
        if name == "toy":
            res = ex.run_toy(toy_cfg, sampler, seed)
            run["experiment_config"] = toy_cfg.to_dict()
            priors = list(toy_cfg.prior_variants)
            header = ["A"] + [f"{p}_{s}" for p in priors for s in ("mse", "se")]
            rows = [[a] + [v for p in priors for v in (res.mean(a, p), res.se(a, p))]
                    for a in toy_cfg.A]
            _write_csv(path / "toy_mse.csv", header, rows)
        elif name == "toy-scaling":
            res = ex.run_toy_scaling(seed, sampler)
            _write_csv(path / "toy_scaling.csv", ["variant", "scale", "meff_mean"],
                       [[r["variant"], r["scale"], r["meff_mean"]] for r in res.rows()])
            run["checks"] = {"sigma_scaled_stable": res.scaled_stable,
                             "unscaled_inflated": res.unscaled_inflated}
        elif name == "separable":
            cfg = ex.SeparableConfig()
            run["experiment_config"] = cfg.to_dict()
            reports = ex.run_separable(cfg, sampler, seed)
            _write_csv(path / "separable.csv",
                       ["variant", "abs_beta2_q99", "median_irrelevant_width",
                        "divergence_fraction", "prob_beta2_positive", "tau0"],
                       [[k, r.abs_beta2_q99, r.median_irrelevant_width, r.divergence_fraction,
                         r.prob_beta2_positive, r.tau0] for k, r in reports.items()])
            _write_json(path / "separable.json",
                        {"run_config": run, **{k: r.to_dict() for k, r in reports.items()}})
        else:
            metrics = ex.run_correlated(seed, sampler)
            _write_csv(path / "correlated.csv", list(metrics), [list(metrics.values())])
    except Exception as exc:  # noqa: BLE001
        raise RuntimeFailure(f"experiment {name} failed: {exc}") from exc
    _write_json(path / "manifest.json", run)
    click.echo(f"experiment {name} done; wrote {path}")


def main(argv=None):
    cli.main(args=argv, prog_name="horseshoe")


if __name__ == "__main__":
    main()
