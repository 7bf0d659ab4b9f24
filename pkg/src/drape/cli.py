"""Command-line interface: ``drape validate | epsilon | phase | sweep | construct | minimize | fit``.

Exit codes: 0 success, 1 parameters violate the hypotheses, 2 I/O or parse
error, 3 numerical failure.
"""

from __future__ import annotations

import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np

from . import constructions as cons
from . import io as dio
from . import scaling
from .energy import Grid, UnderResolvedWarning, default_grid, fvk_energy
from .minimize import InitStrategy, MinimizeOptions, minimize
from .params import CanonicalParams, InvalidParamsError, canonicalize, dimensionless_groups, load_params, validate

EXIT_OK, EXIT_DOMAIN, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class RunConfig:
    command: str
    params: dict = None
    ranges: dict = None
    fixed: dict = None
    grid: str = None
    options: dict = field(default_factory=dict)
    out: str = None
    seed: int = 0

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if not isinstance(d, dict) or "command" not in d:
            raise ValueError("run config must be an object with a 'command' key")
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown run config keys: {sorted(unknown)}")
        return cls(**d)


class DomainError(click.ClickException):
    exit_code = EXIT_DOMAIN


class IOFailure(click.ClickException):
    exit_code = EXIT_IO


class NumericFailure(click.ClickException):
    exit_code = EXIT_NUMERIC


def _load(path):
    try:
        return load_params(path)
    except (OSError, ValueError) as e:  # JSONDecodeError is a ValueError
        raise IOFailure(f"cannot read parameters from {path}: {e}") from e


def _canonical(p):
    try:
        return canonicalize(p)
    except InvalidParamsError as e:
        raise DomainError(str(e)) from e


def _parse_grid(spec, p):
    if spec is None:
        return default_grid(p)
    try:
        nx, ny = (int(v) for v in spec.lower().split("x"))
        return Grid(nx=nx, ny=ny, L=p.L)
    except ValueError as e:
        raise click.BadParameter(f"grid must look like NXxNY with both >= 4, got {spec!r}", param_hint="--grid") from e


def _outdir(out):
    d = Path(out)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IOFailure(f"cannot create {d}: {e}") from e
    return d


def _save_config(cfg, d):
    (d / "config.json").write_text(cfg.to_json())


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Hanging-drape excess energy: scaling law, constructions and direct minimisation."""


@main.command("validate")
@click.option("--params", "params_path", required=True, type=click.Path())
@click.option("--c-w", default=0.05, show_default=True, help="Constant in w0 <= 2 c_w W.")
def cmd_validate(params_path, c_w):
    """Check parameters against the admissibility conditions."""
    p = _load(params_path)
    bad = validate(p, c_w=c_w)
    if not bad:
        click.echo("ok")
        return
    for v in bad:
        click.echo(f"violation [{v.code}]: {v.message}")
    sys.exit(EXIT_DOMAIN)


def _point_json(pt):
    return {
        "params": pt.params.to_dict(),
        "alpha": pt.alpha,
        "beta": pt.beta,
        "eps": pt.eps,
        "phase": pt.phase,
        "classify": scaling.classify(pt.alpha),
        "branch_values": pt.branch_values,
    }


@main.command("epsilon")
@click.option("--params", "params_path", required=True, type=click.Path())
@click.option("--out", default=None, type=click.Path(), help="Directory for epsilon.json.")
def cmd_epsilon(params_path, out):
    """Evaluate the excess-energy scale for one parameter set."""
    p = _load(params_path)
    _canonical(p)
    pt = scaling.epsilon(p)
    text = json.dumps(_point_json(pt), indent=2, sort_keys=True) + "\n"
    click.echo(text, nl=False)
    if out:
        d = _outdir(out)
        (d / "epsilon.json").write_text(text)
        _save_config(RunConfig("epsilon", params=p.to_dict(), out=str(out)), d)


def params_for_groups(alpha, beta, w0, tauL):
    """Canonical parameters with prescribed alpha and beta at fixed ``w0`` and ``tau L``."""
    L = w0 * math.sqrt(tauL) / beta
    return CanonicalParams(h=alpha * beta * w0, L=L, tau=tauL / L, w0=w0)


@main.command("phase")
@click.option("--beta", default=0.01, show_default=True)
@click.option("--alpha-min", default=0.1, show_default=True)
@click.option("--alpha-max", default=100.0, show_default=True)
@click.option("--n", "n_points", default=100, show_default=True)
@click.option("--w0", default=0.05, show_default=True)
@click.option("--tauL", "tau_l", default=400.0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--emit-plot-data", is_flag=True, help="Also write gnuplot-ready alpha/eps columns.")
def cmd_phase(beta, alpha_min, alpha_max, n_points, w0, tau_l, out, emit_plot_data):
    """Scan alpha on a log grid at fixed beta and record the selected branch."""
    d = _outdir(out)
    rows, skipped = [], []
    for a in np.geomspace(alpha_min, alpha_max, n_points):
        p = params_for_groups(float(a), beta, w0, tau_l)
        bad = validate(p)
        if bad:
            skipped.append((float(a), "; ".join(v.message for v in bad)))
            continue
        pt = scaling.epsilon(p)
        rows.append((pt, scaling.classify(pt.alpha)))
    with open(d / "phase.csv", "w") as fh:
        fh.write("alpha,beta,classify,phase,eps,confined,released,l_star\n")
        for pt, c in rows:
            b = pt.branch_values
            fh.write(f"{pt.alpha!r},{pt.beta!r},{c},{pt.phase},{pt.eps!r},{b['confined']!r},{b['released']!r},{b['l_star']!r}\n")
    for a, why in skipped:
        click.echo(f"skipped alpha={a:g}: {why}", err=True)
    if emit_plot_data:
        scaling.write_plot_data([r[0].alpha for r in rows], [r[0].eps for r in rows], d / "phase_eps.dat", "alpha eps")
    switches = sum(1 for i in range(1, len(rows)) if rows[i][0].phase != rows[i - 1][0].phase)
    click.echo(f"{len(rows)} points, {len(skipped)} skipped, {switches} phase switch(es)")
    _save_config(
        RunConfig("phase", options={"beta": beta, "alpha_min": alpha_min, "alpha_max": alpha_max, "n": n_points, "w0": w0, "tauL": tau_l}, out=str(out)),
        d,
    )


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(), help="JSON with 'ranges' and 'fixed'.")
@click.option("--out", required=True, type=click.Path())
@click.option("--jobs", default=1, show_default=True)
@click.option("--emit-plot-data", is_flag=True, help="Write eps against the first swept key.")
def cmd_sweep(config_path, out, jobs, emit_plot_data):
    """Evaluate the scaling law over a product grid of parameters.

    The config holds ``ranges`` (each an explicit list or ``{min, max, n, log}``)
    and ``fixed`` values for the remaining parameter fields.
    """
    try:
        cfg = json.loads(Path(config_path).read_text())
        ranges, fixed = cfg["ranges"], cfg.get("fixed", {})
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise IOFailure(f"cannot read sweep config {config_path}: {e}") from e
    try:
        res = scaling.sweep(ranges, fixed, jobs=jobs)
    except ValueError as e:
        raise IOFailure(f"bad sweep config: {e}") from e
    d = _outdir(out)
    scaling.write_sweep_csv(res, d / "sweep.csv")
    scaling.write_skipped_csv(res, d / "skipped.csv")
    for s in res.skipped:
        click.echo(f"skipped {s.params}: {' | '.join(s.reasons)}", err=True)
    if emit_plot_data and res.points:
        key = sorted(ranges)[0]
        xs = [getattr(pt.params, key) for pt in res.points]
        scaling.write_plot_data(xs, [pt.eps for pt in res.points], d / f"eps_vs_{key}.dat", f"{key} eps")
    click.echo(f"{len(res.points)} points, {len(res.skipped)} skipped")
    _save_config(RunConfig("sweep", ranges=ranges, fixed=fixed, options={"jobs": jobs}, out=str(out)), d)


def _make_plan(q, kind, n, variant, l):
    try:
        if kind == "type1":
            return cons.plan_type1(q)
        if kind == "propagate":
            return cons.plan_propagate(q)
        if kind == "type2":
            if n is None:
                raise click.BadParameter("type2 needs --n", param_hint="--n")
            return cons.plan_type2(q, n, variant)
        if kind == "type3":
            if l is None:
                raise click.BadParameter("type3 needs --l", param_hint="--l")
            return cons.plan_type3(q, l, variant)
    except InvalidParamsError as e:
        raise DomainError(str(e)) from e
    except ValueError as e:
        raise DomainError(str(e)) from e
    raise click.BadParameter(kind)


@main.command("construct")
@click.option("--params", "params_path", required=True, type=click.Path())
@click.option("--plan", "kind", type=click.Choice(["type1", "type2", "type3", "propagate"]), default="type1", show_default=True)
@click.option("--n", type=int, default=None, help="Release generation for type2.")
@click.option("--variant", type=click.Choice(["A", "B"]), default="A", show_default=True)
@click.option("--l", type=float, default=None, help="Release height for type3 (canonical units).")
@click.option("--grid", "grid_spec", default=None, help="NXxNY; default follows the resolution rule.")
@click.option("--out", required=True, type=click.Path())
def cmd_construct(params_path, kind, n, variant, l, grid_spec, out):
    """Realize one construction and compare its measured excess with the bound."""
    q, scale = _canonical(_load(params_path))
    plan = _make_plan(q, kind, n, variant, l)
    grid = _parse_grid(grid_spec, q)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnderResolvedWarning)
            f = cons.realize(plan, cons.make_block(), grid, q)
            e = fvk_energy(f, q)
    except ValueError as ex:
        raise DomainError(str(ex)) from ex
    bv = cons.predicted_excess(plan, q)
    d = _outdir(out)
    dio.write_field(f, d / "field.bin", params=q)
    doc = {
        "plan": plan.to_dict(),
        "grid": {"nx": grid.nx, "ny": grid.ny, "L": grid.L},
        "breakdown": e.to_dict(),
        "measured_excess": e.excess,
        "predicted": {"branch": bv.branch, "value": bv.value, "formula_inputs": bv.formula_inputs},
        "ratio": e.excess / bv.value if bv.value > 0 else None,
        "energy_factor": scale.energy_factor,
    }
    dio.write_json(doc, d / "construct.json")
    click.echo(f"{plan.kind}: measured excess {e.excess:.6g}, predicted {bv.branch} {bv.value:.6g}")
    _save_config(
        RunConfig("construct", params=q.to_dict(), grid=f"{grid.nx}x{grid.ny}", options={"plan": kind, "n": n, "variant": variant, "l": l}, out=str(out)),
        d,
    )


@main.command("minimize")
@click.option("--params", "params_path", required=True, type=click.Path())
@click.option("--grid", "grid_spec", default=None, help="NXxNY; default follows the resolution rule.")
@click.option("--seed", default=0, show_default=True)
@click.option("--max-iters", default=5000, show_default=True)
@click.option("--grad-tol", default=1e-8, show_default=True, help="Relative: scaled by 1 + |E|.")
@click.option("--init", "inits", multiple=True, help="Start strategy; repeatable. flat | bulk_only | construction | perturbed:SIGMA:SEED.")
@click.option("--flat-boundary", is_flag=True, help="Clamp the top row flat instead of wrinkled.")
@click.option("--jobs", default=1, show_default=True)
@click.option("--trace", is_flag=True, help="Write the per-iteration trace CSV.")
@click.option("--out", required=True, type=click.Path())
def cmd_minimize(params_path, grid_spec, seed, max_iters, grad_tol, inits, flat_boundary, jobs, trace, out):
    """Minimise the discrete energy from several starts and check the sandwich."""
    q, scale = _canonical(_load(params_path))
    grid = _parse_grid(grid_spec, q)
    try:
        starts = tuple(InitStrategy.parse(s) for s in inits) or None
        opts = MinimizeOptions(
            max_iters=max_iters,
            grad_tol=grad_tol,
            multistart=starts,
            rng_seed=seed,
            boundary="flat" if flat_boundary else "wrinkled",
            jobs=jobs,
        )
    except ValueError as e:
        raise click.BadParameter(str(e)) from e
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnderResolvedWarning)
            rep = minimize(q, grid, opts)
    except FloatingPointError as e:
        raise NumericFailure(str(e)) from e
    d = _outdir(out)
    doc = rep.to_dict()
    doc["grid"] = {"nx": grid.nx, "ny": grid.ny, "L": grid.L}
    doc["params"] = q.to_dict()
    doc["energy_factor"] = scale.energy_factor
    if not flat_boundary:
        pt = scaling.epsilon(q)
        doc["eps"] = pt.eps
        doc["excess_over_eps"] = rep.breakdown.excess / pt.eps
    dio.write_json(doc, d / "report.json")
    dio.write_field(rep.best_field, d / "field.bin", params=q)
    dio.write_breakdowns_csv([({"start": "best"}, rep.breakdown)], d / "breakdown.csv", extra_columns=("start",))
    if trace:
        dio.write_trace_csv(rep.starts, d / "trace.csv")
    low, high = rep.sandwich()
    b = rep.breakdown
    hi_text = "n/a" if high is None else f"{rep.construction_total:.10g} ({'ok' if high else 'VIOLATED'})"
    click.echo(f"sandwich: bulk {b.bulk:.10g} <= min {b.total:.10g} ({'ok' if low else 'VIOLATED'}) <= construction {hi_text}")
    _save_config(
        RunConfig(
            "minimize",
            params=q.to_dict(),
            grid=f"{grid.nx}x{grid.ny}",
            options={"max_iters": max_iters, "grad_tol": grad_tol, "init": [s.to_str() for s in opts.starts(q)], "flat_boundary": flat_boundary},
            out=str(out),
            seed=seed,
        ),
        d,
    )


@main.command("fit")
@click.option("--data", "data_path", required=True, type=click.Path(), help="Two-column x y file.")
@click.option("--out", default=None, type=click.Path())
def cmd_fit(data_path, out):
    """Log-log slope of a two-column data file."""
    try:
        x, y = scaling.read_plot_data(data_path)
    except (OSError, ValueError) as e:
        raise IOFailure(f"cannot read {data_path}: {e}") from e
    try:
        fit = scaling.fit_slope(x, y)
    except ValueError as e:
        raise DomainError(str(e)) from e
    text = json.dumps(asdict(fit), indent=2, sort_keys=True) + "\n"
    click.echo(text, nl=False)
    if out:
        d = _outdir(out)
        (d / "fit.json").write_text(text)


if __name__ == "__main__":
    main()
