"""Command-line interface: ``divctl solve|curve|verify|simulate|region``.

Exit codes: 0 ok, 1 verification failure, 2 invalid config or parameters,
3 solver failure, 4 I/O failure, 5 invalid simulation settings.
"""

from __future__ import annotations

import functools
import io
import json
import math
import sys
from dataclasses import fields, replace

import click
import numpy as np

from . import config as cfgmod
from .errors import (
    SOLVER_ERRORS,
    ConfigError,
    DomainError,
    InconsistentGross,
    PreconditionError,
    RangeError,
    SimConfigError,
)
from .sim import comparison_rule, estimate_value, rule_from_policy
from .solver import SolvedPolicy, solve
from .strategy import controls_arrays, injection_on_hit, region_of
from .valuefn import evaluate, value
from .verify import run_battery

EXIT_OK, EXIT_VERIFY, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO, EXIT_SIM = range(6)

# Test hook: when set, applied to every solved policy before it is used.
POLICY_HOOK = None


def fmt(v, digits: int = 12) -> str:
    """Number formatting shared by all outputs; infinities become ``inf``/``-inf``."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, f".{digits}g")


def _plain(obj):
    """Make a report JSON-safe, writing infinities as strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    if hasattr(obj, "value"):
        return obj.value
    return obj


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        self.message = message


def _guard(fn):
    """Translate package errors into messages and exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _Exit as exc:
            click.echo(exc.message, err=True)
            sys.exit(exc.code)
        except SimConfigError as exc:
            click.echo(f"error: simulation config: {exc}", err=True)
            sys.exit(EXIT_SIM)
        except (RangeError, InconsistentGross) as exc:
            click.echo(f"error: invalid parameter {exc.field}: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except (ConfigError, PreconditionError) as exc:
            click.echo(f"error: invalid config: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except SOLVER_ERRORS as exc:
            click.echo(f"error: solver: {type(exc).__name__}: {exc}", err=True)
            sys.exit(EXIT_SOLVER)
        except OSError as exc:
            click.echo(f"error: I/O: {exc}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


def _load(path: str, closure: str | None) -> cfgmod.RunConfig:
    run = cfgmod.load(path)
    if closure is not None:
        run = replace(run, closure=closure)
    return run


def _solve(run: cfgmod.RunConfig) -> SolvedPolicy:
    policy = solve(run.params, closure=run.closure)
    if POLICY_HOOK is not None:
        policy = POLICY_HOOK(policy)
    return policy


def _emit(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
        return
    with open(out, "w", newline="\n") as fh:
        fh.write(text)


def _common(fn):
    fn = click.option(
        "--closure",
        type=click.Choice(["published", "consistent"]),
        default=None,
        help="How w0 is placed in the second ordering (overrides the config).",
    )(fn)
    fn = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file.")(fn)
    fn = click.option(
        "--config",
        "config_path",
        required=True,
        type=click.Path(exists=True, dir_okay=False),
        help="YAML run config.",
    )(fn)
    return fn


@click.group()
def main():
    """Optimal dividends, reinsurance and capital injection for two lines."""


# ---------------------------------------------------------------------------
# solve


def policy_summary(policy: SolvedPolicy) -> str:
    """Structured text summary of a solved policy."""
    buf = io.StringIO()
    w = buf.write
    w(f"regime: {policy.regime.tag.value}\n")
    w(f"scenario: {policy.scenario.value}\n")
    w(f"closure: {policy.closure}\n")
    for name in ("w0", "u1", "u2"):
        w(f"{name}: {fmt(getattr(policy, name))}\n")
    for i, d in enumerate(policy.deltas):
        w(f"delta{i}: {fmt(d)}\n")
    w("coefficients:\n")
    skip = {"scenario", "w0", "u1", "u2", "deltas", "constants", "orientation", "regime"}
    skip |= {"params", "normalized", "closure"}
    for f in fields(policy):
        if f.name not in skip:
            w(f"  {f.name}: {fmt(getattr(policy, f.name))}\n")
    w("constants:\n")
    for f in fields(policy.constants):
        w(f"  {f.name}: {fmt(getattr(policy.constants, f.name))}\n")
    o = policy.orientation
    w("orientation:\n")
    w(f"  lines_swapped: {str(o.lines_swapped).lower()}\n")
    w(f"  weight_flipped: {str(o.weight_flipped).lower()}\n")
    return buf.getvalue()


@main.command("solve")
@_common
@_guard
def cmd_solve(config_path, out, closure):
    """Solve the policy and print its switching points and coefficients."""
    policy = _solve(_load(config_path, closure))
    _emit(policy_summary(policy), out)


# ---------------------------------------------------------------------------
# curve

CURVE_COLUMNS = ("x", "g", "g_prime", "g_double_prime", "theta1", "theta2", "c1", "c2")


def curve_csv(policy: SolvedPolicy, xs: np.ndarray, name: str = "") -> str:
    """CSV with '#' metadata lines for the switching points, then one row per node."""
    vt = evaluate(policy, xs)
    t1, t2, c1, c2 = controls_arrays(policy, xs)
    buf = io.StringIO()
    if name:
        buf.write(f"# name: {name}\n")
    buf.write(f"# regime: {policy.regime.tag.value}\n")
    buf.write(f"# scenario: {policy.scenario.value}\n")
    buf.write(f"# closure: {policy.closure}\n")
    for key in ("w0", "u1", "u2"):
        buf.write(f"# {key}: {fmt(getattr(policy, key))}\n")
    for i, d in enumerate(policy.deltas):
        buf.write(f"# delta{i}: {fmt(d)}\n")
    buf.write(",".join(CURVE_COLUMNS) + "\n")
    cols = (xs, vt.g, vt.g_prime, vt.g_double_prime, t1, t2, c1, c2)
    for row in zip(*(np.atleast_1d(c) for c in cols)):
        buf.write(",".join(fmt(v, 15) for v in row) + "\n")
    return buf.getvalue()


@main.command("curve")
@_common
@click.option("--grid", default=None, help="MIN:MAX:STEP (overrides the config).")
@_guard
def cmd_curve(config_path, out, closure, grid):
    """Tabulate g, its derivatives and the optimal controls on a grid."""
    run = _load(config_path, closure)
    g = cfgmod.parse_grid(grid) if grid is not None else run.grid
    policy = _solve(run)
    _emit(curve_csv(policy, cfgmod.grid_points(g), run.name), out)


# ---------------------------------------------------------------------------
# verify


@main.command("verify")
@_common
@_guard
def cmd_verify(config_path, out, closure):
    """Run the verification battery; exit 1 if any check fails."""
    run = _load(config_path, closure)
    policy = _solve(run)
    report = run_battery(policy, run.verify)
    text = json.dumps(_plain(report.to_dict()), indent=2, sort_keys=True) + "\n"
    _emit(text, out)
    status = "PASS" if report.passed else "FAIL"
    click.echo(f"verify: {status}", err=True)
    for failure in report.failures:
        click.echo(f"  failed: {failure}", err=True)
    if not report.passed:
        sys.exit(EXIT_VERIFY)


# ---------------------------------------------------------------------------
# simulate


@main.command("simulate")
@_common
@click.option("--seed", type=int, default=None)
@click.option("--paths", type=int, default=None, help="Number of paths.")
@click.option("--dt", type=float, default=None, help="Time step.")
@click.option("--x1", type=float, default=None, help="Initial reserve of line 1.")
@click.option("--x2", type=float, default=None, help="Initial reserve of line 2.")
@_guard
def cmd_simulate(config_path, out, closure, seed, paths, dt, x1, x2):
    """Monte Carlo estimate of the optimal rule and any comparison rules."""
    run = _load(config_path, closure)
    sim = run.sim.config
    overrides = {"seed": seed, "n_paths": paths, "dt": dt, "x1_0": x1, "x2_0": x2}
    sim = replace(sim, **{k: v for k, v in overrides.items() if v is not None})
    policy = _solve(run)
    target = float(value(policy, sim.x1_0 + sim.x2_0))
    rules = [rule_from_policy(policy, injection=run.sim.injection)]
    rules += [comparison_rule(policy, name) for name in run.sim.compare]
    buf = io.StringIO()
    buf.write(f"x1: {fmt(sim.x1_0)}\nx2: {fmt(sim.x2_0)}\n")
    buf.write(f"paths: {sim.n_paths}\ndt: {fmt(sim.dt)}\nseed: {sim.seed}\n")
    buf.write(f"g(x1+x2): {fmt(target)}\n")
    for rule in rules:
        est = estimate_value(rule, sim)
        z = est.z_score(target)
        buf.write(
            f"{rule.name}: mean={fmt(est.mean)} se={fmt(est.std_err)} "
            f"z={fmt(z, 4)} ruin_fraction={fmt(est.ruin_fraction, 6)}"
        )
        if rule.name != "optimal":
            ok = est.mean <= target + 3 * est.std_err
            buf.write(f" dominated={'yes' if ok else 'no'}")
        buf.write("\n")
    _emit(buf.getvalue(), out)


# ---------------------------------------------------------------------------
# region


def region_preview(policy: SolvedPolicy, x1: float, x2: float, a7_rule: str = "ruin") -> str:
    """Region of ``(x1, x2)`` and the injection each line's hit would trigger.

    A hit of line ``i`` is previewed at the same aggregate: line ``i`` at
    zero and the other line holding ``x1 + x2``.
    """
    if not (x1 >= 0 and x2 >= 0):
        raise PreconditionError("--x1 and --x2 must be nonnegative")
    total = x1 + x2
    buf = io.StringIO()
    buf.write(f"region: {region_of(policy, x1, x2).value}\n")
    for line, state in ((1, (0.0, total)), (2, (total, 0.0))):
        act = injection_on_hit(policy, *state, hit_line=line, a7_rule=a7_rule)
        buf.write(
            f"hit line {line}: kind={act.kind.value} amount={fmt(act.amount)} "
            f"post=({fmt(act.post[0])}, {fmt(act.post[1])})\n"
        )
    return buf.getvalue()


@main.command("region")
@_common
@click.option("--x1", type=float, required=True, help="Reserve of line 1.")
@click.option("--x2", type=float, required=True, help="Reserve of line 2.")
@click.option("--a7-rule", type=click.Choice(["ruin", "reflect"]), default="ruin")
@_guard
def cmd_region(config_path, out, closure, x1, x2, a7_rule):
    """Classify a reserve pair and preview the capital injection on a hit."""
    policy = _solve(_load(config_path, closure))
    try:
        text = region_preview(policy, x1, x2, a7_rule)
    except DomainError as exc:
        raise _Exit(EXIT_VALIDATION, f"error: invalid state: {exc}") from None
    _emit(text, out)


if __name__ == "__main__":  # pragma: no cover
    main()
