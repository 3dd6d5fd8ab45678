"""Command-line harness: ``thermowit <command> [options]``.

Exit codes: 0 ok, 2 invalid input, 3 infeasible problem, 4 solver failure.
CSV files start with a provenance comment and are written atomically.
"""

import functools
import json
import logging
import math
import os
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from thermowit import __version__
from thermowit.exceptions import (
    FixedPointError,
    InfeasibleError,
    NumericalConsistencyError,
    ThermowitError,
    TruncationError,
    ValidationError,
)
from thermowit.heat import asymptotic_comparison, heat_bounds, ladder_hamiltonian
from thermowit.qstate import DensityMatrix, load_hamiltonian, load_state
from thermowit.tavis_cummings import (
    DEFAULT_N_MAX,
    LEAKAGE_TOL,
    build_tc_model,
    coherent_input_state,
    run_trajectory,
)
from thermowit.witnesses import (
    LocalData,
    incoherent_envelope,
    isotropic_envelope,
    isotropic_sweep_point,
    lambda_crt,
    local_data_from_state,
    separable_envelope,
    verdict,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("thermowit")

EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

# provenance excludes options that do not change the numbers
_NON_PARAMS = {"out"}


def _exit_code(exc):
    if isinstance(exc, InfeasibleError):
        return EXIT_INFEASIBLE
    if isinstance(exc, (FixedPointError, TruncationError, NumericalConsistencyError)):
        return EXIT_SOLVER
    return EXIT_VALIDATION


def handle_errors(func):
    """Report library errors on stderr and exit with the mapped code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ThermowitError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)

    return wrapper


# ---------------------------------------------------------------------------
# parameter types and formatting

_PI_RE = re.compile(
    r"^\s*(?P<num>[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)?\s*\*?\s*pi\s*(?:/\s*(?P<den>[0-9]*\.?[0-9]+))?\s*$"
)


class PiFloat(click.ParamType):
    """A float, or a multiple of pi such as ``pi/4`` or ``3*pi/2``."""

    name = "time"

    def convert(self, value, param, ctx):
        if isinstance(value, (int, float)):
            return float(value)
        text = str(value)
        m = _PI_RE.match(text)
        if m:
            num = float(m.group("num")) if m.group("num") else 1.0
            den = float(m.group("den")) if m.group("den") else 1.0
            if den == 0:
                self.fail(f"zero denominator in {text!r}", param, ctx)
            return num * math.pi / den
        try:
            out = float(text)
        except ValueError:
            self.fail(f"{text!r} is neither a number nor a multiple of pi", param, ctx)
        if not math.isfinite(out):
            self.fail(f"{text!r} is not finite", param, ctx)
        return out


class FloatList(click.ParamType):
    name = "floats"

    def __init__(self, cast=float):
        self.cast = cast

    def convert(self, value, param, ctx):
        if isinstance(value, (list, tuple)):
            items = list(value)
        else:
            items = [v for v in str(value).split(",") if v.strip()]
        try:
            out = [self.cast(v) for v in items]
        except (TypeError, ValueError):
            self.fail(f"cannot parse {value!r} as a comma-separated list", param, ctx)
        if not out:
            self.fail("empty list", param, ctx)
        return out


POS_FLOAT = click.FloatRange(min=0.0, min_open=True)


def fmt(x):
    """Fifteen significant digits; ``None`` stays empty."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    return f"{float(x):.15g}"


def _json_number(x):
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.15g}")


def _canonical(params):
    clean = {k: v for k, v in params.items() if k not in _NON_PARAMS}
    return json.dumps(clean, sort_keys=True, separators=(",", ":"))


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, cmd, params, header, rows):
    lines = [f"# thermowit v{__version__} cmd={cmd} params={_canonical(params)}", ",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if path == "-":
        click.echo(text, nl=False)
    else:
        _atomic_write(path, text)


def emit_json(record, out=None):
    text = json.dumps(record, sort_keys=False, separators=(", ", ": "))
    if out:
        _atomic_write(out, text + "\n")
    else:
        click.echo(text)


def worker_count():
    raw = os.environ.get("THERMOWIT_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"THERMOWIT_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError(f"THERMOWIT_THREADS must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def ordered_map(func, items):
    """``map`` over a thread pool; results keep input order."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


# ---------------------------------------------------------------------------
# config file


def _load_config(ctx, param, value):
    if value is None:
        return None
    try:
        with open(value, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise click.BadParameter(f"cannot read config: {exc}", ctx=ctx, param=param)
    default_map = {}
    for name, table in data.items():
        cmd = main.commands.get(name)
        if cmd is None or not isinstance(table, dict):
            raise click.BadParameter(f"unknown command section [{name}]", ctx=ctx, param=param)
        known = {p.name for p in cmd.params}
        entries = {}
        for key, val in table.items():
            k = key.replace("-", "_")
            if k not in known:
                raise click.BadParameter(f"unknown key {key!r} in [{name}]", ctx=ctx, param=param)
            entries[k] = val
        default_map[name] = entries
    ctx.default_map = default_map
    return value


@click.group()
@click.version_option(__version__, prog_name="thermowit")
@click.option("--config", type=click.Path(dir_okay=False), callback=_load_config, expose_value=False,
              is_eager=True, help="TOML file with one [command] table of defaults; flags win.")
@click.option("-v", "--verbose", is_flag=True, help="Log solver diagnostics to stderr.")
def main(verbose):
    """Heat-exchange bounds and heat-based witnesses."""
    if verbose:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(name)s: %(message)s")


@main.command()
@click.option("--state", "state_path", required=True, type=click.Path(dir_okay=False), help="State JSON.")
@click.option("--hamiltonian", "ham_path", required=True, type=click.Path(dir_okay=False),
              help="Hamiltonian JSON.")
@click.option("--beta", required=True, type=POS_FLOAT)
@click.option("--out", default=None, type=click.Path(dir_okay=False), help="Write JSON here.")
@handle_errors
def bounds(state_path, ham_path, beta, out):
    """Optimal heats Q_c, Q_h for one state."""
    rho = load_state(state_path)
    h = load_hamiltonian(ham_path)
    b = heat_bounds(rho, h, beta)
    emit_json({
        "beta_c": _json_number(b.beta_c),
        "beta_h": _json_number(b.beta_h),
        "left_root": b.left_root,
        "right_root": b.right_root,
        "q_c": _json_number(b.q_c),
        "q_h": _json_number(b.q_h),
        "h_capped": b.h_capped,
        "degenerate": b.degenerate,
        "E": _json_number(b.energy),
        "S": _json_number(b.entropy),
        "F": _json_number(b.free_energy),
    }, out)


@main.command("werner-sweep")
@click.option("--d", "d", default=2, show_default=True, type=click.IntRange(2, 7))
@click.option("--beta", default=0.5, show_default=True, type=POS_FLOAT)
@click.option("--lambda-steps", default=400, show_default=True, type=click.IntRange(min=2))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@handle_errors
def werner_sweep(d, beta, lambda_steps, out):
    """Isotropic-state heats against the separable envelope over lambda in [0, 1]."""
    env = isotropic_envelope(d, beta)
    grid = [i / (lambda_steps - 1) for i in range(lambda_steps)]
    rows = ordered_map(lambda lam: isotropic_sweep_point(d, beta, lam, env), grid)
    params = {"d": d, "beta": beta, "lambda_steps": lambda_steps, "local_hamiltonian": "ladder"}
    write_csv(out, "werner-sweep", params,
              ["lambda", "q_c", "q_h", "q_star_c", "q_star_h", "detected"],
              [(r.lam, r.q_c, r.q_h, r.q_star_c, r.q_star_h, r.detected) for r in rows])


@main.command("lambda-crt")
@click.option("--d-max", default=7, show_default=True, type=click.IntRange(2, 12))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@handle_errors
def lambda_crt_cmd(d_max, out):
    """Critical noise level of the isotropic family for d = 2..d_max."""
    ds = list(range(2, d_max + 1))
    values = ordered_map(lambda_crt, ds)
    write_csv(out, "lambda-crt", {"d_max": d_max}, ["d", "lambda_crt"], zip(ds, values))


@main.command()
@click.option("--d", "d_list", default="2,3,4,5", show_default=True, type=FloatList(int))
@click.option("--beta", "beta_list", default="10,20,50,100", show_default=True, type=FloatList())
@click.option("--entropy", default=None, type=click.FloatRange(min=0.0),
              help="Joint entropy S (default log d).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@handle_errors
def asymptotic(d_list, beta_list, entropy, out):
    """Cooling root of two ladder qudits against its large-beta formula."""
    if any(d < 2 for d in d_list):
        raise ValidationError("every d must be >= 2")
    if any(not (b > 0 and math.isfinite(b)) for b in beta_list):
        raise ValidationError("every beta must be positive and finite")
    pairs = [(d, b) for d in d_list for b in beta_list]
    results = ordered_map(lambda p: asymptotic_comparison(p[0], p[1], entropy), pairs)
    params = {"d": d_list, "beta": beta_list, "entropy": entropy}
    write_csv(out, "asymptotic", params,
              ["d", "beta", "beta_c_numeric_magnitude", "beta_c_asymptotic", "rel_err"],
              [(r.d, r.beta, r.numeric, r.asymptotic, r.rel_err) for r in results])


@main.command("tavis-cummings")
@click.option("--epsilon", default=1.0, show_default=True, type=float)
@click.option("--g", "g", default=1.0, show_default=True, type=click.FloatRange(min=0.0))
@click.option("--beta", default=0.3, show_default=True, type=POS_FLOAT)
@click.option("--tau", default="pi/4", show_default=True, type=PiFloat())
@click.option("--n-max", default=DEFAULT_N_MAX, show_default=True, type=click.IntRange(min=2))
@click.option("--steps", default=200, show_default=True, type=click.IntRange(min=2))
@click.option("--control", type=click.Choice(["none", "incoherent"]), default="none", show_default=True,
              help="'incoherent' replaces the coherent input by the system's Gibbs state.")
@click.option("--leakage-tol", default=LEAKAGE_TOL, show_default=True, type=click.FloatRange(min=0.0),
              help="Maximal population of the top two Fock levels.")
@click.option("--allow-leakage", is_flag=True, help="Skip the truncation check.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@handle_errors
def tavis_cummings(epsilon, g, beta, tau, n_max, steps, control, leakage_tol, allow_leakage, out):
    """Heat and memory-distance trajectory of the two-spin cavity model."""
    if tau <= 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    model = build_tc_model(epsilon, g, n_max, beta)
    if control == "incoherent":
        rho_s = DensityMatrix(np.diag(model.spin_gibbs()))
    else:
        rho_s = coherent_input_state(beta, epsilon)
    traj = run_trajectory(model, rho_s, tau, steps, leakage_tol=None if allow_leakage else leakage_tol)
    params = {"epsilon": epsilon, "g": g, "beta": beta, "tau": tau, "n_max": n_max, "steps": steps,
              "control": control, "leakage_tol": None if allow_leakage else leakage_tol}
    write_csv(out, "tavis-cummings", params, ["t", "q", "delta", "energy_drift", "leakage"],
              zip(traj.times, traj.q, traj.delta, traj.energy_drift, traj.leakage))
    emit_json({
        "max_q": _json_number(traj.max_q),
        "q_tau": _json_number(traj.q[-1]),
        "final_delta": _json_number(traj.delta[-1]),
        "residual": _json_number(traj.fixed_point.residual),
        "fixed_point_method": traj.fixed_point.method,
        "max_leakage": _json_number(traj.leakage.max()),
    })


@main.command()
@click.option("--kind", required=True, type=click.Choice(["separable", "incoherent"]))
@click.option("--beta", required=True, type=POS_FLOAT)
@click.option("--energies", type=FloatList(), help="Separable: per-party energies E_k.")
@click.option("--entropies", type=FloatList(), help="Separable: per-party entropies S_k.")
@click.option("--local-dims", type=FloatList(int),
              help="Separable: per-party dimensions (ladder Hamiltonians); default 2 each.")
@click.option("--state", "state_path", type=click.Path(dir_okay=False),
              help="Separable: take marginal data from this state (ladder local Hamiltonians).")
@click.option("--dimension-only", "--energy-only", "dimension_only", is_flag=True,
              help="Separable: local entropies unknown; only energies and dimensions are used.")
@click.option("--energy", type=float, help="Incoherent: average energy E_S.")
@click.option("--hamiltonian", "ham_path", type=click.Path(dir_okay=False), help="Incoherent: Hamiltonian JSON.")
@click.option("--extremal", type=click.Choice(["vertex", "two-level"]), default="vertex", show_default=True)
@click.option("--q", "q", type=float, default=None, help="Measured heat to classify.")
@click.option("--margin", default=1e-7, show_default=True, type=click.FloatRange(min=0.0))
@handle_errors
def witness(kind, beta, energies, entropies, local_dims, state_path, dimension_only, energy, ham_path,
            extremal, q, margin):
    """Heat envelope of the separable or incoherent set, with an optional verdict."""
    if kind == "separable":
        if state_path:
            rho = load_state(state_path)
            data = local_data_from_state(rho, [ladder_hamiltonian(d) for d in rho.dims])
        else:
            if not energies:
                raise ValidationError("separable witness needs --energies or --state")
            dims = local_dims or [2] * len(energies)
            if len(dims) != len(energies):
                raise ValidationError("--local-dims and --energies differ in length")
            if entropies is None and not dimension_only:
                raise ValidationError("give --entropies or --dimension-only")
            if entropies is not None and len(entropies) != len(energies):
                raise ValidationError("--entropies and --energies differ in length")
            ents = entropies or [None] * len(energies)
            data = [LocalData(e, s, ladder_hamiltonian(d)) for e, s, d in zip(energies, ents, dims)]
        mode = "energy-only" if dimension_only else "exact"
        env = separable_envelope(data, beta, mode)
    else:
        if energy is None or ham_path is None:
            raise ValidationError("incoherent witness needs --energy and --hamiltonian")
        env = incoherent_envelope(energy, load_hamiltonian(ham_path), beta, extremal)
    record = {
        "kind": kind,
        "f_star": _json_number(env.f_star),
        "s_floor": _json_number(env.s_floor),
        "e_cap": _json_number(env.e_cap),
        "q_star_c": _json_number(env.q_star_c),
        "q_star_h": _json_number(env.q_star_h),
        "beta_star_c": _json_number(env.beta_star_c),
        "beta_star_h": _json_number(env.beta_star_h),
        "h_capped": env.h_capped,
    }
    if q is not None:
        record["q"] = _json_number(q)
        record["verdict"] = verdict(q, env, margin).value
    emit_json(record)


if __name__ == "__main__":
    main()
