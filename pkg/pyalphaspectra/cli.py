import argparse
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .benchmark import Benchmark
from .dualSolver import (
    NuParameter,
    SolverConfig,
    SolverError,
    kl0_closed_form,
    newton_solve,
    prepare_operator,
)
from .estimation import ArmaModel, DegenerateSampleError, SampleSeries, estimate_sigma, simulate_arma
from .filterBank import FilterBank, GammaOperator, zeroth_moment_constraint
from .spectra import (
    DEFAULT_GRID_SIZE,
    DivergenceSpec,
    RationalSpec,
    divergence,
    make_grid,
    quadrature,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SOLVER_FAILURE = 3
EXIT_CHECK_FAILED = 5
EXIT_USAGE = 64

DEFAULT_OUT_DIR = "pyalphaspectra-out"
SOLVED_RESIDUAL_TOL = 1e-6


class ConfigError(ValueError):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    # usage errors must not collide with the "infeasible" exit code
    def error(self, message):
        raise ConfigError("%s: %s" % (self.prog, message))


@dataclass(frozen=True)
class RunConfig:
    """
    Resolved settings of one CLI run. Command-line flags take precedence over the keys of the
    JSON request given with ``--config``.
    """
    subcommand: str
    config_path: str = None
    out_dir: str = DEFAULT_OUT_DIR
    grid_size: int = DEFAULT_GRID_SIZE
    tolerance: float = 1e-9
    max_iterations: int = 200
    nus: tuple = ()
    seed: int = None
    table_tolerance: float = None
    request: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand in ("solve", "sweep") and not self.nus:
            raise ConfigError("No nu given: use --nu or the 'nu'/'nus' request keys.")
        if self.subcommand == "sweep" and not any(math.isinf(nu) for nu in self.nus):
            raise ConfigError("A sweep needs nu = inf among its orders.")
        if self.config_path is not None and not os.path.isfile(self.config_path):
            raise ConfigError("Config file %r does not exist." % self.config_path)

    @property
    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(grid_size=self.grid_size, tolerance=self.tolerance,
                max_iterations=self.max_iterations)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        request = {}
        config_path = getattr(args, "config", None)
        if config_path is not None:
            if not os.path.isfile(config_path):
                raise ConfigError("Config file %r does not exist." % config_path)
            try:
                with open(config_path, encoding="utf-8") as fh:
                    request = json.load(fh)
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError("Cannot read config %r: %s" % (config_path, e)) from e
            if not isinstance(request, dict):
                raise ConfigError("Config %r must hold a JSON object." % config_path)
        elif args.subcommand in ("feasibility", "solve", "sweep", "divergence"):
            raise ConfigError("Subcommand %r needs --config." % args.subcommand)

        raw_nus = args.nu if args.nu else request.get("nus", request.get("nu"))
        if raw_nus is None:
            raw_nus = []
        elif not isinstance(raw_nus, list):
            raw_nus = [raw_nus]
        try:
            nus = tuple(NuParameter(nu).value for nu in raw_nus)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

        default_grid = 4096 if args.subcommand == "reproduce" else DEFAULT_GRID_SIZE
        return cls(
            subcommand=args.subcommand,
            config_path=config_path,
            out_dir=args.out,
            grid_size=_pick(args.grid, request.get("grid"), default_grid),
            tolerance=_pick(args.tol, request.get("tol"), 1e-9),
            max_iterations=_pick(args.max_iter, request.get("max_iter"), 200),
            nus=nus,
            seed=args.seed,
            table_tolerance=getattr(args, "table_tol", None),
            request=request,
        )


def _pick(flag, requested, default):
    if flag is not None:
        return flag
    return default if requested is None else requested


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON request file")
    common.add_argument("--out", default=DEFAULT_OUT_DIR, help="output directory")
    common.add_argument("--grid", type=int, help="frequency grid size (even, >= 4)")
    common.add_argument("--tol", type=float, help="gradient tolerance of the Newton solver")
    common.add_argument("--max-iter", dest="max_iter", type=int, help="maximum Newton iterations")
    common.add_argument("--nu", action="append", help="divergence order, integer >= 1 or 'inf' (repeatable)")
    common.add_argument("--seed", type=int,
        help="seed of simulated series (default 0), recorded in the solve and sweep JSON")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")

    parser = _ArgumentParser(prog="pyalphaspectra",
        description="Alpha-divergence approximation of spectral densities under covariance constraints.")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_ArgumentParser)
    sub.required = True
    sub.add_parser("feasibility", parents=[common], help="check that Sigma is feasible for a filter bank")
    sub.add_parser("solve", parents=[common], help="solve the approximation problem for one nu")
    sub.add_parser("sweep", parents=[common], help="solve for several nu and compare with nu = inf")
    sub.add_parser("divergence", parents=[common], help="evaluate divergences between two spectra")
    reproduce = sub.add_parser("reproduce", parents=[common], help="run the built-in reference benchmarks")
    reproduce.add_argument("--table-tol", dest="table_tol", type=float, default=None,
        help="tolerance on the reference covariance row (default from the benchmark)")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s")


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_csv(path: str, columns: dict) -> None:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[name], dtype=float) for name in names])
    lines = [",".join(names)]
    lines += [",".join("%.17g" % x for x in row) for row in data]
    _atomic_write(path, "\n".join(lines) + "\n")


def _nu_label(nu) -> str:
    return "inf" if math.isinf(nu) else str(nu)


def _section(request: dict, key: str):
    if key not in request:
        raise ConfigError("Request is missing the key %r." % key)
    return request[key]


def _resolve_sigma(request: dict, op: GammaOperator, seed: int = None) -> np.ndarray:
    grid = op.grid
    if "simulate" in request:
        spec = request["simulate"]
        model = ArmaModel.from_dict(_section(spec, "model"))
        series = simulate_arma(model, int(_section(spec, "N")), 0 if seed is None else seed,
            int(spec.get("burn_in", 1000)))
        return estimate_sigma(op.bank, series, op).conditioned
    if "sigma_from" in request:
        return op.gamma_apply(RationalSpec.from_dict(request["sigma_from"]).evaluate(grid))
    if "samples" in request:
        estimate = estimate_sigma(op.bank, SampleSeries.from_csv(request["samples"]), op)
        return estimate.conditioned
    sigma = request.get("sigma", "identity")
    if isinstance(sigma, str):
        if sigma != "identity":
            raise ConfigError("Unknown sigma %r." % sigma)
        return np.eye(op.n)
    sigma = np.array(sigma, dtype=float)
    if sigma.shape != (op.n, op.n):
        raise ConfigError("Sigma must be %d x %d, got shape %s." % (op.n, op.n, sigma.shape))
    return sigma


def _problem(config: RunConfig):
    request = config.request
    grid = make_grid(config.grid_size)
    bank = FilterBank.from_dict(_section(request, "filterbank"))
    raw_op = GammaOperator(bank, grid)
    try:
        sigma = _resolve_sigma(request, raw_op, config.seed)
    except DegenerateSampleError as e:
        logger.error("%s", e)
        return None, e.report, None
    op, report = prepare_operator(bank, sigma, grid)
    psi = None
    if "prior" in request:
        psi = RationalSpec.from_dict(request["prior"]).evaluate(grid)
    return op, report, psi


def _solve_and_write(nu, psi, op, solver_config, out_dir, stem, seed=None):
    """Run one solve and write its artifacts; returns the SolveResult or None on failure."""
    label = _nu_label(nu)
    try:
        result = newton_solve(nu, psi, op, solver_config)
    except SolverError as e:
        logger.error("nu=%s: %s", label, e)
        write_json(os.path.join(out_dir, "%s_nu%s_failure.json" % (stem, label)), e.to_dict())
        return None
    # the spectrum itself lives in the CSV, the JSON points to it
    csv_name = "%s_nu%s.csv" % (stem, label)
    write_csv(os.path.join(out_dir, csv_name),
        {"theta": op.grid.nodes, "phi": result.phi_opt.values, "psi": psi.values})
    payload = dict(result.to_dict(), seed=seed, spectrum_csv=csv_name, grid=op.grid.size)
    write_json(os.path.join(out_dir, "%s_nu%s.json" % (stem, label)), payload)
    return result


def cmd_feasibility(config: RunConfig) -> int:
    request = config.request
    grid = make_grid(config.grid_size)
    bank = FilterBank.from_dict(_section(request, "filterbank"))
    op = GammaOperator(bank, grid)
    try:
        report = op.feasibility_check(_resolve_sigma(request, op, config.seed), request.get("tolerance"))
    except DegenerateSampleError as e:
        logger.error("%s", e)
        report = e.report
    payload = report.to_dict()
    write_json(os.path.join(config.out_dir, "feasibility.json"), payload)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_solve(config: RunConfig) -> int:
    op, report, psi = _problem(config)
    if op is None:
        write_json(os.path.join(config.out_dir, "feasibility.json"), report.to_dict())
        return EXIT_INFEASIBLE
    if psi is None:
        raise ConfigError("Request is missing the key 'prior'.")
    nu = config.nus[0]
    result = _solve_and_write(nu, psi, op, config.solver_config, config.out_dir, "solve", config.seed)
    if result is None:
        return EXIT_SOLVER_FAILURE
    print(json.dumps({"nu": _nu_label(nu), "dual_value": result.dual_value,
        "constraint_residual": result.constraint_residual, "iterations": result.iterations}))
    return EXIT_OK


def _sweep(nus, psi, op, solver_config, out_dir, stem, seed=None):
    results = {}
    for nu in sorted(set(nus)):
        results[nu] = _solve_and_write(nu, psi, op, solver_config, out_dir, stem, seed)
    reference = results.get(math.inf)
    distances = {}
    if reference is not None:
        for nu, result in results.items():
            if result is not None:
                distances[nu] = result.phi_opt.sup_distance(reference.phi_opt)
    finite = [distances[nu] for nu in sorted(distances) if not math.isinf(nu)]
    summary = {
        "nus": [_nu_label(nu) for nu in sorted(results)],
        "failed": [_nu_label(nu) for nu in sorted(results) if results[nu] is None],
        "distance_to_minxent": {_nu_label(nu): d for nu, d in sorted(distances.items())},
        "residuals": {_nu_label(nu): r.constraint_residual for nu, r in sorted(results.items()) if r is not None},
        "strictly_decreasing": bool(all(a > b for a, b in zip(finite, finite[1:]))),
        "seed": seed,
    }
    write_json(os.path.join(out_dir, "%s_summary.json" % stem), summary)
    return results, distances, summary


def cmd_sweep(config: RunConfig) -> int:
    op, report, psi = _problem(config)
    if op is None:
        write_json(os.path.join(config.out_dir, "feasibility.json"), report.to_dict())
        return EXIT_INFEASIBLE
    if psi is None:
        raise ConfigError("Request is missing the key 'prior'.")
    results, _, summary = _sweep(config.nus, psi, op, config.solver_config, config.out_dir, "sweep", config.seed)
    print(json.dumps(summary["distance_to_minxent"], sort_keys=True))
    return EXIT_SOLVER_FAILURE if summary["failed"] else EXIT_OK


def cmd_divergence(config: RunConfig) -> int:
    request = config.request
    grid = make_grid(config.grid_size)
    phi = RationalSpec.from_dict(_section(request, "phi")).evaluate(grid)
    psi = RationalSpec.from_dict(_section(request, "psi")).evaluate(grid)
    specs = [DivergenceSpec.from_dict(item) for item in _section(request, "families")]
    if not specs:
        raise ConfigError("Request lists no divergence families.")

    rows = [dict(spec.to_dict(), value=divergence(phi, psi, spec)) for spec in specs]
    alphas = {spec.parameter for spec in specs if spec.family == "alpha"}
    for spec in specs:
        beta = spec.parameter
        if spec.family != "beta" or not any(math.isclose(a, 1 / beta) for a in alphas):
            continue
        lhs = divergence(phi, psi, spec)
        rhs = divergence(phi.power(beta), psi.power(beta), DivergenceSpec("alpha", 1 / beta)) / beta ** 2
        rows.append({"check": "beta_alpha_transformation", "beta": beta, "beta_value": lhs,
            "transformed_alpha_value": rhs, "relative_error": abs(lhs - rhs) / max(abs(lhs), 1e-300)})

    write_json(os.path.join(config.out_dir, "divergences.json"), {"grid": grid.size, "rows": rows})
    print(json.dumps(rows, sort_keys=True))
    return EXIT_OK


def _check(checks, name, value, tolerance, passed=None):
    passed = bool(value <= tolerance) if passed is None else bool(passed)
    checks.append({"name": name, "value": value, "tolerance": tolerance, "passed": passed})


def _reproduce_two_state(config, checks):
    bench = Benchmark("two_state")
    grid = make_grid(config.grid_size)
    op = GammaOperator(bench.bank, grid)
    ones = bench.prior_density(grid)
    _check(checks, "two_state.gramian", float(np.max(np.abs(op.gamma_apply(ones) - np.eye(op.n)))), 1e-8)

    norm_op, _ = prepare_operator(bench.bank, bench.sigma(grid), grid)
    for nu in (NuParameter(v).value for v in bench.nus):
        try:
            result = newton_solve(nu, ones, norm_op, config.solver_config)
        except SolverError as e:
            _check(checks, "two_state.flat_prior_nu%s" % _nu_label(nu), math.inf, 1e-6)
            logger.error("two_state nu=%s: %s", _nu_label(nu), e)
            continue
        gap = max(result.lambda_opt.norm(), result.phi_opt.sup_distance(ones))
        _check(checks, "two_state.flat_prior_nu%s" % _nu_label(nu), gap, 1e-6)

    kl0 = kl0_closed_form(op).values
    reference = RationalSpec.from_dict(bench.data["kl0_reference"]).evaluate(grid).values
    _check(checks, "two_state.kl0_reference", float(np.max(np.abs(kl0 / reference - 1))), 1e-6)


def _reproduce_arma(config, checks):
    bench = Benchmark("arma_lag6")
    grid = make_grid(config.grid_size)
    op = GammaOperator(bench.bank, grid)
    sigma = bench.sigma(grid, op)
    table_tol = config.table_tolerance
    if table_tol is None:
        table_tol = bench.data["reference_tolerance"]
    deviation = float(np.max(np.abs(sigma - bench.reference_sigma())))
    _check(checks, "arma_lag6.sigma_table", deviation, table_tol)
    readings = bench.numerator_reading_deviations(grid)
    _check(checks, "arma_lag6.numerator_reading", readings["chosen"], readings["alternative"],
        passed=readings["chosen"] < readings["alternative"])

    norm_op, report = prepare_operator(bench.bank, sigma, grid)
    if norm_op is None:
        _check(checks, "arma_lag6.feasibility", report.range_residual, report.tolerance, passed=False)
        return
    psi = bench.prior_density(grid)
    nus = [NuParameter(v).value for v in bench.nus]
    results, distances, summary = _sweep(nus, psi, norm_op, config.solver_config, config.out_dir, "arma_lag6")
    moment = zeroth_moment_constraint(norm_op.bank)
    for nu, result in sorted(results.items()):
        residual = math.inf if result is None else result.constraint_residual
        _check(checks, "arma_lag6.solve_nu%s" % _nu_label(nu), residual, SOLVED_RESIDUAL_TOL)
        if result is not None and moment is not None:
            _check(checks, "arma_lag6.zeroth_moment_nu%s" % _nu_label(nu),
                abs(quadrature(result.phi_opt) - moment), 1e-6)
    _check(checks, "arma_lag6.distance_ordering", 0.0, 0.0,
        passed=summary["strictly_decreasing"] and not summary["failed"])


def cmd_reproduce(config: RunConfig) -> int:
    checks = []
    _reproduce_two_state(config, checks)
    _reproduce_arma(config, checks)
    failed = [check["name"] for check in checks if not check["passed"]]
    write_json(os.path.join(config.out_dir, "checks.json"),
        {"grid": config.grid_size, "checks": checks, "failed": failed})
    if failed:
        for name in failed:
            print("check failed: %s" % name, file=sys.stderr)
        return EXIT_CHECK_FAILED
    print("all %d checks passed" % len(checks))
    return EXIT_OK


COMMANDS = {
    "feasibility": cmd_feasibility,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "divergence": cmd_divergence,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _configure_logging(args.verbose)
        config = RunConfig.from_args(args)
        return COMMANDS[config.subcommand](config)
    except (ConfigError, DegenerateSampleError, KeyError, TypeError, ValueError, OSError) as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_USAGE
