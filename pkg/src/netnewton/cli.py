"""Command-line interface: seeded experiments and bound reports as CSV.

Subcommands cover single trace runs, the adaptive penalty schedule, the
degree-randomized exchange-count sweep, the logistic benchmark and the
spectral bound report. Every run is deterministic under a fixed seed,
numeric output keeps 17 significant digits, and settings follow the
precedence CLI flag > config file > built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import analysis, penalty
from .objectives import (
    centralized_optimum, make_logistic, make_quadratic, quadratic_optimum,
)
from .penalty import PenalizedProblem, gradient_blocks, nn_direction
from .runtime import (
    AdaptiveConfig, HistogramConfig, SolverConfig, histogram_experiment,
    method_label, run,
)
from .topology import (
    WeightMatrix, build_d_regular_cycle, build_lazy_metropolis_weights,
    validate_weights,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2

# iteration budgets used when --max-iters is not given
DEFAULT_TRACE_ITERS = 2000
DEFAULT_SWEEP_ITERS = 30000


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    """Complete description of one CLI invocation.

    Serializes to the key = value config format and back without loss, so
    a written spec reproduces the exact run that produced it.
    """

    subcommand: str = "run"
    n: int = 100
    p: int = 4
    xi: int = 2
    mu: float = 3.0
    sigma_plus: float = 1.0
    sigma_minus: float = 1.0
    reg: float = 1e-4
    samples: int = 50
    seed: int = 0
    d: int = 4
    methods: tuple = ("dgd", "nn")
    orders: tuple = (0, 1, 2)
    eps: float = 1.0
    alpha: float = 1e-2
    tol: float = 1e-3
    eta: float = 10.0
    alpha0: float = 1e-1
    max_iters: int | None = None
    target: float | None = None
    trials: int = 1000
    workers: int = 1
    out: str = "."
    break_weights: bool = False

    def to_config_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append("%s = %s" % (f.name, _format_value(getattr(self, f.name))))
        return "\n".join(lines) + "\n"


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_field(field: dataclasses.Field, text: str):
    text = text.strip()
    if text.lower() == "none":
        return None
    name = field.name
    if name in ("methods",):
        return tuple(part.strip() for part in text.split(",") if part.strip())
    if name in ("orders",):
        return tuple(int(part) for part in text.split(",") if part.strip())
    if name in ("break_weights",):
        lowered = text.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError("cannot parse boolean %r for %s" % (text, name))
    if name in ("subcommand", "out"):
        return text
    if name in ("mu", "sigma_plus", "sigma_minus", "reg", "eps", "alpha",
                "tol", "eta", "alpha0", "target"):
        return float(text)
    return int(text)


def spec_from_config_text(text: str) -> ExperimentSpec:
    """Parse key = value lines (# comments allowed) into a spec."""
    by_name = {f.name: f for f in dataclasses.fields(ExperimentSpec)}
    overrides = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError("config line %r is not key = value" % raw.strip())
        if key not in by_name:
            raise ValueError("unknown config key %r" % key)
        overrides[key] = _parse_field(by_name[key], value)
    return dataclasses.replace(ExperimentSpec(), **overrides)


def _spec_from_args(subcommand: str, args: argparse.Namespace) -> ExperimentSpec:
    if getattr(args, "config", None) is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as handle:
                spec = spec_from_config_text(handle.read())
        except OSError as exc:
            raise ValueError("cannot read config file: %s" % exc) from exc
    else:
        spec = ExperimentSpec()
    overrides = {"subcommand": subcommand}
    by_name = {f.name: f for f in dataclasses.fields(ExperimentSpec)}
    for key, value in vars(args).items():
        if key in ("config",) or value is None or key not in by_name:
            continue
        if key in ("methods", "orders") and isinstance(value, str):
            value = _parse_field(by_name[key], value)
        overrides[key] = value
    return dataclasses.replace(spec, **overrides)


def expand_methods(spec: ExperimentSpec) -> list:
    """Turn the method list into explicit (method, order) pairs."""
    pairs = []
    for name in spec.methods:
        lowered = name.strip().lower()
        if lowered == "dgd":
            pairs.append(("dgd", 0))
        elif lowered == "nn":
            pairs.extend(("nn", k) for k in spec.orders)
        elif lowered.startswith("nn-"):
            pairs.append(("nn", int(lowered[3:])))
        else:
            raise ValueError("unknown method %r" % name)
    if not pairs:
        raise ValueError("no methods requested")
    return pairs


def _quadratic_setup(spec: ExperimentSpec, alpha: float):
    topo = build_d_regular_cycle(spec.n, spec.d)
    weights = build_lazy_metropolis_weights(topo)
    objs, instance = make_quadratic(spec.n, spec.p, spec.xi, spec.seed)
    problem = PenalizedProblem(alpha=alpha, weights=weights,
                               objectives=tuple(objs))
    return problem, quadratic_optimum(instance), instance


def _write(path: str, content: str):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(content)


def _print_summary(rows: list):
    header = ("method", "iters-to-target", "exchanges", "final_e_t", "reason")
    widths = [max(len(header[i]), max((len(r[i]) for r in rows), default=0))
              for i in range(len(header))]
    line = "  ".join("%-*s" % (widths[i], header[i]) for i in range(len(header)))
    print(line)
    for row in rows:
        print("  ".join("%-*s" % (widths[i], row[i]) for i in range(len(row))))


def _run_methods(spec: ExperimentSpec, problem: PenalizedProblem, x_star,
                 prefix: str, adaptive: AdaptiveConfig | None = None) -> int:
    os.makedirs(spec.out, exist_ok=True)
    max_iters = spec.max_iters if spec.max_iters is not None else DEFAULT_TRACE_ITERS
    rows = []
    worst = EXIT_OK
    for method, order in expand_methods(spec):
        config = SolverConfig(method=method, order=order, step_size=spec.eps,
                              max_iters=max_iters, target_error=spec.target,
                              adaptive=adaptive)
        trace = run(problem, config, x_star=x_star)
        label = method_label(method, order)
        path = os.path.join(spec.out, "%s_%s.csv" % (prefix, label))
        _write(path, trace.to_csv())
        last = trace.records[-1]
        reached = "-" if trace.target_iteration is None else str(trace.target_iteration)
        exchanges = "-" if trace.target_iteration is None else str(
            trace.target_iteration * trace.rounds_per_iter)
        rows.append((label, reached, exchanges, "%.6e" % last.rel_error,
                     trace.reason))
        if trace.reason in ("diverged", "nan"):
            worst = EXIT_NUMERIC
    _print_summary(rows)
    return worst


def cmd_run(spec: ExperimentSpec) -> int:
    problem, x_star, _ = _quadratic_setup(spec, spec.alpha)
    return _run_methods(spec, problem, x_star, "trace")


def cmd_adaptive(spec: ExperimentSpec) -> int:
    problem, x_star, _ = _quadratic_setup(spec, spec.alpha0)
    adaptive = AdaptiveConfig(tol=spec.tol, eta=spec.eta)
    return _run_methods(spec, problem, x_star, "adaptive", adaptive=adaptive)


def cmd_logistic(spec: ExperimentSpec) -> int:
    objs, _ = make_logistic(spec.n, spec.p, spec.samples, spec.mu,
                            spec.sigma_plus, spec.sigma_minus, spec.reg,
                            spec.seed)
    topo = build_d_regular_cycle(spec.n, spec.d)
    weights = build_lazy_metropolis_weights(topo)
    problem = PenalizedProblem(alpha=spec.alpha, weights=weights,
                               objectives=tuple(objs))
    x_star = centralized_optimum(objs)
    code = _run_methods(spec, problem, x_star, "logistic")
    return code


def cmd_histogram(spec: ExperimentSpec) -> int:
    if spec.trials < 1:
        raise ValueError("need at least one trial")
    max_iters = spec.max_iters if spec.max_iters is not None else DEFAULT_SWEEP_ITERS
    config = HistogramConfig(
        n_trials=spec.trials,
        target_error=spec.target if spec.target is not None else 1e-2,
        n_agents=spec.n, dim=spec.p, cond_exponent=spec.xi, alpha=spec.alpha,
        step_size=spec.eps, orders=spec.orders, max_iters=max_iters,
        seed=spec.seed, workers=spec.workers)
    result = histogram_experiment(config)
    os.makedirs(spec.out, exist_ok=True)
    _write(os.path.join(spec.out, "histogram.csv"), result.to_csv())
    means = result.mean_exchanges()
    censored = result.censored_counts()
    print("method  mean_exchanges  censored_trials")
    for method in result.methods():
        mean = means[method]
        text = "%.17g" % mean if np.isfinite(mean) else "-"
        print("%-6s  %-14s  %d" % (method, text, censored[method]))
    return EXIT_OK


def cmd_analyze(spec: ExperimentSpec) -> int:
    topo = build_d_regular_cycle(spec.n, spec.d)
    weights = build_lazy_metropolis_weights(topo)
    if spec.break_weights:
        entries = np.array(weights.entries)
        j = topo.neighbor_lists[0][0]
        entries[0, j] += 0.05
        weights = WeightMatrix(n=weights.n, entries=entries,
                               delta=weights.delta, big_delta=weights.big_delta)
    violations = validate_weights(weights, topo)
    for message in violations:
        print("weight violation: %s" % message)

    objs, _ = make_quadratic(spec.n, spec.p, spec.xi, spec.seed)
    problem = PenalizedProblem(alpha=spec.alpha, weights=weights,
                               objectives=tuple(objs))
    order = max(spec.orders)
    os.makedirs(spec.out, exist_ok=True)
    report_path = os.path.join(spec.out, "spectral_report.csv")

    try:
        y = np.zeros((spec.n, spec.p))
        merged: dict = {}
        report = None
        previous = None
        for _ in range(5):
            pairs = None if previous is None else [(previous, y)]
            report = analysis.full_report(problem, y, order, sample_pairs=pairs)
            for check in report.checks:
                kept = merged.get(check.name)
                if kept is None or check.margin < kept.margin:
                    merged[check.name] = check
            gradient = gradient_blocks(problem, y)
            direction = nn_direction(problem, y, gradient, order)
            previous = y
            y = y + spec.eps * direction

        step, zeta = analysis.theoretical_stepsize(
            problem, np.zeros((spec.n, spec.p)), order)
        report.constants["step_theory"] = step
        report.constants["zeta"] = zeta
    except (ValueError, RuntimeError) as exc:
        # the matrix family is too degenerate for the bound suite; keep the
        # validator findings as the report
        body = "".join("# violation: %s\n" % v for v in violations)
        _write(report_path, body + "# report aborted: %s\n" % exc)
        print("report aborted: %s" % exc)
        return EXIT_NUMERIC

    report.checks = list(merged.values())
    header = "".join("# %s = %.17g\n" % (key, val)
                     for key, val in report.constants.items())
    _write(report_path, header + report.to_csv())
    print(report.to_text(), end="")
    if violations or not report.all_passed:
        return EXIT_NUMERIC
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit with the config-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, "%s: error: %s\n" % (self.prog, message))


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key = value settings file")
    parser.add_argument("--n", type=int, help="number of agents")
    parser.add_argument("--p", type=int, help="decision vector dimension")
    parser.add_argument("--seed", type=int, help="master RNG seed")
    parser.add_argument("--d", type=int, help="regular graph degree")
    parser.add_argument("--eps", type=float, help="step size for the Newton-style update")
    parser.add_argument("--K", dest="orders", help="comma list of series orders")
    parser.add_argument("--methods", help="comma list from dgd, nn, nn-<K>")
    parser.add_argument("--alpha", type=float, help="objective weight in the penalized problem")
    parser.add_argument("--max-iters", dest="max_iters", type=int,
                        help="iteration budget")
    parser.add_argument("--target", type=float, help="stop when e_t drops below this")
    parser.add_argument("--out", help="output directory for CSV files")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netnewton",
                     description="Distributed quadratic/logistic benchmarks for "
                                 "consensus gradient descent and truncated-series "
                                 "Newton methods.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_run = sub.add_parser("run", help="trace runs on one quadratic instance")
    p_run.add_argument("--xi", type=int, help="condition exponent of the curvature draws")
    _add_common(p_run)

    p_adapt = sub.add_parser("adaptive", help="runs with the shrinking-alpha schedule")
    p_adapt.add_argument("--xi", type=int, help="condition exponent of the curvature draws")
    p_adapt.add_argument("--tol", type=float, help="gradient tolerance triggering the shrink")
    p_adapt.add_argument("--eta", type=float, help="divisor applied to alpha at each trigger")
    p_adapt.add_argument("--alpha0", type=float, help="starting alpha")
    _add_common(p_adapt)

    p_hist = sub.add_parser("histogram", help="degree-randomized exchange-count sweep")
    p_hist.add_argument("--xi", type=int, help="condition exponent of the curvature draws")
    p_hist.add_argument("--trials", type=int, help="number of random trials")
    p_hist.add_argument("--workers", type=int, help="parallel worker processes")
    _add_common(p_hist)

    p_log = sub.add_parser("logistic", help="trace runs on one logistic instance")
    p_log.add_argument("--mu", type=float, help="class mean offset")
    p_log.add_argument("--sigma-plus", dest="sigma_plus", type=float,
                       help="positive-class feature spread")
    p_log.add_argument("--sigma-minus", dest="sigma_minus", type=float,
                       help="negative-class feature spread")
    p_log.add_argument("--reg", type=float, help="ridge coefficient")
    p_log.add_argument("--samples", type=int, help="samples per agent")
    _add_common(p_log)

    p_an = sub.add_parser("analyze", help="spectral bound report on a seeded instance")
    p_an.add_argument("--xi", type=int, help="condition exponent of the curvature draws")
    p_an.add_argument("--break-weights", dest="break_weights",
                      action="store_const", const=True,
                      help="corrupt one weight entry to exercise the failure path")
    _add_common(p_an)
    return parser


COMMANDS = {
    "run": cmd_run,
    "adaptive": cmd_adaptive,
    "histogram": cmd_histogram,
    "logistic": cmd_logistic,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = _spec_from_args(args.subcommand, args)
        return COMMANDS[spec.subcommand](spec)
    except ValueError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
