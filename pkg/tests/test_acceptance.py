"""End-to-end acceptance checks.

Each test evaluates every clause of one numbered claim from the README's
acceptance list, records a single PASS/FAIL summary line for the terminal
report, and then asserts the clauses exactly as stated. Clauses the
implementation cannot meet are still asserted at full strength; the
summary line carries the measured values so a failure documents itself.
"""

import time

import numpy as np

from conftest import record_acceptance
from netnewton import (
    AdaptiveConfig,
    HistogramConfig,
    PenalizedProblem,
    SolverConfig,
    SyncNetwork,
    build_d_regular_cycle,
    build_lazy_metropolis_weights,
    centralized_optimum,
    full_report,
    histogram_experiment,
    make_logistic,
    make_quadratic,
    quadratic_optimum,
    relative_error,
    run,
    run_adaptive,
    step_dgd,
    step_nn,
    theoretical_stepsize,
)
from netnewton.analysis import problem_constants
from netnewton.penalty import (
    dense_nn_direction,
    gradient_blocks,
    penalized_optimum_oracle,
    penalized_value,
)


def _quadratic_problem(n=100, p=4, xi=2, d=4, alpha=1e-2, seed=1):
    topo = build_d_regular_cycle(n, d)
    weights = build_lazy_metropolis_weights(topo)
    objs, inst = make_quadratic(n, p, xi, seed)
    problem = PenalizedProblem(alpha=alpha, weights=weights,
                               objectives=tuple(objs))
    return problem, quadratic_optimum(inst)


def _first_below(trace, threshold):
    for record in trace.records:
        if record.rel_error < threshold:
            return record.t
    return None


def test_claim_1_direction_oracle_equivalence():
    started = time.monotonic()
    rng = np.random.default_rng(2024)
    worst_nn = 0.0
    worst_dgd = 0.0
    for idx in range(100):
        n = 3 + idx % 6
        p = 2 + 2 * (idx % 2)
        order = idx % 6
        d = 4 if n >= 5 and idx % 3 == 0 else 2
        alpha = 10.0 ** (-(idx % 3))
        topo = build_d_regular_cycle(n, d)
        weights = build_lazy_metropolis_weights(topo)
        objs, _ = make_quadratic(n, p, idx % 3, idx)
        problem = PenalizedProblem(alpha=alpha, weights=weights,
                                   objectives=tuple(objs))
        y0 = rng.normal(size=(n, p))

        net = SyncNetwork(problem, y0)
        g = step_nn(problem, net, order, 1.0)
        dense = dense_nn_direction(problem, y0, g, order)
        worst_nn = max(worst_nn,
                       float(np.max(np.abs(net.direction_blocks() - dense))))

        net = SyncNetwork(problem, y0)
        step_dgd(problem, net)
        expected = y0 - gradient_blocks(problem, y0)
        worst_dgd = max(worst_dgd,
                        float(np.max(np.abs(net.iterate_blocks() - expected))))
    elapsed = time.monotonic() - started

    failures = []
    if worst_nn > 1e-12:
        failures.append("node-local vs dense direction gap %.3e > 1e-12" % worst_nn)
    if worst_dgd > 1e-14:
        failures.append("consensus vs gradient form gap %.3e > 1e-14" % worst_dgd)
    if elapsed >= 30.0:
        failures.append("runtime %.1fs exceeds 30s" % elapsed)
    detail = ("100 instances, direction gap %.2e, update-form gap %.2e, %.1fs"
              % (worst_nn, worst_dgd, elapsed))
    record_acceptance(1, "FAIL" if failures else "PASS", detail)
    assert not failures, "; ".join(failures)


def test_claim_2_spectral_bound_suite():
    started = time.monotonic()
    rng = np.random.default_rng(77)
    worst_margin = np.inf
    failed_checks = []

    def run_suite(problem, order):
        nonlocal worst_margin
        y = rng.normal(size=(problem.n, problem.p))
        other = rng.normal(size=(problem.n, problem.p))
        report = full_report(problem, y, order, sample_pairs=[(other, y)])
        for check in report.checks:
            worst_margin = min(worst_margin, check.margin)
            if not check.passed:
                failed_checks.append(check.name)

    for idx in range(100):
        n = 4 + idx % 5
        p = 2 + 2 * (idx % 2)
        d = 4 if n >= 5 and idx % 2 == 0 else 2
        topo = build_d_regular_cycle(n, d)
        weights = build_lazy_metropolis_weights(topo)
        objs, _ = make_quadratic(n, p, idx % 3, 1000 + idx)
        problem = PenalizedProblem(alpha=10.0 ** (-(idx % 3)), weights=weights,
                                   objectives=tuple(objs))
        run_suite(problem, order=idx % 4)

    for idx in range(20):
        n = 4 + idx % 4
        p = 2 + idx % 2
        topo = build_d_regular_cycle(n, 2)
        weights = build_lazy_metropolis_weights(topo)
        objs, _ = make_logistic(n, p, 5, 3.0, 1.0, 1.0, 1e-3, 2000 + idx)
        problem = PenalizedProblem(alpha=1e-2, weights=weights,
                                   objectives=tuple(objs))
        run_suite(problem, order=idx % 3)
    elapsed = time.monotonic() - started

    failures = []
    if failed_checks:
        failures.append("violated bounds: %s" % sorted(set(failed_checks)))
    if elapsed >= 120.0:
        failures.append("runtime %.1fs exceeds 2min" % elapsed)
    detail = ("120 instances, worst margin %.2e, %.1fs"
              % (worst_margin, elapsed))
    record_acceptance(2, "FAIL" if failures else "PASS", detail)
    assert not failures, "; ".join(failures)


def test_claim_3_quadratic_trace_benchmarks():
    started = time.monotonic()
    problem, x_star = _quadratic_problem()
    coarse = 1.9e-1

    dgd_trace = run(problem, SolverConfig(method="dgd", max_iters=1500),
                    x_star=x_star)
    nn_traces = {}
    for order in (0, 1, 2):
        config = SolverConfig(method="nn", order=order, max_iters=1000)
        nn_traces[order] = run(problem, config, x_star=x_star)

    hits = {"dgd": _first_below(dgd_trace, coarse)}
    for order in (0, 1, 2):
        hits["nn-%d" % order] = _first_below(nn_traces[order], coarse)

    plateau = relative_error(penalized_optimum_oracle(problem), x_star)
    finals = {order: nn_traces[order].records[-1].rel_error
              for order in (0, 1, 2)}
    elapsed = time.monotonic() - started

    failures = []
    if any(v is None for v in hits.values()):
        failures.append("some methods never reached e_t < %.1e: %s"
                        % (coarse, hits))
    else:
        if not hits["nn-2"] < hits["nn-1"] < hits["nn-0"] < hits["dgd"]:
            failures.append("iteration ordering violated: %s" % hits)
        if not all(hits["nn-%d" % k] < 500 for k in (0, 1, 2)):
            failures.append("a series method needed 500+ iterations: %s" % hits)
        if not hits["dgd"] > 1000:
            failures.append("gradient method reached the coarse target at "
                            "iteration %d, not after 1000" % hits["dgd"])
    if not 1e-3 <= plateau <= 1e-1:
        failures.append("plateau %.3e outside [1e-3, 1e-1]" % plateau)
    for order, final in finals.items():
        if final > 1.05 * plateau:
            failures.append("nn-%d ended at e=%.3e, above the plateau %.3e"
                            % (order, final, plateau))
    if elapsed >= 60.0:
        failures.append("runtime %.1fs exceeds 1min" % elapsed)

    detail = ("iters to e<%.2g: dgd=%s nn0=%s nn1=%s nn2=%s, plateau %.2e, "
              "%.1fs" % (coarse, hits["dgd"], hits["nn-0"], hits["nn-1"],
                         hits["nn-2"], plateau, elapsed))
    record_acceptance(3, "FAIL" if failures else "PASS", detail)
    assert not failures, "; ".join(failures)


def test_claim_4_exchange_accounting_and_sweep():
    started = time.monotonic()
    failures = []

    problem, x_star = _quadratic_problem(n=20, p=4, xi=1, d=4, seed=3)
    for engine in ("stacked", "local"):
        for method, order, per_iter in [("dgd", 0, 1), ("nn", 0, 1),
                                        ("nn", 1, 2), ("nn", 2, 3)]:
            config = SolverConfig(method=method, order=order, max_iters=12,
                                  engine=engine)
            trace = run(problem, config, x_star=x_star)
            comm = trace.column("comm")
            if not np.array_equal(comm, per_iter * trace.column("t")):
                failures.append("%s/%s exchange column is not exactly %d*t"
                                % (engine, config.label, per_iter))

    sweep = HistogramConfig(n_trials=200, target_error=1e-2, n_agents=100,
                            dim=4, cond_exponent=2, alpha=1e-2,
                            orders=(0, 1, 2), degrees=(2, 4, 6, 8, 10),
                            max_iters=30000, seed=0, workers=1)
    result = histogram_experiment(sweep)
    means = result.mean_exchanges()
    censored = result.censored_counts()
    bands = {"dgd": (2150.0, 6450.0), "nn-0": (200.0, 600.0),
             "nn-1": (175.0, 525.0), "nn-2": (185.0, 555.0)}
    for method, (lo, hi) in bands.items():
        if not lo <= means[method] <= hi:
            failures.append("mean exchanges %s=%.1f outside [%g, %g]"
                            % (method, means[method], lo, hi))
    if not means["nn-1"] <= means["nn-0"]:
        failures.append("nn-1 mean %.2f exceeds nn-0 mean %.2f"
                        % (means["nn-1"], means["nn-0"]))
    elapsed = time.monotonic() - started
    if elapsed >= 600.0:
        failures.append("runtime %.1fs exceeds 10min" % elapsed)

    detail = ("means dgd=%.0f nn0=%.0f nn1=%.0f nn2=%.0f, censored %s of 200, "
              "%.0fs" % (means["dgd"], means["nn-0"], means["nn-1"],
                         means["nn-2"], censored["dgd"], elapsed))
    record_acceptance(4, "FAIL" if failures else "PASS", detail)
    assert not failures, "; ".join(failures)


def test_claim_5_contraction_certificate():
    started = time.monotonic()
    failures = []
    worst_zeta = 1.0

    def check_run(problem, order, iters):
        nonlocal worst_zeta
        y_star = penalized_optimum_oracle(problem)
        f_star = penalized_value(problem, y_star)
        step, zeta = theoretical_stepsize(problem,
                                          np.zeros((problem.n, problem.p)),
                                          order, f_star=f_star)
        if not 0.0 < zeta < 1.0:
            failures.append("zeta %.3e outside (0, 1)" % zeta)
            return
        worst_zeta = min(worst_zeta, zeta)
        config = SolverConfig(method="nn", order=order, step_size=step,
                              max_iters=iters)
        trace = run(problem, config)
        gaps = trace.column("F") - f_star
        slack = 1e-13 * (1.0 + abs(f_star))
        for t in range(len(gaps) - 1):
            if gaps[t + 1] > (1.0 - zeta) * gaps[t] + slack:
                failures.append("order %d, iteration %d: gap shrank by "
                                "%.12f, needed at least %.12f"
                                % (order, t, gaps[t + 1] / max(gaps[t], 1e-300),
                                   1.0 - zeta))
                return
        return step, zeta

    quad_steps = []
    for seed in range(3):
        problem, _ = _quadratic_problem(n=20, p=4, xi=1, d=4, seed=seed)
        curv_min = problem.curvature_bounds()[0]
        for order in (0, 1, 2):
            out = check_run(problem, order, iters=60)
            if out is None:
                continue
            step, zeta = out
            quad_steps.append(step)
            expected = problem.alpha * curv_min * problem_constants(problem, order).lam_min
            if step != 1.0:
                failures.append("constant-curvature step %.6f is not 1" % step)
            if abs(zeta - expected) > 1e-12 * expected:
                failures.append("quadratic zeta %.6e differs from closed "
                                "form %.6e" % (zeta, expected))

    topo = build_d_regular_cycle(8, 2)
    weights = build_lazy_metropolis_weights(topo)
    objs, _ = make_logistic(8, 3, 6, 3.0, 1.0, 1.0, 1e-4, 0)
    logistic_problem = PenalizedProblem(alpha=1e-2, weights=weights,
                                        objectives=tuple(objs))
    log_steps = []
    for order in (0, 1, 2):
        out = check_run(logistic_problem, order, iters=25)
        if out is not None:
            step, _ = out
            log_steps.append(step)
            if not 0.0 < step <= 1.0:
                failures.append("logistic step %.3e outside (0, 1]" % step)

    elapsed = time.monotonic() - started
    if elapsed >= 60.0:
        failures.append("runtime %.1fs exceeds 1min" % elapsed)
    detail = ("quadratic steps all 1, logistic steps %s, smallest zeta "
              "%.2e, %.1fs" % (["%.2e" % s for s in log_steps], worst_zeta,
                               elapsed))
    record_acceptance(5, "FAIL" if failures else "PASS", detail)
    assert not failures, "; ".join(failures)


def test_claim_6_penalty_gap_scaling():
    problem, x_star = _quadratic_problem()
    tiled = np.tile(x_star, (problem.n, 1))
    ratios = {}
    for alpha in (1e-1, 1e-2, 1e-3):
        wide = penalized_optimum_oracle(problem.with_alpha(alpha))
        tight = penalized_optimum_oracle(problem.with_alpha(alpha / 2.0))
        gap_wide = float(np.linalg.norm(wide - tiled))
        gap_tight = float(np.linalg.norm(tight - tiled))
        ratios[alpha] = gap_tight / gap_wide

    failures = ["halving alpha=%g scaled the optimum gap by %.3f, outside "
                "[0.3, 0.7]" % (alpha, ratio)
                for alpha, ratio in ratios.items()
                if not 0.3 <= ratio <= 0.7]
    detail = "gap ratios after halving: " + ", ".join(
        "%g -> %.3f" % (alpha, ratios[alpha]) for alpha in sorted(ratios))
    record_acceptance(6, "FAIL" if failures else "PASS", detail)
    assert not failures, "; ".join(failures)


def test_claim_7_adaptive_schedule_benefit():
    target = 1.9e-1
    problem, x_star = _quadratic_problem()
    adaptive = AdaptiveConfig(tol=1e-3, eta=10.0)
    iters = {}
    for alpha0 in (1e-1, 1e-2):
        tuned = problem.with_alpha(alpha0)
        for method, order in [("dgd", 0), ("nn", 0), ("nn", 1), ("nn", 2)]:
            config = SolverConfig(method=method, order=order, max_iters=3000,
                                  target_error=target, adaptive=adaptive)
            trace = run_adaptive(tuned, config, x_star=x_star)
            iters[(config.label, alpha0)] = trace.target_iteration

    failures = []
    for k in (0, 1, 2):
        label = "nn-%d" % k
        large, small = iters[(label, 1e-1)], iters[(label, 1e-2)]
        if large is None or small is None or not large < small:
            failures.append("%s: larger starting alpha took %s iterations vs "
                            "%s" % (label, large, small))
    for alpha0 in (1e-1, 1e-2):
        baseline = iters[("dgd", alpha0)]
        effective = np.inf if baseline is None else baseline
        for k in (0, 1, 2):
            candidate = iters[("nn-%d" % k, alpha0)]
            if candidate is None or not candidate < effective:
                failures.append("nn-%d did not beat the gradient schedule at "
                                "alpha0=%g (%s vs %s)"
                                % (k, alpha0, candidate, baseline))

    detail = ("iters to e<%.2g at alpha0=1e-1: %s,%s,%s (dgd %s); at 1e-2: "
              "%s,%s,%s (dgd %s)"
              % (target,
                 iters[("nn-0", 1e-1)], iters[("nn-1", 1e-1)],
                 iters[("nn-2", 1e-1)], iters[("dgd", 1e-1)],
                 iters[("nn-0", 1e-2)], iters[("nn-1", 1e-2)],
                 iters[("nn-2", 1e-2)], iters[("dgd", 1e-2)]))
    record_acceptance(7, "FAIL" if failures else "PASS", detail)
    assert not failures, "; ".join(failures)


def test_claim_8_logistic_benchmarks():
    horizon = 500
    match_budget = 4000
    topo = build_d_regular_cycle(100, 4)
    weights = build_lazy_metropolis_weights(topo)
    objs, _ = make_logistic(100, 10, 50, 3.0, 1.0, 1.0, 1e-4, 1)
    problem = PenalizedProblem(alpha=1e-2, weights=weights,
                               objectives=tuple(objs))
    x_star = centralized_optimum(objs)

    values = {}
    for method, order in [("dgd", 0), ("nn", 0), ("nn", 1), ("nn", 2)]:
        config = SolverConfig(method=method, order=order, max_iters=horizon)
        trace = run(problem, config, x_star=x_star)
        values[config.label] = trace.records[-1].value
    dgd_value = values["dgd"]

    match_iters = {}
    for order in (0, 1, 2):
        config = SolverConfig(method="nn", order=order, max_iters=match_budget,
                              target_value=dgd_value)
        trace = run(problem, config, collect=False)
        match_iters[order] = trace.target_iteration

    failures = []
    for order in (0, 1, 2):
        if not values["nn-%d" % order] * 5.0 <= dgd_value:
            failures.append("at t=%d, nn-%d value %.3e is not 5x below the "
                            "gradient value %.3e"
                            % (horizon, order, values["nn-%d" % order],
                               dgd_value))
    if any(v is None for v in match_iters.values()):
        failures.append("series methods did not match the gradient value "
                        "%.6e within %d iterations: %s"
                        % (dgd_value, match_budget, match_iters))
    elif not match_iters[2] < match_iters[1] < match_iters[0]:
        failures.append("match-iteration ordering violated: %s" % match_iters)
    if not values["nn-2"] < values["nn-1"] < values["nn-0"]:
        failures.append("series order did not improve the objective: %s"
                        % values)

    detail = ("F at t=500: dgd=%.3e nn0=%.3e nn1=%.3e nn2=%.3e; iters to "
              "match dgd: %s" % (dgd_value, values["nn-0"], values["nn-1"],
                                 values["nn-2"], match_iters))
    record_acceptance(8, "FAIL" if failures else "PASS", detail)
    assert not failures, "; ".join(failures)
