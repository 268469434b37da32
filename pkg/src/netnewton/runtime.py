"""Synchronous message-passing runtime for the decentralized solvers.

Each iteration opens with one exchange round in which every agent sends its
iterate block to its neighbors; gradient-descent agents then update in
place, while Newton-type agents run K further exchange rounds of direction
blocks before stepping. The communication column of a trace counts
exchange rounds, so after t iterations it reads t for gradient descent and
(K + 1) t for a K-term Newton method, exactly.

Two engines execute these semantics. The local engine keeps one NodeState
per agent whose update functions read nothing but their own state and
inbox; an audit mode logs every delivery so tests can confirm that all
traffic follows graph edges. The stacked engine performs the same algebra
on whole (n, p) arrays and is the default for long experiments. Identical
configuration and seed give bit-identical traces per engine.
"""

from __future__ import annotations

import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analysis, penalty
from .objectives import QuadraticObjective, make_quadratic, quadratic_optimum
from .penalty import PenalizedProblem
from .topology import build_d_regular_cycle, build_lazy_metropolis_weights

# A run aborts once the relative error explodes past this.
DIVERGENCE_LIMIT = 1e12

METHOD_DGD = "dgd"
METHOD_NN = "nn"


def method_label(method: str, order: int = 0) -> str:
    return "dgd" if method == METHOD_DGD else "nn-%d" % order


@dataclass(frozen=True)
class AdaptiveConfig:
    """Penalty schedule: divide alpha by eta when all agents' gradient
    blocks drop to tol, stopping at min_alpha (0 disables the floor)."""

    tol: float
    eta: float
    min_alpha: float = 0.0
    recompute_step: bool = False

    def __post_init__(self):
        if self.tol < 0.0:
            raise ValueError("gradient tolerance must be nonnegative")
        if self.eta <= 1.0:
            raise ValueError("alpha divisor must exceed 1, got %r" % (self.eta,))
        if self.min_alpha < 0.0:
            raise ValueError("alpha floor must be nonnegative")


@dataclass(frozen=True)
class SolverConfig:
    """What to run and for how long.

    target_error stops at the first iterate strictly below the relative
    error threshold (needs a reference optimum); target_value stops once
    the penalized objective reaches the given value.
    """

    method: str = METHOD_DGD
    order: int = 0
    step_size: float = 1.0
    max_iters: int = 1000
    target_error: float | None = None
    target_value: float | None = None
    adaptive: AdaptiveConfig | None = None
    engine: str = "stacked"

    def __post_init__(self):
        if self.method not in (METHOD_DGD, METHOD_NN):
            raise ValueError("unknown method %r" % (self.method,))
        if not 0.0 < self.step_size <= 1.0:
            raise ValueError("step size must lie in (0, 1], got %r"
                             % (self.step_size,))
        if self.order < 0:
            raise ValueError("series order must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.engine not in ("stacked", "local"):
            raise ValueError("unknown engine %r" % (self.engine,))

    @property
    def rounds_per_iter(self) -> int:
        return 1 if self.method == METHOD_DGD else self.order + 1

    @property
    def label(self) -> str:
        return method_label(self.method, self.order)


@dataclass(frozen=True)
class TraceRecord:
    t: int
    rel_error: float
    value: float
    grad_inf: float
    alpha: float
    comm: int


@dataclass
class RunTrace:
    """Per-iteration records of one run plus its termination verdict."""

    method: str
    records: list[TraceRecord] = field(default_factory=list)
    reason: str = "max_iters"
    final_y: np.ndarray | None = None
    target_iteration: int | None = None
    alpha_changes: list[tuple[int, float]] = field(default_factory=list)
    rounds_per_iter: int = 1

    def to_csv(self) -> str:
        lines = ["t,e_t,F,grad_inf,alpha,comm"]
        for r in self.records:
            lines.append("%d,%.17g,%.17g,%.17g,%.17g,%d"
                         % (r.t, r.rel_error, r.value, r.grad_inf, r.alpha, r.comm))
        return "\n".join(lines) + "\n"

    def column(self, name: str) -> np.ndarray:
        # accept the CSV header spellings alongside the attribute names
        attr = {"e_t": "rel_error", "F": "value"}.get(name, name)
        return np.array([getattr(r, attr) for r in self.records])


@dataclass
class NodeState:
    """One agent's private memory inside the local engine."""

    node_id: int
    x: np.ndarray
    inbox: dict = field(default_factory=dict)
    grad: np.ndarray | None = None
    direction: np.ndarray | None = None
    d_inv: np.ndarray | None = None


class SyncNetwork:
    """Message-passing engine whose agents see only their own inbox.

    Per-agent update kernels receive nothing besides the agent's state,
    its weight row, its objective and the inbox filled by the previous
    exchange round. With audit=True every delivery is appended to
    message_log as (round, sender, receiver).
    """

    def __init__(self, problem: PenalizedProblem, y0: np.ndarray, audit: bool = False):
        y0 = penalty.check_blocks(problem, y0)
        self.problem = problem
        self.neighbor_lists = [tuple(int(j) for j in problem.neighbors(i))
                               for i in range(problem.n)]
        self.nodes = [NodeState(node_id=i, x=y0[i].copy()) for i in range(problem.n)]
        self.rounds = 0
        self.message_log = [] if audit else None

    def rebind(self, problem: PenalizedProblem):
        self.problem = problem

    def iterate_blocks(self) -> np.ndarray:
        return np.stack([node.x for node in self.nodes])

    def direction_blocks(self) -> np.ndarray:
        return np.stack([node.direction for node in self.nodes])

    def gradient_stack(self) -> np.ndarray:
        return np.stack([node.grad for node in self.nodes])

    def exchange(self, attr: str):
        """One synchronous round: every agent sends attr to its neighbors."""
        payloads = [getattr(node, attr) for node in self.nodes]
        for node in self.nodes:
            node.inbox = {}
        for i, nbrs in enumerate(self.neighbor_lists):
            for j in nbrs:
                self.nodes[j].inbox[i] = payloads[i]
                if self.message_log is not None:
                    self.message_log.append((self.rounds, i, j))
        self.rounds += 1

    def compute_gradients(self):
        """Each agent forms its gradient block from its own x and inbox."""
        w = self.problem.weights.entries
        alpha = self.problem.alpha
        for node in self.nodes:
            i = node.node_id
            acc = (1.0 - w[i, i]) * node.x
            for j, xj in node.inbox.items():
                acc = acc - w[i, j] * xj
            node.grad = acc + alpha * self.problem.objectives[i].gradient(node.x)

    def dgd_update(self):
        """Consensus-form update: mix neighbor iterates, step along -grad f."""
        w = self.problem.weights.entries
        alpha = self.problem.alpha
        for node in self.nodes:
            i = node.node_id
            mixed = w[i, i] * node.x
            for j, xj in node.inbox.items():
                mixed = mixed + w[i, j] * xj
            node.x = mixed - alpha * self.problem.objectives[i].gradient(node.x)

    def nn_update(self, order: int, step_size: float):
        """Run the direction recursion for `order` rounds, then step."""
        w = self.problem.weights.entries
        alpha = self.problem.alpha
        eye = np.eye(self.problem.p)
        for node in self.nodes:
            i = node.node_id
            d_block = (alpha * self.problem.objectives[i].hessian(node.x)
                       + 2.0 * (1.0 - w[i, i]) * eye)
            node.d_inv = np.linalg.inv(d_block)
            node.direction = -node.d_inv @ node.grad
        for _ in range(order):
            self.exchange("direction")
            for node in self.nodes:
                i = node.node_id
                acc = (1.0 - w[i, i]) * node.direction
                for j, dj in node.inbox.items():
                    acc = acc + w[i, j] * dj
                node.direction = node.d_inv @ (acc - node.grad)
        for node in self.nodes:
            node.x = node.x + step_size * node.direction


def step_dgd(problem: PenalizedProblem, net: SyncNetwork) -> np.ndarray:
    """One full gradient-descent iteration on the local engine.

    Returns the stacked gradient blocks measured at the pre-update iterate.
    """
    net.rebind(problem)
    net.exchange("x")
    net.compute_gradients()
    g = net.gradient_stack()
    net.dgd_update()
    return g


def step_nn(problem: PenalizedProblem, net: SyncNetwork, order: int,
            step_size: float) -> np.ndarray:
    """One full Newton-type iteration (order + 1 exchange rounds)."""
    net.rebind(problem)
    net.exchange("x")
    net.compute_gradients()
    g = net.gradient_stack()
    net.nn_update(order, step_size)
    return g


class _LocalEngine:
    """Two-phase driver around SyncNetwork used by run()."""

    def __init__(self, problem, y0, config, audit=False):
        self.net = SyncNetwork(problem, y0, audit=audit)
        self.method = config.method
        self.order = config.order

    @property
    def rounds(self):
        return self.net.rounds

    def blocks(self):
        return self.net.iterate_blocks()

    def begin(self, problem) -> np.ndarray:
        self.net.rebind(problem)
        self.net.exchange("x")
        self.net.compute_gradients()
        return self.net.gradient_stack()

    def rebind(self, problem) -> np.ndarray:
        # alpha changed: refresh gradients from the already-filled inbox
        self.net.rebind(problem)
        self.net.compute_gradients()
        return self.net.gradient_stack()

    def finish(self, problem, g, step_size):
        if self.method == METHOD_DGD:
            self.net.dgd_update()
        else:
            self.net.nn_update(self.order, step_size)


class _StackedEngine:
    """Whole-array execution of the same round semantics."""

    def __init__(self, problem, y0, config, audit=False):
        self.y = penalty.check_blocks(problem, y0).copy()
        self.method = config.method
        self.order = config.order
        self.rounds = 0
        self._mixed = None
        self._raw_grads = None
        self._cache_alpha = None
        self._cache = None
        objs = problem.objectives
        if all(type(f) is QuadraticObjective for f in objs):
            self._diags = np.stack([f.diag for f in objs])
            self._linears = np.stack([f.linear for f in objs])
        else:
            self._diags = None
            self._linears = None

    def blocks(self):
        return self.y

    def _grads(self, problem):
        if self._diags is not None:
            return self._diags * self.y + self._linears
        return np.stack([f.gradient(self.y[i])
                         for i, f in enumerate(problem.objectives)])

    def begin(self, problem) -> np.ndarray:
        self._mixed = problem.weights.entries @ self.y
        self._raw_grads = self._grads(problem)
        self.rounds += 1
        return self.y - self._mixed + problem.alpha * self._raw_grads

    def rebind(self, problem) -> np.ndarray:
        return self.y - self._mixed + problem.alpha * self._raw_grads

    def _splitting(self, problem):
        if problem.constant_curvature:
            if self._cache_alpha != problem.alpha:
                blocks = penalty.splitting_blocks(problem, self.y)
                self._cache = (blocks, penalty.invert_d_blocks(blocks))
                self._cache_alpha = problem.alpha
            return self._cache
        blocks = penalty.splitting_blocks(problem, self.y)
        return blocks, penalty.invert_d_blocks(blocks)

    def finish(self, problem, g, step_size):
        if self.method == METHOD_DGD:
            self.y = self._mixed - problem.alpha * self._raw_grads
            return
        blocks, d_inv = self._splitting(problem)
        direction = penalty.series_direction(blocks, d_inv, g, self.order)
        self.rounds += self.order
        self.y = self.y + step_size * direction


def max_block_norm(g: np.ndarray) -> float:
    """Largest Euclidean norm among the stacked gradient blocks."""
    return float(np.sqrt(np.max(np.sum(g * g, axis=1))))


def run(problem: PenalizedProblem, config: SolverConfig,
        x_star: np.ndarray | None = None, x_init: np.ndarray | None = None,
        collect: bool = True, audit: bool = False) -> RunTrace:
    """Execute one solver run and record its trace.

    x_star enables the relative-error column and target_error stopping.
    With collect=False only termination bookkeeping is kept, which the
    sweep experiments use. Runs abort on non-finite iterates and once the
    relative error passes DIVERGENCE_LIMIT.
    """
    if config.target_error is not None and x_star is None:
        raise ValueError("target_error requires a reference optimum")
    n, p = problem.n, problem.p
    y0 = np.zeros((n, p)) if x_init is None else penalty.check_blocks(problem, x_init)
    engine_cls = _LocalEngine if config.engine == "local" else _StackedEngine
    engine = engine_cls(problem, y0, config, audit=audit)

    denom = None
    if x_star is not None:
        x_star = np.asarray(x_star, dtype=float)
        denom = float(x_star @ x_star)
        if denom == 0.0:
            raise ValueError("relative error is undefined for a zero optimum")

    trace = RunTrace(method=config.label, rounds_per_iter=config.rounds_per_iter)
    adaptive = config.adaptive
    current = problem
    step_size = config.step_size
    need_value = collect or config.target_value is not None

    def bookkeeping_grad(y):
        return max_block_norm(penalty.gradient_blocks(current, y))

    t = 0
    while True:
        y = engine.blocks()
        comm = engine.rounds
        finite = bool(np.isfinite(y).all())
        if not finite:
            trace.records.append(TraceRecord(t, np.nan, np.nan, np.nan,
                                             current.alpha, comm))
            trace.reason = "nan"
            break
        e_t = np.nan
        if denom is not None:
            diffs = y - x_star[None, :]
            e_t = float(np.sum(diffs * diffs) / (n * denom))
        f_t = penalty.penalized_value(current, y) if need_value else np.nan

        stop = None
        if denom is not None and e_t > DIVERGENCE_LIMIT:
            stop = "diverged"
        elif config.target_error is not None and e_t < config.target_error:
            stop = "target"
            trace.target_iteration = t
        elif config.target_value is not None and f_t <= config.target_value:
            stop = "target"
            trace.target_iteration = t
        elif t >= config.max_iters:
            stop = "max_iters"
        if stop is not None:
            if collect:
                trace.records.append(TraceRecord(t, e_t, f_t, bookkeeping_grad(y),
                                                 current.alpha, comm))
            trace.reason = stop
            break

        g = engine.begin(current)
        if adaptive is not None and max_block_norm(g) <= adaptive.tol:
            new_alpha = current.alpha / adaptive.eta
            if new_alpha < adaptive.min_alpha or new_alpha <= 0.0:
                if collect:
                    trace.records.append(TraceRecord(t, e_t, f_t, max_block_norm(g),
                                                     current.alpha, comm))
                trace.reason = "alpha_floor"
                break
            current = current.with_alpha(new_alpha)
            trace.alpha_changes.append((t, new_alpha))
            g = engine.rebind(current)
            if adaptive.recompute_step and config.method == METHOD_NN:
                step_size, _ = analysis.theoretical_stepsize(current, y, config.order)
        engine.finish(current, g, step_size)
        if collect:
            trace.records.append(TraceRecord(t, e_t, f_t, max_block_norm(g),
                                             current.alpha, comm))
        t += 1

    trace.final_y = engine.blocks().copy()
    return trace


def run_adaptive(problem: PenalizedProblem, config: SolverConfig,
                 x_star: np.ndarray | None = None,
                 x_init: np.ndarray | None = None, collect: bool = True) -> RunTrace:
    """run() with a mandatory penalty schedule."""
    if config.adaptive is None:
        raise ValueError("run_adaptive needs an adaptive block in the config")
    return run(problem, config, x_star=x_star, x_init=x_init, collect=collect)


@dataclass(frozen=True)
class HistogramConfig:
    """Sweep setup: fresh seeded instance and random even degree per trial."""

    n_trials: int
    target_error: float = 1e-2
    n_agents: int = 100
    dim: int = 4
    cond_exponent: int = 2
    alpha: float = 1e-2
    step_size: float = 1.0
    orders: tuple = (0, 1, 2)
    degrees: tuple = (2, 4, 6, 8, 10)
    max_iters: int = 30000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("need at least one trial")
        if any(d % 2 != 0 for d in self.degrees):
            raise ValueError("cycle degrees must be even, got %s" % (self.degrees,))


@dataclass(frozen=True)
class TrialResult:
    trial: int
    method: str
    degree: int
    exchanges: int
    censored: bool


@dataclass
class HistogramResult:
    """All trial rows plus summary accessors."""

    rows: list[TrialResult]

    def methods(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def mean_exchanges(self) -> dict[str, float]:
        """Mean exchange counts per method over uncensored trials."""
        means = {}
        for m in self.methods():
            vals = [r.exchanges for r in self.rows if r.method == m and not r.censored]
            means[m] = float(np.mean(vals)) if vals else float("nan")
        return means

    def censored_counts(self) -> dict[str, int]:
        return {m: sum(1 for r in self.rows if r.method == m and r.censored)
                for m in self.methods()}

    def to_csv(self) -> str:
        lines = ["trial,method,d,exchanges,censored"]
        for r in self.rows:
            lines.append("%d,%s,%d,%d,%d"
                         % (r.trial, r.method, r.degree, r.exchanges, int(r.censored)))
        return "\n".join(lines) + "\n"


def _histogram_trial(config: HistogramConfig, trial: int) -> list[TrialResult]:
    # every trial owns an RNG stream derived from (master seed, trial index),
    # so results do not depend on worker scheduling
    rng = np.random.default_rng([config.seed, trial])
    degree = int(rng.choice(np.asarray(config.degrees)))
    inst_seed = int(rng.integers(0, 2 ** 63 - 1))
    objectives, inst = make_quadratic(config.n_agents, config.dim,
                                      config.cond_exponent, inst_seed)
    topo = build_d_regular_cycle(config.n_agents, degree)
    weights = build_lazy_metropolis_weights(topo)
    problem = PenalizedProblem(alpha=config.alpha, weights=weights,
                               objectives=tuple(objectives))
    x_star = quadratic_optimum(inst)
    rows = []
    methods = [(METHOD_DGD, 0)] + [(METHOD_NN, k) for k in config.orders]
    for method, order in methods:
        cfg = SolverConfig(method=method, order=order, step_size=config.step_size,
                           max_iters=config.max_iters,
                           target_error=config.target_error)
        trace = run(problem, cfg, x_star=x_star, collect=False)
        hit = trace.target_iteration
        iters = hit if hit is not None else config.max_iters
        rows.append(TrialResult(trial=trial, method=cfg.label, degree=degree,
                                exchanges=iters * cfg.rounds_per_iter,
                                censored=hit is None))
    return rows


def histogram_experiment(config: HistogramConfig) -> HistogramResult:
    """Run the degree-randomized sweep and collect exchange counts.

    Censored trials (target not reached within max_iters) keep their
    exchange budget in the row and are excluded from mean_exchanges().
    """
    rows = []
    if config.workers > 1:
        worker = functools.partial(_histogram_trial, config)
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for trial_rows in pool.map(worker, range(config.n_trials)):
                rows.extend(trial_rows)
    else:
        for trial in range(config.n_trials):
            rows.extend(_histogram_trial(config, trial))
    return HistogramResult(rows=rows)
