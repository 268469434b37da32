"""Penalized consensus objective, its splitting, and Newton-type directions.

Stacking the agent variables x_1, ..., x_n into y, the solvers minimize

    F(y) = 0.5 * y' (I - Z) y + alpha * sum_i f_i(x_i)

where Z applies the mixing weights blockwise. Iterates are handled as
(n, p) arrays whose row i is agent i's block; reshaping row-major to length
n*p matches the ordering of the dense blockwise matrices, which only appear
in verification oracles, never in the solver path.

The Hessian of F splits as H = D - B with block diagonal
D_ii = alpha f_i'' + 2(1 - w_ii) I and a coupling term B that carries
B_ii = (1 - w_ii) I and B_ij = w_ij I on edges. Truncating the expansion of
H^-1 = D^-1/2 (I - D^-1/2 B D^-1/2)^-1 D^-1/2 after K powers yields the
approximate Newton directions; each extra power needs one more exchange of
neighbor blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .objectives import LocalObjective
from .topology import WeightMatrix

# Dense verification oracles refuse stacked dimensions beyond this.
DENSE_LIMIT = 5000


@dataclass(frozen=True)
class PenalizedProblem:
    """Penalty parameter, mixing weights and per-agent objectives."""

    alpha: float
    weights: WeightMatrix
    objectives: tuple[LocalObjective, ...]

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("alpha must be strictly positive, got %r" % (self.alpha,))
        if len(self.objectives) != self.weights.n:
            raise ValueError("got %d objectives for %d agents"
                             % (len(self.objectives), self.weights.n))
        dims = {f.dim for f in self.objectives}
        if len(dims) != 1:
            raise ValueError("agents disagree on dimension: %s" % sorted(dims))
        object.__setattr__(self, "objectives", tuple(self.objectives))

    @property
    def n(self) -> int:
        return self.weights.n

    @property
    def p(self) -> int:
        return self.objectives[0].dim

    @property
    def w_diag(self) -> np.ndarray:
        return self.weights.diagonal

    def neighbors(self, i: int) -> np.ndarray:
        """Agents coupled to i through a nonzero off-diagonal weight."""
        row = self.weights.entries[i].copy()
        row[i] = 0.0
        return np.flatnonzero(row)

    def with_alpha(self, alpha: float) -> "PenalizedProblem":
        return PenalizedProblem(alpha=alpha, weights=self.weights,
                                objectives=self.objectives)

    @property
    def constant_curvature(self) -> bool:
        return all(f.hess_lipschitz == 0.0 for f in self.objectives)

    def curvature_bounds(self) -> tuple[float, float, float]:
        """Global (curv_min, curv_max, hess_lipschitz) over all agents."""
        return (min(f.curv_min for f in self.objectives),
                max(f.curv_max for f in self.objectives),
                max(f.hess_lipschitz for f in self.objectives))


@dataclass(frozen=True)
class SplittingBlocks:
    """Block data of the splitting H = D - B at one iterate.

    d_blocks[i] is alpha f_i''(x_i) + 2(1 - w_ii) I, b_diag[i] is 1 - w_ii
    and b_off carries the off-diagonal mixing weights; every block of B is
    a multiple of the identity.
    """

    d_blocks: np.ndarray  # (n, p, p)
    b_diag: np.ndarray    # (n,)
    b_off: np.ndarray     # (n, n) with zero diagonal


def check_blocks(problem: PenalizedProblem, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (problem.n, problem.p):
        raise ValueError("expected iterate of shape (%d, %d), got %s"
                         % (problem.n, problem.p, y.shape))
    return y


def flatten_blocks(y: np.ndarray) -> np.ndarray:
    """Row-major flattening, matching the dense blockwise ordering."""
    return np.asarray(y, dtype=float).reshape(-1)


def split_blocks(vec: np.ndarray, n: int, p: int) -> np.ndarray:
    return np.asarray(vec, dtype=float).reshape(n, p)


def penalized_value(problem: PenalizedProblem, y: np.ndarray) -> float:
    """F(y), evaluated through neighbor mixing only."""
    y = check_blocks(problem, y)
    mixed = problem.weights.entries @ y
    quad = 0.5 * (np.vdot(y, y) - np.vdot(y, mixed))
    local = sum(f.value(y[i]) for i, f in enumerate(problem.objectives))
    return float(quad + problem.alpha * local)


def local_gradient(problem: PenalizedProblem, y: np.ndarray, i: int) -> np.ndarray:
    """Gradient block of agent i, written as its protocol computes it."""
    y = check_blocks(problem, y)
    w = problem.weights.entries
    acc = (1.0 - w[i, i]) * y[i]
    for j in problem.neighbors(i):
        acc = acc - w[i, j] * y[j]
    return acc + problem.alpha * problem.objectives[i].gradient(y[i])


def gradient_blocks(problem: PenalizedProblem, y: np.ndarray) -> np.ndarray:
    """All gradient blocks stacked; row i equals local_gradient(..., i)."""
    y = check_blocks(problem, y)
    mixed = problem.weights.entries @ y
    grads = np.stack([f.gradient(y[i]) for i, f in enumerate(problem.objectives)])
    return y - mixed + problem.alpha * grads


def splitting_blocks(problem: PenalizedProblem, y: np.ndarray) -> SplittingBlocks:
    """Evaluate the splitting H = D - B at the given iterate."""
    y = check_blocks(problem, y)
    n, p = problem.n, problem.p
    w = problem.weights.entries
    eye = np.eye(p)
    d_blocks = np.empty((n, p, p))
    for i, f in enumerate(problem.objectives):
        d_blocks[i] = problem.alpha * f.hessian(y[i]) + 2.0 * (1.0 - w[i, i]) * eye
    b_off = w.copy()
    np.fill_diagonal(b_off, 0.0)
    return SplittingBlocks(d_blocks=d_blocks, b_diag=1.0 - problem.w_diag,
                           b_off=b_off)


def invert_d_blocks(blocks: SplittingBlocks) -> np.ndarray:
    """Per-agent inverses of the D blocks, with a definiteness check."""
    try:
        np.linalg.cholesky(blocks.d_blocks)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("a block of the splitting is not positive definite; "
                           "check curvatures and weights") from exc
    return np.linalg.inv(blocks.d_blocks)


def apply_coupling(blocks: SplittingBlocks, d: np.ndarray) -> np.ndarray:
    """Apply B to stacked blocks using only neighbor mixing."""
    return blocks.b_diag[:, None] * d + blocks.b_off @ d


def series_direction(blocks: SplittingBlocks, d_inv: np.ndarray,
                     g: np.ndarray, order: int) -> np.ndarray:
    """Run the neighbor-local truncated-series recursion.

    Starts from d = -D^-1 g and applies order refinements
    d <- D^-1 (B d - g), each consuming one exchange of direction blocks.
    """
    rhs = -g
    d = np.einsum("ipq,iq->ip", d_inv, rhs)
    for _ in range(order):
        rhs = apply_coupling(blocks, d) - g
        d = np.einsum("ipq,iq->ip", d_inv, rhs)
    return d


def nn_direction(problem: PenalizedProblem, y: np.ndarray, g: np.ndarray,
                 order: int) -> np.ndarray:
    """Truncated-series Newton direction at y for the given gradient blocks."""
    if order < 0:
        raise ValueError("series order must be nonnegative, got %d" % order)
    y = check_blocks(problem, y)
    g = check_blocks(problem, g)
    blocks = splitting_blocks(problem, y)
    d_inv = invert_d_blocks(blocks)
    return series_direction(blocks, d_inv, g, order)


def _guard_dense(problem: PenalizedProblem):
    size = problem.n * problem.p
    if size > DENSE_LIMIT:
        raise ValueError("dense oracle refused: stacked dimension %d exceeds %d"
                         % (size, DENSE_LIMIT))


def dense_coupling(weights: WeightMatrix, p: int) -> np.ndarray:
    """Blockwise mixing matrix: the Kronecker product of W with I_p."""
    return np.kron(weights.entries, np.eye(p))


def dense_hessian(problem: PenalizedProblem, y: np.ndarray) -> np.ndarray:
    """H(y) = I - Z + alpha * blockdiag(f_i'') as an explicit matrix."""
    _guard_dense(problem)
    y = check_blocks(problem, y)
    z = dense_coupling(problem.weights, problem.p)
    hess_blocks = [problem.alpha * f.hessian(y[i])
                   for i, f in enumerate(problem.objectives)]
    return np.eye(problem.n * problem.p) - z + scipy.linalg.block_diag(*hess_blocks)


def dense_splitting(problem: PenalizedProblem, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(D, B) as explicit matrices; H = D - B holds exactly."""
    _guard_dense(problem)
    blocks = splitting_blocks(problem, y)
    d_mat = scipy.linalg.block_diag(*blocks.d_blocks)
    b_mat = np.kron(blocks.b_off, np.eye(problem.p))
    b_mat += scipy.linalg.block_diag(*[bd * np.eye(problem.p) for bd in blocks.b_diag])
    return d_mat, b_mat


def dense_series_inverse(problem: PenalizedProblem, y: np.ndarray,
                         order: int) -> np.ndarray:
    """Evaluate the truncated expansion of H^-1 with materialized matrices.

    Computes D^-1/2 (sum_k X^k) D^-1/2 with X = D^-1/2 B D^-1/2 through a
    symmetric eigendecomposition of D, independent of the neighbor-local
    recursion.
    """
    if order < 0:
        raise ValueError("series order must be nonnegative, got %d" % order)
    d_mat, b_mat = dense_splitting(problem, y)
    evals, evecs = np.linalg.eigh(0.5 * (d_mat + d_mat.T))
    if evals.min() <= 0.0:
        raise RuntimeError("splitting block diagonal is not positive definite")
    d_inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    x = d_inv_sqrt @ b_mat @ d_inv_sqrt
    x = 0.5 * (x + x.T)
    total = np.eye(x.shape[0])
    power = np.eye(x.shape[0])
    for _ in range(order):
        power = power @ x
        total = total + power
    return d_inv_sqrt @ total @ d_inv_sqrt


def dense_nn_direction(problem: PenalizedProblem, y: np.ndarray, g: np.ndarray,
                       order: int) -> np.ndarray:
    """Dense-oracle counterpart of nn_direction."""
    g_flat = flatten_blocks(check_blocks(problem, g))
    inv = dense_series_inverse(problem, y, order)
    return split_blocks(-inv @ g_flat, problem.n, problem.p)


def exact_newton_direction_oracle(problem: PenalizedProblem, y: np.ndarray) -> np.ndarray:
    """Solve H d = -g densely; the reference for all truncated directions."""
    _guard_dense(problem)
    y = check_blocks(problem, y)
    h = dense_hessian(problem, y)
    g_flat = flatten_blocks(gradient_blocks(problem, y))
    d_flat = scipy.linalg.solve(h, -g_flat, assume_a="pos")
    residual = np.linalg.norm(h @ d_flat + g_flat)
    gnorm = np.linalg.norm(g_flat)
    if gnorm > 0 and residual > 1e-9 * gnorm:
        raise RuntimeError("dense Newton solve residual %.3e exceeds 1e-9 "
                           "of the gradient norm" % residual)
    return split_blocks(d_flat, problem.n, problem.p)


def penalized_optimum_oracle(problem: PenalizedProblem, tol: float = 1e-10,
                             max_iters: int = 200) -> np.ndarray:
    """Minimizer of F by damped Newton with dense solves.

    Constant-curvature problems finish in one exact step; otherwise the
    loop runs until the stacked gradient norm drops below tol.
    """
    _guard_dense(problem)
    n, p = problem.n, problem.p
    y = np.zeros((n, p))
    for _ in range(max_iters):
        g = gradient_blocks(problem, y)
        gnorm = np.linalg.norm(g)
        if gnorm < tol:
            return y
        h = dense_hessian(problem, y)
        step_flat = scipy.linalg.solve(h, -flatten_blocks(g), assume_a="pos")
        step = split_blocks(step_flat, n, p)
        val = penalized_value(problem, y)
        slope = float(np.vdot(g, step))
        noise = 1e-14 * (1.0 + abs(val))
        t = 1.0
        while t > 1e-14:
            cand = y + t * step
            if penalized_value(problem, cand) <= val + 1e-4 * t * slope + noise:
                break
            t *= 0.5
        else:
            raise RuntimeError("line search stalled at gradient norm %.3e" % gnorm)
        y = y + t * step
    g = gradient_blocks(problem, y)
    if np.linalg.norm(g) >= tol:
        raise RuntimeError("penalized Newton did not reach tolerance %.1e; "
                           "gradient norm %.3e" % (tol, np.linalg.norm(g)))
    return y
