"""Spectral bounds and convergence constants for the penalized solvers.

Every check here evaluates a closed-form bound against a dense symmetric
eigensolve and reports the margin to violation. A check passes when the
measured quantity respects its bound up to an absolute slack of 1e-9,
which absorbs eigensolver rounding without hiding genuine violations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import penalty
from .penalty import PenalizedProblem

# Absolute slack applied to every eigenvalue comparison.
BOUND_SLACK = 1e-9
# Entrywise tolerance for the series remainder identity.
IDENTITY_TOL = 1e-10


@dataclass(frozen=True)
class RateConstants:
    """Constants controlling the truncated-series approximation quality.

    rho bounds the spectrum of D^-1/2 B D^-1/2 from above and is the
    geometric factor left after each extra series term. lam_min and lam_max
    bound the eigenvalues of the truncated inverse from below and above.
    """

    rho: float
    lam_min: float
    lam_max: float


@dataclass(frozen=True)
class BoundCheck:
    """Outcome of a single bound comparison.

    margin is the distance to violation (nonnegative when the bound holds
    exactly); passed applies the shared absolute slack.
    """

    name: str
    bound: float
    measured: float
    margin: float
    passed: bool


def _upper(name: str, bound: float, measured: float) -> BoundCheck:
    margin = bound - measured
    return BoundCheck(name=name, bound=float(bound), measured=float(measured),
                      margin=float(margin), passed=bool(margin >= -BOUND_SLACK))


def _lower(name: str, bound: float, measured: float) -> BoundCheck:
    margin = measured - bound
    return BoundCheck(name=name, bound=float(bound), measured=float(measured),
                      margin=float(margin), passed=bool(margin >= -BOUND_SLACK))


@dataclass
class SpectralReport:
    """Collection of bound checks plus the constants they were run with."""

    constants: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def extend(self, checks):
        self.checks.extend(checks)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_csv(self) -> str:
        lines = ["bound,theoretical,measured,margin,pass"]
        for c in self.checks:
            lines.append("%s,%.17g,%.17g,%.17g,%d"
                         % (c.name, c.bound, c.measured, c.margin, int(c.passed)))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = []
        for key, val in self.constants.items():
            lines.append("# %s = %.17g" % (key, val))
        width = max((len(c.name) for c in self.checks), default=4)
        for c in self.checks:
            lines.append("%-*s  bound=% .6e  measured=% .6e  margin=% .3e  %s"
                         % (width, c.name, c.bound, c.measured, c.margin,
                            "pass" if c.passed else "FAIL"))
        status = "all bounds hold" if self.all_passed else "BOUND VIOLATION"
        lines.append(status)
        return "\n".join(lines) + "\n"


def constants(delta: float, big_delta: float, curv_min: float, curv_max: float,
              alpha: float, order: int) -> RateConstants:
    """Rate constants from weight diagonal bounds and curvature bounds."""
    if not (0.0 <= delta <= big_delta < 1.0):
        raise ValueError("need 0 <= delta <= big_delta < 1, got %r, %r"
                         % (delta, big_delta))
    if not (0.0 < curv_min <= curv_max):
        raise ValueError("need 0 < curv_min <= curv_max, got %r, %r"
                         % (curv_min, curv_max))
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    if order < 0:
        raise ValueError("series order must be nonnegative")
    two_gap = 2.0 * (1.0 - delta)
    rho = two_gap / (two_gap + alpha * curv_min)
    lam_min = 1.0 / (two_gap + alpha * curv_max)
    geo = (1.0 - rho ** (order + 1)) / (1.0 - rho)
    lam_max = geo / (2.0 * (1.0 - big_delta) + alpha * curv_min)
    if not 0.0 < rho < 1.0:
        raise RuntimeError("series factor %r left (0, 1)" % rho)
    return RateConstants(rho=rho, lam_min=lam_min, lam_max=lam_max)


def problem_constants(problem: PenalizedProblem, order: int) -> RateConstants:
    curv_min, curv_max, _ = problem.curvature_bounds()
    return constants(problem.weights.delta, problem.weights.big_delta,
                     curv_min, curv_max, problem.alpha, order)


def _eig_range(mat: np.ndarray) -> tuple[float, float]:
    eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    return float(eigs[0]), float(eigs[-1])


def check_hessian_bounds(problem: PenalizedProblem, y: np.ndarray) -> list[BoundCheck]:
    """Spectrum bounds for H, its block diagonal D, and the coupling B."""
    curv_min, curv_max, _ = problem.curvature_bounds()
    alpha = problem.alpha
    delta = problem.weights.delta
    big_delta = problem.weights.big_delta
    h = penalty.dense_hessian(problem, y)
    d_mat, b_mat = penalty.dense_splitting(problem, y)
    h_lo, h_hi = _eig_range(h)
    d_lo, d_hi = _eig_range(d_mat)
    b_lo, b_hi = _eig_range(b_mat)
    return [
        _lower("hessian_min", alpha * curv_min, h_lo),
        _upper("hessian_max", 2.0 * (1.0 - delta) + alpha * curv_max, h_hi),
        _lower("block_diag_min", 2.0 * (1.0 - big_delta) + alpha * curv_min, d_lo),
        _upper("block_diag_max", 2.0 * (1.0 - delta) + alpha * curv_max, d_hi),
        _lower("coupling_min", 0.0, b_lo),
        _upper("coupling_max", 2.0 * (1.0 - delta), b_hi),
    ]


def _dbd_matrix(problem: PenalizedProblem, y: np.ndarray) -> np.ndarray:
    d_mat, b_mat = penalty.dense_splitting(problem, y)
    evals, evecs = np.linalg.eigh(0.5 * (d_mat + d_mat.T))
    d_inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    x = d_inv_sqrt @ b_mat @ d_inv_sqrt
    return 0.5 * (x + x.T)


def check_dbd_bound(problem: PenalizedProblem, y: np.ndarray) -> list[BoundCheck]:
    """The whitened coupling D^-1/2 B D^-1/2 sits inside [0, rho]."""
    rc = problem_constants(problem, order=0)
    lo, hi = _eig_range(_dbd_matrix(problem, y))
    return [
        _lower("whitened_coupling_min", 0.0, lo),
        _upper("whitened_coupling_max", rc.rho, hi),
    ]


def check_error_matrix(problem: PenalizedProblem, y: np.ndarray,
                       order: int) -> list[BoundCheck]:
    """Approximation error of the truncated inverse.

    Checks that E = I - Hhat^-1/2 H Hhat^-1/2 stays inside [0, rho^(K+1)]
    and that the remainder I - H Hhat^-1 equals (B D^-1)^(K+1) entrywise.
    """
    rc = problem_constants(problem, order)
    h = penalty.dense_hessian(problem, y)
    hhat_inv = penalty.dense_series_inverse(problem, y, order)
    evals, evecs = np.linalg.eigh(0.5 * (hhat_inv + hhat_inv.T))
    inv_sqrt = (evecs * np.sqrt(np.maximum(evals, 0.0))) @ evecs.T
    err = np.eye(h.shape[0]) - inv_sqrt @ h @ inv_sqrt
    lo, hi = _eig_range(err)
    d_mat, b_mat = penalty.dense_splitting(problem, y)
    bd = b_mat @ np.linalg.inv(d_mat)
    remainder = np.eye(h.shape[0]) - h @ hhat_inv
    ident_gap = float(np.max(np.abs(remainder - np.linalg.matrix_power(bd, order + 1))))
    return [
        _lower("inverse_error_min", 0.0, lo),
        _upper("inverse_error_max", rc.rho ** (order + 1), hi),
        BoundCheck(name="series_remainder_identity", bound=IDENTITY_TOL,
                   measured=ident_gap, margin=IDENTITY_TOL - ident_gap,
                   passed=bool(ident_gap <= IDENTITY_TOL)),
    ]


def check_hhat_inverse_bounds(problem: PenalizedProblem, y: np.ndarray,
                              order: int) -> list[BoundCheck]:
    """Eigenvalues of the truncated inverse sit inside [lam_min, lam_max]."""
    rc = problem_constants(problem, order)
    hhat_inv = penalty.dense_series_inverse(problem, y, order)
    lo, hi = _eig_range(hhat_inv)
    return [
        _lower("truncated_inverse_min", rc.lam_min, lo),
        _upper("truncated_inverse_max", rc.lam_max, hi),
    ]


def check_hessian_lipschitz(problem: PenalizedProblem, sample_pairs) -> list[BoundCheck]:
    """|H(y) - H(y')| <= alpha * L * |y - y'| over the given iterate pairs."""
    _, _, lip = problem.curvature_bounds()
    worst = 0.0
    for y_a, y_b in sample_pairs:
        h_a = penalty.dense_hessian(problem, y_a)
        h_b = penalty.dense_hessian(problem, y_b)
        gap = np.linalg.norm(penalty.flatten_blocks(np.asarray(y_a) - np.asarray(y_b)))
        excess = np.linalg.norm(h_a - h_b, ord=2) - problem.alpha * lip * gap
        worst = max(worst, float(excess))
    return [_upper("hessian_lipschitz_excess", 0.0, worst)]


def theoretical_stepsize(problem: PenalizedProblem, y0: np.ndarray, order: int,
                         f_star: float | None = None) -> tuple[float, float]:
    """Step size and per-iteration contraction from the guarantee.

    Returns (step, zeta) such that the gap F(y_t) - F(y*) shrinks by at
    least the factor 1 - zeta each iteration when the step size is used.
    Constant-curvature problems always get the full step.
    """
    curv_min, _, lip = problem.curvature_bounds()
    rc = problem_constants(problem, order)
    alpha = problem.alpha
    lam, big_lam = rc.lam_min, rc.lam_max
    if f_star is None:
        y_star = penalty.penalized_optimum_oracle(problem)
        f_star = penalty.penalized_value(problem, y_star)
    gap0 = max(penalty.penalized_value(problem, y0) - f_star, 0.0)
    if lip == 0.0 or gap0 == 0.0:
        step = 1.0
    else:
        bracket = (3.0 * curv_min * lam ** 2.5
                   / (lip * big_lam ** 3 * np.sqrt(gap0)))
        step = min(1.0, float(np.sqrt(bracket)))
    zeta = ((2.0 - step) * step * alpha * curv_min * lam
            - alpha * step ** 3 * lip * big_lam ** 3 * np.sqrt(gap0)
            / (6.0 * lam ** 1.5))
    if not 0.0 < zeta < 1.0:
        raise RuntimeError("contraction coefficient %.3e left (0, 1); "
                           "the guarantee does not apply" % zeta)
    return step, float(zeta)


def relative_error(y: np.ndarray, x_star: np.ndarray) -> float:
    """Average squared block distance to x_star, relative to |x_star|^2."""
    y = np.asarray(y, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    denom = float(x_star @ x_star)
    if denom == 0.0:
        raise ValueError("relative error is undefined for a zero optimum")
    diffs = y - x_star[None, :]
    return float(np.mean(np.sum(diffs * diffs, axis=1)) / denom)


def full_report(problem: PenalizedProblem, y: np.ndarray, order: int,
                sample_pairs=None) -> SpectralReport:
    """Run every bound check at one iterate and collect the outcomes."""
    curv_min, curv_max, lip = problem.curvature_bounds()
    rc = problem_constants(problem, order)
    report = SpectralReport(constants={
        "alpha": problem.alpha,
        "delta": problem.weights.delta,
        "big_delta": problem.weights.big_delta,
        "curv_min": curv_min,
        "curv_max": curv_max,
        "hess_lipschitz": lip,
        "order": float(order),
        "rho": rc.rho,
        "lam_min": rc.lam_min,
        "lam_max": rc.lam_max,
    })
    report.extend(check_hessian_bounds(problem, y))
    report.extend(check_dbd_bound(problem, y))
    report.extend(check_error_matrix(problem, y, order))
    report.extend(check_hhat_inverse_bounds(problem, y, order))
    if sample_pairs is not None:
        report.extend(check_hessian_lipschitz(problem, sample_pairs))
    return report
