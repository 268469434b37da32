"""Per-agent objective functions and seeded experiment instances.

Two families are provided. Quadratic agents hold diagonal curvature with a
controlled spread of eigenvalues, which makes the global optimum available
in closed form. Logistic agents classify Gaussian feature vectors with a
ridge term that keeps every Hessian positive definite.

Instances are serialized as 'key = value' text carrying parameters plus the
seed, never raw matrices, so a replay regenerates identical data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

# Central finite differences use step FD_STEP_SCALE * (1 + |x|).
FD_STEP_SCALE = 1e-5


class LocalObjective:
    """Interface shared by all per-agent objectives.

    Concrete classes expose value/gradient/hessian evaluations plus three
    curvature constants: curv_min and curv_max bound the Hessian spectrum
    from below and above everywhere, and hess_lipschitz bounds the spectral
    norm of Hessian differences per unit step. Evaluations are pure.
    """

    dim: int
    curv_min: float
    curv_max: float
    hess_lipschitz: float

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class QuadraticObjective(LocalObjective):
    """f(x) = 0.5 x' diag(a) x + b' x with strictly positive a."""

    def __init__(self, diag: np.ndarray, linear: np.ndarray):
        diag = np.asarray(diag, dtype=float)
        linear = np.asarray(linear, dtype=float)
        if diag.ndim != 1 or diag.shape != linear.shape:
            raise ValueError("diag and linear must be 1-d with equal shape")
        if diag.min() <= 0.0:
            raise ValueError("quadratic curvature must be strictly positive")
        self.diag = diag
        self.linear = linear
        self.dim = diag.shape[0]
        self.curv_min = float(diag.min())
        self.curv_max = float(diag.max())
        self.hess_lipschitz = 0.0

    def value(self, x):
        return float(0.5 * x @ (self.diag * x) + self.linear @ x)

    def gradient(self, x):
        return self.diag * x + self.linear

    def hessian(self, x):
        return np.diag(self.diag)


class LogisticObjective(LocalObjective):
    """Regularized logistic loss over one agent's labeled samples.

    f(x) = ridge/(2 n_agents) |x|^2 + sum_l log(1 + exp(-v_l u_l' x)).
    The ridge share uses the global agent count so that the summed problem
    carries a total penalty of ridge/2 |x|^2.
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray,
                 ridge: float, n_agents: int):
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=float)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise ValueError("features must be (q, p) with labels of length q")
        if not np.all(np.abs(labels) == 1.0):
            raise ValueError("labels must be +1 or -1")
        if ridge <= 0.0 or n_agents < 1:
            raise ValueError("need ridge > 0 and n_agents >= 1")
        self.features = features
        self.labels = labels
        self.ridge = float(ridge)
        self.n_agents = int(n_agents)
        self.dim = features.shape[1]
        self._reg = self.ridge / self.n_agents
        self.curv_min = self._reg
        gram_top = float(np.linalg.eigvalsh(features.T @ features)[-1])
        # sigmoid slope is at most 1/4, so the data term adds at most
        # gram_top / 4 to any Hessian eigenvalue
        self.curv_max = self._reg + 0.25 * gram_top
        # |sigmoid''| <= 1/(6 sqrt(3)) gives a global Hessian Lipschitz bound
        norms = np.linalg.norm(features, axis=1)
        self.hess_lipschitz = float(np.sum(norms ** 3) / (6.0 * np.sqrt(3.0)))

    def value(self, x):
        margins = self.labels * (self.features @ x)
        return float(0.5 * self._reg * (x @ x) + np.logaddexp(0.0, -margins).sum())

    def gradient(self, x):
        margins = self.labels * (self.features @ x)
        coeff = self.labels * expit(-margins)
        return self._reg * x - self.features.T @ coeff

    def hessian(self, x):
        z = self.features @ x
        s = expit(z)
        weights = s * (1.0 - s)
        return self._reg * np.eye(self.dim) + self.features.T @ (weights[:, None] * self.features)


@dataclass(frozen=True)
class QuadraticInstance:
    """Seeded collection of n diagonal quadratic agents."""

    n: int
    p: int
    xi: int
    seed: int
    diags: np.ndarray    # (n, p) positive diagonal curvatures
    linears: np.ndarray  # (n, p) linear terms

    def to_spec_text(self) -> str:
        return ("kind = quadratic\nn = %d\np = %d\nxi = %d\nseed = %d\n"
                % (self.n, self.p, self.xi, self.seed))


@dataclass(frozen=True)
class LogisticInstance:
    """Seeded collection of n logistic agents with Gaussian features."""

    n: int
    p: int
    samples_per_agent: int
    mu: float
    sigma_plus: float
    sigma_minus: float
    ridge: float
    seed: int
    features: np.ndarray  # (n, q, p)
    labels: np.ndarray    # (n, q) entries +/- 1

    def to_spec_text(self) -> str:
        return ("kind = logistic\nn = %d\np = %d\nsamples_per_agent = %d\n"
                "mu = %r\nsigma_plus = %r\nsigma_minus = %r\nridge = %r\nseed = %d\n"
                % (self.n, self.p, self.samples_per_agent, self.mu,
                   self.sigma_plus, self.sigma_minus, self.ridge, self.seed))


def instance_from_spec_text(text: str):
    """Rebuild an instance from its serialized parameter block."""
    fields: dict[str, str] = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    kind = fields.get("kind")
    if kind == "quadratic":
        _, inst = make_quadratic(int(fields["n"]), int(fields["p"]),
                                 int(fields["xi"]), int(fields["seed"]))
        return inst
    if kind == "logistic":
        _, inst = make_logistic(int(fields["n"]), int(fields["p"]),
                                int(fields["samples_per_agent"]),
                                float(fields["mu"]), float(fields["sigma_plus"]),
                                float(fields["sigma_minus"]), float(fields["ridge"]),
                                int(fields["seed"]))
        return inst
    raise ValueError("unknown instance kind %r" % kind)


def make_quadratic(n: int, p: int, xi: int, seed) -> tuple[list[QuadraticObjective], QuadraticInstance]:
    """Draw n diagonal quadratic agents with condition spread 10^(2 xi).

    The first p/2 diagonal entries of each agent come from
    {1, 10^-1, ..., 10^-xi} and the remaining p/2 from {1, 10, ..., 10^xi},
    both uniform with replacement, in index order. Linear terms are uniform
    on [0, 1].
    """
    if n < 1:
        raise ValueError("need at least one agent")
    if p < 2 or p % 2 != 0:
        raise ValueError("dimension must be even and at least 2, got %d" % p)
    if xi < 0:
        raise ValueError("condition exponent must be nonnegative, got %d" % xi)
    rng = np.random.default_rng(seed)
    half = p // 2
    diags = np.empty((n, p))
    linears = np.empty((n, p))
    for i in range(n):
        low = 10.0 ** (-rng.integers(0, xi + 1, size=half).astype(float))
        high = 10.0 ** (rng.integers(0, xi + 1, size=half).astype(float))
        diags[i, :half] = low
        diags[i, half:] = high
        linears[i] = rng.uniform(0.0, 1.0, size=p)
    objectives = [QuadraticObjective(diags[i], linears[i]) for i in range(n)]
    seed_int = int(seed) if np.isscalar(seed) else -1
    inst = QuadraticInstance(n=n, p=p, xi=xi, seed=seed_int,
                             diags=diags, linears=linears)
    return objectives, inst


def quadratic_optimum(instance: QuadraticInstance) -> np.ndarray:
    """Closed-form minimizer of the summed quadratic objective."""
    total_diag = instance.diags.sum(axis=0)
    total_lin = instance.linears.sum(axis=0)
    x_star = -total_lin / total_diag
    residual = np.linalg.norm(instance.diags.sum(axis=0) * x_star + total_lin)
    if residual > 1e-10:
        raise RuntimeError("optimum residual %.3e exceeds tolerance" % residual)
    return x_star


def make_logistic(n: int, p: int, samples_per_agent: int, mu: float,
                  sigma_plus: float, sigma_minus: float, ridge: float,
                  seed) -> tuple[list[LogisticObjective], LogisticInstance]:
    """Draw n logistic agents over labeled Gaussian feature vectors.

    Each sample flips a fair coin for its label; features of positive
    samples are N(mu, sigma_plus^2) per component and negative samples are
    N(-mu, sigma_minus^2).
    """
    if n < 1 or samples_per_agent < 1:
        raise ValueError("need at least one agent and one sample per agent")
    if p < 1:
        raise ValueError("dimension must be positive")
    if ridge <= 0.0:
        raise ValueError("ridge must be strictly positive to keep the problem "
                         "strongly convex")
    if sigma_plus <= 0.0 or sigma_minus <= 0.0:
        raise ValueError("feature standard deviations must be positive")
    rng = np.random.default_rng(seed)
    q = samples_per_agent
    features = np.empty((n, q, p))
    labels = np.empty((n, q))
    for i in range(n):
        lab = rng.integers(0, 2, size=q) * 2.0 - 1.0
        loc = np.broadcast_to((lab * mu)[:, None], (q, p))
        scale = np.broadcast_to(np.where(lab > 0, sigma_plus, sigma_minus)[:, None], (q, p))
        features[i] = rng.normal(loc, scale)
        labels[i] = lab
    objectives = [LogisticObjective(features[i], labels[i], ridge, n)
                  for i in range(n)]
    seed_int = int(seed) if np.isscalar(seed) else -1
    inst = LogisticInstance(n=n, p=p, samples_per_agent=q, mu=float(mu),
                            sigma_plus=float(sigma_plus),
                            sigma_minus=float(sigma_minus), ridge=float(ridge),
                            seed=seed_int, features=features, labels=labels)
    return objectives, inst


def build_objectives(instance) -> list[LocalObjective]:
    """Materialize the per-agent objectives of a stored instance."""
    if isinstance(instance, QuadraticInstance):
        return [QuadraticObjective(instance.diags[i], instance.linears[i])
                for i in range(instance.n)]
    if isinstance(instance, LogisticInstance):
        return [LogisticObjective(instance.features[i], instance.labels[i],
                                  instance.ridge, instance.n)
                for i in range(instance.n)]
    raise TypeError("unsupported instance type %r" % type(instance).__name__)


def centralized_optimum(objectives, tol: float = 1e-10,
                        max_iters: int = 200) -> np.ndarray:
    """Minimize the sum of the given objectives by damped Newton.

    Iterates until the summed gradient norm drops below tol. Raises if the
    backtracking line search stalls before that.
    """
    p = objectives[0].dim
    x = np.zeros(p)
    for _ in range(max_iters):
        grad = np.sum([f.gradient(x) for f in objectives], axis=0)
        gnorm = np.linalg.norm(grad)
        if gnorm < tol:
            return x
        hess = np.sum([f.hessian(x) for f in objectives], axis=0)
        step = np.linalg.solve(hess, -grad)
        val = sum(f.value(x) for f in objectives)
        slope = grad @ step
        # absolute slack keeps the test meaningful once decreases reach
        # rounding level of the objective value
        noise = 1e-14 * (1.0 + abs(val))
        t = 1.0
        while t > 1e-14:
            cand = x + t * step
            cand_val = sum(f.value(cand) for f in objectives)
            if cand_val <= val + 1e-4 * t * slope + noise:
                break
            t *= 0.5
        else:
            raise RuntimeError("line search stalled at gradient norm %.3e" % gnorm)
        x = x + t * step
    grad = np.sum([f.gradient(x) for f in objectives], axis=0)
    if np.linalg.norm(grad) >= tol:
        raise RuntimeError("Newton did not reach tolerance %.1e; gradient norm %.3e"
                           % (tol, np.linalg.norm(grad)))
    return x


def logistic_optimum_oracle(instance: LogisticInstance, tol: float = 1e-10) -> np.ndarray:
    """High-accuracy minimizer of the summed logistic objective."""
    return centralized_optimum(build_objectives(instance), tol=tol)


def curvature_metadata(objective: LocalObjective, sample_points) -> tuple[float, float, float]:
    """Estimate curvature bounds of an objective from sampled Hessians.

    Constant-Hessian objectives report their exact constants. Otherwise the
    result is (min eigenvalue, max eigenvalue, max pairwise Lipschitz ratio)
    over the supplied points, which lower-bounds the true constants.
    """
    points = [np.asarray(x, dtype=float) for x in sample_points]
    if objective.hess_lipschitz == 0.0:
        return objective.curv_min, objective.curv_max, 0.0
    if len(points) < 2:
        raise ValueError("need at least two sample points, got %d" % len(points))
    hessians = [objective.hessian(x) for x in points]
    m_est = min(float(np.linalg.eigvalsh(h)[0]) for h in hessians)
    big_m_est = max(float(np.linalg.eigvalsh(h)[-1]) for h in hessians)
    l_est = 0.0
    for a in range(len(points)):
        for b in range(a + 1, len(points)):
            gap = np.linalg.norm(points[a] - points[b])
            if gap == 0.0:
                continue
            diff = np.linalg.norm(hessians[a] - hessians[b], ord=2)
            l_est = max(l_est, diff / gap)
    return m_est, big_m_est, l_est


def fd_gradient(func, x: np.ndarray) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    h = FD_STEP_SCALE * (1.0 + np.linalg.norm(x))
    grad = np.empty_like(x)
    for k in range(x.shape[0]):
        e = np.zeros_like(x)
        e[k] = h
        grad[k] = (func(x + e) - func(x - e)) / (2.0 * h)
    return grad


def fd_hessian(grad_func, x: np.ndarray) -> np.ndarray:
    """Central finite-difference Jacobian of a gradient function."""
    x = np.asarray(x, dtype=float)
    h = FD_STEP_SCALE * (1.0 + np.linalg.norm(x))
    p = x.shape[0]
    hess = np.empty((p, p))
    for k in range(p):
        e = np.zeros(p)
        e[k] = h
        hess[:, k] = (grad_func(x + e) - grad_func(x - e)) / (2.0 * h)
    return 0.5 * (hess + hess.T)
