"""Undirected communication graphs and doubly stochastic mixing weights.

A topology is a connected undirected graph on n agents with no self-loops.
Mixing weights live on the edges of that graph plus the diagonal; they are
symmetric, rows sum to one, and the diagonal stays strictly below one so
that consensus is achievable.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

# Row sums of a weight matrix must match 1 to this absolute tolerance.
ROW_SUM_TOL = 1e-12
# The second largest eigenvalue must stay below 1 by at least this margin,
# otherwise disagreement components are not contracted.
SPECTRAL_MARGIN = 1e-10


@dataclass(frozen=True)
class NetworkTopology:
    """Connected undirected graph given by sorted per-agent neighbor lists.

    Attributes
    ----------
    n : int
        Number of agents.
    neighbor_lists : tuple of tuples
        neighbor_lists[i] holds the sorted neighbors of agent i. Self-loops
        are rejected, adjacency must be symmetric and the graph connected.
    """

    n: int
    neighbor_lists: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two agents, got n=%d" % self.n)
        if len(self.neighbor_lists) != self.n:
            raise ValueError("neighbor_lists length %d does not match n=%d"
                             % (len(self.neighbor_lists), self.n))
        seen = [set(nb) for nb in self.neighbor_lists]
        for i, nbrs in enumerate(self.neighbor_lists):
            if list(nbrs) != sorted(set(nbrs)):
                raise ValueError("neighbor list of agent %d is not sorted/unique" % i)
            for j in nbrs:
                if j == i:
                    raise ValueError("agent %d has a self-loop" % i)
                if j < 0 or j >= self.n:
                    raise ValueError("agent %d lists out-of-range neighbor %d" % (i, j))
                if i not in seen[j]:
                    raise ValueError("edge (%d, %d) is not symmetric" % (i, j))
        if not self._connected():
            raise ValueError("graph is not connected")

    def _connected(self) -> bool:
        # breadth-first search from agent 0
        visited = {0}
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in self.neighbor_lists[i]:
                if j not in visited:
                    visited.add(j)
                    queue.append(j)
        return len(visited) == self.n

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(nb) for nb in self.neighbor_lists)

    @property
    def is_regular(self) -> bool:
        degs = self.degrees
        return min(degs) == max(degs)

    def edges(self):
        """Yield each undirected edge once as a pair (i, j) with i < j."""
        for i, nbrs in enumerate(self.neighbor_lists):
            for j in nbrs:
                if i < j:
                    yield (i, j)

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency matrix."""
        a = np.zeros((self.n, self.n))
        for i, j in self.edges():
            a[i, j] = 1.0
            a[j, i] = 1.0
        return a


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric doubly stochastic mixing matrix tied to a topology.

    Attributes
    ----------
    n : int
        Number of agents.
    entries : ndarray, shape (n, n)
        Read-only dense weight matrix.
    delta : float
        Smallest diagonal entry.
    big_delta : float
        Largest diagonal entry.
    """

    n: int
    entries: np.ndarray
    delta: float
    big_delta: float

    @classmethod
    def from_entries(cls, entries: np.ndarray) -> "WeightMatrix":
        entries = np.array(entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("weight matrix must be square")
        entries.setflags(write=False)
        diag = np.diag(entries)
        return cls(n=entries.shape[0], entries=entries,
                   delta=float(diag.min()), big_delta=float(diag.max()))

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries)

    def second_largest_eigenvalue(self) -> float:
        """Second largest eigenvalue of the (symmetrized) weight matrix."""
        sym = 0.5 * (self.entries + self.entries.T)
        eigs = np.linalg.eigvalsh(sym)
        return float(eigs[-2])


def build_d_regular_cycle(n: int, d: int) -> NetworkTopology:
    """Cycle over n agents where each agent links to its d nearest peers.

    Agent i is connected to i +/- 1, ..., i +/- d/2 modulo n, so d must be
    even and small enough that no edge is duplicated.
    """
    if n < 3:
        raise ValueError("cycle needs n >= 3, got %d" % n)
    if d < 2:
        raise ValueError("degree must be at least 2, got %d" % d)
    if d % 2 != 0:
        raise ValueError("degree must be even, got %d" % d)
    if d >= n:
        raise ValueError("degree %d too large for n=%d" % (d, n))
    lists = []
    for i in range(n):
        nbrs = set()
        for k in range(1, d // 2 + 1):
            nbrs.add((i + k) % n)
            nbrs.add((i - k) % n)
        lists.append(tuple(sorted(nbrs)))
    return NetworkTopology(n=n, neighbor_lists=tuple(lists))


def build_lazy_metropolis_weights(topology: NetworkTopology) -> WeightMatrix:
    """Mixing weights 1/(2(d+1)) per edge for uniform-degree graphs.

    Every neighbor weight is 1/(2(d+1)) and the diagonal takes the rest,
    1/2 + 1/(2(d+1)). Requires a regular topology; for mixed degrees use
    build_metropolis_weights instead.
    """
    if not topology.is_regular:
        raise ValueError("lazy uniform weights assume a regular topology; "
                         "degrees range over %s" % (sorted(set(topology.degrees)),))
    d = topology.degrees[0]
    off = 1.0 / (2.0 * (d + 1))
    w = np.zeros((topology.n, topology.n))
    for i, j in topology.edges():
        w[i, j] = off
        w[j, i] = off
    np.fill_diagonal(w, 0.5 + off)
    return WeightMatrix.from_entries(w)


def build_metropolis_weights(topology: NetworkTopology) -> WeightMatrix:
    """Metropolis weights 1/(1 + max(deg_i, deg_j)), valid on any topology."""
    degs = topology.degrees
    w = np.zeros((topology.n, topology.n))
    for i, j in topology.edges():
        val = 1.0 / (1.0 + max(degs[i], degs[j]))
        w[i, j] = val
        w[j, i] = val
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return WeightMatrix.from_entries(w)


def validate_weights(weights: WeightMatrix, topology: NetworkTopology) -> list[str]:
    """Check a weight matrix against its topology.

    Returns a list of human-readable violations, empty if the matrix is
    valid. A zero minimum diagonal is legal but loosens the usual spectral
    guarantees, so it only raises a warning.
    """
    w = weights.entries
    n = topology.n
    violations = []
    if w.shape != (n, n):
        return ["shape %s does not match topology with n=%d" % (w.shape, n)]

    asym = np.max(np.abs(w - w.T))
    if asym > 0.0:
        violations.append("not symmetric: max |w_ij - w_ji| = %.3e" % asym)

    row_err = np.max(np.abs(w.sum(axis=1) - 1.0))
    if row_err > ROW_SUM_TOL:
        worst = int(np.argmax(np.abs(w.sum(axis=1) - 1.0)))
        violations.append("row sums deviate from 1 by %.3e (worst row %d)"
                          % (row_err, worst))

    adj = topology.adjacency()
    off_mask = ~np.eye(n, dtype=bool)
    stray = (np.abs(w) > 0.0) & (adj == 0.0) & off_mask
    if stray.any():
        i, j = np.argwhere(stray)[0]
        violations.append("nonzero weight on non-edge (%d, %d)" % (i, j))

    diag = np.diag(w)
    if diag.min() < 0.0:
        violations.append("negative diagonal entry %.3e at agent %d"
                          % (diag.min(), int(np.argmin(diag))))
    if diag.max() >= 1.0:
        violations.append("diagonal entry %.17g at agent %d is not below 1"
                          % (diag.max(), int(np.argmax(diag))))
    neg_off = (w < 0.0) & off_mask
    if neg_off.any():
        i, j = np.argwhere(neg_off)[0]
        violations.append("negative off-diagonal weight at (%d, %d)" % (i, j))

    if not violations:
        lam2 = weights.second_largest_eigenvalue()
        if lam2 >= 1.0 - SPECTRAL_MARGIN:
            violations.append("second eigenvalue %.17g too close to 1; "
                              "disagreement is not contracted" % lam2)
        if diag.min() == 0.0:
            warnings.warn("minimum diagonal weight is 0; convergence constants "
                          "degrade", stacklevel=2)
    return violations


def matrix_to_csv(matrix: np.ndarray) -> str:
    """Serialize a dense matrix as CSV rows with full float precision."""
    lines = []
    for row in np.atleast_2d(matrix):
        lines.append(",".join("%.17g" % v for v in row))
    return "\n".join(lines) + "\n"


def topology_to_csv(topology: NetworkTopology) -> str:
    """Serialize the adjacency matrix of a topology as CSV rows."""
    return matrix_to_csv(topology.adjacency())
