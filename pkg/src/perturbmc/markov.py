"""Dense linear-algebra primitives for finite Markov chains."""
from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import (
    NegativeEntry,
    NonSquare,
    NotIrreducible,
    RowSumViolation,
    SingularSystem,
)

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    """A validated row-stochastic matrix."""

    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True)
class ErgodicityReport:
    irreducible: bool
    aperiodic: bool
    # one closed communicating class; the rest transient
    unichain: bool

    @property
    def ergodic(self) -> bool:
        return self.unichain and self.aperiodic


def inf_norm(M: np.ndarray) -> float:
    """Induced infinity norm (max absolute row sum); vectors use max-abs."""
    M = np.asarray(M)
    if M.ndim == 1:
        return float(np.max(np.abs(M))) if M.size else 0.0
    return float(np.max(np.sum(np.abs(M), axis=1)))


def validate_stochastic(M, tol: float = ROW_SUM_TOL) -> StochasticMatrix:
    """Check that `M` is square, non-negative and row-stochastic.

    Rows whose sums deviate from one by less than `tol` are rescaled.
    """
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {M.shape}")
    if M.shape[0] < 2:
        raise NonSquare("need at least two states")
    if np.any(M < 0):
        i, j = np.argwhere(M < 0)[0]
        raise NegativeEntry(f"entry ({i}, {j}) = {M[i, j]!r} is negative")
    sums = M.sum(axis=1)
    bad = np.abs(sums - 1.0) >= tol
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RowSumViolation(f"row {i} sums to {sums[i]!r}")
    M /= sums[:, None]
    M.setflags(write=False)
    return StochasticMatrix(M)


def _period(adj: csr_matrix, nodes: np.ndarray) -> int:
    """Period of the strongly connected subgraph on `nodes` (BFS levels)."""
    sub = adj[nodes][:, nodes]
    order = breadth_first_order(sub, 0, directed=True, return_predecessors=False)
    level = np.full(len(nodes), -1)
    level[0] = 0
    for u in order:
        for v in sub.indices[sub.indptr[u]:sub.indptr[u + 1]]:
            if level[v] < 0:
                level[v] = level[u] + 1
    g = 0
    rows, cols = sub.nonzero()
    for u, v in zip(rows, cols):
        g = gcd(g, int(level[u] + 1 - level[v]))
    return abs(g)


def check_ergodic(P) -> ErgodicityReport:
    """Irreducibility and aperiodicity flags from the transition graph.

    Exact graph computations only: strong connectivity via SCCs, period as the
    gcd of ``level(u) + 1 - level(v)`` over edges inside each closed class.
    """
    P = np.asarray(P)
    adj = csr_matrix(P > 0)
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        targets = labels[adj[members].indices]
        if np.all(targets == c):
            closed.append(members)
    aperiodic = all(_period(adj, m) == 1 for m in closed)
    return ErgodicityReport(
        irreducible=n_comp == 1,
        aperiodic=aperiodic,
        unichain=len(closed) == 1,
    )


def stationary_distribution(P, check: bool = True) -> np.ndarray:
    """Solve ``pi P = pi`` with ``sum(pi) = 1``.

    The last balance equation is replaced by the normalisation row and the
    dense system is solved by LU.  Chains with transient states are accepted
    as long as there is a single closed class (the stationary vector is then
    still unique).
    """
    P = np.asarray(P, dtype=float)
    d = P.shape[0]
    if check and not check_ergodic(P).unichain:
        raise NotIrreducible("chain has more than one closed class")
    A = (np.eye(d) - P).T
    A[-1, :] = 1.0
    b = np.zeros(d)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("balance equations are singular") from exc
    # transient states come out as +-1e-17 noise
    pi[(pi < 0) & (pi > -1e-12)] = 0.0
    if np.any(pi < 0):
        raise SingularSystem("stationary solve produced negative mass")
    pi /= pi.sum()
    if np.max(np.abs(pi @ P - pi)) > 1e-10:
        raise SingularSystem("stationary residual exceeds 1e-10")
    return pi


def fundamental_matrix(P, pi) -> np.ndarray:
    """``U1 = [I - P + 1 (x) pi]^{-1}``."""
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    d = P.shape[0]
    Z = np.eye(d) - P + np.outer(np.ones(d), pi)
    try:
        U = np.linalg.inv(Z)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("I - P + 1 pi is singular; pi inconsistent with P?") from exc
    if np.max(np.abs(U @ Z - np.eye(d))) > 1e-9:
        raise SingularSystem("fundamental matrix identity fails to 1e-9")
    return U


def ergodic_deviation(P, pi, n: int) -> np.ndarray:
    """``e_n = P^n - 1 (x) pi``."""
    if n < 0:
        raise ValueError("lag must be non-negative")
    P = np.asarray(P, dtype=float)
    return np.linalg.matrix_power(P, n) - np.outer(np.ones(P.shape[0]), pi)
