"""Coupled simulation of the perturbed chain ``X`` and the nominal chain ``X•``.

Both chains are driven by inverse-CDF sampling with cumulative sums taken in
index order.  ``X•`` always uses the uniform ``N•``; ``X`` uses ``N•`` while
the two chains agree and an independent uniform ``N∘`` once they differ.
Three independent streams (input, ``N•``, ``N∘``) plus one for the initial
state are spawned from a single seed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numba
import numpy as np

from .controlled import ControlledFamily, InputSpec
from .errors import LagTooLarge, ValidationError
from .markov import stationary_distribution
from .secondorder import LagSeries

BURN_IN = 10_000
N_BATCHES = 100


def cumulative_table(P: np.ndarray) -> np.ndarray:
    """Row-wise CDFs with the tail pinned to exactly 1.

    Entries from the last positive probability onward are set to 1, so a
    uniform in ``[0, 1)`` never selects a zero-probability trailing state.
    """
    P = np.asarray(P, dtype=float)
    C = np.minimum(np.cumsum(P, axis=-1), 1.0)
    flat = C.reshape(-1, P.shape[-1])
    pos = P.reshape(-1, P.shape[-1]) > 0
    last = P.shape[-1] - 1 - np.argmax(pos[:, ::-1], axis=1)
    for r, j in enumerate(last):
        flat[r, j:] = 1.0
    return flat.reshape(P.shape)


def sample_row(P_row, u: float) -> int:
    """Index ``j`` with ``sum_{k<j} p_k <= u < sum_{k<=j} p_k``."""
    if not 0.0 <= u < 1.0:
        raise ValidationError("u must lie in [0, 1)")
    c = cumulative_table(np.asarray(P_row, dtype=float)[None])[0]
    return int(np.searchsorted(c, u, side="right"))


@numba.njit(cache=True)
def _lookup(row, u):
    lo, hi = 0, row.shape[0] - 1
    # first index with row[j] > u
    while lo < hi:
        mid = (lo + hi) // 2
        if row[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@numba.njit(cache=True)
def _run(C0, Cz, KC, uz, ub, uo, x0, z0, burn):
    T = uz.shape[0] - burn
    xs = np.empty(T, np.int32)
    xbs = np.empty(T, np.int32)
    zs = np.empty(T, np.int32)
    x = x0
    xb = x0
    z = z0
    for s in range(uz.shape[0]):
        if s >= burn:
            xs[s - burn] = x
            xbs[s - burn] = xb
            zs[s - burn] = z
        u = ub[s] if x == xb else uo[s]
        x_new = _lookup(Cz[z, x], u)
        xb = _lookup(C0[xb], ub[s])
        x = x_new
        z = _lookup(KC[z], uz[s])
    return xs, xbs, zs


@dataclass(frozen=True, eq=False)
class CoupledPath:
    x: np.ndarray
    x_bullet: np.ndarray
    zeta_index: np.ndarray
    zeta1: np.ndarray
    seed: int
    epsilon: float
    burn_in: int

    @property
    def T(self) -> int:
        return self.x.size

    @property
    def zeta(self) -> np.ndarray:
        return self.epsilon * self.zeta1


def _streams(seed: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def simulate_coupled(family: ControlledFamily, input: InputSpec, T: int, seed: int,
                     burn_in: int = BURN_IN) -> CoupledPath:
    """Simulate ``(X, X•, zeta1)`` for `T` steps after a burn-in.

    ``X_0 = X•_0`` is drawn from ``pi0`` and ``zeta1_0`` from ``mu``.
    """
    if T < 1:
        raise ValidationError("T must be at least 1")
    init, rz, rb, ro = _streams(seed)
    P0 = family.P0.entries
    pi0 = stationary_distribution(P0)
    eps = input.epsilon
    C0 = cumulative_table(P0)
    Cz = cumulative_table(np.array([family.transition(eps * z) for z in input.states]))
    KC = cumulative_table(input.K.entries)
    x0 = int(init.choice(P0.shape[0], p=pi0))
    z0 = int(init.choice(input.n_states, p=input.mu))
    n = T + burn_in
    xs, xbs, zs = _run(C0, Cz, KC, rz.random(n), rb.random(n), ro.random(n), x0, z0, burn_in)
    return CoupledPath(xs, xbs, zs, input.states[zs], int(seed), float(eps), burn_in)


def extract_delta(path: CoupledPath, family: ControlledFamily, input: InputSpec) -> np.ndarray:
    """``Delta_{t+1} = e_{x_{t+1}} - P_{zeta_t}(x_t, .)``, shape ``(T-1, d)``."""
    blocks = np.array([family.transition(input.epsilon * z) for z in input.states])
    x, z = path.x, path.zeta_index
    delta = -blocks[z[:-1], x[:-1]]
    delta[np.arange(x.size - 1), x[1:]] += 1.0
    return delta


@dataclass(frozen=True, eq=False)
class EmpiricalSeries:
    """Plug-in correlations with batch-means standard errors."""

    series: LagSeries
    se: LagSeries

    def __getitem__(self, lag):
        return self.series[lag], self.se[lag]


def _batch_stats(a: np.ndarray, b: np.ndarray, n_batches: int):
    """Mean of ``a_s b_s^T`` and the batch-means standard error."""
    n = a.shape[0]
    if n < 2 * n_batches:
        raise ValidationError(f"{n} samples are too few for {n_batches} batches")
    edges = np.linspace(0, n, n_batches + 1).astype(int)
    means = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        means.append(np.tensordot(a[lo:hi], b[lo:hi], axes=(0, 0)) / (hi - lo))
    means = np.array(means)
    sizes = np.diff(edges)
    total = np.tensordot(sizes, means, axes=(0, 0)) / n
    se = means.std(axis=0, ddof=1) / np.sqrt(n_batches)
    return total, se


def empirical_corr(a, b, lags, n_batches: int = N_BATCHES) -> EmpiricalSeries:
    """``R(t) = 1/(T-|t|) sum_s a_{s+t} b_s^T`` over the contiguous `lags`.

    Sequences are ``(T,)`` or ``(T, k)``.  Scalars give scalar series,
    vectors give ``k_a x k_b`` matrices.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != b.shape[0]:
        raise ValidationError("sequences differ in length")
    T = a.shape[0]
    lags = np.arange(min(lags), max(lags) + 1)
    if np.max(np.abs(lags)) > T / 10:
        raise LagTooLarge(f"|lag| must not exceed T/10 = {T / 10:g}")
    vals, ses = [], []
    for t in lags:
        if t >= 0:
            x, y = a[t:], b[:T - t]
        else:
            x, y = a[:T + t], b[-t:]
        m, s = _batch_stats(x, y, n_batches)
        vals.append(m)
        ses.append(s)
    lo = int(lags[0])
    return EmpiricalSeries(LagSeries(lo, np.array(vals), "empirical"),
                           LagSeries(lo, np.array(ses), "empirical_se"))


def empirical_mean(a, n_batches: int = N_BATCHES):
    """Sample mean with batch-means standard error."""
    a = np.asarray(a, dtype=float)
    ones = np.ones(a.shape[0])
    m, s = _batch_stats(a, ones, n_batches)
    return m, s


@dataclass(frozen=True)
class CouplingEstimate:
    epsilon: float
    rate: float
    se: float


@dataclass(frozen=True)
class CouplingTable:
    rows: tuple
    slope: float

    def monotone(self) -> bool:
        r = [e.rate for e in self.rows]
        return all(x <= y for x, y in zip(r, r[1:]))


def mismatch_rate(path: CoupledPath) -> CouplingEstimate:
    p = float(np.mean(path.x != path.x_bullet))
    return CouplingEstimate(path.epsilon, p, float(np.sqrt(p * (1 - p) / path.T)))


def loglog_slope(eps, rates) -> float:
    eps = np.asarray(eps, dtype=float)
    rates = np.asarray(rates, dtype=float)
    ok = (eps > 0) & (rates > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(eps[ok]), np.log(rates[ok]), 1)[0])


def coupling_rate(family: ControlledFamily, input: InputSpec, eps_list, T: int,
                  seed: int) -> CouplingTable:
    """Mismatch frequency ``P{X != X•}`` per epsilon and the log-log slope.

    Every epsilon reuses the same seed, so the comparison across epsilon is
    made with common random numbers.
    """
    rows = []
    for eps in sorted(float(e) for e in eps_list):
        path = simulate_coupled(family, input.with_epsilon(eps), T, seed)
        rows.append(mismatch_rate(path))
    slope = loglog_slope([r.epsilon for r in rows], [r.rate for r in rows])
    return CouplingTable(tuple(rows), slope)


def write_path_csv(path: CoupledPath, filename) -> None:
    with open(filename, "w", newline="") as fh:
        fh.write(f"# seed: {path.seed}\n# epsilon: {path.epsilon!r}\n# burn_in: {path.burn_in}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "x_bullet", "zeta1"])
        for t in range(path.T):
            w.writerow([t, int(path.x[t]), int(path.x_bullet[t]), f"{path.zeta1[t]:.17g}"])
