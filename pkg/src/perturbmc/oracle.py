"""Exact statistics from the lifted chain ``Psi_t = (X_t, zeta1_t)``.

When ``zeta1`` is a finite Markov chain the pair ``(X, zeta1)`` is Markov
with ``P_J((x, a), (y, b)) = P_{eps z_a}(x, y) K(a, b)``.  Every quantity the
approximation produces has an exact counterpart as a finite linear-algebra
expression in ``P_J`` and its stationary vector.  Flat indices are x-major:
``index = x n_z + a``.
"""
from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field

import numpy as np

from .controlled import ControlledFamily, InputSpec
from .errors import DimensionMismatch, InvalidZetaDomain, SingularResolvent
from .markov import StochasticMatrix, stationary_distribution, validate_stochastic
from .secondorder import LagSeries
from .spectral import SpectralGrid, uniform_grid


@dataclass(frozen=True, eq=False)
class JointChain:
    P_joint: StochasticMatrix
    pi_joint: np.ndarray
    blocks: np.ndarray  # P_{eps z_a} for each input state, shape (n_z, d, d)
    family: ControlledFamily
    input: InputSpec
    _powers: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def d(self) -> int:
        return self.family.dim

    @property
    def n_z(self) -> int:
        return self.input.n_states

    @property
    def n(self) -> int:
        return self.d * self.n_z

    def index(self, x: int, a: int) -> int:
        return x * self.n_z + a

    def unflatten(self, i: int) -> tuple[int, int]:
        return divmod(int(i), self.n_z)

    @property
    def M(self) -> np.ndarray:
        """``n x d`` map from joint states to the X indicator."""
        return np.kron(np.eye(self.d), np.ones((self.n_z, 1)))

    @property
    def zeta(self) -> np.ndarray:
        """``zeta = eps z_a`` on joint states."""
        return self.input.epsilon * np.tile(self.input.states, self.d)

    def lift(self, f) -> np.ndarray:
        """Extend a function of ``x`` to joint states."""
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.d:
            raise DimensionMismatch(f"observable has length {f.shape[0]}, expected {self.d}")
        return np.repeat(f, self.n_z, axis=0)

    def power(self, t: int) -> np.ndarray:
        """``P_J^t``, memoised.  Safe for concurrent readers."""
        t = int(t)
        with self._lock:
            hit = self._powers.get(t)
        if hit is not None:
            return hit
        P = np.linalg.matrix_power(self.P_joint.entries, t)
        P.setflags(write=False)
        with self._lock:
            self._powers.setdefault(t, P)
        return P

    def propagate(self, f, t_max: int) -> np.ndarray:
        """Stack of ``P_J^t f`` for ``t = 0..t_max``."""
        P = self.P_joint.entries
        f = np.asarray(f, dtype=float)
        out = np.empty((t_max + 1,) + f.shape)
        out[0] = f
        for t in range(t_max):
            out[t + 1] = P @ out[t]
        return out


def build_joint(family: ControlledFamily, input: InputSpec) -> JointChain:
    """Product-form joint chain.

    Raises
    ------
    InvalidZetaDomain
        If some ``eps z_a`` falls outside the family's domain.
    """
    eps = input.epsilon
    blocks = []
    for z in input.states:
        zeta = eps * float(z)
        lo, hi = family.zeta_domain
        if not lo - 1e-15 <= zeta <= hi + 1e-15:
            raise InvalidZetaDomain(f"eps z = {zeta!r} outside [{lo}, {hi}]")
        blocks.append(family.transition(zeta))
    blocks = np.array(blocks)
    K = input.K.entries
    d, nz = family.dim, input.n_states
    PJ = np.einsum("axy,ab->xayb", blocks, K).reshape(d * nz, d * nz)
    PJ = validate_stochastic(PJ, tol=1e-10)
    pi = stationary_distribution(PJ.entries)
    pi.setflags(write=False)
    blocks.setflags(write=False)
    return JointChain(PJ, pi, blocks, family, input)


def exact_marginal(jc: JointChain) -> np.ndarray:
    """``pi_eps(x) = sum_a pi_J(x, a)``."""
    return jc.pi_joint.reshape(jc.d, jc.n_z).sum(axis=1)


def exact_cross_corr(jc: JointChain, f, g, t: int) -> float:
    """``E[f(Psi_t) g(Psi_0)]``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if t < 0:
        f, g, t = g, f, -t
    return float((jc.pi_joint * g) @ (jc.power(t) @ f))


def exact_cov_series(jc: JointChain, f, g, lag_max: int, centered: bool = True) -> LagSeries:
    """``Cov(f(Psi_t), g(Psi_0))`` (or raw moments) for ``|t| <= lag_max``.

    `f` may be a matrix whose columns are observables; the result then has
    one column per observable.  `g` is a single observable.
    """
    pi = jc.pi_joint
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if centered:
        f = f - pi @ f
        g = g - pi @ g
    pos = np.tensordot(jc.propagate(f, lag_max), pi * g, axes=([1], [0]))
    negp = jc.propagate(g, lag_max)  # P^s g, used for t = -s
    fm = f if f.ndim > 1 else f[:, None]
    neg = np.einsum("i,ik,si->sk", pi, fm, negp)
    if f.ndim == 1:
        neg = neg[:, 0]
    vals = np.concatenate([neg[:0:-1], pos])
    return LagSeries(-lag_max, vals, "exact_cov")


def exact_psd(jc: JointChain, f, g, M: int = 1024, thetas=None) -> SpectralGrid:
    """Cross PSD ``sum_t Cov(f(Psi_t), g(Psi_0)) e^{-j theta t}`` in closed form.

    With ``P~ = P_J - 1 pi_J`` and centred ``f, g``:
    ``S = ([I - e^{-j theta} P~]^{-1} f)^T Pi g + f^T Pi [I - e^{j theta} P~]^{-1} g
    - f^T Pi g``.  Matrix arguments (observables as columns) give a matrix of
    cross spectra.
    """
    pi = jc.pi_joint
    P = jc.P_joint.entries
    n = jc.n
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    vec = f.ndim == 1 and g.ndim == 1
    f = (f if f.ndim > 1 else f[:, None]) - pi @ (f if f.ndim > 1 else f[:, None])
    g = (g if g.ndim > 1 else g[:, None]) - pi @ (g if g.ndim > 1 else g[:, None])
    th = uniform_grid(M) if thetas is None else np.asarray(thetas)
    Pt = P - np.outer(np.ones(n), pi)
    I = np.eye(n)
    zm = np.exp(-1j * th)[:, None, None]
    try:
        Rm = np.linalg.inv(I[None] - zm * Pt[None])
    except np.linalg.LinAlgError as exc:
        raise SingularResolvent("joint resolvent singular") from exc
    # [I - e^{j theta} P~]^{-1} is the complex conjugate of the above
    a = Rm @ f
    b = np.conj(Rm) @ g
    Pg = pi[:, None] * g
    vals = (np.swapaxes(a, 1, 2) @ Pg + (f.T * pi) @ b - f.T @ Pg)
    if vec:
        vals = vals[:, 0, 0]
    return SpectralGrid(th, vals, "exact_S")


def exact_delta_covariance(jc: JointChain) -> np.ndarray:
    """``Sigma^Delta = sum_j pi_J(j) [diag(p_j) - p_j p_j^T]``, ``p_j = P_{eps z}(x, .)``."""
    rows = _rows(jc)
    w = jc.pi_joint
    return np.diag(w @ rows) - np.einsum("j,ja,jb->ab", w, rows, rows)


def _rows(jc: JointChain) -> np.ndarray:
    """``P_{eps z_a}(x, .)`` for every joint state ``(x, a)``."""
    return np.transpose(jc.blocks, (1, 0, 2)).reshape(jc.n, jc.d)


def exact_delta_stats(jc: JointChain, t_max: int = 5) -> dict:
    """Exact ``Sigma^Delta`` and ``R_{Delta^2,zeta}(-t)``, ``t = 0..t_max``.

    ``E[Delta_1^T Delta_1 | Psi_0 = j] = diag(p_j) - p_j p_j^T`` and
    ``zeta_{t+1}`` is conditionally independent of ``X_1`` given ``Psi_0``,
    so ``R_{Delta^2,zeta}(-t) = sum_j pi_J(j) X(j) (P_J^{t+1} zeta)(j)``.
    """
    rows = _rows(jc)
    w = jc.pi_joint
    prop = jc.propagate(jc.zeta, t_max + 1)[1:]
    series = np.empty((t_max + 1, jc.d, jc.d))
    for t in range(t_max + 1):
        wt = w * prop[t]
        series[t] = np.diag(wt @ rows) - np.einsum("j,ja,jb->ab", wt, rows, rows)
    return {"Sigma_Delta": exact_delta_covariance(jc),
            "R_D2z": LagSeries(0, series, "exact_R_Delta2_zeta(-t)")}


def exact_cross_corr_gamma_zeta(jc: JointChain, lag_min: int, lag_max: int) -> LagSeries:
    """``E[Gamma_t^T zeta_0]``."""
    pi, M, z = jc.pi_joint, jc.M, jc.zeta
    fwd = jc.propagate(M, max(lag_max, 0))
    bwd = jc.propagate(z, max(-lag_min, 0))
    out = []
    for t in range(lag_min, lag_max + 1):
        if t >= 0:
            out.append(fwd[t].T @ (pi * z))
        else:
            out.append(M.T @ (pi * bwd[-t]))
    return LagSeries(lag_min, np.array(out), "exact_R_Gamma_zeta")


def _d_pieces(jc: JointChain, lag_max: int):
    P0 = jc.family.P0.entries
    pi, M = jc.pi_joint, jc.M
    PJ = jc.P_joint.entries
    G0 = pi[:, None] * M - PJ.T @ (pi[:, None] * M) @ P0
    Y = jc.propagate(M, lag_max)
    H = Y[1:] - Y[:-1] @ P0
    return G0, H


def exact_r_d(jc: JointChain, lag_max: int) -> LagSeries:
    """``R_D(t) = E[D_t^T D_0]`` with ``D_{t+1} = Gamma_{t+1} - Gamma_t P0``."""
    P0 = jc.family.P0.entries
    pi, M = jc.pi_joint, jc.M
    pie = M.T @ pi
    C = M.T @ jc.P_joint.entries.T @ (pi[:, None] * M)
    R0 = np.diag(pie) - C @ P0 - P0.T @ C.T + P0.T @ np.diag(pie) @ P0
    G0, H = _d_pieces(jc, lag_max)
    pos = np.concatenate([R0[None], np.einsum("tia,ib->tab", H, G0)])
    vals = np.concatenate([np.transpose(pos[:0:-1], (0, 2, 1)), pos])
    return LagSeries(-lag_max, vals, "exact_R_D")


def exact_r_d_zeta(jc: JointChain, lag_min: int, lag_max: int) -> LagSeries:
    """``R_{D,zeta}(t) = E[D_t^T zeta_0]``."""
    pi, z = jc.pi_joint, jc.zeta
    L = max(abs(lag_min), abs(lag_max), 1)
    G0, H = _d_pieces(jc, L)
    back = jc.propagate(z, L)
    out = []
    for t in range(lag_min, lag_max + 1):
        if t >= 1:
            out.append(H[t - 1].T @ (pi * z))
        else:
            out.append(G0.T @ back[-t])
    return LagSeries(lag_min, np.array(out), "exact_R_D_zeta")


def export_csv(jc: JointChain, prefix, header: dict | None = None) -> tuple[str, str]:
    """Write ``P_joint`` and ``pi_joint`` as CSV (x-major flat indices)."""
    paths = (f"{prefix}_P_joint.csv", f"{prefix}_pi_joint.csv")
    meta = {"index": "x * n_z + a", "d": jc.d, "n_z": jc.n_z, **(header or {})}
    with open(paths[0], "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in jc.P_joint.entries:
            w.writerow([f"{x:.17g}" for x in row])
    with open(paths[1], "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "a", "pi"])
        for i, p in enumerate(jc.pi_joint):
            x, a = jc.unflatten(i)
            w.writerow([i, x, a, f"{p:.17g}"])
    return paths
