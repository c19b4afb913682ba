"""Second-order approximations of steady-state and correlation statistics.

Notation: ``Gamma_t`` is the indicator row vector of ``X_t``, ``D_{t+1} =
Gamma_{t+1} - Gamma_t P0`` and ``Delta_{t+1} = Gamma_{t+1} - Gamma_t
P_{zeta_t}`` is the martingale-difference innovation.  ``A = P0^T`` and
``B^T = pi0 E``.  All ``O(epsilon^3)`` terms are dropped.

Correlation conventions: ``R_{Gamma,zeta}(t) = E[Gamma_t^T zeta_0]`` and
``R_D(t) = E[D_t^T D_0]`` (no mean removal).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.signal import oaconvolve

from .controlled import ControlledFamily, GeometricCovariance, InputSpec, geometric_representation
from .errors import DimensionMismatch, NonGeometricCovariance, TruncationNotConverged
from .markov import fundamental_matrix, stationary_distribution

DEFAULT_TOL = 1e-12
MONOTONE_RUN = 5
HARD_CAP = 1_000_000


class NegativeMassWarning(UserWarning):
    """The second-order stationary vector has negative entries."""


@dataclass(frozen=True, eq=False)
class LagSeries:
    """Matrices (or vectors) indexed by a contiguous range of integer lags."""

    lag_min: int
    values: np.ndarray
    kind: str = ""

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim < 1 or v.shape[0] == 0:
            raise DimensionMismatch("a lag series needs at least one lag")
        object.__setattr__(self, "values", v)

    @property
    def lag_max(self) -> int:
        return self.lag_min + self.values.shape[0] - 1

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.lag_min, self.lag_max + 1)

    def __getitem__(self, lag: int) -> np.ndarray:
        if not self.lag_min <= lag <= self.lag_max:
            raise KeyError(f"lag {lag} outside [{self.lag_min}, {self.lag_max}]")
        return self.values[lag - self.lag_min]

    def __len__(self) -> int:
        return self.values.shape[0]

    def restrict(self, lag_min: int, lag_max: int) -> "LagSeries":
        lo, hi = lag_min - self.lag_min, lag_max - self.lag_min + 1
        if lo < 0 or hi > len(self):
            raise KeyError("requested range not covered")
        return LagSeries(lag_min, self.values[lo:hi], self.kind)

    def apply(self, f, g=None, kind=None) -> "LagSeries":
        """Scalar series ``f^T R(t) g`` for matrix series, ``R(t) · f`` for vectors."""
        v = self.values
        if v.ndim == 3:
            out = np.einsum("i,kij,j->k", f, v, f if g is None else g)
        elif v.ndim == 2:
            out = v @ f
        else:
            raise DimensionMismatch("series is already scalar")
        return LagSeries(self.lag_min, out, kind or self.kind)


def _geometric_terms(first: np.ndarray, step, scale: float, tol: float, dim: int):
    """Iterate ``v <- step(v)`` until the terms are negligible.

    Stops when ``scale * |v| < tol`` after ``MONOTONE_RUN`` consecutive
    decreasing terms, or at once if ``v`` is at rounding level.  The cap ``10 d / (1 - rho_hat)`` uses the largest of
    the recent successive ratios as the decay estimate.
    """
    terms = [first]
    norms = [float(np.max(np.abs(first))) if first.size else 0.0]
    run = 0
    v = first
    while True:
        # a term at rounding level of the first one can repeat forever
        floor = norms[-1] <= 1e-15 * norms[0]
        if norms[-1] * scale < tol and (run >= MONOTONE_RUN or floor):
            break
        v = step(v)
        terms.append(v)
        norms.append(float(np.max(np.abs(v))))
        run = run + 1 if norms[-1] < norms[-2] else 0
        n = len(terms)
        if n > 20:
            recent = np.array(norms[-11:])
            prev, nxt = recent[:-1], recent[1:]
            ok = prev > 0
            rho_hat = float(np.max(nxt[ok] / prev[ok])) if np.any(ok) else 0.0
            rho_hat = min(rho_hat, 1.0 - 1.0 / HARD_CAP)
            cap = min(HARD_CAP, max(100, int(10 * dim / (1.0 - rho_hat))))
            if n > cap:
                raise TruncationNotConverged(
                    f"terms still at {norms[-1]:.2e} after {n} steps (cap {cap})")
    return np.array(terms)


@dataclass(frozen=True, eq=False)
class SecondOrderContext:
    """Everything the approximations need, computed once.

    Build with :meth:`build`.  The context is immutable; cached quantities are
    deterministic functions of the inputs.
    """

    family: ControlledFamily
    input: InputSpec
    pi0: np.ndarray
    U1: np.ndarray
    B: np.ndarray
    tol: float = DEFAULT_TOL

    @classmethod
    def build(cls, family: ControlledFamily, input: InputSpec,
              tol: float = DEFAULT_TOL) -> "SecondOrderContext":
        P0 = family.P0.entries
        pi0 = stationary_distribution(P0)
        U1 = fundamental_matrix(P0, pi0)
        B = pi0 @ family.E
        for arr in (pi0, U1, B):
            arr.setflags(write=False)
        return cls(family, input, pi0, U1, B, tol)

    def with_epsilon(self, epsilon: float) -> "SecondOrderContext":
        """Same chain, rescaled input.  Reuses the epsilon-free caches."""
        new = SecondOrderContext(self.family, self.input.with_epsilon(epsilon),
                                 self.pi0, self.U1, self.B, self.tol)
        for key in ("b_powers", "input_series", "geometric", "sigma_delta_bullet",
                    "ex1", "_gz_conv"):
            if key in self.__dict__:
                new.__dict__[key] = self.__dict__[key]
        return new

    @property
    def P0(self) -> np.ndarray:
        return self.family.P0.entries

    @property
    def E(self) -> np.ndarray:
        return self.family.E

    @property
    def W(self) -> np.ndarray:
        return self.family.W

    @property
    def d(self) -> int:
        return self.family.dim

    @property
    def eps2(self) -> float:
        return self.input.epsilon ** 2

    @property
    def Pi0(self) -> np.ndarray:
        return np.diag(self.pi0)

    @cached_property
    def b_powers(self) -> np.ndarray:
        """Rows ``B^T P0^{i-1}`` for ``i = 1..N`` (row ``i - 1``)."""
        P0 = self.P0
        scale = max(self.input.sigma2, 1e-300)
        return _geometric_terms(self.B.copy(), lambda v: v @ P0, scale, self.tol, self.d)

    @cached_property
    def input_series(self) -> np.ndarray:
        """``R_zeta1(t)`` for ``t = 0..H`` with the tail below tolerance."""
        K = self.input.K.entries
        z = self.input.states
        w = self.input.mu * z
        vs = _geometric_terms(z.copy(), lambda v: K @ v, 1.0,
                              self.tol * max(self.input.sigma2, 1e-300), self.input.n_states)
        return vs @ w

    @cached_property
    def geometric(self) -> GeometricCovariance | None:
        try:
            return geometric_representation(self.input)
        except NonGeometricCovariance:
            return None

    def r_zeta1(self, t) -> np.ndarray:
        """``R_zeta1`` at integer lags (zero beyond the truncation horizon)."""
        t = np.abs(np.asarray(t))
        r = self.input_series
        out = np.zeros(t.shape)
        inside = t < r.size
        out[inside] = r[t[inside]]
        return out

    def r_zeta(self, t) -> np.ndarray:
        return self.eps2 * self.r_zeta1(t)

    @property
    def horizon(self) -> int:
        """Lag beyond which every approximated series is below tolerance."""
        return len(self.b_powers) + len(self.input_series)

    @cached_property
    def sigma_delta_bullet(self) -> np.ndarray:
        P0, Pi0 = self.P0, self.Pi0
        return Pi0 - P0.T @ Pi0 @ P0

    @cached_property
    def ex1(self) -> np.ndarray:
        """``diag(pi0 E) - (P0^T Pi0 E + [P0^T Pi0 E]^T)``."""
        M = self.P0.T @ self.Pi0 @ self.E
        return np.diag(self.B) - (M + M.T)

    @cached_property
    def _gz_conv(self) -> tuple[int, np.ndarray]:
        """``R_{Gamma,zeta1}`` on its whole numerical support (epsilon-free).

        ``sum_{i>=1} V_i R_zeta1(t - i)`` is a convolution of the rows
        ``V_i = B^T P0^{i-1}`` with the two-sided input autocovariance.
        """
        V = self.b_powers
        r = self.input_series
        kernel = np.concatenate([r[:0:-1], r])
        H = r.size - 1
        out = oaconvolve(V, kernel[:, None], mode="full", axes=0)
        # V row 0 sits at i = 1 and kernel entry 0 at lag -H
        return 1 - H, out


def cross_corr_gamma_zeta_series(ctx: SecondOrderContext, lag_min: int,
                                 lag_max: int) -> LagSeries:
    """``R_{Gamma,zeta}(t)`` for ``t = lag_min..lag_max``."""
    start, vals = ctx._gz_conv
    lags = np.arange(lag_min, lag_max + 1)
    out = np.zeros((lags.size, ctx.d))
    pos = lags - start
    ok = (pos >= 0) & (pos < vals.shape[0])
    out[ok] = vals[pos[ok]]
    return LagSeries(lag_min, ctx.eps2 * out, "R_Gamma_zeta")


def cross_corr_gamma_zeta(ctx: SecondOrderContext, t: int) -> np.ndarray:
    """``R_{Gamma,zeta}(t) = eps^2 sum_{i>=1} (B^T P0^{i-1})^T R_zeta1(t-i)``."""
    return cross_corr_gamma_zeta_series(ctx, t, t)[t]


def xi_vector(ctx: SecondOrderContext, route: str = "auto") -> np.ndarray:
    """First-order correction ``xi`` with ``pi_eps = pi0 + xi U1``.

    Parameters
    ----------
    route : {'auto', 'geometric', 'lag'}
        ``'geometric'`` uses the pole expansion of the input covariance,
        ``'lag'`` the truncated lag sum.  ``'auto'`` prefers the former.
    """
    eps2 = ctx.eps2
    quad = 0.5 * eps2 * ctx.input.sigma2 * (ctx.pi0 @ ctx.W)
    geo = ctx.geometric if route in ("auto", "geometric") else None
    if route == "geometric" and geo is None:
        raise NonGeometricCovariance("input covariance has no geometric form")
    if geo is not None:
        acc = np.zeros(ctx.d)
        I = np.eye(ctx.d)
        for a, r in zip(geo.coeffs, geo.poles):
            if r == 0.0:
                continue
            acc += a * r * np.linalg.solve((I - r * ctx.P0).T, ctx.B)
        return eps2 * acc @ ctx.E + quad
    return cross_corr_gamma_zeta(ctx, 0) @ ctx.E + quad


def steady_state_mean_approx(ctx: SecondOrderContext, xi=None) -> np.ndarray:
    """``pi_hat = pi0 + xi U1``.  Negative entries are kept and warned about."""
    xi = xi_vector(ctx) if xi is None else xi
    pi_hat = ctx.pi0 + xi @ ctx.U1
    if np.any(pi_hat < 0):
        warnings.warn(
            f"second-order stationary vector has negative mass "
            f"(min {pi_hat.min():.3e}) at epsilon = {ctx.input.epsilon}",
            NegativeMassWarning, stacklevel=2)
    return pi_hat


def delta_covariance(ctx: SecondOrderContext, pi_hat=None, r0=None) -> np.ndarray:
    """Innovation covariance ``Sigma^Delta = E[Delta^T Delta]``."""
    P0, E, W, Pi0 = ctx.P0, ctx.E, ctx.W, ctx.Pi0
    if pi_hat is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NegativeMassWarning)
            pi_hat = steady_state_mean_approx(ctx)
    r0 = cross_corr_gamma_zeta(ctx, 0) if r0 is None else r0
    Pih = np.diag(pi_hat)
    lin = P0.T @ np.diag(r0) @ E
    quad = P0.T @ Pi0 @ W + 2 * E.T @ Pi0 @ E + W.T @ Pi0 @ P0
    S = Pih - P0.T @ Pih @ P0 - (lin + lin.T) - 0.5 * ctx.eps2 * ctx.input.sigma2 * quad
    return 0.5 * (S + S.T)


def _rd2z_from(ctx, rgz_neg: np.ndarray, rz_next: np.ndarray) -> np.ndarray:
    """Stack of ``R_{Delta^2,zeta}(-t)`` from ``R_{Gamma,zeta}(-t-1)`` rows."""
    P0 = ctx.P0
    diag_part = rgz_neg @ P0
    out = -np.einsum("ji,kj,jl->kil", P0, rgz_neg, P0)
    idx = np.arange(ctx.d)
    out[:, idx, idx] += diag_part
    out += rz_next[:, None, None] * ctx.ex1
    return out


def r_delta2_zeta_series(ctx: SecondOrderContext, t_max: int) -> LagSeries:
    """``R_{Delta^2,zeta}(-t)`` for ``t = 0..t_max``; entry ``t`` is lag ``-t``.

    ``diag(R_{Gamma,zeta}(-t-1)^T P0) - P0^T diag(R_{Gamma,zeta}(-t-1)) P0
    + R_zeta(t+1) EX1``.
    """
    rg = cross_corr_gamma_zeta_series(ctx, -t_max - 1, -1).values[::-1]
    rz = ctx.r_zeta(np.arange(1, t_max + 2))
    return LagSeries(0, _rd2z_from(ctx, rg, rz), "R_Delta2_zeta(-t)")


def r_delta2_zeta(ctx: SecondOrderContext, t: int) -> np.ndarray:
    """``R_{Delta^2,zeta}(-t)`` for ``t >= 0``."""
    if t < 0:
        raise ValueError("lag must be non-negative (the result is at -t)")
    rg = cross_corr_gamma_zeta(ctx, -t - 1)[None, :]
    rz = ctx.r_zeta(np.array([t + 1]))
    return _rd2z_from(ctx, rg, rz)[0]


def r_bzeta(ctx: SecondOrderContext, t: int) -> np.ndarray:
    """``R_{B zeta}(t) = (P0^t E)^T Pi0 E R_zeta(t)``, extended by transpose."""
    if t < 0:
        return r_bzeta(ctx, -t).T
    G = np.linalg.matrix_power(ctx.P0, t) @ ctx.E
    return G.T @ ctx.Pi0 @ ctx.E * float(ctx.r_zeta(t))


@dataclass(frozen=True)
class ForwardTerms:
    """Non-negative-lag pieces of ``R_D`` for ``t = 0..t_max``."""

    bzeta: np.ndarray
    bzeta_delta: np.ndarray
    vzeta2_delta: np.ndarray
    sigma_delta: np.ndarray


def forward_terms(ctx: SecondOrderContext, t_max: int) -> ForwardTerms:
    """Evaluate ``R_{B zeta}``, ``R_{B zeta,Delta}`` and ``R_{V zeta^2,Delta}``.

    Uses ``G_t = P0^t E`` and ``H_t = E P0^t`` with ``G_{t+1} = P0 G_t``,
    ``H_{t+1} = H_t P0`` and the partial sum
    ``S_t = sum_{i<t} A^{t-1-i} E^T A^i R_zeta(t-i)`` through
    ``S_{t+1} = S_t A + H_t^T R_zeta(t+1)``.
    """
    d = ctx.d
    P0, E, W, Pi0 = ctx.P0, ctx.E, ctx.W, ctx.Pi0
    A = P0.T
    Sb = ctx.sigma_delta_bullet
    rz = ctx.r_zeta(np.arange(0, t_max + 2))
    rd2 = r_delta2_zeta_series(ctx, t_max).values
    half_var = 0.5 * ctx.eps2 * ctx.input.sigma2
    has_w = bool(np.any(W))
    PiE = Pi0 @ E
    bz = np.empty((t_max + 1, d, d))
    bzd = np.empty((t_max + 1, d, d))
    vzd = np.zeros((t_max + 1, d, d))
    G = E.copy()
    H = E.copy()
    S = np.zeros((d, d))
    GW = W.copy()
    for t in range(t_max + 1):
        bz[t] = G.T @ PiE * rz[t]
        if t == 0:
            bzd[t] = E.T @ rd2[0]
        else:
            bzd[t] = G.T @ rd2[t] + E.T @ S @ Sb
        if has_w:
            vzd[t] = half_var * GW.T @ Sb
            GW = P0 @ GW
        S = S @ A + H.T * rz[t + 1]
        G = P0 @ G
        H = H @ P0
    return ForwardTerms(bz, bzd, vzd, delta_covariance(ctx))


def r_bzeta_delta(ctx: SecondOrderContext, t: int) -> np.ndarray:
    """``R_{B zeta,Delta}(t)``; zero for ``t < 0``."""
    if t < 0:
        return np.zeros((ctx.d, ctx.d))
    return forward_terms(ctx, t).bzeta_delta[t]


def r_vzeta2_delta(ctx: SecondOrderContext, t: int) -> np.ndarray:
    """``R_{V zeta^2,Delta}(t) = 1/2 sigma_zeta^2 (P0^t W)^T Sigma^{Delta bullet}``."""
    if t < 0:
        return np.zeros((ctx.d, ctx.d))
    G = np.linalg.matrix_power(ctx.P0, t) @ ctx.W
    return 0.5 * ctx.eps2 * ctx.input.sigma2 * G.T @ ctx.sigma_delta_bullet


def r_d_series(ctx: SecondOrderContext, lag_max: int, terms: ForwardTerms | None = None,
               components: bool = False):
    """``R_D(t)`` for ``t = -lag_max..lag_max``.

    ``R_D(t) = R_{B zeta}(t) + Sigma^Delta 1{t=0} + R_{B zeta,Delta}(t-1)
    + R_{B zeta,Delta}(-t-1)^T + R_{V zeta^2,Delta}(t-1)
    + R_{V zeta^2,Delta}(-t-1)^T``.  For ``t >= 1`` the transposed terms
    vanish, and negative lags follow by transposition.

    With ``components=True`` the four pieces are returned separately as a
    dict of LagSeries (each already placed at its lag in the sum).
    """
    f = forward_terms(ctx, lag_max) if terms is None else terms
    d = ctx.d
    L = lag_max

    def two_sided(pos):
        out = np.empty((2 * L + 1, d, d))
        out[L:] = pos
        out[:L] = np.transpose(pos[:0:-1], (0, 2, 1))
        return out

    shift_bzd = np.zeros((L + 1, d, d))
    shift_bzd[1:] = f.bzeta_delta[:L]
    shift_vzd = np.zeros((L + 1, d, d))
    shift_vzd[1:] = f.vzeta2_delta[:L]
    delta = np.zeros((L + 1, d, d))
    delta[0] = f.sigma_delta
    parts = {
        "delta": two_sided(delta),
        "bzeta": two_sided(f.bzeta[:L + 1]),
        "bzeta_delta": two_sided(shift_bzd),
        "vzeta2_delta": two_sided(shift_vzd),
    }
    if components:
        return {k: LagSeries(-L, v, f"R_D[{k}]") for k, v in parts.items()}
    return LagSeries(-L, sum(parts.values()), "R_D")


def r_d(ctx: SecondOrderContext, t: int) -> np.ndarray:
    """``R_D(t) = E[D_t^T D_0]`` to second order."""
    L = abs(t) + 1
    return r_d_series(ctx, L)[t]


def r_d_zeta_series(ctx: SecondOrderContext, lag_min: int, lag_max: int) -> LagSeries:
    lags = np.arange(lag_min, lag_max + 1)
    return LagSeries(lag_min, np.outer(ctx.r_zeta(lags - 1), ctx.B), "R_D_zeta")


def r_d_zeta(ctx: SecondOrderContext, t: int) -> np.ndarray:
    """``R_{D,zeta}(t) = B R_zeta(t-1)``."""
    return ctx.B * float(ctx.r_zeta(t - 1))


def truncation_horizon(ctx: SecondOrderContext) -> int:
    """Lag range that captures the approximated series to tolerance."""
    return max(8, ctx.horizon)


def decay_rate(P: np.ndarray) -> float:
    """Second largest eigenvalue modulus."""
    lam = np.sort(np.abs(np.linalg.eigvals(P)))
    return float(lam[-2]) if lam.size > 1 else 0.0


def lags_for_tolerance(P: np.ndarray, tol: float = DEFAULT_TOL, floor: int = 8) -> int:
    """Rough number of lags for ``|lambda_2|^L < tol``."""
    r = decay_rate(P)
    if r <= 0:
        return floor
    return max(floor, int(math.ceil(math.log(tol) / math.log(min(r, 1 - 1e-9)))))
