"""Controlled transition families and the scaled stationary input.

A controlled family is the map ``zeta -> P_zeta`` together with its Taylor
data at zero: ``P0``, the first derivative ``E`` and the second derivative
``W``.  The input is ``zeta_t = epsilon * zeta1_t`` where ``zeta1`` is a
stationary zero-mean finite-state Markov chain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainTooSmall,
    InvalidZetaDomain,
    NonGeometricCovariance,
    ValidationError,
)
from .markov import StochasticMatrix, check_ergodic, stationary_distribution, validate_stochastic

ZERO_SUM_TOL = 1e-10
MEAN_TOL = 1e-12


def _stochastic_or_raise(P: np.ndarray, zeta: float, tol: float = 1e-12) -> np.ndarray:
    if np.any(P < -tol) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-10:
        raise InvalidZetaDomain(f"P_zeta is not stochastic at zeta = {zeta!r}")
    return P


@dataclass(frozen=True, eq=False)
class ControlledFamily:
    """``zeta -> P_zeta`` with Taylor data at ``zeta = 0``.

    Parameters
    ----------
    P0 : StochasticMatrix
        Nominal transition matrix.
    E, W : ndarray
        First and second derivatives of ``P_zeta`` at zero.  Rows must sum to
        zero.
    evaluate : callable
        Exact ``P_zeta``.  Must return ``P0`` at zero.
    zeta_domain : (float, float)
        Closed interval on which ``evaluate`` is row-stochastic.
    """

    P0: StochasticMatrix
    E: np.ndarray
    W: np.ndarray
    evaluate: Callable[[float], np.ndarray]
    zeta_domain: tuple[float, float] = (-1.0, 1.0)
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.P0.dim
        for label in ("E", "W"):
            M = np.array(getattr(self, label), dtype=float)
            if M.shape != (d, d):
                raise DimensionMismatch(f"{label} has shape {M.shape}, expected {(d, d)}")
            dev = float(np.max(np.abs(M.sum(axis=1))))
            if dev > ZERO_SUM_TOL:
                raise ValidationError(f"{label}·1 = 0 violated (max row sum {dev:.3e})")
            M.setflags(write=False)
            object.__setattr__(self, label, M)
        lo, hi = self.zeta_domain
        if not lo <= 0.0 <= hi:
            raise ValidationError("zeta domain must contain 0")
        P = np.asarray(self.evaluate(0.0), dtype=float)
        if P.shape != (d, d) or np.max(np.abs(P - self.P0.entries)) > 1e-14:
            raise ValidationError("evaluate(0) differs from P0")

    @property
    def dim(self) -> int:
        return self.P0.dim

    def transition(self, zeta: float) -> np.ndarray:
        """``P_zeta``, checked against the domain and for stochasticity."""
        lo, hi = self.zeta_domain
        if not lo - 1e-15 <= zeta <= hi + 1e-15:
            raise InvalidZetaDomain(f"zeta = {zeta!r} outside [{lo}, {hi}]")
        if zeta == 0.0:
            return self.P0.entries
        P = np.array(self.evaluate(float(zeta)), dtype=float)
        return _stochastic_or_raise(P, zeta)

    @classmethod
    def from_matrices(cls, P0, E, W=None, zeta_domain=(-1.0, 1.0), name="matrices"):
        """Quadratic family ``P0 + zeta E + zeta^2 W / 2``."""
        P0 = P0 if isinstance(P0, StochasticMatrix) else validate_stochastic(P0)
        E = np.array(E, dtype=float)
        W = np.zeros_like(E) if W is None else np.array(W, dtype=float)
        base = P0.entries

        def evaluate(z):
            if z == 0.0:
                return base
            return base + z * E + 0.5 * z * z * W

        return cls(P0, E, W, evaluate, tuple(zeta_domain), name)


def taylor_from_evaluator(evaluate, h: float = 1e-4, zeta_domain=(-1.0, 1.0),
                          name: str = "evaluator") -> ControlledFamily:
    """Build a family with ``E`` and ``W`` from central differences.

    Each row of the difference quotients is shifted to sum to zero, which
    enforces ``E·1 = W·1 = 0`` regardless of the O(h^2) truncation error.

    Raises
    ------
    DomainTooSmall
        If ``[-h, h]`` is not inside `zeta_domain` or `evaluate` fails there.
    """
    lo, hi = zeta_domain
    if h <= 0 or -h < lo or h > hi:
        raise DomainTooSmall(f"step h = {h!r} does not fit in [{lo}, {hi}]")
    try:
        P0 = validate_stochastic(evaluate(0.0))
        Pp = _stochastic_or_raise(np.array(evaluate(h), dtype=float), h)
        Pm = _stochastic_or_raise(np.array(evaluate(-h), dtype=float), -h)
    except InvalidZetaDomain as exc:
        raise DomainTooSmall(str(exc)) from exc
    base = P0.entries
    E = (Pp - Pm) / (2 * h)
    W = (Pp - 2 * base + Pm) / (h * h)
    E -= E.mean(axis=1, keepdims=True)
    W -= W.mean(axis=1, keepdims=True)

    def ev(z):
        return base if z == 0.0 else evaluate(z)

    return ControlledFamily(P0, E, W, ev, tuple(zeta_domain), name)


@dataclass(frozen=True, eq=False)
class InputSpec:
    """Stationary zero-mean input ``zeta_t = epsilon * zeta1_t``.

    ``zeta1`` is a finite-state Markov chain on the alphabet `states` with
    transition matrix `K`.
    """

    states: np.ndarray
    K: StochasticMatrix
    mu: np.ndarray
    epsilon: float
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        z = np.array(self.states, dtype=float)
        if z.ndim != 1 or z.size != self.K.dim:
            raise DimensionMismatch("states and K disagree in size")
        if np.any(np.abs(z) > 1.0):
            raise ValidationError("input alphabet must satisfy |z| <= 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError(f"epsilon = {self.epsilon!r} outside [0, 1]")
        mean = float(self.mu @ z)
        if abs(mean) > MEAN_TOL:
            raise ValidationError(f"input is not zero mean (mean {mean:.3e})")
        z.setflags(write=False)
        object.__setattr__(self, "states", z)

    @classmethod
    def from_chain(cls, states, K, epsilon, name="custom", params=None):
        K = K if isinstance(K, StochasticMatrix) else validate_stochastic(K)
        mu = stationary_distribution(K.entries)
        mu.setflags(write=False)
        return cls(np.asarray(states, dtype=float), K, mu, float(epsilon), name,
                   dict(params or {}))

    def with_epsilon(self, epsilon: float) -> "InputSpec":
        return InputSpec(self.states, self.K, self.mu, float(epsilon), self.name,
                         self.params)

    @property
    def n_states(self) -> int:
        return self.K.dim

    @property
    def sigma2(self) -> float:
        """Variance of ``zeta1``."""
        return float(self.mu @ self.states**2)

    def autocov_series(self, t_max: int) -> np.ndarray:
        """``R_zeta1(t)`` for ``t = 0..t_max``."""
        out = np.empty(t_max + 1)
        v = self.states.copy()
        w = self.mu * self.states
        for t in range(t_max + 1):
            out[t] = w @ v
            v = self.K.entries @ v
        return out

    @cached_property
    def mixing_rate(self) -> float:
        """Second largest eigenvalue modulus of `K`."""
        lam = np.sort(np.abs(np.linalg.eigvals(self.K.entries)))
        return float(lam[-2]) if lam.size > 1 else 0.0


def input_autocovariance(spec: InputSpec, t: int, scaled: bool = False) -> float:
    """``R_zeta1(t)``, or ``R_zeta(t) = epsilon^2 R_zeta1(t)`` if `scaled`."""
    Kt = np.linalg.matrix_power(spec.K.entries, abs(int(t)))
    r = float((spec.mu * spec.states) @ Kt @ spec.states)
    return spec.epsilon**2 * r if scaled else r


@dataclass(frozen=True)
class GeometricCovariance:
    """``R_zeta1(t) = sum_k a_k rho_k^|t|`` with distinct real poles."""

    coeffs: np.ndarray
    poles: np.ndarray

    @property
    def count(self) -> int:
        return len(self.poles)

    def autocov(self, t) -> np.ndarray:
        t = np.abs(np.asarray(t))
        # 0.0 ** 0 == 1 keeps the white-noise term at lag 0
        return np.power.outer(self.poles, t).T @ self.coeffs

    def psd(self, thetas) -> np.ndarray:
        """``sum_t R(t) e^{-j theta t}`` in closed form."""
        c = np.cos(np.asarray(thetas, dtype=float))
        out = np.zeros_like(c)
        for a, r in zip(self.coeffs, self.poles):
            out += a * (1 - r * r) / (1 - 2 * r * c + r * r)
        return out


def geometric_representation(spec: InputSpec, n_check: int = 50,
                             tol: float = 1e-9) -> GeometricCovariance:
    """Poles and weights of the input autocovariance from the spectrum of `K`.

    With ``K = V diag(lam) V^{-1}`` one has
    ``R(t) = sum_k [(mu*z) · v_k] [w_k · z] lam_k^t``.  Terms with negligible
    weight (including the unit eigenvalue, since the mean is zero) are
    dropped and numerically equal poles are merged.

    Raises
    ------
    NonGeometricCovariance
        If an active pole is complex, or the reconstruction misses the exact
        autocovariance by more than `tol` on lags ``0..n_check``.
    """
    K = spec.K.entries
    lam, V = np.linalg.eig(K)
    try:
        Vinv = np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise NonGeometricCovariance("K is not diagonalizable") from exc
    left = (spec.mu * spec.states) @ V
    right = Vinv @ spec.states
    a = left * right
    scale = max(spec.sigma2, 1e-300)
    keep = np.abs(a) > 1e-13 * scale
    a, lam = a[keep], lam[keep]
    if np.any(np.abs(lam.imag) > 1e-10) or np.any(np.abs(a.imag) > 1e-10 * scale):
        raise NonGeometricCovariance("input covariance has complex poles")
    a, lam = a.real, lam.real
    order = np.argsort(-lam)
    a, lam = a[order], lam[order]
    poles, coeffs = [], []
    for ak, rk in zip(a, lam):
        if poles and abs(poles[-1] - rk) < 1e-10:
            coeffs[-1] += ak
        else:
            poles.append(rk)
            coeffs.append(ak)
    geo = GeometricCovariance(np.array(coeffs), np.array(poles))
    if np.any(np.abs(geo.poles) >= 1.0):
        raise NonGeometricCovariance("pole on or outside the unit circle")
    exact = spec.autocov_series(n_check)
    err = float(np.max(np.abs(geo.autocov(np.arange(n_check + 1)) - exact)))
    if err > tol:
        raise NonGeometricCovariance(f"geometric reconstruction error {err:.2e}")
    return geo


def three_state_kernel(gamma: float) -> np.ndarray:
    """Symmetric 3-state kernel on ``{-1, 0, 1}`` with ``R(m) ∝ (1-gamma)^|m|``.

    For ``gamma <= 1/2`` this is the tridiagonal walk that moves to a
    neighbour with probability ``gamma``.  Larger ``gamma`` cannot keep that
    shape (the middle row would go negative), so the kernel is continued by
    a symmetric matrix with the same uniform stationary law and the same
    eigenvalue ``1 - gamma`` on the odd eigenvector ``(-1, 0, 1)``.
    """
    g = float(gamma)
    if not 0.0 < g <= 1.0:
        raise ValidationError(f"gamma = {gamma!r} outside (0, 1]")
    if g <= 0.5:
        return np.array([[1 - g, g, 0.0], [g, 1 - 2 * g, g], [0.0, g, 1 - g]])
    a, b, c = (1.5 - g) / 2, 0.5, (g - 0.5) / 2
    return np.array([[a, b, c], [b, 0.0, b], [c, b, a]])


def three_state_input(gamma: float, epsilon: float) -> InputSpec:
    """Input on ``{-1, 0, 1}`` with uniform law and variance 2/3."""
    return InputSpec.from_chain(
        [-1.0, 0.0, 1.0], three_state_kernel(gamma), epsilon,
        name="three-state", params={"gamma": float(gamma)},
    )


def check_input(spec: InputSpec) -> dict:
    """Ergodicity flags of the input chain (used by the validate command)."""
    rep = check_ergodic(spec.K.entries)
    return {"irreducible": rep.irreducible, "aperiodic": rep.aperiodic}
