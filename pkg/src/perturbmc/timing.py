"""Timing channel through the controlled queue.

The input ``zeta`` modulates the arrival rate; the receiver sees the
departure process ``S_t``.  A lower bound on the (quadratic) mutual
information rate follows from the covariance of ``S``, of ``zeta`` and their
cross covariance, whichever way those series are obtained.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr

from .errors import DimensionMismatch, SupportViolation, TailNotConverged, ValidationError
from .oracle import JointChain, exact_cov_series
from .queue import QueueModel, build_queue_model, mean_queue, queue_marginal  # noqa: F401
from .secondorder import LagSeries, SecondOrderContext, cross_corr_gamma_zeta_series
from .spectral import covariance_from_psd, observable_psd, psd_D_approx, psd_gamma

MI_TAIL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DiscreteDistributionPair:
    psi_a: np.ndarray
    psi_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.psi_a, dtype=float)
        b = np.asarray(self.psi_b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise DimensionMismatch("distributions must be vectors on a common set")
        for p in (a, b):
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValidationError("not a probability vector")
        object.__setattr__(self, "psi_a", a)
        object.__setattr__(self, "psi_b", b)

    def check_support(self) -> None:
        if np.any((self.psi_a > 0) & (self.psi_b == 0)):
            raise SupportViolation("psi_a puts mass where psi_b has none")

    @property
    def log_likelihood_ratio(self) -> np.ndarray:
        """``f* = log(d psi_a / d psi_b)`` on the support of ``psi_b``."""
        self.check_support()
        on = self.psi_b > 0
        out = np.zeros_like(self.psi_a)
        with np.errstate(divide="ignore"):
            out[on] = np.log(self.psi_a[on] / self.psi_b[on])
        return out


def dhat(pair: DiscreteDistributionPair) -> float:
    """Quadratic divergence, ``1/2 chi^2(psi_a || psi_b)``.

    The supremum over zero-mean test functions of
    ``psi_a(f)^2 / psi_b(f^2)`` is attained at ``f = d psi_a / d psi_b - 1``,
    where it equals the chi-squared divergence.
    """
    pair.check_support()
    on = pair.psi_b > 0
    a, b = pair.psi_a[on], pair.psi_b[on]
    return 0.5 * float(np.sum((a - b) ** 2 / b))


def kl_divergence(pair: DiscreteDistributionPair) -> float:
    pair.check_support()
    return float(np.sum(rel_entr(pair.psi_a, pair.psi_b)))


@dataclass(frozen=True)
class MIBound:
    value: float
    argmax_n: int
    ratios: np.ndarray  # 1/2 Sigma_{S,zeta}(n)^2 / S_{SxZ}(0) over the n range
    n_range: tuple
    denominator: float


def _product_sum(a: LagSeries, b: LagSeries, tol: float) -> float:
    """``sum_m a(m) b(m)`` over the common lags, with a tail check."""
    lo, hi = max(a.lag_min, b.lag_min), min(a.lag_max, b.lag_max)
    if lo > hi:
        raise TailNotConverged("series share no lags")
    prod = a.restrict(lo, hi).values * b.restrict(lo, hi).values
    edge = max(abs(prod[0]), abs(prod[-1]))
    if not edge < tol and hi - lo > 0:
        raise TailNotConverged(f"product series still at {edge:.2e} at lag {hi}")
    return float(prod.sum())


def mi_lower_bound(Sigma_S_zeta: LagSeries, Sigma_S: LagSeries, Sigma_zeta: LagSeries,
                   n_range=(-5, 5), tol: float = MI_TAIL_TOL) -> MIBound:
    """``1/2 max_n Sigma_{S,zeta}(n)^2 / S_{SxZ}(0)``.

    ``S_{SxZ}(0) = sum_m Sigma_S(m) Sigma_zeta(m)``.  ``Sigma_{S,zeta}(n)`` is
    the covariance of ``S_{t+n}`` with ``zeta_t``.

    Raises
    ------
    TailNotConverged
        If the product ``Sigma_S(m) Sigma_zeta(m)`` has not decayed below
        `tol` at the ends of the common lag range.
    """
    lo, hi = n_range
    den = _product_sum(Sigma_S, Sigma_zeta, tol)
    num = np.array([Sigma_S_zeta[n] for n in range(lo, hi + 1)]) ** 2
    if den <= 0.0:
        ratios = np.zeros_like(num)
    else:
        ratios = 0.5 * num / den
    k = int(np.argmax(ratios))
    return MIBound(float(ratios[k]), lo + k, ratios, (lo, hi), den)


def _filtered_auto(series: LagSeries, w: np.ndarray) -> LagSeries:
    """Covariance of ``sum_m w_m Y_{k+m}`` from that of ``Y``."""
    n = w.size
    lo, hi = series.lag_min + (n - 1), series.lag_max - (n - 1)
    out = np.zeros(hi - lo + 1)
    for i, wi in enumerate(w):
        for j, wj in enumerate(w):
            out += wi * wj * series.restrict(lo + i - j, hi + i - j).values
    return LagSeries(lo, out, series.kind)


def filter_mi_bound(Sigma_S_zeta: LagSeries, Sigma_S: LagSeries, Sigma_zeta: LagSeries,
                    alpha, beta, tol: float = MI_TAIL_TOL) -> float:
    """Bound with filtered statistics ``S^alpha_k = sum_m alpha_m S~_{k+m}``, ``zeta^beta_k``.

    ``1/2 Sigma_{S^alpha,zeta^beta}(0)^2 / S_{S^alpha x zeta^beta}(0)``.  With
    ``alpha = e_n`` and ``beta = e_0`` this is the scalar-lag bound at ``n``.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if alpha.shape != beta.shape or alpha.ndim != 1:
        raise DimensionMismatch("alpha and beta must be vectors of equal length")
    cross = sum(a * b * Sigma_S_zeta[i - j]
                for i, a in enumerate(alpha) for j, b in enumerate(beta))
    den = _product_sum(_filtered_auto(Sigma_S, alpha), _filtered_auto(Sigma_zeta, beta), tol)
    return 0.0 if den <= 0 else 0.5 * cross**2 / den


@dataclass(frozen=True, eq=False)
class ChannelSeries:
    """Covariances feeding the MI bound."""

    Sigma_S_zeta: LagSeries
    Sigma_S: LagSeries
    Sigma_zeta: LagSeries


def _zeta_lags(ctx: SecondOrderContext, n_max: int) -> int:
    return max(n_max, len(ctx.input_series) + 5)


def approx_channel_series(ctx: SecondOrderContext, f, n_max: int = 5,
                          grid: int = 4096) -> ChannelSeries:
    """Second-order covariances of ``S_t = Gamma_t f`` and ``zeta``.

    ``Sigma_S`` is recovered from the approximate PSD by an inverse FFT on a
    grid wide enough that aliasing of the slowly decaying chain covariance is
    negligible.  The cross covariance is the lag-domain ``R_{Gamma,zeta} f``.
    """
    f = np.asarray(f, dtype=float)
    L = _zeta_lags(ctx, n_max)
    S_S = observable_psd(psd_gamma(ctx, psd_D_approx(ctx, grid)), f)
    sig_s = covariance_from_psd(S_S, L)
    cross = cross_corr_gamma_zeta_series(ctx, -L, L).apply(f, kind="Sigma_S_zeta")
    sig_z = LagSeries(-L, ctx.r_zeta(np.arange(-L, L + 1)), "Sigma_zeta")
    return ChannelSeries(cross, sig_s, sig_z)


def exact_channel_series(jc: JointChain, f, lag_max: int) -> ChannelSeries:
    fl = jc.lift(f)
    z = jc.zeta
    return ChannelSeries(
        exact_cov_series(jc, fl, z, lag_max),
        exact_cov_series(jc, fl, fl, lag_max),
        exact_cov_series(jc, z, z, lag_max),
    )

