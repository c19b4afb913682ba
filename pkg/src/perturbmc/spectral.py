"""Power spectral densities of the approximated statistics.

Convention: ``S(theta) = sum_t Sigma(t) exp(-j theta t)`` on the uniform grid
``theta_k = -pi + 2 pi k / M``, ``k = 0..M-1`` (two-sided, ``pi`` itself
omitted since it coincides with ``-pi``).  Under this convention the
deviation recursion ``Gamma~_{t+1}^T = A~ Gamma~_t^T + D~_{t+1}^T`` with
``A~ = (P0 - 1 pi0)^T`` gives

* ``S_Gamma = F S_D F^H``, ``F = [I - e^{-j theta} A~]^{-1}``
* ``S_{Gamma,D} = F S_D``
* ``S_{Gamma,zeta} = eps^2 [e^{j theta} I - A~]^{-1} B S_zeta1``.

The mean of ``D`` is ``O(eps^2)``, so its outer product is dropped and
``R_D`` is used as the covariance of ``D``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, SingularResolvent, TailNotSummable
from .secondorder import (
    LagSeries,
    SecondOrderContext,
    cross_corr_gamma_zeta_series,
    r_d_series,
    truncation_horizon,
)

DEFAULT_GRID = 1024
TAIL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Complex values on a uniform frequency grid.

    `values` has shape ``(M, ...)``; `error_budget` collects truncation
    bounds added along the way.
    """

    thetas: np.ndarray
    values: np.ndarray
    kind: str = ""
    error_budget: float = 0.0
    flags: tuple = field(default_factory=tuple)

    @property
    def size(self) -> int:
        return self.thetas.size

    def at(self, theta: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.thetas - theta)))
        return self.values[k]

    def mirror_index(self) -> np.ndarray:
        """Index of ``-theta_k`` (mod 2 pi) for each grid point."""
        M = self.size
        return (-np.arange(M)) % M

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        """``S(theta)^H == S(theta)`` pointwise (auto-spectra only)."""
        v = self.values
        if v.ndim == 1:
            return bool(np.max(np.abs(v.imag)) <= tol * max(1.0, np.max(np.abs(v))))
        vh = np.conj(np.swapaxes(v, -1, -2))
        return bool(np.max(np.abs(v - vh)) <= tol * max(1.0, np.max(np.abs(v))))

    def conjugate_symmetric(self, tol: float = 1e-10) -> bool:
        """``S(-theta) == conj(S(theta))`` (true for any real lag series)."""
        v = self.values
        return bool(np.max(np.abs(v[self.mirror_index()] - np.conj(v)))
                    <= tol * max(1.0, np.max(np.abs(v))))

    def __add__(self, other: "SpectralGrid") -> "SpectralGrid":
        if self.size != other.size:
            raise DimensionMismatch("grids differ")
        return SpectralGrid(self.thetas, self.values + other.values, self.kind,
                            self.error_budget + other.error_budget,
                            self.flags + other.flags)


def uniform_grid(M: int = DEFAULT_GRID) -> np.ndarray:
    if M < 2:
        raise ValueError("grid needs at least two points")
    return -np.pi + 2 * np.pi * np.arange(M) / M


def _tail_bound(norms: np.ndarray) -> float:
    """Geometric tail estimate beyond the last entry of `norms`.

    A tail already at rounding level relative to the head is taken as
    converged, since successive ratios of pure noise say nothing about decay.
    """
    if norms.size == 0 or norms[-1] == 0.0:
        return 0.0
    k = min(6, norms.size)
    tail = norms[-k:]
    if norms.size > k and tail.max() <= 1e-14 * norms.max():
        return float(k * tail.max())
    if np.any(tail[:-1] == 0):
        return float(norms[-1])
    r = float(np.max(tail[1:] / tail[:-1])) if k > 1 else 1.0
    if r >= 1.0:
        return np.inf
    return float(norms[-1] * r / (1 - r))


def psd_of_series(series: LagSeries, M: int = DEFAULT_GRID, kind: str | None = None,
                  tail_tol: float = TAIL_TOL) -> SpectralGrid:
    """Fourier sum of a lag series, folded onto the M-point grid.

    Since ``exp(-j theta_k t) = (-1)^t exp(-2 pi j k t / M)``, the sum is a
    length-M FFT of ``(-1)^t Sigma(t)`` folded modulo ``M``; this is exact for
    any number of lags.

    Raises
    ------
    TailNotSummable
        If the geometric tail beyond either end is not below `tail_tol`.
    """
    v = series.values
    lags = series.lags
    norms = np.abs(v).reshape(v.shape[0], -1).max(axis=1)
    hi = norms[lags >= 0]
    lo = norms[lags <= 0][::-1]
    bound = 0.0
    for side, ends_at_range in ((hi, series.lag_max > 0), (lo, series.lag_min < 0)):
        if ends_at_range:
            bound += _tail_bound(side)
    if bound > tail_tol:
        raise TailNotSummable(f"lag series tail bound {bound:.2e} exceeds {tail_tol:.0e}")
    sign = np.where(lags % 2 == 0, 1.0, -1.0).reshape((-1,) + (1,) * (v.ndim - 1))
    # place lag_min at its residue, pad to whole periods and sum the periods
    front = series.lag_min % M
    n = front + v.shape[0]
    padded = np.zeros((-(-n // M) * M,) + v.shape[1:])
    padded[front:n] = v * sign
    folded = padded.reshape((-1, M) + v.shape[1:]).sum(axis=0)
    vals = np.fft.fft(folded, axis=0)
    return SpectralGrid(uniform_grid(M), vals, kind or series.kind, bound)


def covariance_from_psd(grid: SpectralGrid, lag_max: int) -> LagSeries:
    """Inverse transform back to ``Sigma(t)``, ``|t| <= lag_max``.

    Exact up to aliasing of lags beyond ``M / 2``.
    """
    M = grid.size
    if 2 * lag_max + 1 > M:
        raise ValueError("lag range exceeds what the grid resolves")
    x = np.fft.ifft(grid.values, axis=0).real
    lags = np.arange(-lag_max, lag_max + 1)
    sign = np.where(lags % 2 == 0, 1.0, -1.0)
    out = x[lags % M] * sign.reshape((-1,) + (1,) * (x.ndim - 1))
    return LagSeries(-lag_max, out, f"Sigma[{grid.kind}]")


def resolvent(ctx_or_A, thetas: np.ndarray, sign: int = -1) -> np.ndarray:
    """``[I - e^{sign j theta} A~]^{-1}`` stacked over the grid."""
    A = deviation_matrix(ctx_or_A) if isinstance(ctx_or_A, SecondOrderContext) else ctx_or_A
    d = A.shape[0]
    z = np.exp(sign * 1j * thetas)
    Ms = np.eye(d)[None] - z[:, None, None] * A[None]
    try:
        F = np.linalg.inv(Ms)
    except np.linalg.LinAlgError as exc:
        raise SingularResolvent("resolvent is singular on the unit circle") from exc
    if not np.all(np.isfinite(F)):
        raise SingularResolvent("resolvent is singular on the unit circle")
    return F


def deviation_matrix(ctx: SecondOrderContext) -> np.ndarray:
    """``A~ = (P0 - 1 pi0)^T``."""
    return (ctx.P0 - np.outer(np.ones(ctx.d), ctx.pi0)).T


def psd_D_approx(ctx: SecondOrderContext, M: int = DEFAULT_GRID, lag_max: int | None = None,
                 components: bool = False):
    """Second-order PSD of ``D``.

    Sum of the flat ``Sigma^Delta``, the transform of ``R_{B zeta}`` and the
    shifted ``R_{B zeta,Delta}``, ``R_{V zeta^2,Delta}`` terms together with
    their conjugate transposes.  With ``components=True`` a dict of the
    individual grids is returned as well.
    """
    L = truncation_horizon(ctx) if lag_max is None else lag_max
    if not components:
        return psd_of_series(r_d_series(ctx, L), M, kind="S_D")
    parts = r_d_series(ctx, L, components=True)
    grids = {k: psd_of_series(s, M, kind=f"S_D[{k}]") for k, s in parts.items()}
    total = None
    for g in grids.values():
        total = g if total is None else total + g
    total = SpectralGrid(total.thetas, total.values, "S_D", total.error_budget)
    return total, grids


def psd_gamma(ctx: SecondOrderContext, S_D: SpectralGrid) -> SpectralGrid:
    """``S_Gamma = F S_D F^H``."""
    F = resolvent(ctx, S_D.thetas, -1)
    vals = F @ S_D.values @ np.conj(np.swapaxes(F, -1, -2))
    flags = ()
    diag = np.einsum("kii->ki", vals).real
    if np.min(diag) < -1e-6:
        flags = ("negative-diagonal",)
    return SpectralGrid(S_D.thetas, vals, "S_Gamma", S_D.error_budget, flags)


def input_psd(ctx: SecondOrderContext, thetas: np.ndarray) -> np.ndarray:
    """``S_zeta1`` in closed form if geometric, else by the lag sum."""
    geo = ctx.geometric
    if geo is not None:
        return geo.psd(thetas)
    r = ctx.input_series
    t = np.arange(1, r.size)
    return r[0] + 2 * np.cos(np.outer(thetas, t)) @ r[1:]


def cross_psd_gamma(ctx: SecondOrderContext, S_D: SpectralGrid | None = None,
                    route: str = "auto", M: int | None = None) -> dict:
    """``S_{Gamma,D}`` and ``S_{Gamma,zeta}``.

    Parameters
    ----------
    route : {'auto', 'closed', 'lag'}
        ``'closed'`` uses the resolvent with the input PSD; ``'lag'``
        transforms the truncated ``R_{Gamma,zeta}`` series.
    """
    thetas = S_D.thetas if S_D is not None else uniform_grid(M or DEFAULT_GRID)
    out = {}
    if S_D is not None:
        F = resolvent(ctx, thetas, -1)
        out["S_GD"] = SpectralGrid(thetas, F @ S_D.values, "S_Gamma_D", S_D.error_budget)
    if route == "lag" or (route == "auto" and ctx.geometric is None):
        start, conv = ctx._gz_conv
        series = cross_corr_gamma_zeta_series(ctx, start - 1, start + conv.shape[0])
        out["S_Gz"] = psd_of_series(series, thetas.size, kind="S_Gamma_zeta")
    else:
        # [e^{j theta} I - A~]^{-1} = e^{-j theta} [I - e^{-j theta} A~]^{-1}
        G = np.exp(-1j * thetas)[:, None, None] * resolvent(ctx, thetas, -1)
        vals = ctx.eps2 * (G @ ctx.B) * input_psd(ctx, thetas)[:, None]
        out["S_Gz"] = SpectralGrid(thetas, vals, "S_Gamma_zeta")
    return out


def observable_psd(S_gamma: SpectralGrid, f, S_gz: SpectralGrid | None = None,
                   S_zeta: np.ndarray | None = None, c: float = 0.0) -> SpectralGrid:
    """PSD of ``Y_t = Gamma_t f + c zeta_t``."""
    f = np.asarray(f, dtype=float)
    d = S_gamma.values.shape[-1]
    if f.shape != (d,):
        raise DimensionMismatch(f"observable has length {f.size}, expected {d}")
    vals = np.einsum("i,kij,j->k", f, S_gamma.values, f)
    if c != 0.0:
        if S_gz is None or S_zeta is None:
            raise DimensionMismatch("an input coefficient needs S_Gamma_zeta and S_zeta")
        cross = S_gz.values @ f
        vals = vals + c * (cross + np.conj(cross)) + c * c * np.asarray(S_zeta)
    return SpectralGrid(S_gamma.thetas, vals, "S_f", S_gamma.error_budget)


def observable_cross_psd(S_gz: SpectralGrid, f) -> SpectralGrid:
    """Cross PSD of ``Gamma_t f`` with ``zeta_t``."""
    f = np.asarray(f, dtype=float)
    return SpectralGrid(S_gz.thetas, S_gz.values @ f, "S_f_zeta", S_gz.error_budget)


def write_csv(path, grid: SpectralGrid, pairs=None, header: dict | None = None) -> None:
    """Write ``theta, re(S_ij), im(S_ij)`` columns.

    `pairs` lists ``(i, j)`` index pairs for matrix-valued grids and
    ``(i,)`` for vectors; scalar grids ignore it.
    """
    v = grid.values
    if v.ndim == 1:
        cols, names = [v], ["S"]
    else:
        if pairs is None:
            raise ValueError("index pairs required for a matrix-valued grid")
        cols = [v[(slice(None),) + tuple(p)] for p in pairs]
        names = ["S_" + "_".join(str(i) for i in p) for p in pairs]
    with open(path, "w", newline="") as fh:
        for k, val in (header or {}).items():
            fh.write(f"# {k}: {val}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta"] + [f"{p}_{n}" for n in names for p in ("re", "im")])
        for k, th in enumerate(grid.thetas):
            row = [f"{th:.17g}"]
            for c in cols:
                row += [f"{c[k].real:.17g}", f"{c[k].imag:.17g}"]
            w.writerow(row)
