import numpy as np
import pytest

from perturbmc.controlled import three_state_input
from perturbmc.errors import TailNotSummable
from perturbmc.oracle import exact_cov_series, exact_psd
from perturbmc.secondorder import LagSeries, SecondOrderContext
from perturbmc.spectral import (
    covariance_from_psd,
    cross_psd_gamma,
    input_psd,
    observable_cross_psd,
    observable_psd,
    psd_D_approx,
    psd_gamma,
    psd_of_series,
    resolvent,
    uniform_grid,
)
from perturbmc.verify import spectral_residual


def test_psd_of_geometric_series_closed_form():
    r, L = 0.5, 80
    t = np.arange(-L, L + 1)
    g = psd_of_series(LagSeries(-L, r ** np.abs(t)), 64)
    th = g.thetas
    exact = (1 - r**2) / (1 - 2 * r * np.cos(th) + r**2)
    assert np.allclose(g.values, exact, atol=1e-12)


def test_psd_convention_sign():
    # a single lag at t = 1 gives exp(-j theta)
    g = psd_of_series(LagSeries(1, np.array([1.0])), 16, tail_tol=np.inf)
    assert np.allclose(g.values, np.exp(-1j * g.thetas))


def test_fold_is_exact_for_long_series():
    rng = np.random.default_rng(3)
    v = rng.standard_normal(50) * 0.5 ** np.arange(50)
    g = psd_of_series(LagSeries(-7, v), 8, tail_tol=np.inf)
    t = np.arange(-7, 43)
    direct = (v[None] * np.exp(-1j * np.outer(g.thetas, t))).sum(axis=1)
    assert np.allclose(g.values, direct, atol=1e-12)


def test_tail_not_summable():
    with pytest.raises(TailNotSummable):
        psd_of_series(LagSeries(0, np.ones(20)), 16)


def test_covariance_round_trip():
    t = np.arange(-30, 31)
    s = LagSeries(-30, 0.3 ** np.abs(t) * np.cos(t))
    back = covariance_from_psd(psd_of_series(s, 256), 30)
    assert np.allclose(back.values, s.values, atol=1e-12)


def test_resolvent_inverts(queue_ctx):
    th = uniform_grid(16)
    F = resolvent(queue_ctx, th)
    A = (queue_ctx.P0 - np.outer(np.ones(queue_ctx.d), queue_ctx.pi0)).T
    k = 5
    Z = np.eye(queue_ctx.d) - np.exp(-1j * th[k]) * A
    assert np.allclose(F[k] @ Z, np.eye(queue_ctx.d), atol=1e-10)


def test_spectra_symmetries(queue_ctx):
    S_D = psd_D_approx(queue_ctx, 128)
    assert S_D.is_hermitian() and S_D.conjugate_symmetric()
    S_G = psd_gamma(queue_ctx, S_D)
    assert S_G.is_hermitian()
    S = observable_psd(S_G, np.arange(queue_ctx.d, dtype=float))
    assert np.max(np.abs(S.values.imag)) < 1e-10


def test_components_sum_to_total(queue_ctx):
    total = psd_D_approx(queue_ctx, 64)
    summed, parts = psd_D_approx(queue_ctx, 64, components=True)
    assert np.allclose(total.values, summed.values, atol=1e-12)
    assert set(parts) >= {"delta"}


def test_input_psd_matches_series(queue_ctx):
    th = uniform_grid(32)
    L = 200
    t = np.arange(-L, L + 1)
    direct = psd_of_series(LagSeries(-L, queue_ctx.r_zeta1(t)), 32)
    assert np.allclose(input_psd(queue_ctx, th), direct.values.real, atol=1e-12)


def test_cross_psd_routes_agree(queue_ctx):
    a = cross_psd_gamma(queue_ctx, None, route="closed", M=64)["S_Gz"].values
    b = cross_psd_gamma(queue_ctx, None, route="lag", M=64)["S_Gz"].values
    assert np.max(np.abs(a - b)) < 1e-8


def test_cross_psd_against_oracle(queue, queue_ctx, queue_joint):
    f = queue.departure
    ex = exact_psd(queue_joint, queue_joint.lift(f), queue_joint.zeta, 64).values
    ap = observable_cross_psd(cross_psd_gamma(queue_ctx, None, M=64)["S_Gz"], f).values
    assert np.max(np.abs(ap - ex)) < 1e-10 * np.max(np.abs(ex))


def test_exact_psd_matches_series(queue, queue_joint):
    fl = queue_joint.lift(queue.departure)
    ser = exact_cov_series(queue_joint, fl, queue_joint.zeta, 600)
    a = psd_of_series(ser, 32).values
    b = exact_psd(queue_joint, fl, queue_joint.zeta, 32).values
    assert np.allclose(a, b, atol=1e-9)


def test_spectral_residual_third_order(queue):
    inp = three_state_input(0.4, 0.2)
    r = spectral_residual(queue.family, inp.with_epsilon(0.1), 128) / \
        spectral_residual(queue.family, inp, 128)
    assert r <= 1 / 6


def test_white_series_flat():
    S0 = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = psd_of_series(LagSeries(0, S0[None]), 16)
    assert np.allclose(g.values, S0[None])


def test_geometric_psd_at_zero():
    a, r, L = 1.5, 0.8, 300
    t = np.arange(-L, L + 1)
    g = psd_of_series(LagSeries(-L, a * r ** np.abs(t)), 64)
    assert g.at(0.0) == pytest.approx(a * (1 + r) / (1 - r), rel=1e-12)


def test_rank_one_chain_gives_identity_resolvent():
    from perturbmc.controlled import ControlledFamily

    pi = np.array([0.2, 0.3, 0.5])
    P0 = np.tile(pi, (3, 1))
    E = 0.1 * np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [-1.0, 0.0, 1.0]])
    ctx = SecondOrderContext.build(ControlledFamily.from_matrices(P0, E), three_state_input(0.4, 0.5))
    S_D = psd_D_approx(ctx, 32)
    assert np.allclose(psd_gamma(ctx, S_D).values, S_D.values, atol=1e-14)


def test_iid_input_cross_spectrum(queue):
    from perturbmc.controlled import InputSpec

    inp = InputSpec.from_chain([-1.0, 0.0, 1.0], np.full((3, 3), 1 / 3), 0.5)
    ctx = SecondOrderContext.build(queue.family, inp)
    got = cross_psd_gamma(ctx, None, M=32)["S_Gz"]
    # eps^2 sigma^2 sum_{t>=1} (P0^T)^{t-1} B e^{-j theta t}, summed directly
    terms = [ctx.B]
    for _ in range(2000):
        terms.append(queue.family.P0.entries.T @ terms[-1])
    t = np.arange(1, len(terms) + 1)
    want = 0.25 * (2 / 3) * np.exp(-1j * np.outer(got.thetas, t)) @ np.array(terms)
    assert np.allclose(got.values, want, atol=1e-12)


def test_constant_observable_has_no_spectrum(queue_ctx):
    S = observable_psd(psd_gamma(queue_ctx, psd_D_approx(queue_ctx, 64)), np.ones(queue_ctx.d))
    assert np.max(np.abs(S.values)) < 1e-12


def test_parseval(queue_ctx):
    """Grid mean of the spectrum equals the lag sum over multiples of M."""
    from perturbmc.secondorder import r_d_series

    M = 64
    S_D = psd_D_approx(queue_ctx, M)
    R = r_d_series(queue_ctx, 20 * M)
    alias = sum(np.trace(R[m * M]) for m in range(-20, 21))
    lhs = np.trace(S_D.values, axis1=1, axis2=2).mean().real
    assert lhs == pytest.approx(alias, abs=1e-12)
