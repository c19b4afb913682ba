import warnings

import numpy as np
import pytest

from perturbmc.controlled import three_state_input
from perturbmc.errors import DimensionMismatch, TruncationNotConverged
from perturbmc.oracle import build_joint, exact_delta_stats
from perturbmc.secondorder import (
    LagSeries,
    NegativeMassWarning,
    SecondOrderContext,
    _geometric_terms,
    cross_corr_gamma_zeta_series,
    delta_covariance,
    r_d,
    r_d_series,
    r_delta2_zeta_series,
    steady_state_mean_approx,
    xi_vector,
)
from perturbmc.verify import epsilon_zero_errors, residual_ratios, residuals


def test_lag_series_indexing():
    s = LagSeries(-2, np.arange(5.0))
    assert s.lag_max == 2 and s[-2] == 0.0 and s[2] == 4.0
    with pytest.raises(KeyError):
        s[3]
    assert list(s.restrict(0, 1).values) == [2.0, 3.0]
    with pytest.raises(DimensionMismatch):
        s.apply(np.ones(1))


def test_truncation_not_converged():
    with pytest.raises(TruncationNotConverged):
        _geometric_terms(np.ones(2), lambda v: 0.99999 * v, 1.0, 1e-12, 2)


def test_xi_routes_agree(queue_ctx):
    a = xi_vector(queue_ctx, route="geometric")
    b = xi_vector(queue_ctx, route="lag")
    assert np.max(np.abs(a - b)) < 1e-12
    assert abs(a.sum()) < 1e-12


def test_pi_hat_normalised(queue_ctx):
    assert steady_state_mean_approx(queue_ctx).sum() == pytest.approx(1.0, abs=1e-12)


def test_negative_mass_is_kept_and_flagged(queue):
    ctx = SecondOrderContext.build(queue.family, three_state_input(0.2, 1.0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pi = steady_state_mean_approx(ctx)
    if np.any(pi < 0):
        assert any(issubclass(w.category, NegativeMassWarning) for w in caught)
    else:
        assert not any(issubclass(w.category, NegativeMassWarning) for w in caught)


def test_delta_covariance_structure(queue_ctx):
    S = delta_covariance(queue_ctx)
    assert np.allclose(S, S.T, atol=1e-15)
    assert np.max(np.abs(S.sum(axis=1))) < 1e-12  # Delta 1 = 0
    assert np.min(np.linalg.eigvalsh(S)) > -1e-12


def test_r_d_symmetry(queue_ctx):
    s = r_d_series(queue_ctx, 6)
    for t in range(7):
        assert np.allclose(s[-t], s[t].T, atol=1e-15)
    assert np.allclose(r_d(queue_ctx, 2), s[2])


def test_r_d_components_sum(queue_ctx):
    total = r_d_series(queue_ctx, 4)
    parts = r_d_series(queue_ctx, 4, components=True)
    summed = sum(p.values for p in parts.values())
    assert np.allclose(summed, total.values, atol=1e-15)


def test_epsilon_zero_degeneracies(queue):
    errs = epsilon_zero_errors(queue.family, three_state_input(0.4, 0.3))
    assert errs["pi_hat - pi0"] == 0.0
    assert errs["zeta cross series"] == 0.0
    assert max(errs.values()) < 1e-12


def test_with_epsilon_matches_fresh_build(queue, queue_ctx):
    a = queue_ctx.with_epsilon(0.35)
    b = SecondOrderContext.build(queue.family, three_state_input(0.4, 0.35))
    assert np.array_equal(xi_vector(a), xi_vector(b))
    assert np.allclose(r_d_series(a, 3).values, r_d_series(b, 3).values, atol=1e-16)


def test_cross_series_scales_with_eps2(queue_ctx):
    a = cross_corr_gamma_zeta_series(queue_ctx, -4, 4).values
    b = cross_corr_gamma_zeta_series(queue_ctx.with_epsilon(0.1), -4, 4).values
    assert np.allclose(a, 4 * b, atol=1e-16)


def test_delta2_zeta_matches_oracle_order(queue, queue_ctx):
    ex = exact_delta_stats(build_joint(queue.family, queue_ctx.input), 3)["R_D2z"]
    ap = r_delta2_zeta_series(queue_ctx, 3)
    errs = [np.max(np.abs(ap[t] - ex[t])) for t in range(4)]
    assert max(errs) < 1e-3


def test_residual_ratios_queue(queue):
    ratios = residual_ratios(queue.family, three_state_input(0.4, 0.2))
    assert max(ratios.values()) <= 1 / 6


def test_residual_ratios_curved_family(curved):
    """Family with a second derivative: the W terms must be right."""
    ratios = residual_ratios(curved, three_state_input(0.4, 0.2))
    assert max(ratios.values()) <= 1 / 6
    ratios = residual_ratios(curved, three_state_input(0.8, 0.2))
    assert max(ratios.values()) <= 1 / 6


def test_curved_family_residuals_small(curved):
    ctx = SecondOrderContext.build(curved, three_state_input(0.4, 0.1))
    res = residuals(ctx, build_joint(curved, ctx.input))
    assert max(res.values()) < 1e-6
