import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perturbmc.controlled import three_state_input
from perturbmc.errors import SupportViolation, TailNotConverged, ValidationError
from perturbmc.oracle import build_joint
from perturbmc.secondorder import LagSeries, SecondOrderContext
from perturbmc.timing import (
    DiscreteDistributionPair,
    approx_channel_series,
    dhat,
    exact_channel_series,
    filter_mi_bound,
    kl_divergence,
    mi_lower_bound,
)

from conftest import numerical_dhat

probs = st.integers(2, 5).flatmap(
    lambda k: st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k)
).map(lambda v: np.array(v) / np.sum(v))


def test_pair_validation():
    with pytest.raises(ValidationError):
        DiscreteDistributionPair([0.5, 0.6], [0.5, 0.5])
    pair = DiscreteDistributionPair([0.5, 0.5], [1.0, 0.0])
    with pytest.raises(SupportViolation):
        dhat(pair)


def test_dhat_zero_on_equal():
    p = np.array([0.2, 0.3, 0.5])
    assert dhat(DiscreteDistributionPair(p, p)) == 0.0


@settings(max_examples=40, deadline=None)
@given(probs, st.data())
def test_dhat_nonnegative_and_below_kl_scale(p, data):
    q = data.draw(probs.filter(lambda v: v.size == p.size))
    pair = DiscreteDistributionPair(p, q)
    assert dhat(pair) >= 0.0
    assert kl_divergence(pair) >= 0.0


def test_dhat_matches_numerical_maximum():
    rng = np.random.default_rng(5)
    for _ in range(5):
        k = rng.integers(2, 6)
        a, b = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        closed = dhat(DiscreteDistributionPair(a, b))
        assert abs(closed - numerical_dhat(a, b, rng, 20_000)) < 1e-6


def test_dhat_close_to_kl_for_small_likelihood_ratio():
    rng = np.random.default_rng(6)
    b = rng.dirichlet(np.ones(4))
    h = rng.uniform(-0.04, 0.04, 4)
    a = b * np.exp(h)
    a /= a.sum()
    pair = DiscreteDistributionPair(a, b)
    assert np.max(np.abs(pair.log_likelihood_ratio)) < 0.1
    kl = kl_divergence(pair)
    assert abs(dhat(pair) - kl) / kl < 0.05


def _series():
    t = np.arange(-40, 41)
    cross = LagSeries(-40, np.where(t > 0, 0.3 * 0.5 ** t, 0.0))
    auto_s = LagSeries(-40, 0.4 ** np.abs(t))
    auto_z = LagSeries(-40, 0.5 ** np.abs(t))
    return cross, auto_s, auto_z


def test_mi_bound_scale_invariant():
    cross, s, z = _series()
    b = mi_lower_bound(cross, s, z)
    c = 3.7
    b2 = mi_lower_bound(LagSeries(-40, c * cross.values), LagSeries(-40, c * c * s.values), z)
    assert b.argmax_n == 1
    assert abs(b.value - b2.value) < 1e-10


def test_mi_bound_tail_check():
    cross, s, z = _series()
    with pytest.raises(TailNotConverged):
        mi_lower_bound(cross, s.restrict(-3, 3), z)


def test_filter_bound_reduces_to_scalar():
    cross, s, z = _series()
    scalar = mi_lower_bound(cross, s, z, (2, 2)).value
    filt = filter_mi_bound(cross, s, z, alpha=[0.0, 0.0, 1.0], beta=[1.0, 0.0, 0.0])
    assert filt == pytest.approx(scalar, rel=1e-9)


def test_channel_series_approx_matches_exact(queue):
    ctx = SecondOrderContext.build(queue.family, three_state_input(0.4, 0.3))
    f = queue.departure
    a = approx_channel_series(ctx, f)
    e = exact_channel_series(build_joint(queue.family, ctx.input), f, a.Sigma_S.lag_max)
    assert np.allclose(a.Sigma_S_zeta.values, e.Sigma_S_zeta.values, atol=1e-12)
    assert np.allclose(a.Sigma_zeta.values, e.Sigma_zeta.values, atol=1e-12)
    ba = mi_lower_bound(a.Sigma_S_zeta, a.Sigma_S, a.Sigma_zeta)
    be = mi_lower_bound(e.Sigma_S_zeta, e.Sigma_S, e.Sigma_zeta)
    assert ba.argmax_n == be.argmax_n == 1
    assert ba.value == pytest.approx(be.value, rel=1e-6)
