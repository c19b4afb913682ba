import numpy as np
import pytest

from perturbmc.controlled import (
    ControlledFamily,
    InputSpec,
    geometric_representation,
    input_autocovariance,
    taylor_from_evaluator,
    three_state_input,
    three_state_kernel,
)
from perturbmc.errors import (
    DimensionMismatch,
    DomainTooSmall,
    InvalidZetaDomain,
    NonGeometricCovariance,
    ValidationError,
)
from perturbmc.markov import stationary_distribution


def test_family_requires_zero_row_sums():
    P0 = [[0.5, 0.5], [0.5, 0.5]]
    with pytest.raises(ValidationError):
        ControlledFamily.from_matrices(P0, [[0.1, 0.0], [0.0, 0.0]])
    with pytest.raises(DimensionMismatch):
        ControlledFamily.from_matrices(P0, np.zeros((3, 3)))


def test_transition_checks_domain_and_stochasticity(queue):
    fam = queue.family
    assert np.allclose(fam.transition(0.5).sum(axis=1), 1.0)
    with pytest.raises(InvalidZetaDomain):
        fam.transition(1.5)
    steep = ControlledFamily.from_matrices([[0.5, 0.5], [0.5, 0.5]],
                                           [[1.0, -1.0], [0.0, 0.0]])
    with pytest.raises(InvalidZetaDomain):
        steep.transition(0.9)


def test_queue_E_matches_finite_differences(queue):
    fam = taylor_from_evaluator(queue.family.evaluate, h=1e-4)
    assert np.max(np.abs(fam.E - queue.family.E)) < 1e-8
    assert np.max(np.abs(fam.W)) < 1e-6


def test_taylor_recovers_quadratic_family(curved):
    fam = taylor_from_evaluator(curved.evaluate, h=1e-3)
    assert np.max(np.abs(fam.E - curved.E)) < 1e-10
    assert np.max(np.abs(fam.W - curved.W)) < 1e-6


def test_taylor_domain_too_small(curved):
    with pytest.raises(DomainTooSmall):
        taylor_from_evaluator(curved.evaluate, h=0.1, zeta_domain=(0.0, 1.0))


def test_input_validation():
    with pytest.raises(ValidationError):
        InputSpec.from_chain([0.0, 1.0], [[0.5, 0.5], [0.5, 0.5]], 0.5)
    with pytest.raises(ValidationError):
        InputSpec.from_chain([-2.0, 2.0], [[0.5, 0.5], [0.5, 0.5]], 0.5)
    with pytest.raises(ValidationError):
        three_state_input(0.4, 1.5)


@pytest.mark.parametrize("gamma", [0.1, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0])
def test_three_state_kernel(gamma):
    K = three_state_kernel(gamma)
    assert np.all(K >= 0) and np.allclose(K.sum(axis=1), 1.0)
    assert np.allclose(stationary_distribution(K), 1 / 3)
    inp = three_state_input(gamma, 1.0)
    t = np.arange(10)
    assert np.allclose(inp.autocov_series(9), (2 / 3) * (1 - gamma) ** t, atol=1e-14)


def test_input_autocovariance_scaling():
    inp = three_state_input(0.4, 0.5)
    assert input_autocovariance(inp, 2) == pytest.approx(2 / 3 * 0.36)
    assert input_autocovariance(inp, -2, scaled=True) == pytest.approx(0.25 * 2 / 3 * 0.36)


def test_geometric_representation_merges_and_reconstructs():
    geo = geometric_representation(three_state_input(0.3, 1.0))
    assert geo.poles.size == 1 and geo.poles[0] == pytest.approx(0.7)
    assert geo.coeffs[0] == pytest.approx(2 / 3)
    # closed-form PSD matches a long direct sum
    th = np.linspace(-np.pi, np.pi, 17)
    t = np.arange(-400, 401)
    direct = (geo.autocov(t)[None, :] * np.exp(-1j * np.outer(th, t))).sum(axis=1)
    assert np.allclose(geo.psd(th), direct.real, atol=1e-12)


def test_complex_poles_rejected():
    # rotation-like kernel on three states has complex eigenvalues
    K = np.array([[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]])
    inp = InputSpec.from_chain([-1.0, 0.0, 1.0], K, 1.0)
    with pytest.raises(NonGeometricCovariance):
        geometric_representation(inp)
