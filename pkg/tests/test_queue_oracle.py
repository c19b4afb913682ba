from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from perturbmc.controlled import three_state_input
from perturbmc.errors import InvalidLoad, InvalidZetaDomain, ValidationError
from perturbmc.markov import stationary_distribution
from perturbmc.oracle import (
    build_joint,
    exact_cov_series,
    exact_cross_corr,
    exact_delta_covariance,
    exact_marginal,
    export_csv,
)
from perturbmc.queue import build_queue_model, mean_queue, queue_marginal, state_index


def test_queue_rejects_bad_parameters():
    with pytest.raises(InvalidLoad):
        build_queue_model(rho=1.2)
    with pytest.raises(ValidationError):
        build_queue_model(q_bar=0)


def test_queue_transitions_are_arrivals_or_departures(queue):
    P = queue.family.transition(0.3)
    up, down = queue.arrival_targets(), queue.departure_targets()
    for i in range(queue.dim):
        support = set(np.flatnonzero(P[i]))
        assert support <= {up[i], down[i]}
        # arrival targets have s = 0, departure targets s = 1
        assert queue.departure[up[i]] == 0.0 and queue.departure[down[i]] == 1.0
        assert P[i, up[i]] == pytest.approx(queue.lam * 1.3)


def test_state_ordering():
    assert state_index(0, 1, 18) == 19
    assert state_index(18, 0, 18) == 18


def test_nominal_queue_law_is_truncated_geometric(queue):
    pi = stationary_distribution(queue.family.P0.entries)
    pq = queue_marginal(pi, queue.q_bar)
    ref = queue.rho ** np.arange(queue.q_bar + 1)
    assert np.allclose(pq, ref / ref.sum(), atol=1e-13)
    assert mean_queue(pi, queue.q_bar) == pytest.approx(
        float(np.arange(queue.q_bar + 1) @ (ref / ref.sum())), abs=1e-12)


def test_joint_chain_marginals(queue):
    inp = three_state_input(0.4, 0.5)
    jc = build_joint(queue.family, inp)
    assert jc.n == 114
    mu = jc.pi_joint.reshape(jc.d, jc.n_z).sum(axis=0)
    assert np.allclose(mu, inp.mu, atol=1e-13)
    jc0 = build_joint(queue.family, inp.with_epsilon(0.0))
    assert np.allclose(exact_marginal(jc0), stationary_distribution(queue.family.P0.entries),
                       atol=1e-13)


def test_joint_rejects_domain(curved):
    from perturbmc.controlled import ControlledFamily
    fam = ControlledFamily.from_matrices(curved.P0, curved.E, curved.W, (-0.5, 0.5))
    with pytest.raises(InvalidZetaDomain):
        build_joint(fam, three_state_input(0.4, 0.8))


def test_exact_correlations(queue_joint):
    jc = queue_joint
    z = jc.zeta
    s = exact_cov_series(jc, z, z, 5)
    eps2 = jc.input.epsilon ** 2
    assert np.allclose(s.values, eps2 * (2 / 3) * 0.6 ** np.abs(s.lags), atol=1e-14)
    f = jc.lift(np.arange(jc.d, dtype=float))
    assert exact_cross_corr(jc, f, z, -3) == pytest.approx(exact_cross_corr(jc, z, f, 3))


def test_delta_covariance_rows(queue_joint):
    S = exact_delta_covariance(queue_joint)
    assert np.allclose(S, S.T) and np.max(np.abs(S.sum(axis=1))) < 1e-13


def test_power_cache_threadsafe(queue_joint):
    with ThreadPoolExecutor(max_workers=4) as ex:
        mats = list(ex.map(queue_joint.power, [7] * 8))
    assert all(m is mats[0] for m in mats)


def test_export_csv(tmp_path, queue_joint):
    pj, pp = export_csv(queue_joint, str(tmp_path / "q"))
    rows = [l for l in open(pj) if not l.startswith("#")]
    P = np.array([[float(x) for x in r.split(",")] for r in rows])
    assert np.array_equal(P, queue_joint.P_joint.entries)
    assert "x * n_z + a" in open(pp).read()
