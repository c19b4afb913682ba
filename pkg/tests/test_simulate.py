import numpy as np
import pytest

from perturbmc.controlled import three_state_input
from perturbmc.errors import LagTooLarge, ValidationError
from perturbmc.oracle import build_joint, exact_marginal
from perturbmc.simulate import (
    coupling_rate,
    cumulative_table,
    empirical_corr,
    empirical_mean,
    extract_delta,
    loglog_slope,
    sample_row,
    simulate_coupled,
    write_path_csv,
)


def test_cumulative_table_pins_tail():
    C = cumulative_table(np.array([[0.2, 0.8 - 1e-17, 0.0]]))
    assert C[0, 1] == 1.0 and C[0, 2] == 1.0
    assert sample_row([0.5, 0.5, 0.0], np.nextafter(1.0, 0.0)) == 1
    assert sample_row([0.5, 0.5, 0.0], 0.5) == 1
    assert sample_row([0.5, 0.5, 0.0], 0.0) == 0
    with pytest.raises(ValidationError):
        sample_row([0.5, 0.5], 1.0)


def test_simulation_is_deterministic(queue):
    inp = three_state_input(0.4, 0.3)
    a = simulate_coupled(queue.family, inp, 5000, seed=11)
    b = simulate_coupled(queue.family, inp, 5000, seed=11)
    c = simulate_coupled(queue.family, inp, 5000, seed=12)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.zeta1, b.zeta1)
    assert not np.array_equal(a.x, c.x)


def test_zero_input_chains_coincide(queue):
    path = simulate_coupled(queue.family, three_state_input(0.4, 0.0), 20_000, seed=2)
    assert np.array_equal(path.x, path.x_bullet)


def test_delta_rows_sum_to_zero(queue):
    inp = three_state_input(0.4, 0.5)
    path = simulate_coupled(queue.family, inp, 2000, seed=3)
    D = extract_delta(path, queue.family, inp)
    assert D.shape == (1999, queue.dim)
    assert np.max(np.abs(D.sum(axis=1))) < 1e-12


def test_empirical_corr_lag_limit():
    with pytest.raises(LagTooLarge):
        empirical_corr(np.zeros(1000), np.zeros(1000), range(0, 102))
    with pytest.raises(ValidationError):
        empirical_corr(np.zeros(100), np.zeros(100), range(0, 3))


def test_empirical_corr_of_known_process():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(200_000)
    s = empirical_corr(x, x, range(-2, 3))
    assert abs(s[0][0] - 1) < 4 * s[0][1]
    assert abs(s[1][0]) < 4 * s[1][1]


def test_mean_queue_agrees_with_exact(queue):
    inp = three_state_input(0.4, 0.5)
    path = simulate_coupled(queue.family, inp, 400_000, seed=4)
    n = np.tile(np.arange(queue.q_bar + 1), 2)[path.x]
    m, se = empirical_mean(n)
    exact = float(np.tile(np.arange(queue.q_bar + 1), 2) @ exact_marginal(build_joint(queue.family, inp)))
    assert abs(m - exact) < 4 * se


def test_coupling_rate_linear_for_small_eps(queue):
    """Mismatch rate grows like eps once eps is small enough not to saturate.

    Single small-eps paths are dominated by a few long decoupling episodes,
    so the slope is averaged over four fixed seeds.
    """
    slopes = []
    for seed in (1, 2, 3, 4):
        table = coupling_rate(queue.family, three_state_input(0.4, 0.0),
                              (0.001, 0.002, 0.005), 1_000_000, seed)
        assert table.monotone()
        slopes.append(table.slope)
    assert 0.8 <= np.mean(slopes) <= 1.2


def test_loglog_slope():
    assert loglog_slope([1, 2, 4], [3, 6, 12]) == pytest.approx(1.0)
    assert np.isnan(loglog_slope([1], [1]))


def test_write_path_csv(tmp_path, queue):
    path = simulate_coupled(queue.family, three_state_input(0.4, 0.3), 50, seed=1)
    write_path_csv(path, tmp_path / "p.csv")
    lines = open(tmp_path / "p.csv").read().splitlines()
    assert lines[0] == "# seed: 1" and len(lines) == 3 + 1 + 50


def test_martingale_suite_familywise(queue):
    """All martingale statistics jointly, Bonferroni-corrected at the 3 sigma level."""
    from scipy import stats

    from perturbmc.verify import martingale_tests

    tests = martingale_tests(queue.family, three_state_input(0.4, 0.3), 1_000_000, seed=1)
    live = sum(t.count for t in tests)
    alpha = 2 * stats.norm.sf(3.0)
    threshold = stats.t.isf(alpha / (2 * live), df=99)
    assert max(t.max_z for t in tests) < threshold
