import numpy as np
import pytest
from scipy.optimize import minimize

from perturbmc.controlled import ControlledFamily, three_state_input
from perturbmc.oracle import build_joint
from perturbmc.queue import build_queue_model
from perturbmc.secondorder import SecondOrderContext

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def queue():
    return build_queue_model()


@pytest.fixture(scope="session")
def queue_ctx(queue):
    return SecondOrderContext.build(queue.family, three_state_input(0.4, 0.2))


@pytest.fixture(scope="session")
def queue_joint(queue, queue_ctx):
    return build_joint(queue.family, queue_ctx.input)


def curved_family() -> ControlledFamily:
    """Three-state quadratic family with ``W != 0``."""
    P0 = np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.4, 0.1, 0.5]])
    E = np.array([[0.05, -0.1, 0.05], [0.0, 0.15, -0.15], [-0.05, 0.0, 0.05]])
    W = np.array([[-0.2, 0.1, 0.1], [0.1, -0.2, 0.1], [0.1, 0.1, -0.2]])
    return ControlledFamily.from_matrices(P0, E, W)


@pytest.fixture(scope="session")
def curved():
    return curved_family()


def numerical_dhat(psi_a, psi_b, rng, n_dirs=100_000):
    """Maximize ``1/2 psi_a(f)^2 / psi_b(f^2)`` over ``psi_b``-centred ``f``.

    Random directions first, then a local refinement from the best one.
    """
    psi_a = np.asarray(psi_a, dtype=float)
    psi_b = np.asarray(psi_b, dtype=float)

    def ratio(f):
        f = f - psi_b @ f
        den = psi_b @ f**2
        return 0.0 if den <= 0 else 0.5 * (psi_a @ f) ** 2 / den

    F = rng.standard_normal((n_dirs, psi_a.size))
    F -= (F @ psi_b)[:, None]
    vals = 0.5 * (F @ psi_a) ** 2 / ((F**2) @ psi_b)
    start = F[np.argmax(vals)]
    res = minimize(lambda f: -ratio(f), start, method="BFGS", options={"gtol": 1e-12})
    return max(float(vals.max()), -float(res.fun))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
