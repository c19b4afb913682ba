"""Second-order statistics of Markov chains driven by a small exogenous input."""
__version__ = "0.1.0"

from .controlled import ControlledFamily, InputSpec, three_state_input  # noqa: E402
from .errors import NumericalError, PerturbMCError, ValidationError  # noqa: E402
from .markov import check_ergodic, fundamental_matrix, stationary_distribution  # noqa: E402
from .oracle import build_joint, exact_marginal  # noqa: E402
from .queue import build_queue_model  # noqa: E402
from .secondorder import SecondOrderContext, steady_state_mean_approx  # noqa: E402

__all__ = [
    "ControlledFamily", "InputSpec", "three_state_input", "NumericalError", "PerturbMCError",
    "ValidationError", "check_ergodic", "fundamental_matrix", "stationary_distribution",
    "build_joint", "exact_marginal", "build_queue_model", "SecondOrderContext",
    "steady_state_mean_approx", "__version__",
]
