"""Uniformized finite-buffer single-server queue with a controlled arrival rate.

State ``(n, s)``: ``n`` is the queue length in ``0..q_bar`` and ``s`` flags
whether the last event was a departure (``s = 1``) or an arrival
(``s = 0``).  From every state the chain moves to ``(min(n+1, q_bar), 0)``
with probability ``lambda (1 + zeta)`` and to ``(max(n-1, 0), 1)``
otherwise.

States are ordered s-major, ``index = s (q_bar + 1) + n``, so that every
arrival target precedes every departure target and inverse-CDF sampling
picks an arrival exactly when ``u < lambda (1 + zeta)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controlled import ControlledFamily
from .errors import InvalidLoad, ValidationError
from .markov import validate_stochastic


def state_index(n: int, s: int, q_bar: int) -> int:
    return s * (q_bar + 1) + n


@dataclass(frozen=True, eq=False)
class QueueModel:
    lam: float
    q_bar: int
    rho: float
    family: ControlledFamily

    @property
    def dim(self) -> int:
        return 2 * (self.q_bar + 1)

    @property
    def queue_length(self) -> np.ndarray:
        """``n`` for every state index."""
        return np.tile(np.arange(self.q_bar + 1), 2)

    @property
    def departure(self) -> np.ndarray:
        """Indicator of ``s = 1``."""
        return np.repeat([0.0, 1.0], self.q_bar + 1)

    def arrival_targets(self) -> np.ndarray:
        return np.array([state_index(min(n + 1, self.q_bar), 0, self.q_bar)
                         for n in range(self.q_bar + 1)] * 2)

    def departure_targets(self) -> np.ndarray:
        return np.array([state_index(max(n - 1, 0), 1, self.q_bar)
                         for n in range(self.q_bar + 1)] * 2)


def build_queue_model(rho: float = 0.9, q_bar: int = 18) -> QueueModel:
    """Controlled queue with load `rho`, ``lambda = rho / (1 + rho)``.

    ``E`` is analytic (``+lambda`` on the arrival target, ``-lambda`` on the
    departure target) and ``W = 0`` since ``P_zeta`` is affine in ``zeta``.
    """
    if not 0.0 < rho < 1.0:
        raise InvalidLoad(f"load rho = {rho!r} must lie in (0, 1)")
    if int(q_bar) != q_bar or q_bar < 1:
        raise ValidationError(f"buffer size q_bar = {q_bar!r} must be a positive integer")
    q_bar = int(q_bar)
    lam = rho / (1.0 + rho)
    d = 2 * (q_bar + 1)
    rows = np.arange(d)
    n_of = np.tile(np.arange(q_bar + 1), 2)
    up = np.minimum(n_of + 1, q_bar)
    down = (q_bar + 1) + np.maximum(n_of - 1, 0)

    def evaluate(z):
        P = np.zeros((d, d))
        p = lam * (1.0 + z)
        P[rows, up] = p
        P[rows, down] = 1.0 - p
        return P

    P0 = validate_stochastic(evaluate(0.0))
    base = P0.entries
    E = np.zeros((d, d))
    E[rows, up] = lam
    E[rows, down] = -lam

    def ev(z):
        return base if z == 0.0 else evaluate(z)

    # lambda < 1/2 so lambda (1 + zeta) stays in [0, 1] on [-1, 1]
    fam = ControlledFamily(P0, E, np.zeros((d, d)), ev, (-1.0, 1.0), "queue",
                           {"rho": float(rho), "q_bar": q_bar})
    return QueueModel(lam, q_bar, float(rho), fam)


def queue_marginal(pi_x, q_bar: int) -> np.ndarray:
    """Distribution of ``n`` from a vector on ``(n, s)`` states."""
    return np.asarray(pi_x).reshape(2, q_bar + 1).sum(axis=0)


def mean_queue(pi_x, q_bar: int) -> float:
    """``sum_n n sum_s pi(n, s)``."""
    return float(np.arange(q_bar + 1) @ queue_marginal(pi_x, q_bar))
