"""Run configuration and model/input loading.

Model specs (JSON object or builtin name):

* ``{"builtin": "queue", "rho": 0.9, "q_bar": 18}``
* ``{"P0": [[...]], "E": [[...]], "W": [[...]], "zeta_domain": [-1, 1]}``
  (``W`` optional, the family is ``P0 + zeta E + zeta^2 W / 2``)

Input specs:

* ``{"builtin": "three-state", "gamma": 0.4}``
* ``{"states": [...], "K": [[...]]}``
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controlled import ControlledFamily, InputSpec, three_state_input, three_state_kernel
from .errors import ValidationError
from .queue import build_queue_model

DEFAULT_GAMMA = 0.4
DEFAULT_SEED = 1


def _read_spec(spec) -> dict:
    """Accept a dict, a builtin name, a JSON string or a path to a JSON file."""
    if isinstance(spec, dict):
        return dict(spec)
    if spec is None:
        return {}
    text = str(spec).strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed JSON spec: {exc}") from exc
    if text.endswith(".json") or os.path.sep in text:
        raw = Path(text).read_text()  # OSError propagates (I/O failure)
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed JSON in {text}: {exc}") from exc
    return {"builtin": text}


def load_model(spec="queue") -> ControlledFamily:
    d = _read_spec(spec)
    name = d.get("builtin")
    if name == "queue":
        return build_queue_model(float(d.get("rho", 0.9)), int(d.get("q_bar", 18))).family
    if name is not None:
        raise ValidationError(f"unknown builtin model {name!r}")
    if "P0" not in d or "E" not in d:
        raise ValidationError("matrix model needs at least P0 and E")
    return ControlledFamily.from_matrices(d["P0"], d["E"], d.get("W"),
                                          tuple(d.get("zeta_domain", (-1.0, 1.0))))


def input_arrays(spec="three-state", gamma: float | None = None):
    """``(states, K, params)`` without enforcing the zero-mean condition."""
    d = _read_spec(spec)
    name = d.get("builtin")
    if name == "three-state":
        g = float(gamma if gamma is not None else d.get("gamma", DEFAULT_GAMMA))
        return np.array([-1.0, 0.0, 1.0]), three_state_kernel(g), {"name": name, "gamma": g}
    if name is not None:
        raise ValidationError(f"unknown builtin input {name!r}")
    if "states" not in d or "K" not in d:
        raise ValidationError("input spec needs states and K")
    return np.array(d["states"], dtype=float), np.array(d["K"], dtype=float), {"name": "custom"}


def load_input(spec="three-state", epsilon: float = 0.0, gamma: float | None = None) -> InputSpec:
    states, K, params = input_arrays(spec, gamma)
    if params["name"] == "three-state":
        return three_state_input(params["gamma"], epsilon)
    return InputSpec.from_chain(states, K, epsilon, "custom")


def parse_lags(text: str | None, default=(-5, 5)) -> tuple[int, int]:
    """``"L"`` means ``-L..L``; ``"a:b"`` is an explicit range."""
    if text is None:
        return default
    try:
        if ":" in text:
            a, b = text.split(":")
            lo, hi = int(a), int(b)
        else:
            L = int(text)
            lo, hi = -abs(L), abs(L)
    except ValueError as exc:
        raise ValidationError(f"bad lag range {text!r}") from exc
    if lo > hi:
        raise ValidationError("empty lag range")
    return lo, hi


def parse_floats(text: str | None):
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad number list {text!r}") from exc


@dataclass
class RunConfig:
    model: object = "queue"
    input: object = "three-state"
    gamma: float | None = None
    epsilon: float | None = None
    epsilon_grid: list | None = None
    lags: tuple = (-5, 5)
    grid: int = 1024
    seed: int = DEFAULT_SEED
    out: str = "."
    steps: int = 1_000_000
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = ([] if self.epsilon is None else [self.epsilon]) + list(self.epsilon_grid or [])
        for e in eps:
            if not 0.0 <= e <= 1.0:
                raise ValidationError(f"epsilon {e!r} outside [0, 1]")
        if self.grid < 8:
            raise ValidationError("grid size must be at least 8")
        if self.steps < 1000:
            raise ValidationError("need at least 1000 simulation steps")

    def describe(self) -> dict:
        """Parameters recorded in every output header."""
        model = _read_spec(self.model)
        if model.get("builtin") == "queue":
            model = {"builtin": "queue", "rho": float(model.get("rho", 0.9)),
                     "q_bar": int(model.get("q_bar", 18))}
        inp = _read_spec(self.input)
        if inp.get("builtin") == "three-state":
            inp = {"builtin": "three-state"}
        return {
            "model": json.dumps(model, sort_keys=True),
            "input": json.dumps(inp, sort_keys=True),
            "lags": f"{self.lags[0]}:{self.lags[1]}",
            "grid": self.grid,
            "seed": self.seed,
        }


def worker_count() -> int:
    """Worker pool size, capped by ``PERTURBMC_THREADS``."""
    n = os.cpu_count() or 1
    env = os.environ.get("PERTURBMC_THREADS")
    if env:
        try:
            n = max(1, min(n, int(env)))
        except ValueError as exc:
            raise ValidationError("PERTURBMC_THREADS must be an integer") from exc
    return n
