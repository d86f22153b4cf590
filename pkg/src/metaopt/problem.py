"""Base problem contract and the engine state shared by both solvers.

A problem subclasses :class:`OptProblem` (through :class:`SimAnnealProblem` or
:class:`BnBProblem`) and fills in the hooks the chosen engine needs. Solutions
are opaque to the engines; they are passed around, compared by cost and handed
to the problem's ``encode_solution`` / ``decode_solution`` hooks when a
checkpoint is written or read.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Any, Optional

Solution = Any


class ContractViolation(Exception):
    """A problem hook was called with an argument outside its contract."""


class ConfigError(ValueError):
    """An engine was configured or started in a way it cannot run."""


class OptProblem:
    """Hooks common to every optimization problem.

    Lower cost is better. ``get_initial_solution`` may return ``None`` to
    signal that no initial solution is provided; branch and bound tolerates
    that, simulated annealing refuses to start.
    """

    def get_initial_solution(self) -> Optional[Solution]:
        return None

    def cost(self, solution: Solution) -> float:
        raise NotImplementedError

    def cost_delta(self, cost1: float, cost2: float) -> float:
        """Difference between two costs, negative when ``cost1`` is better.

        Overrides must keep that sign convention: the engines only look at
        whether the result is below, at, or above zero when ranking
        solutions, and at its magnitude when computing acceptance odds.
        """
        return cost1 - cost2

    # -- continuous-training hooks ------------------------------------------

    def params(self) -> Any:
        """Problem parameters; must support ``==`` as exact structural equality."""
        raise NotImplementedError

    def serialize_params(self) -> bytes:
        raise NotImplementedError

    @classmethod
    def deserialize_params(cls, blob: bytes) -> Any:
        raise NotImplementedError

    def encode_solution(self, solution: Solution) -> Any:
        """Map a solution to a JSON-compatible value (identity by default)."""
        return solution

    def decode_solution(self, data: Any) -> Solution:
        return data


@dataclass
class EngineState:
    """Mutable search state owned by one engine run.

    ``best_solution`` / ``best_cost`` are ``None`` until a complete solution
    has been offered (branch and bound without an initial solution).
    """

    rng: random.Random
    current_solution: Optional[Solution] = None
    current_cost: Optional[float] = None
    best_solution: Optional[Solution] = None
    best_cost: Optional[float] = None
    total_iterations: int = 0

    @property
    def has_incumbent(self) -> bool:
        return self.best_cost is not None


def update_best(problem: OptProblem, state: EngineState,
                candidate: Solution, candidate_cost: float) -> bool:
    """Replace the incumbent iff ``candidate`` is strictly better.

    Returns whether the incumbent changed. Ties keep the existing incumbent.
    """
    if state.best_cost is None or problem.cost_delta(candidate_cost, state.best_cost) < 0:
        state.best_solution = candidate
        state.best_cost = candidate_cost
        return True
    return False


def encode_optional(problem: OptProblem, solution: Optional[Solution]) -> Any:
    return None if solution is None else problem.encode_solution(solution)


def decode_optional(problem: OptProblem, data: Any) -> Optional[Solution]:
    return None if data is None else problem.decode_solution(data)


def make_rng(seed: Optional[int]) -> random.Random:
    return random.Random(seed)


def rng_state_to_json(rng: random.Random) -> list:
    version, internal, gauss_next = rng.getstate()
    return [version, list(internal), gauss_next]


def rng_from_json(data: list) -> random.Random:
    rng = random.Random()
    version, internal, gauss_next = data
    rng.setstate((version, tuple(internal), gauss_next))
    return rng


def dump_json(obj: Any) -> bytes:
    """Canonical JSON encoding: sorted keys, no whitespace, exact float repr.

    ``dump_json(json.loads(dump_json(x)))`` is byte-identical to ``dump_json(x)``.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False).encode("utf-8")
