"""Simulated annealing with random restarts."""
from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional

from .problem import (ConfigError, EngineState, OptProblem, Solution,
                      decode_optional, dump_json, encode_optional, make_rng,
                      rng_from_json, rng_state_to_json, update_best)

ENGINE_NAME = "sa"

# smallest positive double; keeps the schedule strictly positive once the
# sigmoid underflows
_TINY = math.ulp(0.0)


def sigmoid_temperature(x: float, scale: float, peak: float = 4000.0) -> float:
    """``peak / (1 + exp(x / scale))``, evaluated without overflow."""
    z = x / scale
    if z > 30.0:
        e = math.exp(-z)
        t = peak * e / (1.0 + e)
    else:
        t = peak / (1.0 + math.exp(z))
    return t if t > 0.0 else _TINY


def metropolis_accept(delta: float, temperature: float, u: float) -> bool:
    """Accept non-worsening moves; accept worse ones iff ``u < exp(-delta/T)``."""
    if delta <= 0:
        return True
    return u < math.exp(-delta / temperature)


@dataclass(frozen=True)
class AnnealConfig:
    n_iters: int
    reset_p: float = 0.0
    time_limit: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.n_iters, bool) or not isinstance(self.n_iters, int) or self.n_iters < 1:
            raise ConfigError(f"n_iters must be a positive integer, got {self.n_iters!r}")
        if not 0.0 <= self.reset_p <= 1.0:
            raise ConfigError(f"reset_p must lie in [0, 1], got {self.reset_p!r}")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ConfigError(f"time_limit must be positive or None, got {self.time_limit!r}")


class SimAnnealProblem(OptProblem):
    """Problem hooks used by :class:`SimulatedAnnealing`."""

    def next_candidate(self, current: Solution, rng: random.Random) -> Solution:
        """Return a modified copy of ``current``; must not mutate it."""
        raise NotImplementedError

    def reset_candidate(self, rng: random.Random) -> Solution:
        return self.get_initial_solution()

    def get_temperature(self, iters_since_reset: int) -> float:
        return sigmoid_temperature(iters_since_reset, 3000.0)


class SimulatedAnnealing:
    """Annealing engine bound to one problem instance.

    The engine keeps its state between calls to :meth:`anneal`, so calling it
    twice with budgets ``k1`` and ``k2`` is the same as calling it once with
    ``k1 + k2`` (time limits aside). :meth:`snapshot` / :meth:`restore`
    carry that state through a checkpoint.
    """

    def __init__(self, problem: SimAnnealProblem, seed: Optional[int] = None):
        self.problem = problem
        self.seed = seed
        self.state: Optional[EngineState] = None
        self.since_reset = 0
        self.status: Optional[str] = None

    def _start(self) -> EngineState:
        initial = self.problem.get_initial_solution()
        if initial is None:
            raise ConfigError(
                f"{type(self.problem).__name__} provides no initial solution; "
                "simulated annealing needs one to start")
        cost = self.problem.cost(initial)
        state = EngineState(rng=make_rng(self.seed), current_solution=initial,
                            current_cost=cost)
        update_best(self.problem, state, initial, cost)
        self.since_reset = 0
        return state

    def ensure_started(self) -> EngineState:
        if self.state is None:
            self.state = self._start()
        return self.state

    def anneal(self, config: AnnealConfig,
               callback: Optional[Callable[[int, float, float], None]] = None):
        """Run up to ``config.n_iters`` iterations; return ``(best_solution, best_cost)``.

        ``callback(total_iterations, current_cost, best_cost)`` is invoked
        after every iteration when given.
        """
        state = self.ensure_started()
        problem = self.problem
        rng = state.rng
        reset_p = config.reset_p
        deadline = None if config.time_limit is None else time.monotonic() + config.time_limit

        current, current_cost = state.current_solution, state.current_cost
        since_reset = self.since_reset
        self.status = "iters-limit"
        try:
            for _ in range(config.n_iters):
                if deadline is not None and time.monotonic() >= deadline:
                    self.status = "time-limit"
                    break
                if rng.random() < reset_p:
                    current = problem.reset_candidate(rng)
                    current_cost = problem.cost(current)
                    since_reset = 0
                    candidate, candidate_cost = current, current_cost
                else:
                    candidate = problem.next_candidate(current, rng)
                    candidate_cost = problem.cost(candidate)
                    temperature = problem.get_temperature(since_reset)
                    delta = problem.cost_delta(candidate_cost, current_cost)
                    if metropolis_accept(delta, temperature, rng.random()):
                        current, current_cost = candidate, candidate_cost
                    since_reset += 1
                update_best(problem, state, candidate, candidate_cost)
                state.total_iterations += 1
                if callback is not None:
                    callback(state.total_iterations, current_cost, state.best_cost)
        finally:
            state.current_solution, state.current_cost = current, current_cost
            self.since_reset = since_reset
        return state.best_solution, state.best_cost

    @property
    def best_solution(self):
        return None if self.state is None else self.state.best_solution

    @property
    def best_cost(self):
        return None if self.state is None else self.state.best_cost

    def snapshot(self) -> bytes:
        state = self.ensure_started()
        problem = self.problem
        enc = partial(encode_optional, problem)
        return dump_json({
            "engine": ENGINE_NAME,
            "current": enc(state.current_solution),
            "current_cost": state.current_cost,
            "best": enc(state.best_solution),
            "best_cost": state.best_cost,
            "total_iterations": state.total_iterations,
            "since_reset": self.since_reset,
            "rng": rng_state_to_json(state.rng),
        })

    @classmethod
    def restore(cls, problem: SimAnnealProblem, blob: bytes) -> "SimulatedAnnealing":
        data = json.loads(blob)
        if data.get("engine") != ENGINE_NAME:
            raise ConfigError(f"snapshot belongs to engine {data.get('engine')!r}, not {ENGINE_NAME!r}")
        dec = partial(decode_optional, problem)
        engine = cls(problem)
        engine.state = EngineState(
            rng=rng_from_json(data["rng"]),
            current_solution=dec(data["current"]),
            current_cost=data["current_cost"],
            best_solution=dec(data["best"]),
            best_cost=data["best_cost"],
            total_iterations=data["total_iterations"],
        )
        engine.since_reset = data["since_reset"]
        return engine
