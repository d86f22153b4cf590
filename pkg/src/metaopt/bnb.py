"""Branch and bound over problem-defined partial solutions.

Three selection strategies are supported. The two keyed ones keep every open
node in a heap. Depth-first keeps a stack of frames instead, one per node that
is being branched on, each holding a lazily advanced iterator over that node's
children; a child is only bound-evaluated when it is about to be visited. The
stack never holds more frames than the tree is deep.
"""
from __future__ import annotations

import functools
import heapq
import json
import random
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from itertools import islice
from typing import Callable, Iterable, Iterator, Optional

from .problem import (ConfigError, ContractViolation, EngineState, OptProblem,
                      Solution, decode_optional, dump_json, encode_optional,
                      make_rng, rng_from_json, rng_state_to_json, update_best)

ENGINE_NAME = "bnb"


class Strategy(str, Enum):
    DEPTH_FIRST = "df"
    DEPTH_FIRST_BEST_FIRST = "dfbef"
    BEST_FIRST_DEPTH_FIRST = "befdf"


class BnBType(str, Enum):
    TRADITIONAL = "traditional"
    LOOK_AHEAD = "lookahead"


class Status(str, Enum):
    EXHAUSTED = "exhausted"
    ITERS_LIMIT = "iters-limit"
    TIME_LIMIT = "time-limit"


@dataclass(frozen=True)
class BnBConfig:
    iters_limit: int
    time_limit: Optional[float] = None
    bnb_type: BnBType = BnBType.TRADITIONAL
    strategy: Strategy = Strategy.DEPTH_FIRST_BEST_FIRST
    # switching pruning off is only useful for differential testing
    prune: bool = True

    def __post_init__(self):
        if isinstance(self.iters_limit, bool) or not isinstance(self.iters_limit, int) \
                or self.iters_limit < 1:
            raise ConfigError(f"iters_limit must be a positive integer, got {self.iters_limit!r}")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ConfigError(f"time_limit must be positive or None, got {self.time_limit!r}")
        object.__setattr__(self, "bnb_type", BnBType(self.bnb_type))
        object.__setattr__(self, "strategy", Strategy(self.strategy))


@dataclass
class BnBNode:
    partial: Solution
    lower_bound: float
    depth: int
    seq: int


def selection_key(strategy: Strategy, node: BnBNode) -> tuple:
    """Heap key for the keyed strategies; smaller keys are visited first."""
    if strategy is Strategy.DEPTH_FIRST_BEST_FIRST:
        return (-node.depth, node.lower_bound, node.seq)
    if strategy is Strategy.BEST_FIRST_DEPTH_FIRST:
        return (node.lower_bound, -node.depth, node.seq)
    raise ValueError("depth-first search is driven by a stack, not a key")


class BnBProblem(OptProblem):
    """Problem hooks used by :class:`BranchAndBound`."""

    def get_root(self) -> Solution:
        raise NotImplementedError

    def branch(self, partial: Solution) -> Iterable[Solution]:
        """Children of ``partial``, in a deterministic order.

        May return a lazy iterable. Depth-first search regenerates the
        sequence when resuming from a checkpoint, so the order must depend on
        ``partial`` alone.
        """
        raise NotImplementedError

    def lbound(self, partial: Solution) -> float:
        raise NotImplementedError

    def is_feasible(self, solution: Solution) -> bool:
        raise NotImplementedError

    def complete_solution(self, partial: Solution, rng: random.Random) -> Optional[Solution]:
        """Complete ``partial`` heuristically, or return ``None`` if that fails."""
        raise NotImplementedError

    @classmethod
    def supports_completion(cls) -> bool:
        return cls.complete_solution is not BnBProblem.complete_solution


class _Frame:
    __slots__ = ("node", "cursor", "children")

    def __init__(self, node: BnBNode, cursor: int, children: Iterator[Solution]):
        self.node = node
        self.cursor = cursor
        self.children = children


class BranchAndBound:
    """Branch-and-bound engine bound to one problem instance.

    State persists across :meth:`solve` calls, so a search interrupted by an
    iteration or time limit resumes where it stopped. One popped node is one
    iteration, whether it ends up pruned, recorded as feasible, or branched.
    """

    def __init__(self, problem: BnBProblem, seed: Optional[int] = None):
        self.problem = problem
        self.seed = seed
        self.state: Optional[EngineState] = None
        self.strategy: Optional[Strategy] = None
        self.status: Optional[Status] = None
        self.seq = 0
        self.peak_frontier = 0
        self._heap: list = []
        self._stack: list[_Frame] = []
        self._pending: list[BnBNode] = []

    # -- frontier ------------------------------------------------------------

    def _node(self, partial: Solution, lower_bound: float, depth: int) -> BnBNode:
        node = BnBNode(partial, lower_bound, depth, self.seq)
        self.seq += 1
        return node

    def frontier_size(self) -> int:
        if self.strategy is Strategy.DEPTH_FIRST:
            return len(self._stack) + len(self._pending)
        return len(self._heap)

    def _frontier_empty(self) -> bool:
        return self.frontier_size() == 0

    def _push(self, node: BnBNode) -> None:
        if self.strategy is Strategy.DEPTH_FIRST:
            self._pending.append(node)
        else:
            heapq.heappush(self._heap, (selection_key(self.strategy, node), node))
        self.peak_frontier = max(self.peak_frontier, self.frontier_size())

    def _prunable(self, lower_bound: float) -> bool:
        best = self.state.best_cost
        return best is not None and self.problem.cost_delta(lower_bound, best) >= 0

    def _pop(self, prune: bool) -> Optional[BnBNode]:
        if self.strategy is not Strategy.DEPTH_FIRST:
            return heapq.heappop(self._heap)[1] if self._heap else None
        if self._pending:
            return self._pending.pop()
        problem = self.problem
        while self._stack:
            frame = self._stack[-1]
            child = next(frame.children, None)
            if child is None:
                self._stack.pop()
                continue
            frame.cursor += 1
            lower_bound = problem.lbound(child)
            if prune and self._prunable(lower_bound):
                continue
            return self._node(child, lower_bound, frame.node.depth + 1)
        return None

    # -- search --------------------------------------------------------------

    def ensure_started(self, strategy: Strategy) -> EngineState:
        strategy = Strategy(strategy)
        if self.state is not None:
            if strategy is not self.strategy:
                raise ConfigError(
                    f"search was started with strategy {self.strategy.value!r}; "
                    f"cannot continue it as {strategy.value!r}")
            return self.state
        problem = self.problem
        self.strategy = strategy
        self.state = EngineState(rng=make_rng(self.seed))
        initial = problem.get_initial_solution()
        if initial is not None:
            if not problem.is_feasible(initial):
                raise ContractViolation(
                    f"{type(problem).__name__}: initial solution is not feasible")
            cost = problem.cost(initial)
            self.state.current_solution, self.state.current_cost = initial, cost
            update_best(problem, self.state, initial, cost)
        root = problem.get_root()
        self._push(self._node(root, problem.lbound(root), 0))
        return self.state

    def _evaluate(self, node: BnBNode, look_ahead: bool, prune: bool) -> None:
        problem = self.problem
        state = self.state
        if prune and self._prunable(node.lower_bound):
            return
        partial = node.partial
        if problem.is_feasible(partial):
            update_best(problem, state, partial, problem.cost(partial))
            return
        if look_ahead:
            completed = problem.complete_solution(partial, state.rng)
            if completed is not None and problem.is_feasible(completed):
                update_best(problem, state, completed, problem.cost(completed))
        if self.strategy is Strategy.DEPTH_FIRST:
            self._stack.append(_Frame(node, 0, iter(problem.branch(partial))))
            self.peak_frontier = max(self.peak_frontier, self.frontier_size())
            return
        depth = node.depth + 1
        for child in problem.branch(partial):
            lower_bound = problem.lbound(child)
            if prune and self._prunable(lower_bound):
                continue
            self._push(self._node(child, lower_bound, depth))

    def solve(self, config: BnBConfig,
              callback: Optional[Callable[[int, BnBNode, EngineState], None]] = None):
        """Search until the frontier empties or a limit is hit.

        Returns ``(best_solution, best_cost, status)``; the first two are
        ``None`` when no feasible solution has been seen. ``callback`` is
        called with ``(total_iterations, node, state)`` after each pop.
        """
        look_ahead = config.bnb_type is BnBType.LOOK_AHEAD
        if look_ahead and not self.problem.supports_completion():
            raise ConfigError(
                f"{type(self.problem).__name__} does not implement complete_solution; "
                "look-ahead branch and bound needs it")
        state = self.ensure_started(config.strategy)
        deadline = None if config.time_limit is None else time.monotonic() + config.time_limit
        pops = 0
        while True:
            if self._frontier_empty():
                self.status = Status.EXHAUSTED
                break
            if pops >= config.iters_limit:
                self.status = Status.ITERS_LIMIT
                break
            if deadline is not None and time.monotonic() >= deadline:
                self.status = Status.TIME_LIMIT
                break
            node = self._pop(config.prune)
            if node is None:
                continue
            pops += 1
            state.total_iterations += 1
            self._evaluate(node, look_ahead, config.prune)
            if callback is not None:
                callback(state.total_iterations, node, state)
        return state.best_solution, state.best_cost, self.status

    @property
    def best_solution(self):
        return None if self.state is None else self.state.best_solution

    @property
    def best_cost(self):
        return None if self.state is None else self.state.best_cost

    # -- checkpointing -------------------------------------------------------

    def snapshot(self) -> bytes:
        if self.state is None:
            raise ConfigError("nothing to snapshot before the search has started")
        problem = self.problem
        enc = functools.partial(encode_optional, problem)
        state = self.state

        def node_json(node: BnBNode) -> list:
            return [enc(node.partial), node.lower_bound, node.depth, node.seq]

        return dump_json({
            "engine": ENGINE_NAME,
            "strategy": self.strategy.value,
            "seq": self.seq,
            "peak_frontier": self.peak_frontier,
            "total_iterations": state.total_iterations,
            "initial": enc(state.current_solution),
            "initial_cost": state.current_cost,
            "best": enc(state.best_solution),
            "best_cost": state.best_cost,
            "rng": rng_state_to_json(state.rng),
            "pending": [node_json(n) for n in self._pending],
            "stack": [[node_json(f.node), f.cursor] for f in self._stack],
            "heap": [node_json(n) for _, n in self._heap],
        })

    @classmethod
    def restore(cls, problem: BnBProblem, blob: bytes) -> "BranchAndBound":
        data = json.loads(blob)
        if data.get("engine") != ENGINE_NAME:
            raise ConfigError(f"snapshot belongs to engine {data.get('engine')!r}, not {ENGINE_NAME!r}")
        dec = functools.partial(decode_optional, problem)

        def node_from(item: list) -> BnBNode:
            partial, lower_bound, depth, seq = item
            return BnBNode(dec(partial), lower_bound, depth, seq)

        engine = cls(problem)
        engine.strategy = Strategy(data["strategy"])
        engine.seq = data["seq"]
        engine.peak_frontier = data["peak_frontier"]
        engine.state = EngineState(
            rng=rng_from_json(data["rng"]),
            current_solution=dec(data["initial"]),
            current_cost=data["initial_cost"],
            best_solution=dec(data["best"]),
            best_cost=data["best_cost"],
            total_iterations=data["total_iterations"],
        )
        engine._pending = [node_from(item) for item in data["pending"]]
        for item, cursor in data["stack"]:
            node = node_from(item)
            children = iter(problem.branch(node.partial))
            deque(islice(children, cursor), maxlen=0)
            engine._stack.append(_Frame(node, cursor, children))
        # stored in heap order, so the list is already a valid heap
        engine._heap = [(selection_key(engine.strategy, n), n)
                        for n in map(node_from, data["heap"])]
        return engine
