"""Simulated annealing and branch and bound for user-defined combinatorial problems."""
from .annealing import AnnealConfig, SimAnnealProblem, SimulatedAnnealing, metropolis_accept, sigmoid_temperature
from .bnb import BnBConfig, BnBNode, BnBProblem, BnBType, BranchAndBound, Status, Strategy, selection_key
from .checkpoint import Checkpoint, CheckpointStore, ParamsMismatch, params_match, persist_engine, resume_engine
from .problem import ConfigError, ContractViolation, EngineState, OptProblem, update_best
from .tsp import CityGraph, TravelingSalesman, generate_instance

__all__ = [
    "AnnealConfig", "SimAnnealProblem", "SimulatedAnnealing", "metropolis_accept", "sigmoid_temperature",
    "BnBConfig", "BnBNode", "BnBProblem", "BnBType", "BranchAndBound", "Status", "Strategy", "selection_key",
    "Checkpoint", "CheckpointStore", "ParamsMismatch", "params_match", "persist_engine", "resume_engine",
    "ConfigError", "ContractViolation", "EngineState", "OptProblem", "update_best",
    "CityGraph", "TravelingSalesman", "generate_instance",
]
