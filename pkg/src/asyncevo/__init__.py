"""Asynchronous steady-state evolutionary search over simulated workers, with
hidden consistent evaluation and a subagents-time scaling law."""

from .evaluation import EvalMode, Evaluator, SelectionRule, SplitSpec, final_select
from .orchestrator import RunConfig, RunReport, run, run_matrix
from .population import Candidate, EvaluationRecord, OperatorKind, PopulationDB
from .scaling import ScalingParams, fit, optimal_allocation, predict
from .selection import SelectionPolicy, sample_parent, selection_distribution
from .sim import EventQueue, RngRegistry, VirtualClock
from .tasks import SyntheticTask, make_task
from .visibility import Scope
from .workers import OperatorModel, OperatorType, WorkerPool

__version__ = "0.1.0"
