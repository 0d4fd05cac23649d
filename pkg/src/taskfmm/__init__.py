"""Fast multipole method for the 3-D Laplace potential with a dataflow task runtime."""

from .backend import DEFAULT as _engine_backend
from .bench import RunConfig, RunResult, generate_bodies, run_once, run_sweep
from .kernels import n_coef
from .oracle import compare, direct_sum
from .scheduler import (INOUT, INPUT, LOCALITY, NODEP, OUTPUT, VALUE, Scheduler,
                        SchedulerConfig)
from .traversal import TraversalConfig, dual_tree_traverse, evaluate
from .tree import Bodies, Domain, build_tree, compute_bounds, morton_key

BACKEND = _engine_backend.BACKEND

__version__ = "0.1.0"
