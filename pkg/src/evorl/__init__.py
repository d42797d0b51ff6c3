"""Evolved behavior-tree instincts combined with lifetime reinforcement learning."""

from .behavior_tree import parse_sexpr, to_sexpr
from .classic_control import get_spec, make_env, register_env
from .engine import EngineConfig, EvolutionRun, RLOnlyRun, RunRecord, make_run, run_ea_only, run_evo_rl, run_rl_only
from .errors import ConfigError, EvoRLError, InvalidArgumentError, NumericFaultError, ProtocolError, SchemaError
from .gp import GPConfig
from .harness import RunConfig, load_config, report, run_suite
from .learners import LearnerConfig
from .masking import BinGrid, MaskedEnv, build_mask
from .stats import sem

__version__ = "0.1.0"
