from .config import RunConfig, configure, load_config
from .market import VarModel, calibrate_var, simulate_paths
from .solver import Maximizer, Policy, ProblemSpec, solve
from .evaluation import UtilitySpec, cer, replay_policy
