"""JKO-Flow: optimal-transport-regularized continuous normalizing flows trained
by a sequence of proximal (JKO) steps, with exact trace computation."""

import jax

jax.config.update("jax_enable_x64", True)

from jkoflow.potential_net import NetConfig, init_params, param_count  # noqa: E402
from jkoflow.flow_integrator import IntegratorConfig  # noqa: E402
from jkoflow.trainer import TrainConfig  # noqa: E402
from jkoflow.jko import JkoConfig, StageStack, run_jko, generate, log_density  # noqa: E402
from jkoflow.metrics import mmd2_unbiased  # noqa: E402

__all__ = [
    "NetConfig",
    "IntegratorConfig",
    "TrainConfig",
    "JkoConfig",
    "StageStack",
    "init_params",
    "param_count",
    "run_jko",
    "generate",
    "log_density",
    "mmd2_unbiased",
]

__version__ = "0.1.0"
