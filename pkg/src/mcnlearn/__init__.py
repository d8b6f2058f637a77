"""Learning to solve multilevel budgeted graph games.

A three-phase vaccinate/attack/protect game on graphs, an exact
enumeration oracle, a from-scratch graph value network, a bottom-up
curriculum trainer plus DQN / Monte-Carlo baselines, and an evaluation
harness with optimality-gap metrics. See README.md for the CLI.
"""

from ._kernels import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
