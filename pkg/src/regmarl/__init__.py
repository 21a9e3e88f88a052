"""Action-regularized multi-agent actor-critic training on a grid world."""

__version__ = "0.1.0"
