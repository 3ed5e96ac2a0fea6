"""Utility maximization with defaultable stocks under looping contagion.

Subpackages:

- :mod:`contagionopt.model` -- market coefficients, hazard-rate families,
  default-state bookkeeping, admissibility validation.
- :mod:`contagionopt.dynamics` -- Monte Carlo simulation of the contagion
  market and of wealth under a strategy.
- :mod:`contagionopt.logopt` -- log-utility optimal controls (pointwise
  Kuhn-Tucker solver and closed forms) and strategy factories.
- :mod:`contagionopt.powergrid` -- power-utility value function via a
  Markov-chain approximation solved by backward dynamic programming.
- :mod:`contagionopt.stats` -- terminal-wealth sample statistics and
  cohort tables.
- :mod:`contagionopt.experiments` -- config-driven experiment runner.
"""

from contagionopt.model import (
    AdmissibleBox,
    ConstantIntensity,
    DefaultState,
    MarketParams,
    PowerClampIntensity,
    ReciprocalIntensity,
    eval_intensity,
    validate_box,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibleBox",
    "ConstantIntensity",
    "DefaultState",
    "MarketParams",
    "PowerClampIntensity",
    "ReciprocalIntensity",
    "eval_intensity",
    "validate_box",
    "__version__",
]
