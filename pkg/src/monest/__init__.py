"""Finite-form adaptive parameter estimation for monotone parametrizations.

Simulation library and CLI for certainty-equivalence control with
finite-form parameter adaptation, excitation diagnostics, transient
performance bounds, and three worked plants (sine toy system, LuGre
braking wheel, Hindmarsh-Rose pattern classifier).
"""

from . import analysis, core, estimator, ode

__version__ = "0.1.0"

__all__ = ["analysis", "core", "estimator", "ode", "__version__"]
