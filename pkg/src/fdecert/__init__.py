"""Sampled stability certificates for Caratheodory functional differential equations.

Submodules: ``comparison`` (K-infinity functions and settling constants),
``signals`` (delays and disturbances), ``model`` (right-hand sides),
``integrator`` (fixed-step RK4 with history), ``functionals`` (quadratic
Krasovskii functionals), ``certifier``, ``dissipativity``, ``scenarios`` and ``cli``.
"""

__version__ = "0.1.0"
