"""
Exception types raised by the simulator and mapped to CLI exit codes.

Classes:
    ConfigError: Invalid configuration or parameters (exit code 2).
    PolicyInfeasibleError: A policy cannot run on the given system/dataset (exit code 3).
    InvariantViolation: An internal consistency check failed (exit code 4).
"""


class ConfigError(ValueError):
    """Raised when a configuration document or parameter set is invalid."""


class PolicyInfeasibleError(RuntimeError):
    """Raised when a policy cannot be built for a system, e.g. LBANN running out of RAM."""


class InvariantViolation(AssertionError):
    """Raised when a simulation result breaks one of its own invariants."""
