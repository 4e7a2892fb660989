"""Direct parametrisation of time-dependent invariant manifolds for forced mechanical systems."""

__version__ = "0.1.0"
SCHEMA_VERSION = 1
