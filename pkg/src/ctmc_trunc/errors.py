"""Exception types shared across the package."""


class CtmcTruncError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidNetworkError(CtmcTruncError):
    """Out-edge oracle returned something structurally invalid (self-loop,
    negative rate, duplicate target, wrong label kind)."""


class ZeroMassWindow(CtmcTruncError):
    """Restriction window carries no probability mass."""


class DimensionTooLarge(CtmcTruncError):
    """Dense / enumerative reference path refused above its size guard."""


class MissingReverseEdge(CtmcTruncError):
    """Detailed-balance machinery needs every edge paired with its reverse."""


class NotConnected(CtmcTruncError):
    """Window is not connected as an undirected graph."""


class SingularBeyondKernel(CtmcTruncError):
    """Kernel solve failed even after the normalization-row replacement."""


class GeneratorInvariantError(CtmcTruncError):
    """Constructed matrix violates the invariants of its truncation scheme."""


class ConfigError(CtmcTruncError):
    """Bad CLI / config-file input."""
