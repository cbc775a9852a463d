"""Exception types raised across the library."""


class SVFError(Exception):
    pass


class ShapeMismatch(SVFError, ValueError):
    pass


class NonBinaryInput(SVFError, ValueError):
    pass


class ZeroVector(SVFError, ValueError):
    pass


class DomainError(SVFError, ValueError):
    pass


class EmptyMemory(SVFError, ValueError):
    pass


class VariantWeightMismatch(SVFError, ValueError):
    pass


class ConfigError(SVFError, ValueError):
    pass


class GraphError(SVFError, RuntimeError):
    pass


class DivergenceError(SVFError, ArithmeticError):
    pass
