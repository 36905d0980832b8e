"""Exception types shared across the package."""


class DomainError(ValueError):
    """A data value falls outside the query's input domain."""


class ShapeError(ValueError):
    """A query value does not have the shape the query expects."""


class ParameterError(ValueError):
    """An invalid protocol or plan parameter."""


class ProtocolError(RuntimeError):
    """A message multiset contains payloads foreign to the protocol."""


class StructureError(RuntimeError):
    """The analyzer received an incomplete or malformed node map."""
