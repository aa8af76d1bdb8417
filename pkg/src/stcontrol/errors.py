"""Error taxonomy shared across the package.

Each class maps onto one CLI exit code family: usage errors are plain
ValueError/argparse errors, geometry and meshing problems exit 2, solver
failures exit 3, and I/O or format problems exit 4.
"""


class GeometryError(ValueError):
    """Interface geometry incompatible with the domain (exits the cylinder,
    touches the boundary, or offsets out of order)."""


class MeshingError(RuntimeError):
    """Mesh construction failed; carries the offending layer index."""

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"{message} (layer {layer})"
        super().__init__(message)
        self.layer = layer


class MeshFormatError(ValueError):
    """Mesh file violates the text format; carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SingularMatrixError(RuntimeError):
    """Factorization hit an exactly singular pivot."""

    def __init__(self, message, pivot=None):
        if pivot is not None:
            message = f"{message} (pivot index {pivot})"
        super().__init__(message)
        self.pivot = pivot


class SolverError(RuntimeError):
    """A linear solve produced an unacceptable residual or non-finite values."""


class PointLocationError(ValueError):
    """A query point could not be located inside the reference mesh."""

    def __init__(self, message, point=None):
        if point is not None:
            message = f"{message}: ({point[0]!r}, {point[1]!r})"
        super().__init__(message)
        self.point = point


class ConfigError(ValueError):
    """Config file is malformed or contains unknown keys."""
