"""
Exception hierarchy shared by every stage of an analysis.

Each error knows the CLI exit code it maps to and the module it came from,
so failures can be surfaced as diagnostics with provenance.
"""
from typing import Optional


class RveError(Exception):
    """Base class for all analysis failures."""
    exit_code = 1
    module = "rve_stability"

    def describe(self) -> str:
        return f"[{self.module}] {self}"


class ConfigError(RveError):
    exit_code = 2
    module = "config"


class MeshParseError(RveError):
    exit_code = 3
    module = "mesh"

    def __init__(self, message: str, line: int = 0, column: int = 0,
                 path: Optional[str] = None):
        self.line = line
        self.column = column
        self.path = path
        where = f"{path or '<mesh>'}:{line}:{column}"
        super().__init__(f"{where}: {message}")


class LatticeError(RveError):
    exit_code = 4
    module = "lattice"


class PairingError(RveError):
    exit_code = 4
    module = "pairing"


class MeshGenerationError(RveError):
    exit_code = 4
    module = "mesh"


class MeshDistortionError(RveError):
    exit_code = 4
    module = "elements"

    def __init__(self, message: str, element: Optional[int] = None):
        self.element = element
        super().__init__(message if element is None
                         else f"element {element}: {message}")


class MaterialError(RveError):
    exit_code = 5
    module = "materials"


class ElementInversionError(MaterialError):
    """det F <= 0 at a material point."""

    def __init__(self, F, element: Optional[int] = None,
                 point: Optional[int] = None):
        self.F = F
        self.element = element
        self.point = point
        where = ""
        if element is not None:
            where = f"element {element}, point {point}: "
        super().__init__(f"{where}non-positive Jacobian det F for F={F.tolist()}")


class SolverError(RveError):
    exit_code = 6
    module = "homogenizer"


class NewtonDivergence(SolverError):
    """Step rejection signal, the driver is expected to cut the increment."""

    def __init__(self, message: str, iterations: int = 0,
                 residual: float = float("nan")):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} (iterations={iterations}, "
                         f"residual={residual:.3e})")


class SingularSystemError(SolverError):
    """Raised at limit or bifurcation points where the factorization degenerates."""

    def __init__(self, message: str, min_pivot: float = 0.0,
                 max_pivot: float = 0.0):
        self.min_pivot = min_pivot
        self.max_pivot = max_pivot
        super().__init__(f"{message} (smallest pivot {min_pivot:.3e}, "
                         f"largest pivot {max_pivot:.3e})")


class StressDriverDivergence(SolverError):
    module = "stress_driver"


class EigenSolverError(RveError):
    exit_code = 7
    module = "bloch"


class ConstraintRankError(EigenSolverError):
    pass


class ClassificationMisuseError(RveError):
    module = "rank1"
