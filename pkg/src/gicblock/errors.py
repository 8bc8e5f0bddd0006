"""Exception hierarchy. Each class carries the CLI exit code for its failure class."""


class GicBlockError(Exception):
    exit_code = 1
    module = "gicblock"

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class CaseParseError(GicBlockError):
    """Case file does not parse or does not match the schema."""

    exit_code = 3
    module = "case-model"


class CaseValidationError(GicBlockError):
    exit_code = 4
    module = "case-model"

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class DcBuildError(GicBlockError):
    exit_code = 5
    module = "dc-builder"


class CouplingError(GicBlockError):
    exit_code = 5
    module = "field-coupling"


class FloatingNetworkError(GicBlockError):
    """The grounded nodal conductance matrix is singular."""

    exit_code = 6
    module = "gic-engine"

    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = list(nodes)


class WindingCurrentError(GicBlockError):
    exit_code = 6
    module = "gic-engine"


class DivergenceError(GicBlockError):
    exit_code = 7
    module = "ac-opf"

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class InfeasibleError(GicBlockError):
    exit_code = 8
    module = "ac-opf"

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class PlacementInfeasibleError(InfeasibleError):
    module = "placement"


class EnumerationCapError(GicBlockError):
    exit_code = 9
    module = "placement"


EXIT_CODES = {
    0: "success",
    1: "unexpected internal error",
    2: "command-line usage error",
    3: "case file parse/schema error",
    4: "case validation error",
    5: "dc network build or field-coupling error",
    6: "floating dc network / GIC solve error",
    7: "AC solve did not converge",
    8: "infeasible (AC bounds or placement constraints)",
    9: "enumeration refused: too many candidates",
}
