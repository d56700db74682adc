"""Exception types shared across the package.

Every error carries a short upper-case ``code`` so the CLI can map failures
to exit codes without string matching.
"""


class PorefillError(Exception):
    code = "ERROR"
    exit_code = 3

    def __init__(self, message="", **context):
        super().__init__(message or self.code)
        self.context = context


class ConfigError(PorefillError):
    code = "CONFIG"
    exit_code = 2


class UnreachablePorosity(PorefillError):
    code = "UNREACHABLE_POROSITY"


class BadGeometry(PorefillError):
    code = "BAD_GEOMETRY"


class InvalidImage(PorefillError):
    code = "INVALID_IMAGE"


class NoPorePhase(PorefillError):
    code = "NO_PORE_PHASE"


class EmptyNetwork(PorefillError):
    code = "EMPTY_NETWORK"


class NoInletPores(PorefillError):
    code = "NO_INLET_PORES"


class NumericBlowup(PorefillError):
    code = "NUMERIC_BLOWUP"
    exit_code = 4

    def __init__(self, message="", step_index=None, **context):
        super().__init__(message, **context)
        self.step_index = step_index


class NotConverged(PorefillError):
    code = "NOT_CONVERGED"
    exit_code = 4


class NonpositiveInput(PorefillError):
    code = "NONPOSITIVE_INPUT"


class NoOverlap(PorefillError):
    code = "NO_OVERLAP"


class ResultMismatch(PorefillError):
    code = "RESULT_MISMATCH"
    exit_code = 4


class MissingArtifact(PorefillError):
    code = "MISSING_ARTIFACT"


class NonPercolating(PorefillError):
    code = "NONPERCOLATING"


class StageError(PorefillError):
    """Wraps a module error with the workflow stage it came from."""

    code = "STAGE_FAILURE"

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)


class NoPorePath(UserWarning):
    """Pore space has no face-to-face connection; filling stays partial."""
