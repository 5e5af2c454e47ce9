"""Exception hierarchy shared by every package of the harness."""

from typing import Any


class JLDCFError(Exception):
    """Root of all errors raised on a contract violation.

    Each subclass carries a stable ``code`` so the command line can emit a
    machine-readable failure line.
    """

    code = "jldcf_error"

    def details(self) -> dict[str, Any]:
        """Return structured context for the failure line."""
        return {}


class ShapeError(JLDCFError, ValueError):
    """A tensor extent does not match what an operation requires."""

    code = "shape_error"

    def __init__(
        self,
        message: str,
        axis: int | None = None,
        expected: Any = None,
        actual: Any = None,
    ) -> None:
        super().__init__(message)
        self.axis = axis
        self.expected = expected
        self.actual = actual

    def details(self) -> dict[str, Any]:
        return {"axis": self.axis, "expected": self.expected, "actual": self.actual}


class GraphError(JLDCFError):
    """The recorded computation graph cannot be differentiated as asked."""

    code = "graph_error"


class ConfigurationError(JLDCFError):
    """A configuration combination is not supported."""

    code = "configuration_error"

    def __init__(self, message: str, errors: list[dict[str, Any]] | None = None) -> None:
        super().__init__(message)
        self.errors = errors

    def details(self) -> dict[str, Any]:
        return {"errors": self.errors} if self.errors is not None else {}


class DatasetError(JLDCFError):
    """A dataset directory is missing, empty or inconsistent."""

    code = "dataset_error"


class EmptyGroundTruthError(JLDCFError, ValueError):
    """A ground-truth mask has no foreground pixel."""

    code = "empty_ground_truth"


class CheckpointError(JLDCFError):
    """A checkpoint file is malformed or does not fit the network."""

    code = "checkpoint_error"


class TrainingDivergedError(JLDCFError):
    """The training loss stopped being finite."""

    code = "training_diverged"

    def __init__(self, message: str, iteration: int, stem: str) -> None:
        super().__init__(message)
        self.iteration = iteration
        self.stem = stem

    def details(self) -> dict[str, Any]:
        return {"iteration": self.iteration, "stem": self.stem}


class UnknownPresetError(JLDCFError, KeyError):
    """An ablation preset name is not known."""

    code = "unknown_preset"

    def __init__(self, name: str, suggestion: str | None = None) -> None:
        message = f"Unknown ablation preset '{name}'"
        if suggestion is not None:
            message += f", did you mean '{suggestion}'?"
        super().__init__(message)
        self.name = name
        self.suggestion = suggestion

    def __str__(self) -> str:
        # KeyError would otherwise quote the message
        return str(self.args[0])

    def details(self) -> dict[str, Any]:
        return {"preset": self.name, "suggestion": self.suggestion}


class InvalidMapError(JLDCFError, ValueError):
    """A saliency map or ground truth is outside its value range."""

    code = "invalid_map"


class GradientCheckError(JLDCFError):
    """At least one analytic gradient disagrees with finite differences."""

    code = "gradcheck_failed"

    def __init__(self, message: str, failures: list[str]) -> None:
        super().__init__(message)
        self.failures = failures

    def details(self) -> dict[str, Any]:
        return {"failures": self.failures}


class UnexpectedError(JLDCFError):
    """Any other exception raised while a command ran."""

    code = "unexpected_error"

    def __init__(self, cause: BaseException) -> None:
        super().__init__(f"{type(cause).__name__}: {cause}")
        self.cause = cause

    def details(self) -> dict[str, Any]:
        return {"type": type(self.cause).__qualname__}
