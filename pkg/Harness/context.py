"""Run status and artifacts of one command invocation."""

import json
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any

from Utilities.errors import JLDCFError
from Utilities.helpers import get_logger

logger = get_logger("context")


class RunStatus(str, Enum):
    INITIALIZING = "initializing"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


class RunContext:
    """Carries the status of a command and the artifacts it attached.

    Commands report their outcome through :meth:`mark_run_success` or
    :meth:`mark_run_failed`; the command line turns the final status into an exit
    code and a ``run.json`` summary.
    """

    def __init__(self, command: str, output_dir: Path | None) -> None:
        self.command = command
        self.output_dir = output_dir
        self.run_status = RunStatus.INITIALIZING
        self.status_message: str | None = None
        self.artifacts: dict[str, Path] = {}
        self.results: dict[str, Any] = {}
        self.error: JLDCFError | None = None
        self.started = datetime.now(timezone.utc)

    @classmethod
    def initialize(cls, command: str, output_dir: str | Path | None = None) -> "RunContext":
        context = cls(command, Path(output_dir) if output_dir is not None else None)
        context.run_status = RunStatus.RUNNING
        return context

    def attach_artifact(self, name: str, path: str | Path) -> None:
        self.artifacts[name] = Path(path)

    def attach_result(self, name: str, value: Any) -> None:
        self.results[name] = value

    def mark_run_success(self, message: str) -> None:
        self.run_status = RunStatus.SUCCEEDED
        self.status_message = message
        logger.info(message)

    def mark_run_failed(self, message: str, error: JLDCFError | None = None) -> None:
        self.run_status = RunStatus.FAILED
        self.status_message = message
        self.error = error
        logger.error(message)

    @property
    def exit_code(self) -> int:
        return 0 if self.run_status == RunStatus.SUCCEEDED else 1

    def summary(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "status": self.run_status.value,
            "message": self.status_message,
            "started": self.started.isoformat(),
            "artifacts": {name: str(path) for name, path in sorted(self.artifacts.items())},
            "results": self.results,
        }

    def failure_line(self) -> str:
        """One-line machine-readable description of a failed run."""
        error = self.error
        return json.dumps(
            {
                "status": RunStatus.FAILED.value,
                "command": self.command,
                "error": error.code if error is not None else "failed",
                "message": self.status_message,
                "details": error.details() if error is not None else {},
            },
            default=str,
        )

    def write_summary(self) -> Path | None:
        if self.output_dir is None:
            return None
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / "run.json"
        path.write_text(json.dumps(self.summary(), indent=2, default=str))
        return path
