from contextlib import contextmanager
from typing import Iterator, Optional


class DSIError(Exception):
    """Base error; `exit_code` plays the role a status code plays for an HTTP error."""

    exit_code = 1

    def __init__(self, detail: str, stage: Optional[str] = None):
        super().__init__(detail)
        self.detail = detail
        self.stage = stage

    def __str__(self) -> str:
        if self.stage:
            return f"[{self.stage}] {self.detail}"
        return self.detail


class InputValidationError(DSIError):
    exit_code = 2


class NumericError(DSIError):
    exit_code = 3


class SelftestFailure(DSIError):
    exit_code = 4


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Stamp the pipeline stage name on any DSIError raised inside the block."""
    try:
        yield
    except DSIError as e:
        if e.stage is None:
            e.stage = name
        raise
