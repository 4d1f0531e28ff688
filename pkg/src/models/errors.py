"""
Errors - Exception hierarchy shared by parsers, analyses and the pipeline
"""
from typing import Optional


class PipelineError(Exception):
    """Base class for every error the pipeline reports as a user-facing failure"""


class InputError(PipelineError):
    """An input file or value failed validation"""

    def __init__(self, message: str, path: Optional[str] = None,
                 line: Optional[int] = None, field: Optional[str] = None):
        self.path = path
        self.line = line
        self.field = field
        self.reason = message
        super().__init__(self._format())

    def _format(self) -> str:
        where = []
        if self.path:
            where.append(str(self.path))
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.field:
            where.append(f"field '{self.field}'")
        if not where:
            return self.reason
        return f"{', '.join(where)}: {self.reason}"


class AnalysisError(PipelineError):
    """A computation cannot proceed on the data it was given"""


class StageError(PipelineError):
    """A pipeline stage failed; wraps the underlying cause"""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
