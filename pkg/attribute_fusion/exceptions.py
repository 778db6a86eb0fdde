"""Attribute fusion exceptions."""


class AttributeFusionException(Exception):
    """Attribute fusion base exception."""


class IngestException(AttributeFusionException):
    """Exception for unreadable or inconsistent input files."""

    def __init__(self, message, line=None, record_id=None):
        """Keep the offending line number and record id, when known."""
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line
        self.record_id = record_id


class ValidationException(AttributeFusionException, ValueError):
    """Exception for validation errors."""


class ModelException(AttributeFusionException):
    """Exception for invalid networks and model bundles."""


class StageError(AttributeFusionException):
    """Error raised inside a named pipeline stage."""

    def __init__(self, stage, message):
        """Create the error tagged with the stage that failed."""
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        return f'error[{self.stage}]: {super().__str__()}'
