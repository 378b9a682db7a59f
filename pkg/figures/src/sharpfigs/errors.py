class FigureError(Exception):
    """Base error; the CLI maps these to exit code 2."""


class SpecError(FigureError):
    """Figure spec missing, malformed, or referencing nonexistent inputs."""


class SchemaError(FigureError):
    """An input file lacks a required column or field."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column
