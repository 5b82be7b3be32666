"""Error hierarchy shared by every component.

Each error carries the process exit code the CLI reports for it.
"""


class HJCLError(Exception):
    exit_code = 1


class ConfigError(HJCLError):
    """Invalid configuration or command-line usage."""

    exit_code = 2

    def __init__(self, message: str, problems=None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class DataError(HJCLError):
    """Malformed or inconsistent input data."""

    exit_code = 3

    def __init__(self, message: str, line: int = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TaxonomyError(DataError):
    pass


class CheckpointError(DataError):
    pass


class ShapeError(HJCLError):
    exit_code = 4

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"shape mismatch in {op}: {rendered}")


class NumericError(HJCLError):
    """Non-finite values in a forward value, gradient or finite difference."""

    exit_code = 4

    def __init__(self, message: str, tensor_name: str = None):
        self.tensor_name = tensor_name
        if tensor_name is not None:
            message = f"{message} (tensor: {tensor_name})"
        super().__init__(message)
