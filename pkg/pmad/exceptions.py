from typing import Optional


class PmadError(Exception):
    exit_code = 2

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context


class ConfigurationError(PmadError):
    exit_code = 1


class InvalidArgumentError(PmadError, ValueError):
    exit_code = 1


class SpecError(PmadError):
    exit_code = 1


class ParseError(PmadError):
    exit_code = 1

    def __init__(self, message: str, filename: str):
        super().__init__(f"{message}: {filename}", filename=filename)
        self.filename = filename


class LoadError(PmadError):
    exit_code = 1

    def __init__(self, message: str, path: str, row: Optional[int] = None):
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"{message}{where}: {path}", path=path, row=row)
        self.path = path
        self.row = row


class DivergenceError(PmadError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"Non-finite loss {loss} at step {step}", step=step, loss=loss)
        self.step = step


class CheckpointError(PmadError):
    pass


class UndefinedMetricError(PmadError):
    pass


class GradientCheckError(PmadError):
    def __init__(self, coordinate: int, value: float):
        super().__init__(
            f"Non-finite function value {value} when probing coordinate {coordinate}",
            coordinate=coordinate,
        )
        self.coordinate = coordinate
