from typing import Optional


class BlendcastError(Exception):
    """Base class for every error raised by blendcast"""


class ShapeError(BlendcastError, ValueError):
    def __init__(self, what: str, expected, got) -> None:
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected shape {expected}, got {got}")


class ConfigError(BlendcastError, ValueError):
    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"{field}: {message}")


class DataError(BlendcastError, ValueError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None) -> None:
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class TrainingDivergedError(BlendcastError, ArithmeticError):
    def __init__(self, epoch: int, loss: float) -> None:
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"loss became {loss} at epoch {epoch}")


class StageError(BlendcastError, RuntimeError):
    def __init__(self, stage: str, cause: BaseException) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
