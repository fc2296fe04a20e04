"""Exception hierarchy shared by every module."""


class M3colError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(M3colError, ValueError):
    pass


class ParameterError(M3colError, ValueError):
    pass


class ContractError(M3colError, ValueError):
    """A documented precondition of a function was violated."""


class DegenerateEmbeddingError(M3colError, ValueError):
    def __init__(self, row: int, norm: float):
        super().__init__(f"row {row} has norm {norm:.3e}, below the normalization floor")
        self.row = row
        self.norm = norm


class LabelError(M3colError, ValueError):
    pass


class EmptyBatchError(M3colError, ValueError):
    pass


class OracleInvalidError(M3colError, RuntimeError):
    """The function handed to the gradient checker is not deterministic."""


class IngestionError(M3colError, ValueError):
    def __init__(self, message: str, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}" + (f":{line}" if line is not None else "") + ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class NumericalError(M3colError, FloatingPointError):
    def __init__(self, epoch: int, term: str, value: float):
        super().__init__(f"non-finite loss at epoch {epoch} in term '{term}' (value={value})")
        self.epoch = epoch
        self.term = term
        self.value = value
