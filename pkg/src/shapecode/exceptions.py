"""Exception hierarchy shared by every stage of the pipeline."""


class ShapeCodeError(Exception):
    """Base class for all errors raised by this package."""


class MeshParseError(ShapeCodeError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)


class DegenerateGeometryError(ShapeCodeError, ValueError):
    pass


class DimensionError(ShapeCodeError, ValueError):
    pass


class TrainingDivergedError(ShapeCodeError, FloatingPointError):
    """Raised when a parameter update produced NaN or inf.

    ``layer`` is set by DBN pretraining, ``epoch`` by fine-tuning.
    """

    def __init__(self, message, layer=None, epoch=None):
        self.layer = layer
        self.epoch = epoch
        super().__init__(message)


class ClassificationParseError(ShapeCodeError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class StaleArtifactError(ShapeCodeError):
    """An output exists but was produced from different inputs."""
