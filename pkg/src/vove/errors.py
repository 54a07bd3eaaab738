class ValidationError(ValueError):
    """Input violates a documented contract."""


class ParseError(ValidationError):
    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class ShapeError(ValidationError):
    pass


class AudioFormatError(ValidationError):
    pass
