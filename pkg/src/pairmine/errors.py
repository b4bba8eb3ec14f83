"""Exception hierarchy shared by every stage of the curation pipeline."""


class PairMineError(Exception):
    """Base class for all library errors."""


class DecodeError(PairMineError):
    pass


class DimensionError(PairMineError):
    pass


class ParamError(PairMineError, ValueError):
    pass


class EmptyInput(PairMineError, ValueError):
    pass


class ProjectiveDegenerate(PairMineError):
    """A point maps to infinity under a homography."""


class DegenerateConfiguration(PairMineError):
    """Point configuration does not determine a homography."""


class InsufficientMatches(PairMineError):
    pass


class NoModelFound(PairMineError):
    pass


class ValidationError(PairMineError, ValueError):
    pass


class ParseError(PairMineError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class VersionError(PairMineError):
    pass
