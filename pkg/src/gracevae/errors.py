"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage/config problems -> 1, data
problems -> 2, numeric failures -> 3.
"""


class GraceError(Exception):
    exit_code = 2


class ConfigError(GraceError):
    exit_code = 1


class DataError(GraceError):
    exit_code = 2


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class VocabularyError(DataError):
    pass


class CorruptCheckpointError(DataError):
    pass


class ConstructionError(GraceError):
    pass


class UnsupportedError(GraceError):
    pass


class DimensionError(GraceError, ValueError):
    exit_code = 3


class ParameterError(GraceError, ValueError):
    exit_code = 1


class ContractError(GraceError, ValueError):
    exit_code = 3


class NumericError(GraceError, ArithmeticError):
    exit_code = 3
