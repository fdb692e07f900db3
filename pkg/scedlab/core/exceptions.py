"""Error hierarchy shared by the library and the command line.

Every error carries the process exit code the CLI reports for it:
1 usage/config, 2 I/O and artifact formats, 3 numerical or construction
failures.
"""

from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


class SCEDError(Exception):
    exit_code: int = EXIT_NUMERICAL


class DimensionError(SCEDError, ValueError):
    exit_code = EXIT_USAGE


class InputError(SCEDError, ValueError):
    exit_code = EXIT_USAGE


class ConfigError(SCEDError):
    exit_code = EXIT_USAGE


class InvalidMaskError(InputError):
    pass


class AlistParseError(SCEDError):
    exit_code = EXIT_IO

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ArtifactFormatError(SCEDError):
    exit_code = EXIT_IO


class ConstructionError(SCEDError):
    exit_code = EXIT_NUMERICAL


class ResourceGuardError(SCEDError):
    exit_code = EXIT_NUMERICAL


class BracketNotFoundError(SCEDError):
    exit_code = EXIT_NUMERICAL
