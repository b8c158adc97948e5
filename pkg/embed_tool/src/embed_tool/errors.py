"""Error hierarchy shared by the library and the command line tool."""


class EmbedToolError(Exception):
    """Base class; carries a short code and a process exit status."""

    code = "error"
    exit_status = 1

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ConfigError(EmbedToolError):
    code = "config-error"
    exit_status = 2


class InputError(EmbedToolError):
    code = "input-error"
    exit_status = 3
