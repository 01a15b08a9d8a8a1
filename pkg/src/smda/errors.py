class SMDAError(Exception):
    """Base class for all pipeline errors; the CLI maps these to exit code 1."""

    @property
    def module(self) -> str:
        return type(self).__module__.rsplit(".", 1)[-1]
