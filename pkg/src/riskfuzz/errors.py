class RiskfuzzError(Exception):
    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(detail)


class ModelError(RiskfuzzError):
    """Invalid input or model; the CLI exits with status 2."""


class InfeasibleError(RiskfuzzError):
    """A well-formed problem without an admissible answer; the CLI exits with status 3."""
