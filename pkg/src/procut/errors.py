"""Exception hierarchy shared across the package."""


class ProcutError(Exception):
    """Base class for all package errors."""


class EmptyTemplate(ProcutError):
    pass


class UnbalancedBraces(ProcutError):
    pass


class EmptyMask(ProcutError):
    pass


class MissingInput(ProcutError):
    def __init__(self, name: str):
        super().__init__(f"no input value for placeholder {name!r}")
        self.name = name


class GatewayError(ProcutError):
    pass


class Timeout(GatewayError):
    pass


class RateLimited(GatewayError):
    pass


class MalformedResponse(GatewayError):
    pass


class MockMiss(GatewayError):
    def __init__(self, prompt: str):
        super().__init__(f"scripted mock has no response for prompt: {prompt[:120]!r}")
        self.prompt = prompt


class DegenerateGold(ProcutError):
    pass


class TooManySegments(ProcutError):
    pass


class DimensionMismatch(ProcutError):
    pass


class AllZeroFit(ProcutError):
    pass


class InvalidMaskShape(ProcutError):
    pass


class InvalidRanking(ProcutError):
    pass


class PlaceholderLost(ProcutError):
    pass
