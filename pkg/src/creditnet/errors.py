"""Exception hierarchy.

Every domain failure derives from :class:`CreditNetError`; the CLI maps those
to exit code 1 and anything raised by argument parsing to exit code 2.
"""


class CreditNetError(Exception):
    pass


class ParseError(CreditNetError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)


class InvariantViolation(CreditNetError):
    pass


class EmptySnapshot(CreditNetError):
    pass


class ConfigError(CreditNetError):
    pass


class InvalidAmount(CreditNetError, ValueError):
    pass


# settlement
class NotIncident(CreditNetError):
    pass


class NoPath(CreditNetError):
    pass


class InsufficientCapacity(NoPath):
    """Candidate paths exist but cannot carry the full amount together."""


class LimitBreach(CreditNetError):
    pass


class SourceCapExceeded(CreditNetError):
    pass


class InsufficientXrp(CreditNetError):
    pass


# metrics
class Disconnected(CreditNetError):
    pass


class ConvergenceFailure(CreditNetError):
    pass


# liquidity
class EmptyResult(CreditNetError):
    pass


class MissingRate(CreditNetError):
    def __init__(self, base: str, quote: str, detail: str = ""):
        self.base = base
        self.quote = quote
        msg = f"no rate for {base}->{quote}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class MixedCurrency(CreditNetError):
    pass


class NodeMissing(CreditNetError):
    pass


class NotEnoughPairs(CreditNetError):
    pass


# health
class MissingTxLog(CreditNetError):
    pass


class UnknownWallet(CreditNetError):
    pass


class NotAGateway(CreditNetError):
    pass


class EmptyWindow(CreditNetError):
    pass


# offers
class NotCrossCurrency(CreditNetError):
    pass
