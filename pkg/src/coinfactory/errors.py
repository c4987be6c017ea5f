"""Exception taxonomy shared across the package."""


class CoinFactoryError(Exception):
    """Base class for all package-specific failures."""


class SourceExhausted(CoinFactoryError):
    """A recorded tape ran out of bits."""


class UnsupportedForTape(CoinFactoryError):
    """Operation requires a seeded generator source."""


class Undecided(CoinFactoryError):
    """A capped or finite run ended without reaching a decision."""

    def __init__(self, tosses: int):
        self.tosses = tosses
        super().__init__(f"undecided after {tosses} tosses")


class InvalidSchedule(CoinFactoryError):
    """Envelope counts violate a consistency requirement at runtime."""

    def __init__(self, n: int, k: int, detail: str):
        self.n = n
        self.k = k
        self.detail = detail
        super().__init__(f"invalid schedule at (n={n}, k={k}): {detail}")


class InvalidParams(CoinFactoryError):
    """Schedule parameters outside their admissible region."""


class ExponentNotFound(CoinFactoryError):
    """No shift exponent within the search budget made all coefficients nonnegative."""


class MarginViolated(CoinFactoryError):
    """An interval certificate required by a plan constructor does not hold."""


class DivergenceRisk(CoinFactoryError):
    """Series coefficients lack a usable tail certificate or sum to >= 1."""


class BackendRequired(CoinFactoryError):
    """A doubling node was executed without a configured backend."""


class DepthTooLarge(CoinFactoryError):
    """Exhaustive enumeration refused: 2**depth tapes is beyond the cap."""


class InsufficientTail(CoinFactoryError):
    """Fewer than three strictly positive tail points to fit."""


class ExprSyntaxError(CoinFactoryError):
    """Tokenizer or parser rejection, with byte offset and expected tokens."""

    def __init__(self, offset: int, expected: str, found: str = ""):
        self.offset = offset
        self.expected = expected
        self.found = found
        msg = f"syntax error at offset {offset}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)


class CompileBlocked(CoinFactoryError):
    """Compilation refused because bound analysis produced error diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(d.message for d in self.diagnostics)
        super().__init__(f"compile blocked: {lines}")
