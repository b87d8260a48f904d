"""Domain error types raised across the package.

The CLI reports these by class name on stderr, so the names are part of the
public surface.
"""


class ProvChainError(Exception):
    """Base class for all domain errors."""


# crypto
class InvalidSeed(ProvChainError):
    pass


class InvalidKey(ProvChainError):
    pass


class InvalidParams(ProvChainError):
    pass


# ibf
class CorruptFilter(ProvChainError):
    pass


# ledger
class BadSignature(ProvChainError):
    pass


class DuplicateNonce(ProvChainError):
    pass


class UnknownProduct(ProvChainError):
    pass


class InvalidTransition(ProvChainError):
    pass


class NotFound(ProvChainError):
    pass


class CorruptLedger(ProvChainError):
    pass


# lifecycle
class RoleClassMismatch(ProvChainError):
    pass


class SigmaVerifyFailed(ProvChainError):
    """A handshake signature did not verify; `which` names the failed one."""

    def __init__(self, which: str, message: str = ""):
        self.which = which
        super().__init__(message or f"{which} verification failed")


class ProductExists(ProvChainError):
    pass


class WrongStatus(ProvChainError):
    pass


class OwnerSignInvalid(ProvChainError):
    pass


class NotAuditor(ProvChainError):
    pass


# tracing
class StaleIndex(ProvChainError):
    pass
