"""Exception types raised across the sandbox boundary."""

from __future__ import annotations


class SandboxError(Exception):
    """Base class for every error raised by sandcage."""


class TaintError(SandboxError, TypeError):
    """A tainted value was used where a trusted host value is required."""


class HostReferenceError(TaintError):
    """A host object (not a scalar or guest reference) was sent toward the guest."""


class ValidationError(SandboxError):
    """A validator rejected a tainted value."""


class Violation(SandboxError):
    """A security-relevant misbehavior attributed to the guest."""


class BoundsViolation(Violation):
    """A guest reference or access range falls outside the sandbox region."""


class TamperViolation(Violation):
    """The guest changed a frozen value behind the host's back."""


class CallbackViolation(Violation):
    """The guest tried to enter the host through an inactive or unknown slot."""


class ProtocolViolation(Violation):
    """Malformed guest message or misuse of the invocation protocol."""


class FreezeError(SandboxError):
    pass


class ReadWhileUnfrozen(FreezeError):
    """A freezable datum was read without freezing it first."""


class UnterminatedString(SandboxError):
    pass


class UnknownRecord(SandboxError, LookupError):
    pass


class UnknownField(SandboxError, LookupError):
    pass


class WidthOverflow(SandboxError, OverflowError):
    """A host scalar does not fit the guest width it is being narrowed to."""


class SandboxDead(SandboxError):
    """The sandbox was destroyed or its worker died."""


class CreationError(SandboxError):
    pass


class AllocError(SandboxError, MemoryError):
    pass


class InvalidFree(SandboxError):
    pass


class SlotsExhausted(SandboxError):
    pass


class ResolutionError(SandboxError, LookupError):
    """A guest symbol is not exported by the loaded library."""


class TransportError(SandboxError):
    """The process channel failed (timeout, dead worker, broken handshake)."""


class SandboxBusy(SandboxError):
    """A second host thread tried to invoke a single-flight sandbox."""


class GuestAbort(SandboxError):
    """The guest left the invocation through a host-mediated non-local exit."""

    def __init__(self, code: int, message: str | None = None) -> None:
        self.code = code
        super().__init__(message or f"guest aborted with code {code}")


class DecodeError(SandboxError):
    """Host-side image decode failed; wraps the underlying cause."""
