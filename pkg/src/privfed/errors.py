"""Exception types shared across the package.

Invalid parameters raise plain ``ValueError`` everywhere; the types below
distinguish failure modes that callers (and the CLI exit codes) must tell
apart.
"""

from __future__ import annotations


class DivergedRunError(RuntimeError):
    """Training produced a non-finite loss or parameter vector.

    Carries the round index at which divergence was detected and any round
    records completed before the abort.
    """

    def __init__(self, round_index: int, records=None, message: str | None = None):
        self.round_index = round_index
        self.records = list(records) if records is not None else []
        super().__init__(message or f"run diverged at round {round_index}")


class ProtocolError(RuntimeError):
    """Secure-aggregation misuse: mixed rounds, dimension mismatch, dropout."""


class ParseError(ValueError):
    """Dataset file could not be parsed; message names the offending line."""
