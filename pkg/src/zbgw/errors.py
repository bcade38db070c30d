"""Shared error base for the gateway stack.

Every domain error carries a stable ``code`` (its class name) so the CLI
and HTTP layers can map failures to machine-parsable output without
string matching on messages.
"""

from __future__ import annotations


class GatewayError(Exception):
    """Base class for all domain errors raised by this package."""

    @property
    def code(self) -> str:
        return type(self).__name__

    def __str__(self) -> str:  # pragma: no cover - trivial
        return super().__str__() or self.code
