from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class CoverageError(Exception):
    """Structured application error shared by services, tools and the CLI."""

    code: str
    message: str
    details: dict[str, Any] = field(default_factory=dict)

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"

    def to_payload(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}
