from __future__ import annotations

import logging
from typing import Any

from tof_coverage.errors import CoverageError

logger = logging.getLogger(__name__)


def handle_tool_error(exc: Exception) -> dict[str, Any]:
    """Wrap a failure in the ``{"ok": False, "error": ...}`` tool envelope.

    Domain errors carry their own code; anything else is a bug, so its traceback
    goes to the log and the caller sees ``UNEXPECTED_ERROR``.
    """
    if isinstance(exc, CoverageError):
        return {"ok": False, "error": exc.to_payload()}
    logger.error("tool call failed: %s", type(exc).__name__, exc_info=exc)
    return {
        "ok": False,
        "error": {
            "code": "UNEXPECTED_ERROR",
            "message": str(exc),
            "details": {"type": type(exc).__name__},
        },
    }
