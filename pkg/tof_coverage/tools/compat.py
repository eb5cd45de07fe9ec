from __future__ import annotations

import json
import re
from typing import Any

from tof_coverage.errors import CoverageError

_TRUE_VALUES = {"1", "true", "yes", "y", "on"}
_FALSE_VALUES = {"0", "false", "no", "n", "off"}


def parse_bool(value: bool | str, field: str) -> bool:
    if isinstance(value, bool):
        return value
    normalized = value.strip().lower()
    if normalized in _TRUE_VALUES:
        return True
    if normalized in _FALSE_VALUES:
        return False
    raise CoverageError(
        code="INVALID_BOOLEAN",
        message=f"{field} must be boolean-like.",
        details={"field": field, "value": value},
    )


def parse_int(value: int | str, field: str) -> int:
    if isinstance(value, bool):
        raise CoverageError(
            code="INVALID_INTEGER",
            message=f"{field} must be an integer.",
            details={"field": field, "value": value},
        )
    if isinstance(value, int):
        return value
    raw = value.strip()
    try:
        return int(raw)
    except ValueError as exc:
        raise CoverageError(
            code="INVALID_INTEGER",
            message=f"{field} must be an integer.",
            details={"field": field, "value": value},
        ) from exc


def parse_optional_int(value: int | str | None, field: str) -> int | None:
    if value is None:
        return None
    if isinstance(value, str) and not value.strip():
        return None
    return parse_int(value, field=field)


def parse_float(value: float | int | str, field: str) -> float:
    parsed = parse_optional_float(value, field=field)
    if parsed is None:
        raise CoverageError(
            code="INVALID_NUMBER",
            message=f"{field} is required.",
            details={"field": field, "value": value},
        )
    return parsed


def parse_optional_float(value: float | int | str | None, field: str) -> float | None:
    if value is None:
        return None
    if isinstance(value, bool):
        raise CoverageError(
            code="INVALID_NUMBER",
            message=f"{field} must be numeric.",
            details={"field": field, "value": value},
        )
    if isinstance(value, (int, float)):
        return float(value)
    raw = value.strip()
    if not raw:
        return None
    try:
        return float(raw)
    except ValueError as exc:
        raise CoverageError(
            code="INVALID_NUMBER",
            message=f"{field} must be numeric.",
            details={"field": field, "value": value},
        ) from exc


def _json_list(raw: str, field: str) -> list[Any]:
    try:
        parsed = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CoverageError(
            code="INVALID_LIST",
            message=f"{field} JSON string is invalid.",
            details={"field": field, "value": raw},
        ) from exc
    if not isinstance(parsed, list):
        raise CoverageError(
            code="INVALID_LIST",
            message=f"{field} JSON must be a list.",
            details={"field": field, "value": raw},
        )
    return parsed


def parse_label_list(value: list[str] | str | None, field: str) -> list[str] | None:
    """Accept a list, a JSON array, or a comma/space separated string."""
    if value is None:
        return None
    if isinstance(value, list):
        return [str(v).strip() for v in value if str(v).strip()]
    raw = value.strip()
    if not raw:
        return None
    if raw.startswith("["):
        return [str(v).strip() for v in _json_list(raw, field)]
    return [p for p in re.split(r"[\s,;]+", raw) if p]


def parse_float_list(
    value: list[float] | list[int] | str | None, field: str
) -> list[float] | None:
    if value is None:
        return None
    items: list[Any]
    if isinstance(value, list):
        items = list(value)
    else:
        raw = value.strip()
        if not raw:
            return None
        items = _json_list(raw, field) if raw.startswith("[") else re.split(r"[\s,;]+", raw)
    try:
        return [float(v) for v in items if str(v).strip()]
    except (TypeError, ValueError) as exc:
        raise CoverageError(
            code="INVALID_LIST",
            message=f"{field} must contain numbers only.",
            details={"field": field, "value": value},
        ) from exc


def parse_points(value: list[list[float]] | str | None, field: str) -> list[list[float]] | None:
    """Points as nested lists, a JSON array, or ``x,y,z`` rows separated by ``;``/newlines."""
    if value is None:
        return None
    rows: list[Any]
    if isinstance(value, list):
        rows = value
    else:
        raw = value.strip()
        if not raw:
            return None
        if raw.startswith("["):
            rows = _json_list(raw, field)
        else:
            rows = [
                [c.strip() for c in line.split(",")]
                for line in re.split(r"[;\n]+", raw)
                if line.strip()
            ]
    points: list[list[float]] = []
    for row in rows:
        if not isinstance(row, list) or len(row) != 3:
            raise CoverageError(
                code="INVALID_POINTS",
                message=f"{field} must be a list of [x, y, z] triples.",
                details={"field": field, "value": value},
            )
        try:
            points.append([float(c) for c in row])
        except (TypeError, ValueError) as exc:
            raise CoverageError(
                code="INVALID_POINTS",
                message=f"{field} must contain numbers only.",
                details={"field": field, "value": value},
            ) from exc
    return points
