from __future__ import annotations

import asyncio
import logging
import math
from typing import Any

import pytest

from tof_coverage.errors import CoverageError
from tof_coverage.server import create_server
from tof_coverage.tools.common import handle_tool_error
from tof_coverage.tools.compat import (
    parse_bool,
    parse_float,
    parse_float_list,
    parse_label_list,
    parse_optional_float,
    parse_optional_int,
    parse_points,
)


def _call_tool(name: str, arguments: dict[str, object]) -> dict[str, Any]:
    server = create_server()
    _, payload = asyncio.run(server.call_tool(name, arguments))
    return payload  # type: ignore[return-value]


def test_compat_parsers_accept_string_inputs() -> None:
    assert parse_bool("yes", field="flag") is True
    assert parse_bool(" off ", field="flag") is False
    assert parse_optional_int(" ", field="depth") is None
    assert parse_optional_int("7", field="depth") == 7
    assert parse_optional_float(" 2.5 ", field="size") == 2.5
    assert parse_float(3, field="size") == 3.0
    assert parse_label_list("n1_8_0, n2_16_25;n3_16_55", field="configs") == [
        "n1_8_0",
        "n2_16_25",
        "n3_16_55",
    ]
    assert parse_label_list('["V_O", "V_S:0.5"]', field="vmax") == ["V_O", "V_S:0.5"]
    assert parse_label_list("", field="vmax") is None
    assert parse_float_list("0 5 10", field="thetas") == [0.0, 5.0, 10.0]
    assert parse_float_list([0.5, 1], field="radii") == [0.5, 1.0]
    assert parse_points("0,0,0; 0,0,1\n0,1,1", field="points") == [
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
    ]
    assert parse_points("[[1, 2, 3]]", field="points") == [[1.0, 2.0, 3.0]]


@pytest.mark.parametrize(
    ("call", "code"),
    [
        (lambda: parse_bool("maybe", field="flag"), "INVALID_BOOLEAN"),
        (lambda: parse_optional_int("2.5", field="depth"), "INVALID_INTEGER"),
        (lambda: parse_optional_float(True, field="size"), "INVALID_NUMBER"),
        (lambda: parse_float("", field="size"), "INVALID_NUMBER"),
        (lambda: parse_float_list("1,x", field="radii"), "INVALID_LIST"),
        (lambda: parse_label_list("[1, 2", field="configs"), "INVALID_LIST"),
        (lambda: parse_float_list('["a"]', field="radii"), "INVALID_LIST"),
        (lambda: parse_points("0,0;1,1", field="points"), "INVALID_POINTS"),
        (lambda: parse_points('[[0, 0, "z"]]', field="points"), "INVALID_POINTS"),
    ],
)
def test_compat_parser_errors(call: Any, code: str) -> None:
    with pytest.raises(CoverageError) as exc:
        call()
    assert exc.value.code == code


def test_parse_config_label_tool() -> None:
    payload = _call_tool("parse_config_label", {"label": "n2_16_25"})
    assert payload["ok"] is True
    result = payload["result"]
    assert result["sensor_count"] == 72
    assert result["rings"][0] == {
        "link": "shoulder",
        "axial_position": 0.0,
        "tilt_deg": 25.0,
        "tilt_sign": 1,
        "sensor_count": 16,
        "ring_radius": 0.03,
    }
    assert result["rings"][-1]["link"] == "tool"


def test_parse_config_label_tool_reports_errors() -> None:
    payload = _call_tool("parse_config_label", {"label": "n2_16_75"})
    assert payload["ok"] is False
    assert payload["error"]["code"] == "THETA_OUT_OF_RANGE"
    assert payload["error"]["details"]["theta_deg"] == 75


def test_solid_volume_tool_accepts_string_arguments() -> None:
    payload = _call_tool(
        "solid_volume", {"shape": "Sphere", "voxel_size": "0.05", "radius": "0.5"}
    )
    assert payload["ok"] is True
    result = payload["result"]
    assert result["solid"] == "Sphere"
    assert result["analytic_m3"] == pytest.approx(4.0 / 3.0 * math.pi * 0.125)
    assert abs(result["relative_error"]) < 0.05
    assert result["voxel_size_m"] == pytest.approx(0.05)

    bad = _call_tool("solid_volume", {"shape": "torus"})
    assert bad["ok"] is False
    assert bad["error"]["code"] == "UNSUPPORTED_SOLID"


def test_pappus_shell_volume_tool() -> None:
    payload = _call_tool(
        "pappus_shell_volume",
        {"points": "0,0,0;0,0,1;0,1,1", "r_inner": 0.0, "r_outer": "0.5"},
    )
    assert payload["ok"] is True
    result = payload["result"]
    assert result["bezier_segments"] == 1
    assert result["arclength_m"] < 2.0
    assert result["volume_m3"] == pytest.approx(math.pi * 0.25 * result["arclength_m"])
    assert result["warning"].startswith("pappus_overcount:")

    straight = _call_tool(
        "pappus_shell_volume", {"points": [[0, 0, 0], [0, 0, 2]], "r_inner": 0.1, "r_outer": 0.2}
    )
    assert straight["result"]["volume_m3"] == pytest.approx(math.pi * 0.03 * 2.0)
    assert straight["result"]["warning"] is None


def test_config_coverage_tool() -> None:
    payload = _call_tool(
        "config_coverage", {"label": "n1_8_0", "vmax": "V_O", "max_depth": "5"}
    )
    assert payload["ok"] is True
    result = payload["result"]
    assert result["config"] == "n1_8_0"
    assert result["vmax"] == "V_O"
    assert result["max_depth"] == 5
    assert 0.0 < result["zeta_percent"] < 100.0
    assert result["warnings"] == []


def test_config_coverage_tool_reports_failed_rows() -> None:
    payload = _call_tool(
        "config_coverage",
        {"label": "n1_8_0", "vmax": "V_S:0.1", "max_depth": 5, "early_out": "no"},
    )
    assert payload["ok"] is False
    assert payload["error"]["code"] == "SHELL_INSIDE_ROBOT"

    payload = _call_tool("config_coverage", {"label": "n1_8_0", "vmax": "V_Z"})
    assert payload["error"]["code"] == "INVALID_VMAX"


def test_unexpected_errors_are_logged_and_wrapped(caplog: pytest.LogCaptureFixture) -> None:
    with caplog.at_level(logging.ERROR, logger="tof_coverage.tools.common"):
        payload = handle_tool_error(ZeroDivisionError("division by zero"))
    assert payload == {
        "ok": False,
        "error": {
            "code": "UNEXPECTED_ERROR",
            "message": "division by zero",
            "details": {"type": "ZeroDivisionError"},
        },
    }
    assert caplog.records[-1].exc_info is not None

    caplog.clear()
    domain = handle_tool_error(CoverageError(code="INVALID_LABEL", message="bad"))
    assert domain["error"]["code"] == "INVALID_LABEL"
    assert not caplog.records
