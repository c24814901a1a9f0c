#!/usr/bin/env python3
"""
Scenario files, presets, overrides and the admission gate.
"""

import math
import sys
from dataclasses import replace
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from rhlab.errors import ScenarioError
from rhlab.gate import GateRoute, ScenarioGate
from rhlab.scenario import (
    FieldKind,
    MetricKind,
    initial_state,
    list_presets,
    load_preset,
    parse_number,
    parse_scenario,
    parse_scenario_text,
    scenario_hash,
    serialize_scenario,
    with_overrides,
)

PRESETS = {"flat_static", "flat_coupled", "warped_ricci", "warped_coupled", "conformal_coupled",
           "warped3d_coupled"}


def test_bundled_presets():
    assert {p.stem for p in list_presets()} == PRESETS
    s = load_preset("flat_coupled")
    assert s.metric.kind is MetricKind.FLAT
    assert s.field.kind is FieldKind.COSINE
    assert s.field.amplitude == 0.3
    assert s.extents == (2 * math.pi, 2 * math.pi)
    with pytest.raises(ScenarioError):
        load_preset("no_such_preset")


def test_numbers_accept_pi():
    assert parse_number("2pi", "k") == pytest.approx(2 * math.pi)
    assert parse_number("0.5*pi", "k") == pytest.approx(0.5 * math.pi)
    assert parse_number("pi", "k") == pytest.approx(math.pi)
    assert parse_number("1e-3", "k") == 1e-3
    with pytest.raises(ScenarioError):
        parse_number("two", "k")


def test_serialize_round_trip():
    for path in list_presets():
        s = parse_scenario(path)
        again = parse_scenario_text(serialize_scenario(s), name=s.name)
        assert again == s
        assert scenario_hash(again) == scenario_hash(s)


def test_hash_ignores_the_name():
    s = load_preset("warped_ricci")
    assert scenario_hash(replace(s, name="renamed")) == scenario_hash(s)
    assert scenario_hash(with_overrides(s, resolution=16)) != scenario_hash(s)


def test_bad_values_name_the_key():
    with pytest.raises(ScenarioError, match=r"localization\.rho > 0"):
        parse_scenario_text("localization.rho = -1\n")
    with pytest.raises(ScenarioError, match="unknown key"):
        parse_scenario_text("grid.colour = 3\n")
    with pytest.raises(ScenarioError, match="unknown section"):
        parse_scenario_text("solver.dt = 3\n")
    with pytest.raises(ScenarioError, match="monitor.p"):
        parse_scenario_text("monitor.p = 2\n")
    with pytest.raises(ScenarioError, match="metric.kind"):
        parse_scenario_text("metric.kind = spherical\n")
    with pytest.raises(ScenarioError, match="line 1"):
        parse_scenario_text("this is not a setting\n")


def test_overrides():
    s = with_overrides(load_preset("flat_coupled"), p=4, resolution=16, tmax=0.05)
    assert s.monitor.p == 4.0
    assert s.resolutions == (16, 16)
    assert s.flow.tmax == 0.05
    assert s.flow.stride == 0.05
    with pytest.raises(ScenarioError):
        with_overrides(s, resolution=4)


def test_initial_state_per_kind():
    for name in ("flat_coupled", "warped_ricci", "conformal_coupled", "warped3d_coupled"):
        s = load_preset(name)
        state = initial_state(s)
        assert state.t == 0.0
        assert state.g.grid.shape == s.resolutions


def test_gate_admits_presets():
    gate = ScenarioGate()
    decision = gate.decide(load_preset("warped_ricci"))
    assert decision.route is GateRoute.RUNNABLE
    assert decision.state is not None
    assert decision.guard_code is None


def test_gate_rejects_three_dimensional_conformal_data():
    s = load_preset("conformal_coupled")
    s = replace(s, grid=replace(s.grid, dim=3))
    decision = ScenarioGate().decide(s)
    assert decision.route is GateRoute.UNTRUSTED
    assert decision.guard_code == "SYMMETRY_UNSUPPORTED"
    assert decision.guard_action == "STOP"


def test_gate_rejects_non_positive_warping():
    s = load_preset("warped_ricci")
    s = replace(s, metric=replace(s.metric, b="cos(x)"))
    decision = ScenarioGate().decide(s)
    assert decision.route is GateRoute.UNTRUSTED
    assert decision.guard_code == "FIELD_INVALID"
    assert "initial data rejected" in decision.reason
