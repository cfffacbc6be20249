import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tailsitter.scenario import (
    ParseError,
    ScenarioConfig,
    ValidationError,
    canned_scenarios,
    load_canned,
    parse_scenario,
    parse_text,
    phase_names,
    resolve_scenario,
    serialize,
)
from tailsitter.guidance import FlightPhase

CANNED = ["climb_descent", "full_envelope", "hover_hold", "pivot_robustness", "pivot_takeoff", "sharp_turn"]


class TestParse:
    def test_defaults(self):
        cfg = parse_text("")
        assert cfg.name == "unnamed" and cfg.mode == "tre" and cfg.seed == 0
        assert cfg.vehicle_params().mass == pytest.approx(0.489)

    def test_comments_and_aliases(self):
        cfg = parse_text("# header\nname = demo  # trailing\n\nmode = e_tailsitter\nscenario.seed = 7\n")
        assert (cfg.name, cfg.mode, cfg.seed) == ("demo", "e_tailsitter", 7)

    def test_vectors_and_waypoints(self):
        cfg = parse_text("mission.profile = circuit\nmission.waypoints = 0,0,-10; 100,0,-10\nwind.mean = 0, 6.7, 0\n")
        assert cfg["mission.waypoints"] == ((0.0, 0.0, -10.0), (100.0, 0.0, -10.0))
        assert np.allclose(cfg.wind_model().mean, [0, 6.7, 0])
        assert cfg.plan().n_segments == 1

    def test_missing_equals_reports_line(self):
        with pytest.raises(ParseError) as info:
            parse_text("name = a\n\nnonsense line\n")
        assert info.value.lineno == 3

    @pytest.mark.parametrize("text", ["vehicle.wingspan = 3", "nokey = 1", "assert.bogus = 1",
                                      "assert.quad.max_saturation_duty = 0"])
    def test_unknown_keys(self, text):
        with pytest.raises(ValidationError):
            parse_text(text)

    @pytest.mark.parametrize("text", [
        "scenario.duration = abc", "scenario.seed = 1.5", "assert.waypoints_reached = maybe",
        "mission.waypoints = 1,2; 3,4,5",
    ])
    def test_bad_values(self, text):
        with pytest.raises(ValidationError):
            parse_text(text)

    @pytest.mark.parametrize("text, key", [
        ("mode = quad", "scenario.mode"),
        ("duration = 0", "scenario.duration"),
        ("vehicle.mass = -1", "vehicle.*"),
        ("indi.k_att = 1, 0, 1", "indi.k_att"),
        ("outer.hover_pitch_deg = 30, -55", "outer.hover_pitch_deg"),
        ("mission.profile = circuit", "mission.waypoints"),
        ("mission.profile = loop", "mission.profile"),
        ("sim.dt = 0", "sim.dt"),
        ("wind.gust_tau = 0", "wind.*"),
    ])
    def test_validation(self, text, key):
        with pytest.raises(ValidationError) as info:
            parse_text(text)
        assert info.value.key == key

    def test_mode_scoped_assertions(self):
        text = "assert.max_saturation_duty = 0.1\nassert.tre.max_saturation_duty = 0.0\nassert.e_tailsitter.gate_reached = true\n"
        cfg = parse_text(text)
        assert cfg.active_assertions() == {"max_saturation_duty": 0.0}
        cfg.set("scenario.mode", "e_tailsitter")
        assert cfg.active_assertions() == {"max_saturation_duty": 0.1, "gate_reached": True}


class TestRoundTrip:
    @pytest.mark.parametrize("name", CANNED)
    def test_canned_round_trip(self, name):
        cfg = load_canned(name)
        assert parse_text(serialize(cfg)) == cfg

    @given(st.floats(0.1, 1e4), st.integers(0, 2**31), st.floats(-50, 50, allow_nan=False),
           st.sampled_from(["tre", "e_tailsitter", "tr_tailsitter"]))
    def test_values_survive(self, duration, seed, wind, mode):
        cfg = ScenarioConfig()
        cfg.set("scenario.duration", repr(duration))
        cfg.set("scenario.seed", str(seed))
        cfg.set("wind.mean", f"{wind!r}, 0, 0")
        cfg.set("scenario.mode", mode)
        back = parse_text(serialize(cfg.validate()))
        assert back == cfg

    def test_auto_value(self):
        cfg = parse_text("vehicle.iyy_pivot = auto")
        assert cfg["vehicle.iyy_pivot"] is None
        assert "vehicle.iyy_pivot = auto" in serialize(cfg)


class TestCanned:
    def test_all_shipped(self):
        assert canned_scenarios() == CANNED

    @pytest.mark.parametrize("name", CANNED)
    def test_each_has_assertions(self, name):
        assert load_canned(name).assertions

    def test_resolve_by_name_and_path(self, tmp_path):
        p = tmp_path / "x.scn"
        p.write_text("name = from_file\n")
        assert resolve_scenario(str(p)).name == "from_file"
        assert resolve_scenario("hover_hold").name == "hover_hold"
        assert parse_scenario(p).name == "from_file"

    def test_unknown_canned(self):
        with pytest.raises(FileNotFoundError):
            load_canned("does_not_exist")

    def test_full_envelope_wind(self):
        cfg = load_canned("full_envelope")
        assert np.allclose(cfg.wind_model().mean, [0, 6.7, 0])

    def test_builders(self):
        cfg = load_canned("full_envelope")
        assert cfg.pivot_gains().k2 == 6.0
        assert cfg.indi_config().mode == "tre"
        assert cfg.outer_config().pitch_range[0] == pytest.approx(math.radians(-55.0))

    def test_phase_names(self):
        assert phase_names("Hover, Landed") == [FlightPhase.Hover, FlightPhase.Landed]
