"""Simulation orchestration: wiring, admission outcomes, alert escalation."""

import pytest

from twinslice.scenario import ScenarioError, scenario_from_dict
from twinslice.sim import Simulation, run_scenario
from twinslice.slices import Flow, SliceClass


def build(doc):
    return scenario_from_dict(doc)


def hierarchy_doc(**over):
    """Beacon device feeding a three-level twin chain with alert rules."""
    doc = {
        "name": "alerts",
        "run": {"t_end": "500ms", "master_seed": 5, "formats": ["json"]},
        "nodes": [{"id": 0, "kind": "core"}, {"id": 1, "kind": "edge"},
                  {"id": 2, "kind": "device"}],
        "links": [{"id": 0, "ends": [1, 0], "rate": "1gbps", "prop_delay": "10us"},
                  {"id": 1, "ends": [2, 1], "rate": "100mbps", "prop_delay": "10us"}],
        "twins": [
            {"id": "pt", "level": "individual", "host": 1, "entity": 2,
             "sync_period": "100ms",
             "metrics": [{"name": "heart_rate", "mean": 130, "sd": 0}],
             "alerts": [{"metric": "heart_rate", "threshold": 120}]},
            {"id": "ge", "level": "global_edge", "host": 1,
             "policy": {"heart_rate": "mean"},
             "alerts": [{"metric": "heart_rate", "threshold": 120}]},
            {"id": "gc", "level": "global_core", "host": 0,
             "policy": {"heart_rate": "mean"}},
        ],
        "workloads": [{
            "kind": "implant_beacon", "id": "imp", "device": 2, "twin": "pt",
            "period": "100ms", "payload": 40, "energy_per_tx": "10nj",
            "battery": "1j", "duration": "500ms",
        }],
    }
    doc.update(over)
    return doc


@pytest.fixture(scope="module")
def result():
    return run_scenario(build(hierarchy_doc()))


class TestAlertEscalation:
    def test_individual_rule_fires_once_with_hysteresis(self, result):
        # Constant 130 crosses the 120 threshold on the first sample and then
        # stays above it, so the rule cannot re-arm.
        assert result.report["twins"]["pt"]["alerts_fired"] == 1

    def test_alert_lands_in_parent_state(self, result):
        state = result.report["twins"]["ge"]["state"]
        assert state["alert:pt:heart_rate"]["value"] == 130.0
        assert state["alert:pt:heart_rate"]["version"] == 1

    def test_parent_rule_cascades_to_core(self, result):
        assert result.report["twins"]["ge"]["alerts_fired"] == 1
        assert "alert:ge:heart_rate" in result.report["twins"]["gc"]["state"]

    def test_alerts_ride_the_low_latency_class(self, result):
        # One co-hosted hop (pt -> ge) plus one edge-to-core hop (ge -> gc).
        row = result.report["slices"]["ERLLC"]
        assert row["sent"] == 2
        assert row["delivered"] == 2
        assert row["verdict"] == "met"

    def test_alert_flows_are_pinned_open(self, result):
        flows = result.sim.flows
        assert flows["alerts.pt"].preadmitted and flows["alerts.pt"].admitted
        assert flows["alerts.pt"].setup_latency_ns == 0
        assert flows["alerts.ge"].setup_latency_ns == 0

    def test_aggregated_value_reaches_core_state(self, result):
        # Singleton mean preserves the constant sample up both levels.
        assert result.report["twins"]["gc"]["state"]["heart_rate"]["value"] == 130.0


class TestAdmissionOutcomes:
    def test_capacity_rejection_reported_and_silent(self):
        doc = hierarchy_doc(workloads=[{
            "kind": "telemedicine_stream", "id": "fat", "src": 2, "dst": 0,
            "bitrate": "200mbps", "frame_size": 1200,  # access link is 100 Mb/s
        }], twins=[])
        res = run_scenario(build(doc))
        assert res.report["flows"]["rejected"] == [{"flow": "fat", "reason": "capacity"}]
        assert res.report["slices"]["FeMBB"]["sent"] == 0
        assert res.report["slices"]["FeMBB"]["verdict"] == "no-data"
        assert res.report["workloads"]["fat"]["frames_emitted"] == 0

    def test_delay_rejection_from_setup_cost(self):
        # Two 300 us hops: session setup alone (2 RTTs = 2.4 ms) overruns the
        # 1 ms latency contract, so the loop is refused up front.
        doc = hierarchy_doc(
            links=[{"id": 0, "ends": [1, 0], "rate": "1gbps", "prop_delay": "300us"},
                   {"id": 1, "ends": [2, 1], "rate": "100mbps", "prop_delay": "300us"}],
            workloads=[{"kind": "surgery_loop", "id": "op", "src": 2, "dst": 0,
                        "cmd_rate": 10, "cmd_size": 64}],
            twins=[])
        res = run_scenario(build(doc))
        assert res.report["flows"]["rejected"] == [{"flow": "op", "reason": "delay"}]
        assert res.report["slices"]["ERLLC"]["sent"] == 0

    def test_detached_mobile_source_is_unreachable(self):
        doc = {
            "name": "detached",
            "run": {"t_end": "100ms", "master_seed": 1, "formats": ["json"]},
            "nodes": [{"id": 0, "kind": "core"}, {"id": 1, "kind": "edge"},
                      {"id": 2, "kind": "edge"},
                      {"id": 3, "kind": "device", "mobile": True}],
            "links": [{"id": 0, "ends": [1, 0], "rate": "1gbps", "prop_delay": "10us"},
                      {"id": 1, "ends": [2, 0], "rate": "1gbps", "prop_delay": "10us"},
                      {"id": 2, "ends": [3, 1], "rate": "100mbps", "prop_delay": "10us"},
                      {"id": 3, "ends": [3, 2], "rate": "100mbps", "prop_delay": "10us"}],
            "workloads": [{"kind": "telemedicine_stream", "id": "s", "src": 3,
                           "dst": 0, "bitrate": "1mbps", "frame_size": 500}],
        }
        res = run_scenario(build(doc))
        assert res.report["flows"]["rejected"] == [{"flow": "s", "reason": "unreachable"}]

    def test_preadmit_overrides_rejection(self):
        doc = hierarchy_doc(workloads=[{
            "kind": "telemedicine_stream", "id": "fat", "src": 2, "dst": 0,
            "bitrate": "200mbps", "frame_size": 1200, "preadmit": True,
            "duration": "1ms",
        }], twins=[])
        res = run_scenario(build(doc))
        assert res.report["flows"]["rejected"] == []
        assert res.report["workloads"]["fat"]["frames_emitted"] > 0


class TestRunDiscipline:
    def test_a_simulation_runs_once(self):
        sim = Simulation(build(hierarchy_doc()))
        sim.run()
        with pytest.raises(RuntimeError, match="runs once"):
            sim.run()

    def test_horizon_override_must_be_positive(self):
        with pytest.raises(ScenarioError):
            Simulation(build(hierarchy_doc()), t_end=0)

    def test_duplicate_flow_id_rejected(self):
        sim = Simulation(build(hierarchy_doc()))
        flow = Flow(id="dup", slice_cls=SliceClass.UMMTC, src=2, dst=1, demand_bps=1)
        sim.admit_flow(flow)
        with pytest.raises(ScenarioError):
            sim.admit_flow(Flow(id="dup", slice_cls=SliceClass.UMMTC, src=2, dst=1, demand_bps=1))

    def test_seed_override_changes_report_not_structure(self):
        scn = build(hierarchy_doc())
        a = run_scenario(scn, seed=1)
        b = run_scenario(scn, seed=2)
        assert a.report["run"]["master_seed"] == 1
        assert b.report["run"]["master_seed"] == 2
        assert a.report["slices"].keys() == b.report["slices"].keys()

    def test_self_addressed_flow_delivers_in_place(self):
        doc = hierarchy_doc(workloads=[{
            "kind": "telemedicine_stream", "id": "loop", "src": 2, "dst": 2,
            "bitrate": "1mbps", "frame_size": 500, "duration": "10ms",
        }], twins=[])
        res = run_scenario(build(doc))
        row = res.report["slices"]["FeMBB"]
        assert row["sent"] == row["delivered"] > 0
        assert row["max_ns"] == 0  # zero hops, zero setup


class TestReportShape:
    def test_run_section(self, result):
        run = result.report["run"]
        assert run["t_end_ns"] == 500_000_000
        assert run["master_seed"] == 5
        assert run["events_processed"] > 0

    def test_all_five_slices_always_reported(self, result):
        assert list(result.report["slices"]) == ["FeMBB", "ERLLC", "LDHMC", "umMTC", "ELPC"]

    def test_exit_code_tracks_verdicts(self, result):
        assert result.violated is False
        assert result.exit_code == 0

    def test_json_bytes_stable_within_run(self, result):
        assert result.json_bytes() == result.json_bytes()
        assert result.json_bytes().endswith(b"\n")

    def test_csv_covers_active_slices_only(self, result):
        body = result.csv_bytes().decode()
        lines = body.strip().split("\n")
        # header + ERLLC (alerts) + umMTC (twin pushes) + ELPC (beacon)
        assert len(lines) == 4
        assert lines[0].startswith("slice,")
