"""Command line behavior: exit codes, report emission, seed sweeps."""

import json

import pytest

from twinslice.cli import main
from twinslice.scenario import load_scenario
from twinslice.sim import run_scenario

CLEAN = """\
name: clean
run: {t_end: 500ms, master_seed: 3, formats: [json]}
nodes:
  - {id: 0, kind: core}
  - {id: 1, kind: edge}
  - {id: 2, kind: device}
links:
  - {id: 0, ends: [1, 0], rate: 1gbps, prop_delay: 10us}
  - {id: 1, ends: [2, 1], rate: 100mbps, prop_delay: 10us}
twins:
  - id: imp
    level: individual
    host: 1
    entity: 2
    metrics: [{name: hr, mean: 70, sd: 2}]
workloads:
  - {kind: implant_beacon, id: b, device: 2, twin: imp,
     period: 10ms, payload: 40, energy_per_tx: 10nj, battery: 1j}
"""

LOSSY = CLEAN.replace("name: clean", "name: lossy").replace(
    "rate: 100mbps, prop_delay: 10us", "rate: 100mbps, prop_delay: 10us, loss: 0.5")

BROKEN = """\
name: broken
run: {master_seed: -1}
nodes: [{id: 0, kind: core}, {id: 5, kind: edge}]
links: []
"""


@pytest.fixture
def clean_scn(tmp_path):
    p = tmp_path / "clean.scn"
    p.write_text(CLEAN)
    return p


@pytest.fixture
def lossy_scn(tmp_path):
    p = tmp_path / "lossy.scn"
    p.write_text(LOSSY)
    return p


@pytest.fixture
def broken_scn(tmp_path):
    p = tmp_path / "broken.scn"
    p.write_text(BROKEN)
    return p


def stdout_json(out: str) -> dict:
    return json.loads(out[out.index("{"):])


class TestValidate:
    def test_ok_prints_digest(self, clean_scn, capsys):
        assert main(["validate", str(clean_scn)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("ok: clean (digest ")

    def test_errors_listed_with_count(self, broken_scn, capsys):
        assert main(["validate", str(broken_scn)]) == 2
        out = capsys.readouterr().out
        assert "error: run.master_seed" in out
        assert "error(s)" in out

    def test_missing_file(self, capsys):
        assert main(["validate", "/nonexistent/x.scn"]) == 2
        assert "no such file" in capsys.readouterr().err


class TestRun:
    def test_met_contracts_exit_zero(self, clean_scn, capsys):
        assert main(["run", str(clean_scn)]) == 0
        report = stdout_json(capsys.readouterr().out)
        assert report["scenario"]["name"] == "clean"
        assert report["slices"]["ELPC"]["verdict"] == "met"

    def test_violated_contract_exits_one(self, lossy_scn, capsys):
        assert main(["run", str(lossy_scn)]) == 1
        report = stdout_json(capsys.readouterr().out)
        assert report["slices"]["ELPC"]["verdict"] == "violated(loss)"

    def test_scenario_errors_exit_two(self, broken_scn, capsys):
        assert main(["run", str(broken_scn)]) == 2
        assert "error(s) in" in capsys.readouterr().err

    def test_missing_file_exits_two(self, capsys):
        assert main(["run", "/nonexistent/x.scn"]) == 2

    def test_seed_override(self, clean_scn, capsys):
        assert main(["run", str(clean_scn), "--seed", "99"]) == 0
        assert stdout_json(capsys.readouterr().out)["run"]["master_seed"] == 99

    def test_until_override(self, clean_scn, capsys):
        assert main(["run", str(clean_scn), "--until", "100ms"]) == 0
        report = stdout_json(capsys.readouterr().out)
        assert report["run"]["t_end_ns"] == 100_000_000

    def test_bad_until_exits_two(self, clean_scn, capsys):
        assert main(["run", str(clean_scn), "--until", "later"]) == 2
        assert "--until" in capsys.readouterr().err

    def test_format_both_concatenates(self, clean_scn, capsys):
        assert main(["run", str(clean_scn), "--format", "both"]) == 0
        out = capsys.readouterr().out
        assert out.lstrip().startswith("{")
        assert "\nslice," in out  # csv header follows the json document

    def test_out_writes_files_not_stdout(self, clean_scn, tmp_path, capsys):
        outdir = tmp_path / "reports"
        assert main(["run", str(clean_scn), "--format", "both",
                     "--out", str(outdir)]) == 0
        captured = capsys.readouterr()
        assert captured.out == ""
        assert (outdir / "clean.json").exists()
        assert (outdir / "clean.csv").exists()
        report = json.loads((outdir / "clean.json").read_bytes())
        assert report["scenario"]["name"] == "clean"

    def test_scenario_out_directory_is_default(self, tmp_path, capsys):
        outdir = tmp_path / "autodump"
        doc = CLEAN.replace("formats: [json]}",
                            f"formats: [json], out: {outdir}}}")
        p = tmp_path / "auto.scn"
        p.write_text(doc)
        assert main(["run", str(p)]) == 0
        assert capsys.readouterr().out == ""
        assert (outdir / "auto.json").exists()

    def test_cli_out_overrides_scenario_out(self, tmp_path, capsys):
        scn_dir = tmp_path / "from_scenario"
        cli_dir = tmp_path / "from_cli"
        doc = CLEAN.replace("formats: [json]}",
                            f"formats: [json], out: {scn_dir}}}")
        p = tmp_path / "auto.scn"
        p.write_text(doc)
        assert main(["run", str(p), "--out", str(cli_dir)]) == 0
        capsys.readouterr()
        assert (cli_dir / "auto.json").exists()
        assert not scn_dir.exists()


class TestSweep:
    def test_per_seed_lines_and_summary(self, clean_scn, capsys):
        assert main(["sweep", str(clean_scn), "--seeds", "1,2"]) == 0
        out = capsys.readouterr().out
        assert "seed 1: ok" in out
        assert "seed 2: ok" in out
        summary = stdout_json(out)
        assert summary["seeds"] == [1, 2]
        assert summary["runs"] == 2
        assert summary["verdicts"]["ELPC"] == {"met": 2}

    def test_identical_seeds_reproduce_identical_reports(self, clean_scn, capsys):
        assert main(["sweep", str(clean_scn), "--seeds", "7,7"]) == 0
        out = capsys.readouterr().out
        digests = [line.rsplit("report=", 1)[1]
                   for line in out.splitlines() if line.startswith("seed 7:")]
        assert len(digests) == 2
        assert digests[0] == digests[1]

    def test_single_seed_summary_collapses_to_report(self, clean_scn, capsys):
        assert main(["sweep", str(clean_scn), "--seeds", "9"]) == 0
        summary = stdout_json(capsys.readouterr().out)
        direct = run_scenario(load_scenario(clean_scn), seed=9)
        sent = direct.report["slices"]["ELPC"]["sent"]
        agg = summary["slices"]["ELPC"]["sent"]
        assert agg["mean"] == agg["min"] == agg["max"] == sent

    def test_worst_exit_code_wins(self, lossy_scn, capsys):
        assert main(["sweep", str(lossy_scn), "--seeds", "1,2,3"]) == 1
        out = capsys.readouterr().out
        assert out.count("violated") >= 1

    def test_bad_seed_list(self, clean_scn, capsys):
        assert main(["sweep", str(clean_scn), "--seeds", "1,x"]) == 2
        assert "--seeds" in capsys.readouterr().err

    def test_empty_seed_list(self, clean_scn, capsys):
        assert main(["sweep", str(clean_scn), "--seeds", ","]) == 2

    def test_out_writes_per_seed_reports_and_summary(self, clean_scn, tmp_path, capsys):
        outdir = tmp_path / "sweepout"
        assert main(["sweep", str(clean_scn), "--seeds", "1,2",
                     "--out", str(outdir)]) == 0
        capsys.readouterr()
        assert (outdir / "clean.seed1.json").exists()
        assert (outdir / "clean.seed2.json").exists()
        summary = json.loads((outdir / "clean.summary.json").read_bytes())
        assert summary["runs"] == 2


class TestParser:
    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            main([])

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])
