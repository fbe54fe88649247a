import json
from pathlib import Path

import yaml
from click.testing import CliRunner

from locoman.cli import main
from locoman.config import Config

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "cart_delivery.yaml"


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


class TestRun:
    def test_writes_run_directory(self, tmp_path):
        out = tmp_path / "run"
        res = invoke("run", SCENARIO, "--seed", 1, "--out", out)
        assert res.exit_code == 0, res.output
        assert (out / "manifest.json").exists()
        assert (out / "aggregate.json").exists()
        assert (out / "cart_delivery" / "episode_0" / "trace.csv").exists()
        report = json.loads(
            (out / "cart_delivery" / "episode_0" / "report.json").read_text())
        assert report["overall"] is True
        assert report["per_action"]["pick"]["rate"] == 1.0

    def test_manifest_contents(self, tmp_path):
        out = tmp_path / "run"
        invoke("run", SCENARIO, "--seed", 9, "--episodes", 2, "--out", out)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 9
        assert manifest["episodes"] == 2
        assert manifest["config_hash"] == Config().digest()
        assert len(manifest["scenarios"][0]["sha256"]) == 64

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        invoke("run", SCENARIO, "--seed", 4, "--episodes", 2, "--out", a)
        invoke("run", SCENARIO, "--seed", 4, "--episodes", 2, "--out", b)
        for rel in sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file()):
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_jobs_matches_serial(self, tmp_path):
        a, b = tmp_path / "serial", tmp_path / "parallel"
        invoke("run", SCENARIO, "--seed", 4, "--episodes", 2, "--out", a)
        invoke("run", SCENARIO, "--seed", 4, "--episodes", 2, "--jobs", 2,
               "--out", b)
        for rel in sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file()):
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_aggregate_episode_count(self, tmp_path):
        out = tmp_path / "run"
        invoke("run", SCENARIO, "--episodes", 3, "--out", out)
        agg = json.loads((out / "aggregate.json").read_text())
        assert agg["episodes"] == 3

    def test_flag_overrides_config_file(self, tmp_path):
        # config requests heavy base lag; the flag restores instant tracking
        cfg = tmp_path / "config.yaml"
        base = Config().to_dict()
        base["tracking"]["tau_base"] = 0.5
        cfg.write_text(yaml.safe_dump(base))
        out_cfg = tmp_path / "lagged"
        out_flag = tmp_path / "instant"
        invoke("run", SCENARIO, "--config", cfg, "--out", out_cfg)
        invoke("run", SCENARIO, "--config", cfg, "--tau-base", 0.0,
               "--out", out_flag)
        lag = json.loads((out_cfg / "aggregate.json").read_text())
        instant = json.loads((out_flag / "aggregate.json").read_text())
        assert lag["e_x"] > 0.0
        assert instant["e_x"] == 0.0
        manifest = json.loads((out_flag / "manifest.json").read_text())
        assert manifest["tracking"]["tau_base"] == 0.0

    def test_missing_scenario_io_exit(self, tmp_path):
        res = invoke("run", tmp_path / "nope.yaml", "--out", tmp_path / "o")
        assert res.exit_code == 4

    def test_invalid_scenario_config_exit(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump({"name": "x"}))
        res = invoke("run", bad, "--out", tmp_path / "o")
        assert res.exit_code == 3

    def test_usage_error_exit(self, tmp_path):
        res = invoke("run", SCENARIO, "--episodes", 0, "--out", tmp_path / "o")
        assert res.exit_code == 2
        res = invoke("run", SCENARIO, "--dt", -0.1, "--out", tmp_path / "o")
        assert res.exit_code == 2


class TestValidate:
    def test_ok(self):
        res = invoke("validate", SCENARIO)
        assert res.exit_code == 0
        assert "ok" in res.output

    def test_invalid(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        data = yaml.safe_load(SCENARIO.read_text())
        data["objects"][0].pop("id")
        bad.write_text(yaml.safe_dump(data))
        res = invoke("validate", bad)
        assert res.exit_code == 3
        assert "objects[0]" in res.output

    def test_missing_file(self, tmp_path):
        res = invoke("validate", tmp_path / "nope.yaml")
        assert res.exit_code == 4


class TestExportGrid:
    def test_writes_raster_pair(self, tmp_path):
        res = invoke("export-grid", SCENARIO, "--out", tmp_path / "map")
        assert res.exit_code == 0
        raw = (tmp_path / "map.pgm").read_bytes()
        assert raw.startswith(b"P5\n")
        assert "resolution" in (tmp_path / "map.hdr").read_text()


class TestRewardsCommand:
    def _timeline(self, path):
        rows = ["t,contact_FL,contact_FR,contact_RL,contact_RR,cmd_vx,act_vx"]
        for k in range(100):
            t = 0.02 * (k + 1)
            diag_a = int((t * 2.0) % 1.0 < 0.5)
            rows.append(f"{t},{diag_a},{1 - diag_a},{1 - diag_a},{diag_a},0.5,0.5")
        path.write_text("\n".join(rows) + "\n")

    def test_evaluates_terms(self, tmp_path):
        src = tmp_path / "timeline.csv"
        out = tmp_path / "terms.csv"
        self._timeline(src)
        res = invoke("rewards", src, "--out", out)
        assert res.exit_code == 0, res.output
        lines = out.read_text().splitlines()
        header = lines[0].split(",")
        for col in ("t", "track_xy", "track_yaw", "gait", "freq",
                    "torque_arm", "total_stage1", "total_stage2"):
            assert col in header
        last = dict(zip(header, lines[-1].split(",")))
        assert float(last["track_xy"]) == 1.0  # cmd_vx == act_vx throughout

    def test_ideal_trot_gait_settles_at_one(self, tmp_path):
        src = tmp_path / "timeline.csv"
        out = tmp_path / "terms.csv"
        self._timeline(src)
        invoke("rewards", src, "--out", out)
        lines = out.read_text().splitlines()
        header = lines[0].split(",")
        gait = [float(dict(zip(header, ln.split(",")))["gait"])
                for ln in lines[1:]]
        # once every leg has completed a stint the trot scores exactly 1
        assert all(v == 1.0 for v in gait[-50:])

    def test_empty_timeline_gives_empty_trace(self, tmp_path):
        src = tmp_path / "empty.csv"
        src.write_text("t,contact_FL,contact_FR,contact_RL,contact_RR\n")
        out = tmp_path / "o.csv"
        res = invoke("rewards", src, "--out", out)
        assert res.exit_code == 0
        assert out.read_text().splitlines() == ["t"]

    def test_missing_timeline(self, tmp_path):
        res = invoke("rewards", tmp_path / "nope.csv", "--out", tmp_path / "o.csv")
        assert res.exit_code == 4

    def test_bad_rows_config_exit(self, tmp_path):
        src = tmp_path / "bad.csv"
        src.write_text("t,contact_FL\n0.02,1\n")
        res = invoke("rewards", src, "--out", tmp_path / "o.csv")
        assert res.exit_code == 3
