import json
import subprocess
import sys
from pathlib import Path

import pytest

from sharpfactor import instance_to_dict, make_minimizer
from sharpfactor.serialize import json_dump


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "sharpfactor.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


class TestSharpnessCommand:
    def test_identity_depth2(self):
        proc = run_cli("sharpness", "--dims", "2,2,2", "--identity")
        assert proc.returncode == 0
        doc = json.loads(proc.stdout)
        assert doc["lambda_max"] == 4.0
        assert doc["method"] == "depth2"

    def test_identity_deep_chain_general(self):
        proc = run_cli("sharpness", "--dims", "3,3,3,3", "--identity", "--method", "general")
        doc = json.loads(proc.stdout)
        assert doc["lambda_max"] == pytest.approx(6.0, rel=1e-12)
        assert doc["method"] == "general_kron"

    def test_malformed_dims_exit_2(self):
        proc = run_cli("sharpness", "--dims", "2,0,2")
        assert proc.returncode == 2
        err = json.loads(proc.stderr)
        assert err["error"] == "infeasible_signature"

    def test_direction_flag_included(self):
        proc = run_cli("sharpness", "--dims", "1,3,1", "--seed", "5", "--direction")
        doc = json.loads(proc.stdout)
        assert "direction" in doc
        assert len(doc["direction"]) == 2


class TestVerifyCommand:
    def test_random_scalar_instance_passes(self):
        proc = run_cli("verify", "--dims", "1,9,4,8,1", "--seed", "7")
        assert proc.returncode == 0
        doc = json.loads(proc.stdout)
        assert doc["pass"] is True
        assert doc["n"] == 85
        assert doc["pairwise_rel_err"]["general_vs_dense"] <= 1e-8

    def test_depth2_instance_passes(self):
        proc = run_cli("verify", "--dims", "6,8,5", "--seed", "3")
        doc = json.loads(proc.stdout)
        assert doc["pass"] is True
        assert "general_vs_special" in doc["pairwise_rel_err"]
        assert doc["pairwise_rel_err"]["general_vs_special"] <= 1e-10

    def test_identity_chain_exact(self):
        proc = run_cli("verify", "--dims", "2,2,2", "--identity")
        doc = json.loads(proc.stdout)
        assert doc["pass"] is True
        assert doc["pairwise_rel_err"]["general_vs_dense"] <= 1e-12

    def test_perturbed_instance_exit_3(self, tmp_path):
        chain, target = make_minimizer((3, 4, 3), seed=0)
        doc = instance_to_dict(chain, target, seed=0)
        doc["factors"][0][0] += 0.25
        path = tmp_path / "bad_instance.json"
        json_dump(doc, path)
        proc = run_cli("verify", "--instance", str(path))
        assert proc.returncode == 3
        err = json.loads(proc.stderr)
        assert err["error"] == "not_certified_minimizer"

    def test_size_cap_exit_5(self, tmp_path):
        config = {"kind": "verify", "dims": [40, 40, 40], "seed": 0}
        path = tmp_path / "config.json"
        json_dump(config, path)
        proc = run_cli("verify", "--config", str(path))
        # 40^2 * 3200 exceeds the default entry cap
        assert proc.returncode == 5
        err = json.loads(proc.stderr)
        assert err["error"] == "size_cap_exceeded"


class TestEscapeCommand:
    def test_fig_regimes_and_files(self, tmp_path):
        out = tmp_path / "out"
        proc = run_cli("escape", "--dims", "20,20,10", "--seed", "0,1",
                       "--eta-multipliers", "0.9,1.0,1.1,2.0",
                       "--radius", "1e-9", "--max-iters", "3000",
                       "--out", str(out))
        assert proc.returncode == 0
        report = json.loads((out / "escape_report.json").read_text())
        cells = {(c["seed"], c["eta_multiplier"]): c for c in report["cells"]}
        for seed in (0, 1):
            assert cells[(seed, 0.9)]["classification"] == "stable"
            assert cells[(seed, 0.9)]["escaped"] is False
            assert cells[(seed, 1.0)]["classification"] == "marginal"
            assert cells[(seed, 1.1)]["classification"] == "unstable"
            assert cells[(seed, 1.1)]["escaped"] is True
            assert cells[(seed, 2.0)]["escaped"] is True
        for name in report["trajectory_files"]:
            assert (out / name).exists()

    def test_scalar_15_layer_verdict_pattern(self, tmp_path):
        out = tmp_path / "out"
        proc = run_cli("escape", "--dims", "1,7,2,1,6,3,4,1,3,6,3,7,7,6,8,1",
                       "--seed", "0", "--eta-multipliers", "0.9,1.0,1.1,2.0",
                       "--radius", "1e-9", "--max-iters", "3000",
                       "--out", str(out))
        assert proc.returncode == 0
        report = json.loads((out / "escape_report.json").read_text())
        pattern = [(c["classification"], c["escaped"]) for c in report["cells"]]
        assert pattern[0] == ("stable", False)
        assert pattern[1][0] == "marginal"   # outcome recorded, not asserted
        assert pattern[2] == ("unstable", True)
        assert pattern[3] == ("unstable", True)

    def test_tiny_radius_still_escapes(self, tmp_path):
        out = tmp_path / "out"
        proc = run_cli("escape", "--dims", "20,20,10", "--seed", "0,1,2",
                       "--eta-multipliers", "1.1,2.0",
                       "--radius", "1e-15", "--max-iters", "5000",
                       "--out", str(out))
        assert proc.returncode == 0
        report = json.loads((out / "escape_report.json").read_text())
        assert all(cell["escaped"] for cell in report["cells"])

    def test_empty_multiplier_grid_rejected(self, tmp_path):
        proc = run_cli("escape", "--dims", "2,3,2", "--eta-multipliers", "",
                       "--out", str(tmp_path / "x"))
        assert proc.returncode == 2

    def test_unknown_config_field_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        json_dump({"kind": "escape", "dims": [2, 3, 2], "step_sizes": [0.1]}, path)
        proc = run_cli("escape", "--config", str(path), "--out", str(tmp_path / "x"))
        assert proc.returncode == 2
        assert "step_sizes" in json.loads(proc.stderr)["message"]


class TestContourCommand:
    def test_hessian_basis_center_zero(self, tmp_path):
        out = tmp_path / "out"
        proc = run_cli("contour", "--dims", "2,3,2", "--seed", "4",
                       "--grid", "3,3,1e-4,1e-4", "--out", str(out))
        assert proc.returncode == 0
        rows = (out / "grid.csv").read_text().splitlines()
        assert rows[0] == "x,y,p"
        center = rows[1 + 1 * 3 + 1].split(",")
        assert center[0] == "0" and center[1] == "0"
        assert float(center[2]) == 0.0
        basis = json.loads((out / "basis.json").read_text())
        assert basis["mode"] == "hessian_v1_vN"
        assert basis["origin_ref"] == "instance.json"

    def test_overlay_rows_align_with_trajectory(self, tmp_path):
        out = tmp_path / "out"
        proc = run_cli("contour", "--dims", "2,3,2", "--seed", "4",
                       "--grid", "3,3,1e-4,1e-4", "--overlay", "1.1,1e-9,40",
                       "--out", str(out))
        assert proc.returncode == 0
        lines = (out / "overlay.csv").read_text().splitlines()
        assert lines[0] == "iter,loss,norm_loss,norm_dist,proj_x,proj_y"
        assert len(lines) == 1 + 41
        first = lines[1].split(",")
        assert float(first[4]) == pytest.approx(1e-9, rel=1e-6)
        assert abs(float(first[5])) <= 1e-12


class TestDeterminism:
    def test_sharpness_stdout_identical(self):
        a = run_cli("sharpness", "--dims", "4,5,4,6,4", "--seed", "11")
        b = run_cli("sharpness", "--dims", "4,5,4,6,4", "--seed", "11")
        assert a.stdout == b.stdout and a.returncode == 0

    def test_verify_stdout_identical(self):
        a = run_cli("verify", "--dims", "3,4,5,3", "--seed", "2")
        b = run_cli("verify", "--dims", "3,4,5,3", "--seed", "2")
        assert a.stdout == b.stdout and a.returncode == 0

    def test_escape_outputs_byte_identical(self, tmp_path):
        args = ("escape", "--dims", "4,5,4", "--seed", "0,1",
                "--eta-multipliers", "0.9,1.1", "--radius", "1e-9",
                "--max-iters", "500")
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        ra = run_cli(*args, "--out", str(out_a))
        rb = run_cli(*args, "--out", str(out_b))
        assert ra.returncode == rb.returncode == 0
        assert ra.stdout == rb.stdout
        assert tree_bytes(out_a) == tree_bytes(out_b)

    def test_contour_outputs_byte_identical(self, tmp_path):
        args = ("contour", "--dims", "2,3,2", "--seed", "4", "--basis", "random",
                "--grid", "4,4,0.5,0.5")
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        ra = run_cli(*args, "--out", str(out_a))
        rb = run_cli(*args, "--out", str(out_b))
        assert ra.returncode == rb.returncode == 0
        assert tree_bytes(out_a) == tree_bytes(out_b)


class TestConfigFile:
    def test_config_drives_command_and_flags_override(self, tmp_path):
        path = tmp_path / "config.json"
        json_dump({"kind": "sharpness", "dims": [2, 2, 2], "identity": True}, path)
        via_config = run_cli("sharpness", "--config", str(path))
        assert json.loads(via_config.stdout)["lambda_max"] == 4.0
        overridden = run_cli("sharpness", "--config", str(path), "--dims", "3,3,3")
        assert json.loads(overridden.stdout)["lambda_max"] == 4.0  # identity 3x3 still depth 2

    def test_kind_alias_scalar_chain(self, tmp_path):
        path = tmp_path / "config.json"
        json_dump({"kind": "scalar_chain", "dims": [1, 4, 1], "seed": 3}, path)
        proc = run_cli("sharpness", "--config", str(path))
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["method"] == "scalar_chain"

    def test_kind_mismatch_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        json_dump({"kind": "escape", "dims": [2, 3, 2]}, path)
        proc = run_cli("sharpness", "--config", str(path))
        assert proc.returncode == 2
