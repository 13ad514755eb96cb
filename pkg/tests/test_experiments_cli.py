"""Tests for the experiment driver: states, configs, CLI pipeline, scaling fit."""

import math

import numpy as np
import pytest

from shadowtomo.cli import main, parse_observables, CliError
from shadowtomo.experiments import (
    build_state,
    cluster_state,
    fit_variance_scaling,
    ghz_state,
    parse_config,
    read_table_csv,
    write_csv,
)
from shadowtomo.stabilizer import (
    PauliString,
    StabilizerState,
    save_stabilizer_state,
)


class TestStateLibrary:
    def test_ghz3_generators(self):
        gens = {str(g) for g in ghz_state(3).generators}
        assert gens == {"+ZZI", "+IZZ", "+XXX"}

    def test_cluster3_generators(self):
        gens = {str(g) for g in cluster_state(3).generators}
        assert gens == {"+XZZ", "+ZXZ", "+ZZX"}

    def test_custom_file_roundtrip(self, tmp_path):
        state = cluster_state(5)
        path = tmp_path / "state.txt"
        save_stabilizer_state(state, path)
        loaded = build_state(f"file:{path}", 5)
        assert {str(g) for g in loaded.generators} == {str(g) for g in state.generators}

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            build_state("w-state", 4)


class TestConfig:
    def test_parse_and_hash(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("version=1\nstate=ghz\nn=6\nL=2\n# comment\nsamples=100\nseed=3\n")
        cfg = parse_config(p)
        assert cfg.get_int("n") == 6
        assert cfg.require("state") == "ghz"
        assert len(cfg.hash()) == 16

    def test_version_required(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("state=ghz\n")
        with pytest.raises(ValueError):
            parse_config(p)

    def test_bad_line_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("version=1\nnot a pair\n")
        with pytest.raises(ValueError):
            parse_config(p)


class TestObservableParsing:
    def test_zk_range(self):
        obs = parse_observables("zk:1..3", 6, "ghz")
        assert [o[0] for o in obs] == ["Z^1", "Z^2", "Z^3"]
        assert all(o[1] == "pauli" for o in obs)

    def test_pauli_expression(self):
        (obs_id, kind, payload), = parse_observables("pauli:0.5*ZZIIII+1*IXXIII", 6, "ghz")
        assert kind == "terms"
        assert len(payload.terms) == 2

    def test_single_pauli(self):
        (obs_id, kind, payload), = parse_observables("pauli:ZZIIII", 6, "ghz")
        assert kind == "pauli"
        assert isinstance(payload, PauliString)

    def test_fidelity_self_uses_store_label(self):
        (obs_id, kind, payload), = parse_observables("fidelity:self", 6, "cluster")
        assert obs_id == "F(cluster)"
        assert payload.stabilizer_rows is not None

    def test_bad_spec(self):
        with pytest.raises(CliError):
            parse_observables("qft:3", 6, "ghz")


class TestScalingFit:
    def test_exact_recovery(self):
        c0, const0, alpha = 0.4, -7.0, 0.72
        table = []
        for n in (6, 8, 10, 12):
            for ell in (1, 3):
                table.append((n, ell, math.exp(const0 + c0 * n / (ell + 1) ** alpha)))
        fit = fit_variance_scaling(table, alpha=alpha)
        assert fit.c == pytest.approx(c0, abs=1e-6)
        assert fit.const == pytest.approx(const0, abs=1e-6)
        assert max(abs(r) for r in fit.residuals) < 1e-9

    def test_insufficient_points(self):
        with pytest.raises(ValueError, match="insufficient"):
            fit_variance_scaling([(12, 3, 1e-3)])
        with pytest.raises(ValueError, match="insufficient"):
            fit_variance_scaling([(12, 3, 1e-3), (12, 3, 2e-3)])


def write_cfg(path, **kv):
    lines = ["version=1"] + [f"{k}={v}" for k, v in kv.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestCliPipeline:
    def test_full_pipeline_and_determinism(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "run.cfg",
            state="ghz", n=6, L=1, samples=800, seed=7,
            d_w="exact", d_r=4, tol="1e-3", max_iters=6000,
            observable="zk:1..3", aggregation="mean",
            snapshots_out="snaps.txt", r_out="r.txt",
        )
        out1 = tmp_path / "out1"
        out2 = tmp_path / "out2"
        for out in (out1, out2):
            assert main(["sample", "--config", str(cfg), "--out", str(out),
                         "--no-figures"]) == 0
            assert main(["solve-r", "--config", str(cfg), "--out", str(out),
                         "--no-figures"]) == 0
            assert main([
                "estimate", "--config", str(cfg), "--out", str(out),
                "--snapshots", str(out / "snaps.txt"), "--r-file", str(out / "r.txt"),
            ]) == 0
        csv1 = (out1 / "estimates.csv").read_bytes()
        csv2 = (out2 / "estimates.csv").read_bytes()
        assert csv1 == csv2  # identical config + seed -> byte-identical CSV
        assert (out1 / "estimates.png").exists()
        header, rows = read_table_csv(out1 / "estimates.csv")
        assert header[0] == "observable_id"
        assert len(rows) == 3
        # Z^2 on GHZ is 1 exactly; sampled estimate lands near it
        z2 = [r for r in rows if r[0] == "Z^2"][0]
        assert abs(float(z2[4]) - 1.0) < 0.25

    def test_estimate_refuses_metadata_mismatch(self, tmp_path, capsys):
        cfg_a = write_cfg(
            tmp_path / "a.cfg",
            state="ghz", n=6, L=1, samples=50, seed=1,
            d_w="exact", d_r=2, tol="5e-2", max_iters=500,
            observable="zk:1", snapshots_out="snaps.txt", r_out="r.txt",
        )
        cfg_b = write_cfg(
            tmp_path / "b.cfg",
            state="ghz", n=6, L=2, samples=50, seed=1,
            d_w="exact", d_r=2, tol="5e-2", max_iters=500,
            observable="zk:1", snapshots_out="snaps.txt", r_out="r.txt",
        )
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["sample", "--config", str(cfg_a), "--out", str(out_a),
                     "--no-figures"]) == 0
        assert main(["solve-r", "--config", str(cfg_b), "--out", str(out_b),
                     "--no-figures"]) == 0
        code = main([
            "estimate", "--config", str(cfg_a), "--out", str(out_a),
            "--snapshots", str(out_a / "snaps.txt"), "--r-file", str(out_b / "r.txt"),
        ])
        assert code != 0
        err = capsys.readouterr().err
        assert "ERROR metadata-mismatch" in err

    def test_norm_and_scan_commands(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "norm.cfg",
            n=16, k_values="1,2,3,4", l_values="0,1,2", d_w=2, seed=0,
        )
        out = tmp_path / "out"
        assert main(["norm", "--config", str(cfg), "--out", str(out)]) == 0
        header, rows = read_table_csv(out / "norms.csv")
        assert header == ["k", "L", "norm"]
        vals = {(int(r[0]), int(r[1])): float(r[2]) for r in rows}
        assert vals[(2, 0)] == pytest.approx(9.0, rel=1e-10)
        assert vals[(2, 1)] == pytest.approx(5.0, rel=1e-10)
        assert (out / "norms.png").exists()
        assert main(["scan", "--config", str(cfg), "--out", str(out)]) == 0
        header, rows = read_table_csv(out / "scan.csv")
        assert header == ["k", "L", "norm", "l_star", "fit_a", "fit_b"]
        assert (out / "scan.png").exists()

    def test_fit_scaling_command(self, tmp_path):
        rows = []
        for n in (6, 8, 10, 12):
            var = math.exp(-6.0 + 0.4 * n / 4 ** 0.72)
            rows.append((f"F", n, 3, 1000, 1.0, var, 0.0, "mom:12"))
        table = tmp_path / "table.csv"
        write_csv(table, ["observable_id", "n", "L", "M", "estimate", "variance",
                          "stderr", "aggregation"], rows, "test")
        cfg = write_cfg(tmp_path / "fit.cfg", alpha=0.72)
        out = tmp_path / "out"
        assert main(["fit-scaling", "--config", str(cfg), "--out", str(out),
                     "--table", str(table)]) == 0
        header, fitrows = read_table_csv(out / "scaling_fit.csv")
        assert float(fitrows[0][header.index("c")]) == pytest.approx(0.4, abs=1e-6)
        assert (out / "scaling_fit.png").exists()

    def test_fit_scaling_insufficient_points(self, tmp_path, capsys):
        table = tmp_path / "table.csv"
        write_csv(table, ["n", "L", "variance"], [(12, 3, 1e-3)], "test")
        cfg = write_cfg(tmp_path / "fit.cfg")
        code = main(["fit-scaling", "--config", str(cfg), "--out", str(tmp_path),
                     "--table", str(table)])
        assert code != 0
        assert "ERROR insufficient-points" in capsys.readouterr().err

    def test_missing_snapshot_file(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", observable="zk:1")
        code = main(["estimate", "--config", str(cfg), "--out", str(tmp_path),
                     "--snapshots", str(tmp_path / "nope.txt"),
                     "--r-file", str(tmp_path / "nope_r.txt")])
        assert code != 0
        assert "ERROR missing-input" in capsys.readouterr().err
