import json
import math

import pytest

from exp3mle.cli import main


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture
def trajectory_file(tmp_path):
    path = tmp_path / "t.json"
    code = run_cli(
        "simulate", "--k", "2", "--losses", "0.8,0", "--eta", "0.3",
        "--n", "120", "--seed", "7", "--out", str(path),
    )
    assert code == 0
    return path


class TestSimulate:
    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        for out in (a, b):
            assert run_cli(
                "simulate", "--k", "2", "--losses", "0.8,0", "--eta", "0.3",
                "--n", "100", "--seed", "7", "--out", str(out),
            ) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_schema(self, trajectory_file):
        data = json.loads(trajectory_file.read_text())
        assert set(data) == {"spec", "schedule", "n", "seed", "arms"}
        assert data["schedule"] == {"kind": "constant", "eta": 0.3}
        assert len(data["arms"]) == 120

    def test_k_mismatch_is_domain_error(self, capsys):
        assert run_cli("simulate", "--k", "3", "--losses", "0.8,0",
                       "--eta", "0.3", "--n", "10", "--seed", "1") == 1
        assert "error" in capsys.readouterr().err

    def test_unsorted_losses_rejected(self):
        assert run_cli("simulate", "--losses", "0.1,0.8", "--eta", "0.3",
                       "--n", "10", "--seed", "1") == 1

    def test_unknown_flag_rejected(self):
        with pytest.raises(SystemExit) as excinfo:
            run_cli("simulate", "--bogus", "1")
        assert excinfo.value.code == 2


class TestEstimate:
    def test_constant_round_trip(self, trajectory_file, tmp_path, capsys):
        out = tmp_path / "est.json"
        code = run_cli(
            "estimate", "--trajectory", str(trajectory_file), "--mode", "constant",
            "--theta", "0.1,0.8", "--maxiter", "25", "--seed", "3", "--out", str(out),
        )
        assert code == 0
        result = json.loads(out.read_text())
        assert 0.1 <= result["eta0_hat"] <= 0.8
        assert result["mode"] == "constant"

    def test_truncated_mode(self, tmp_path):
        traj = tmp_path / "poly.json"
        run_cli("simulate", "--losses", "0.8,0.6,0.4,0.2", "--eta0", "0.3",
                "--alpha", "0.5", "--n", "400", "--seed", "5", "--out", str(traj))
        out = tmp_path / "est.json"
        code = run_cli(
            "estimate", "--trajectory", str(traj), "--mode", "truncated",
            "--theta", "0.1,0.8", "--alpha", "0.5", "--epsilon", "1e-7",
            "--maxiter", "25", "--seed", "4", "--out", str(out),
        )
        assert code == 0
        result = json.loads(out.read_text())
        assert result["upsilon_used"] >= 1
        assert result["eta_n_hat"] == pytest.approx(
            result["eta0_hat"] / (400**0.5 * 0.8), rel=1e-12)

    def test_missing_file_is_io_error(self):
        assert run_cli("estimate", "--trajectory", "does_not_exist.json",
                       "--mode", "constant") == 2

    def test_malformed_theta_is_domain_error(self, trajectory_file):
        assert run_cli("estimate", "--trajectory", str(trajectory_file),
                       "--mode", "constant", "--theta", "0.1") == 1


class TestLikelihood:
    def test_full_mode(self, trajectory_file, capsys):
        assert run_cli("likelihood", "--trajectory", str(trajectory_file),
                       "--delta0", "0.3", "--truncate", "none") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["evaluated_steps"] == 120
        assert payload["upsilon_used"] == 120
        assert not payload["neg_infinity"]

    def test_theory_mode(self, tmp_path, capsys):
        traj = tmp_path / "poly.json"
        run_cli("simulate", "--losses", "0.8,0", "--eta0", "0.3", "--alpha", "0.5",
                "--n", "900", "--seed", "2", "--out", str(traj))
        assert run_cli("likelihood", "--trajectory", str(traj), "--delta0", "0.3",
                       "--alpha", "0.5", "--epsilon", "0.01", "--truncate", "theory",
                       "--theta", "0.1,0.8") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["upsilon_used"] == math.floor((0.5 - 0.01) * 30.0 / 0.8)


class TestKL:
    def test_csv_output(self, capsys):
        assert run_cli("kl", "--eta", "0.3", "--delta", "0.25", "--pi1", "0.8",
                       "--n", "20,50", "--reps", "500", "--seed", "1") == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "n,eta,delta,kl_exact,kl_mc,stderr"
        assert len(lines) == 3
        first = lines[1].split(",")
        assert int(first[0]) == 20
        assert float(first[3]) >= 0.0


class TestBounds:
    def test_tetration_margins_csv(self, capsys):
        assert run_cli("bounds", "--tetration", "--eta", "0.3", "--pi1", "0.8",
                       "--kmax", "5") == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "i,q_i,bound,margin"
        rows = [line.split(",") for line in lines[1:]]
        assert all(float(r[3]) >= 0.0 for r in rows)

    def test_missing_family_flag(self):
        assert run_cli("bounds", "--eta", "0.3", "--pi1", "0.8") == 1


class TestExperiment:
    def test_inline_config_round_trip(self, tmp_path):
        config = {
            "name": "mini",
            "mode": "constant",
            "losses": [0.8, 0.0],
            "eta": 0.3,
            "theta": [0.1, 0.8],
            "n_values": [150, 300],
            "replications": 2,
            "base_seed": 11,
            "optimizer": {"max_iterations": 15},
        }
        cfg_path = tmp_path / "mini.json"
        cfg_path.write_text(json.dumps(config))
        out = tmp_path / "out"
        assert run_cli("experiment", "--config", str(cfg_path),
                       "--out-dir", str(out)) == 0
        csv_text = (out / "mini.csv").read_text()
        assert csv_text.splitlines()[0].startswith("n,rep,seed")
        aggregates = json.loads((out / "mini_aggregates.json").read_text())
        assert aggregates["mode"] == "constant"
        # rerun into a second directory: byte-identical CSV
        out2 = tmp_path / "out2"
        assert run_cli("experiment", "--config", str(cfg_path),
                       "--out-dir", str(out2), "--jobs", "2") == 0
        assert (out2 / "mini.csv").read_bytes() == (out / "mini.csv").read_bytes()

    def test_packaged_preset_resolves(self, tmp_path):
        # the preset name resolves through package data even from elsewhere
        config = {
            "name": "tiny_curve",
            "mode": "likelihood_curve",
            "losses": [0.8, 0.0],
            "eta": 0.3,
            "n": 80,
            "seed": 4,
            "theta": [0.1, 0.8],
            "points": 11,
        }
        cfg_path = tmp_path / "tiny_curve.json"
        cfg_path.write_text(json.dumps(config))
        out = tmp_path / "curve_out"
        assert run_cli("experiment", "--config", str(cfg_path),
                       "--out-dir", str(out), "--svg") == 0
        lines = (out / "tiny_curve.csv").read_text().splitlines()
        assert lines[0] == "delta,log_likelihood,evaluated_steps"
        assert len(lines) == 12
        assert (out / "tiny_curve.svg").exists()

    def test_missing_config_is_io_error(self):
        assert run_cli("experiment", "--config", "nope.json") == 2


class TestPresets:
    def test_all_presets_parse(self):
        from importlib import resources
        from exp3mle.cli import _experiment_config_from_dict

        names = [
            "figure1.json", "figure2.json", "figure2_desk.json", "figure3.json",
            "figure3_desk.json", "figure4.json", "figure4_desk.json", "figure5.json",
        ]
        for name in names:
            raw = resources.files("exp3mle").joinpath("presets", name).read_text()
            data = json.loads(raw)
            panels = data.get("panels", [data])
            for panel in panels:
                if panel["mode"] == "likelihood_curve":
                    assert {"losses", "eta", "n", "theta"} <= set(panel)
                else:
                    config = _experiment_config_from_dict(panel)
                    assert config.n_values[0] >= 500
