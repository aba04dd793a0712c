import numpy as np
import pytest

from asyncdp.cli import main

SWEEP_CONFIG = """
owner_counts = 2
owner_sizes = 50
epsilons = 1, 10
horizon = 40
runs_per_cell = 3
dim = 3
noise_std = 1.0
reg_coeff = 1e-5
clip_bound = 20.0
reg_grad_bound = 0.1
seed = 11
"""


def write_config(tmp_path, text, name="plan.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestSynth:
    def test_writes_owner_files(self, tmp_path):
        cfg = write_config(tmp_path, "owner_counts = 2\nowner_sizes = 30\ndim = 4\nseed = 3\n")
        out = tmp_path / "data"
        assert main(["synth", "--config", cfg, "--out", str(out)]) == 0
        files = sorted(p.name for p in out.iterdir())
        assert files == ["manifest.txt", "owner_1.csv", "owner_2.csv"]
        lines = (out / "owner_1.csv").read_text().splitlines()
        assert lines[0] == "x1,x2,x3,x4,target"
        assert len(lines) == 31


class TestPca:
    def test_fit_and_apply(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [
            f"{i},{rng.standard_normal()!r},{rng.standard_normal()!r},"
            f"{'AB'[i % 2]},{rng.standard_normal()!r}"
            for i in range(40)
        ]
        data = tmp_path / "raw.csv"
        data.write_text("id,a,b,grade,rate\n" + "\n".join(rows) + "\n")
        cfg = write_config(
            tmp_path,
            "target = rate\nnumeric = a, b\ncategorical = grade\ndrop = id\n"
            "k = 2\nsample_size = 40\n",
            name="pca.cfg",
        )
        out = tmp_path / "pca"
        assert main(["pca", "--config", cfg, "--input", str(data), "--out", str(out), "--apply"]) == 0
        assert (out / "pca.json").exists()
        assert (out / "codes.json").exists()
        transformed = (out / "transformed.csv").read_text().splitlines()
        assert transformed[0] == "pc1,pc2,rate"
        assert len(transformed) == 41


class TestTrain:
    def test_single_run_outputs(self, tmp_path):
        cfg = write_config(tmp_path, SWEEP_CONFIG)
        out = tmp_path / "run"
        assert main(["train", "--config", cfg, "--out", str(out)]) == 0
        trajectory = (out / "trajectory.csv").read_text().splitlines()
        assert trajectory[0] == "k,t_k,owner,psi"
        assert len(trajectory) == 41
        schedule = (out / "schedule.csv").read_text().splitlines()
        assert schedule[0] == "k,t_k,owner"
        assert "resolved_step_gain" in (out / "manifest.txt").read_text()

    def test_train_from_synth_data(self, tmp_path):
        cfg = write_config(tmp_path, SWEEP_CONFIG)
        data_dir = tmp_path / "data"
        main(["synth", "--config", cfg, "--out", str(data_dir)])
        out = tmp_path / "run"
        assert (
            main(["train", "--config", cfg, "--out", str(out), "--data", str(data_dir)]) == 0
        )
        assert (out / "trajectory.csv").exists()


class TestSweepAndBounds:
    def test_sweep_then_bounds(self, tmp_path):
        cfg = write_config(tmp_path, SWEEP_CONFIG)
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        sweep_csv = out / "sweep.csv"
        assert sweep_csv.exists()
        bounds_out = tmp_path / "bounds"
        assert main(["bounds", "--sweep-csv", str(sweep_csv), "--out", str(bounds_out)]) == 0
        lines = (bounds_out / "bounds.csv").read_text().splitlines()
        assert lines[0] == "n,eps,measured_psi,bound_psi"
        assert len(lines) == 3

    def test_bounds_with_fixed_coefficients(self, tmp_path):
        sweep_csv = tmp_path / "sweep.csv"
        sweep_csv.write_text(
            "n,eps,N,mean_psi,bound_psi\n750000,1.0,3,0.01,nan\n750000,2.0,3,0.003,nan\n"
        )
        out = tmp_path / "bounds"
        assert (
            main(
                [
                    "bounds",
                    "--sweep-csv",
                    str(sweep_csv),
                    "--out",
                    str(out),
                    "--linear-coeff",
                    "2.1e9",
                ]
            )
            == 0
        )
        rows = (out / "bounds.csv").read_text().splitlines()[1:]
        first = rows[0].split(",")
        assert float(first[3]) == pytest.approx(2.1e9 * 3 / 750000**2)

    def test_seed_override_changes_outputs(self, tmp_path):
        cfg = write_config(tmp_path, SWEEP_CONFIG)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        main(["sweep", "--config", cfg, "--out", str(out_a)])
        main(["sweep", "--config", cfg, "--out", str(out_b), "--seed", "99"])
        assert (out_a / "sweep.csv").read_text() != (out_b / "sweep.csv").read_text()


class TestReport:
    def test_collaboration_table(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "owner_counts = 1, 3\nowner_sizes = 50\nepsilons = 10\nhorizon = 40\n"
            "runs_per_cell = 3\ndim = 3\nseed = 2\n",
        )
        out = tmp_path / "report"
        assert main(["report", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[0] == "N,eps,n_i,mean_psi,psi_solo,benefit"
        assert len(lines) == 3
        assert lines[1].split(",")[-1] == "false"
