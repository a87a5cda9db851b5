import json
import os
import subprocess
import sys

import numpy as np
import pytest

from riccati_lab import cli


def run_cli(args, env_extra=None):
    """Invoke the command entry point in-process; returns (exit_code)."""
    if env_extra:
        old = {k: os.environ.get(k) for k in env_extra}
        os.environ.update(env_extra)
        try:
            return cli.main(args)
        finally:
            for k, v in old.items():
                if v is None:
                    os.environ.pop(k, None)
                else:
                    os.environ[k] = v
    return cli.main(args)


@pytest.fixture
def outdir(tmp_path):
    return str(tmp_path / "out")


def write_config(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


class TestConfig:
    def test_defaults_parse(self):
        cfg = cli.parse_config("")
        assert cfg["run"]["steps"] == 2000

    def test_unknown_key_is_hard_error(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config("[run]\nstepz = 100\n")

    def test_unknown_section_is_hard_error(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config("[misc]\nx = 1\n")

    def test_key_outside_section_is_hard_error(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config("steps = 100\n")

    def test_comments_and_blank_lines_ignored(self):
        cfg = cli.parse_config("# header\n\n[run]\nsteps = 321  # inline\n")
        assert cfg["run"]["steps"] == 321

    def test_bad_value_type_is_hard_error(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config("[run]\nsteps = many\n")

    def test_overrides(self):
        cfg = cli.parse_config("")
        cli.apply_overrides(cfg, ["run.steps=500", "model.kind=random"])
        assert cfg["run"]["steps"] == 500
        assert cfg["model"]["kind"] == "random"

    def test_malformed_override_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.apply_overrides(cli.parse_config(""), ["steps=500"])


class TestGen:
    def test_writes_model_file(self, tmp_path, outdir, capsys):
        code = run_cli(["gen", "--out", outdir, "--set", "model.kind=random",
                        "--set", "model.n=4", "--set", "model.seed=9"])
        assert code == 0
        assert os.path.exists(os.path.join(outdir, "run_model.txt"))

    def test_deterministic_output(self, tmp_path, capsys):
        d1, d2 = str(tmp_path / "a"), str(tmp_path / "b")
        for d in (d1, d2):
            assert run_cli(["gen", "--out", d, "--set", "model.kind=random"]) == 0
        b1 = open(os.path.join(d1, "run_model.txt"), "rb").read()
        b2 = open(os.path.join(d2, "run_model.txt"), "rb").read()
        assert b1 == b2

    def test_unknown_kind_exits_2(self, outdir, capsys):
        assert run_cli(["gen", "--out", outdir, "--set", "model.kind=pde"]) == 2


class TestSolve:
    def test_dre_solve_writes_solution_and_report(self, outdir, capsys):
        code = run_cli(["solve", "--out", outdir, "--set", "run.steps=800"])
        assert code == 0
        assert os.path.exists(os.path.join(outdir, "run_dre.csv"))
        rep = json.load(open(os.path.join(outdir, "run_dre_report.json")))
        assert all(c["pass"] for c in rep["checks"].values())
        assert rep["config"]["run"]["steps"] == 800

    def test_are_solve(self, outdir, capsys):
        code = run_cli(["solve", "--out", outdir, "--set", "run.equation=are",
                        "--set", "model.horizon=inf"])
        assert code == 0
        assert os.path.exists(os.path.join(outdir, "run_are.csv"))

    def test_horizon_mismatch_exits_2(self, outdir, capsys):
        assert run_cli(["solve", "--out", outdir,
                        "--set", "model.horizon=inf"]) == 2
        assert run_cli(["solve", "--out", outdir, "--set", "run.equation=are"]) == 2


class TestVerify:
    @pytest.fixture
    def solved(self, tmp_path):
        out = str(tmp_path / "solved")
        assert run_cli(["solve", "--out", out, "--set", "model.kind=random",
                        "--set", "model.n=4", "--set", "run.steps=2000"]) == 0
        return out

    def test_reference_solution_passes(self, solved, capsys):
        sol = os.path.join(solved, "run_dre.csv")
        code = run_cli(["verify", "--out", solved, "--set", "model.kind=random",
                        "--set", "model.n=4", "--set", f"run.solution={sol}",
                        "--set", "run.checks=ire,ire_strong,class_qt,uniqueness"])
        assert code == 0
        rep = json.load(open(os.path.join(solved, "run_verify_report.json")))
        assert all(c["pass"] for c in rep["checks"].values())
        assert len(rep["checks"]) == 4

    def test_empty_check_list_passes_with_zero_checks(self, solved, capsys):
        sol = os.path.join(solved, "run_dre.csv")
        code = run_cli(["verify", "--out", solved, "--set", "model.kind=random",
                        "--set", "model.n=4", "--set", f"run.solution={sol}",
                        "--set", "run.checks=none"])
        assert code == 0
        rep = json.load(open(os.path.join(solved, "run_verify_report.json")))
        assert rep["checks"] == {}

    def test_missing_solution_exits_2(self, outdir, capsys):
        assert run_cli(["verify", "--out", outdir,
                        "--set", "run.solution=/nonexistent.csv"]) == 2

    def test_does_not_mutate_inputs(self, solved, capsys):
        sol = os.path.join(solved, "run_dre.csv")
        before = open(sol, "rb").read()
        run_cli(["verify", "--out", solved, "--set", "model.kind=random",
                 "--set", "model.n=4", "--set", f"run.solution={sol}",
                 "--set", "run.checks=ire"])
        assert open(sol, "rb").read() == before

    def test_reports_reproducible(self, solved, tmp_path, capsys):
        sol = os.path.join(solved, "run_dre.csv")
        reps = []
        for sub in ("r1", "r2"):
            out = str(tmp_path / sub)
            run_cli(["verify", "--out", out, "--set", "model.kind=random",
                     "--set", "model.n=4", "--set", f"run.solution={sol}",
                     "--set", "run.checks=ire,ire_strong"])
            rep = json.load(open(os.path.join(out, "run_verify_report.json")))
            for c in rep["checks"].values():
                c.pop("runtime", None)
            rep.pop("environment", None)
            reps.append(rep)
        assert reps[0] == reps[1]

    def test_perturbed_are_solution_fails_value_sandwich(self, tmp_path, capsys):
        out = str(tmp_path / "are")
        assert run_cli(["solve", "--out", out, "--set", "model.kind=random",
                        "--set", "model.n=4", "--set", "run.equation=are",
                        "--set", "model.horizon=inf"]) == 0
        sol_path = os.path.join(out, "run_are.csv")
        lines = open(sol_path).read().splitlines()
        # inflate the stored diagonal of P by +0.1
        import csv as _csv
        import io
        rows = list(_csv.reader(io.StringIO("\n".join(lines[1:]))))
        header = rows[0]
        n = 4
        for i in range(n):
            col = header.index(f"P{i}{i}")
            rows[1][col] = repr(float(rows[1][col]) + 0.1)
        with open(sol_path, "w") as fh:
            fh.write(lines[0] + "\n")
            w = _csv.writer(fh)
            w.writerows(rows)
        code = run_cli(["verify", "--out", out, "--set", "model.kind=random",
                        "--set", "model.n=4", "--set", "model.horizon=inf",
                        "--set", f"run.solution={sol_path}",
                        "--set", "run.checks=value_sandwich"])
        assert code == 1

    def test_plot_flag_emits_figure(self, solved, capsys):
        sol = os.path.join(solved, "run_dre.csv")
        code = run_cli(["verify", "--out", solved, "--set", "model.kind=random",
                        "--set", "model.n=4", "--set", f"run.solution={sol}",
                        "--set", "run.checks=ire", "--set", "output.plot=true"])
        assert code == 0
        assert os.path.exists(os.path.join(solved, "run_verify_residuals.png"))


class TestAssumptions:
    def test_report_and_series_written(self, outdir, capsys):
        code = run_cli(["assumptions", "--out", outdir,
                        "--set", "run.probes=8"])
        assert code == 0
        rep = json.load(open(os.path.join(outdir, "run_assumptions.json")))
        assert "gamma_hat" in rep and "admissibility_C" in rep
        assert os.path.exists(os.path.join(outdir, "run_kernel_norms.csv"))

    def test_plot_flag_emits_decay_figure(self, outdir, capsys):
        code = run_cli(["assumptions", "--out", outdir, "--set", "run.probes=8",
                        "--set", "output.plot=true"])
        assert code == 0
        assert os.path.exists(os.path.join(outdir, "run_kernel_decay.png"))


class TestEntryPoint:
    def test_bad_thread_env_exits_2(self, outdir, capsys):
        assert run_cli(["gen", "--out", outdir],
                       env_extra={"RICCATI_LAB_THREADS": "zero"}) == 2

    def test_missing_config_file_exits_2(self, capsys):
        assert run_cli(["gen", "--config", "/no/such/file.cfg"]) == 2

    def test_config_file_round_trip(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[model]\nkind = random\nn = 4\n"
                                     "[run]\nsteps = 400\n")
        out = str(tmp_path / "o")
        assert run_cli(["gen", "--config", cfg, "--out", out]) == 0

    def test_console_script_runs(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "riccati_lab.cli", "gen",
                              "--out", str(tmp_path)],
                             capture_output=True, text=True)
        assert out.returncode == 0
        assert "model_id" in out.stdout
