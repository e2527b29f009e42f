import csv
import json

import numpy as np
import pytest

from onelap.cli import emit_plotdata, execute, main
from onelap.config import ConfigError, RunConfig, dump_config, parse_config
from onelap.mesh import assemble_mesh
from onelap.nonlinearity import DatumSpec, NonlinearitySpec
from onelap.plap_solver import ContinuationTrace, SolverConfig

SMALL = """
mode = continuation
geometry.N = 2
geometry.M = 64
nonlinearity.gamma = 1
datum.q = 1.25
solver.schedule = 1.5, 1.3, 1.15
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_cfg(tmp_path, text, name="run.cfg"):
    out = tmp_path / "out"
    path = tmp_path / name
    path.write_text(text + f"\noutput.dir = {out}\n")
    return path, out


def test_round_trip_default_and_custom():
    for cfg in (RunConfig(), parse_config(SMALL + "nonlinearity.s_tilde = 0.7\nsolver.epsilon_reg = 3.3e-7\n")):
        assert parse_config(dump_config(cfg)) == cfg


def test_parse_values():
    cfg = parse_config(SMALL)
    assert cfg.geometry.M == 64
    assert cfg.solver.schedule == (1.5, 1.3, 1.15)
    assert cfg.nonlinearity.s_tilde is None
    assert cfg.output.plotdata is True


@pytest.mark.parametrize(
    "text",
    ["geometry.Q = 3", "bogus = 1", "geometry.M = many", "geometry.M = 4\ngeometry.M = 5", "no equals sign"],
)
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_validate_errors():
    with pytest.raises(Exception):
        parse_config("datum.q = 3\ngeometry.N = 3").validate()
    with pytest.raises(ConfigError):
        parse_config("mode = solve\nsolver.p = 2.5").validate()
    with pytest.raises(ConfigError):
        parse_config("mode = sweep").validate()


def test_exit_codes(tmp_path, capsys):
    path, out = write_cfg(tmp_path, "mode = oracle-check\ngeometry.M = 32\ndatum.q = 1.5")
    assert main(["--config", str(path)]) == 0
    assert (out / "oracle_summary.csv").exists()

    path, out = write_cfg(tmp_path, "mode = oracle-check\ngeometry.N = 3\ndatum.q = 3", "bad.cfg")
    assert main(["--config", str(path)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["status"] == 2
    assert json.loads((out / "error.json").read_text())["status"] == 2

    path, out = write_cfg(tmp_path, SMALL + "solver.maxit_outer = 1\nsolver.tol_outer = 1e-15", "slow.cfg")
    assert main(["--config", str(path)]) == 3

    path, out = write_cfg(tmp_path, SMALL + "diagnostics.z_bound = 0.5", "cert.cfg")
    assert main(["--config", str(path)]) == 4
    assert main(["--config", str(tmp_path / "missing.cfg")]) == 2


def test_dualnorm_prints_value(tmp_path, capsys):
    path, _ = write_cfg(tmp_path, "mode = dualnorm\ngeometry.M = 64\ndatum.q = 1.5")
    assert main(["--config", str(path)]) == 0
    assert capsys.readouterr().out.strip() == "1.000000"


def test_dump_config_flag(capsys):
    assert main(["--dump-config", "--mode", "solve"]) == 0
    text = capsys.readouterr().out
    assert parse_config(text).mode == "solve"


def test_continuation_outputs_and_determinism(tmp_path):
    path, out = write_cfg(tmp_path, SMALL)
    assert main(["--config", str(path)]) == 0
    trace = read_csv(out / "trace.csv")
    assert trace[0][0] == "p" and len(trace) == 4
    summary = read_csv(out / "plotdata" / "summary.csv")
    assert "estimate_bound" in summary[0] and len(summary) == 4
    prof = read_csv(out / "plotdata" / "profile_00.csv")
    assert prof[0] == ["r", "u", "z"] and len(prof) == 66
    first = (out / "trace.csv").read_bytes()
    assert main(["--config", str(path)]) == 0
    assert (out / "trace.csv").read_bytes() == first
    assert b"\r\n" not in first


def test_emit_plotdata_empty_trace(tmp_path):
    mesh = assemble_mesh(2, 1.0, 8)
    trace = ContinuationTrace(mesh, NonlinearitySpec("power", gamma=1.0), DatumSpec("radial-power", q=1.5), SolverConfig())
    paths = emit_plotdata(trace, tmp_path, k_list=(1.0,), subdomains=(0.5,))
    rows = read_csv(paths[-1])
    assert len(rows) == 1
    assert rows[0] == ["p", "gamma_p_norm", "estimate_bound", "gamma_bv_norm", "tk_power_norm_k1", "local_tk_norm_k1_r0.5"]


@pytest.mark.parametrize("jobs", [1, 2])
def test_sweep_index(tmp_path, jobs):
    text = "mode = sweep\ngeometry.M = 32\nsweep.mode = oracle-check\nsweep.key = datum.q\nsweep.values = 1.1, 1.5, 1.9"
    path, out = write_cfg(tmp_path, text)
    assert main(["--config", str(path), "--jobs", str(jobs)]) == 0
    rows = read_csv(out / "index.csv")
    assert [r[2] for r in rows[1:]] == ["1.1", "1.5", "1.9"]
    assert all(r[3] == "0" for r in rows[1:])
    assert (out / "instance_002" / "oracle_summary.csv").exists()


def test_execute_solve_mode(tmp_path):
    cfg = parse_config("mode = solve\ngeometry.M = 64\nsolver.p = 1.4")
    assert execute(cfg, str(tmp_path), quiet=True) == 0
    rows = read_csv(tmp_path / "solve_profile.csv")
    u = np.array([float(r[1]) for r in rows[1:]])
    assert u[-1] == 0.0 and np.all(u >= 0)
