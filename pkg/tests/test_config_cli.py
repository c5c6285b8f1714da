import io

import numpy as np
import pytest

from mtdcctl.analysis import check_assumptions
from mtdcctl.cli import csv_header, main, read_trajectory_csv, write_trajectory_csv
from mtdcctl.config import ConfigError, builtin_config_text, dump_config, load_config, parse_config
from mtdcctl.sim import simulate

GRID6 = builtin_config_text("testgrid6")


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


def write_variant(tmp_path, old, new, count=-1):
    assert old in GRID6
    path = tmp_path / "grid.yaml"
    path.write_text(GRID6.replace(old, new, count))
    return str(path)


def test_grid6_parses(grid6):
    sd, sc = grid6
    assert sd.n == 6 and len(sd.dc_lines) == 10
    np.testing.assert_allclose(sd.c, 0.375e-3)
    assert check_assumptions(sd)[0].k_phi == pytest.approx(15.0)
    assert sc.t_end == 40.0 and sc.events[0].node == 0 and sc.events[0].delta_p_m == -0.2
    assert sd.dc_lines[0].l == pytest.approx(0.256e-3)


def test_proportional_edges_equal_explicit(grid6):
    sd, _ = grid6
    explicit = np.zeros((6, 6))
    for ln in sd.dc_lines:
        w = 15.0 / ln.r
        explicit[ln.i, ln.j] = explicit[ln.j, ln.i] = -w
    explicit[np.diag_indices(6)] = -explicit.sum(axis=1)
    np.testing.assert_array_equal(sd.laplacian_phi, explicit)


def test_round_trip(grid6):
    sd, sc = grid6
    sd2, sc2 = parse_config(dump_config(sd, sc))
    assert sd2 == sd and sc2 == sc
    np.testing.assert_array_equal(sd2.laplacian_phi, sd.laplacian_phi)


def test_zero_resistance_names_line():
    bad = GRID6.replace("{i: 2, j: 5, r: 0.0732", "{i: 2, j: 5, r: 0.0", 1)
    with pytest.raises(ConfigError) as info:
        parse_config(bad)
    assert "dc_lines[4] (2-5).r" in str(info.value)


@pytest.mark.parametrize(
    "old, new, field",
    [
        ("k_droop: 9.0,", "k_droop: 9.0, k_extra: 1,", "nodes[0]"),
        ("gamma: 0.0", "gamma: 0.0\n  beta: 1", "globals"),
        ("m: 10.0,", "m: -1.0,", "nodes[0].m"),
        ("{i: 5, j: 6, r: 0.1464, l: 0.6400e-3, c: 0.0212}", "{i: 4, j: 5, r: 0.2}", "dc_lines"),
        ("node: 1", "node: 7", "scenario.events[0].node"),
        ("model: linear", "model: spectral", "scenario.model"),
    ],
)
def test_semantic_errors_name_field(old, new, field):
    assert old in GRID6
    with pytest.raises(ConfigError) as info:
        parse_config(GRID6.replace(old, new, 1))
    assert info.value.field.startswith(field)


def test_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        parse_config("nodes: [\n  {m: 1\n")
    assert info.value.line is not None


def test_disconnected_dc_grid_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(GRID6.replace("  - {i: 2, j: 6, r: 0.1464, l: 0.6400e-3, c: 0.0212}\n", "")
                     .replace("  - {i: 5, j: 6, r: 0.1464, l: 0.6400e-3, c: 0.0212}\n", ""))
    assert "connected" in str(info.value)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/grid.yaml")


def test_certify_published(tmp_path):
    code, out = run(["certify", "testgrid6"])
    assert code == 0
    assert "lyapunov path: fails" in out and "direct-hurwitz path: passes" in out
    assert "k_phi = 15" in out and "3.75" in out
    assert "Q1 positive definite: yes" in out and "Q2 positive definite: no" in out


def test_certify_with_damping(tmp_path):
    code, out = run(["certify", write_variant(tmp_path, "gamma: 0.0", "gamma: 4.0")])
    assert code == 0
    assert "lyapunov path: passes" in out and "certified: yes (lyapunov)" in out


def test_certify_zero_integral_gain(tmp_path):
    code, out = run(["certify", write_variant(tmp_path, "k_droop_i: 3.35", "k_droop_i: 0.0")])
    assert code == 2 and "certified: no" in out


def test_usage_and_parse_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["certify"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["simulate", "testgrid6", "--model", "spline"])
    assert info.value.code == 1
    code, _ = run(["certify", write_variant(tmp_path, "m: 10.0,", "m: zero,")])
    assert code == 1
    code, _ = run(["certify", str(tmp_path / "missing.yaml")])
    assert code == 1


def test_simulate_writes_csv(tmp_path):
    path = tmp_path / "run.csv"
    code, out = run(["simulate", "testgrid6", "--output", str(path)])
    assert code == 0
    assert "objective gap" in out and "settling V" in out
    with open(path) as fh:
        header, data = read_trajectory_csv(fh)
    assert header == csv_header(6) and header[1] == "omega_1" and header[-1] == "W"
    assert data.shape == (4001, 38)
    assert data[-1, 0] == pytest.approx(40.0)


def test_simulate_zero_event(tmp_path):
    cfg = write_variant(tmp_path, "delta_p_m: -0.2", "delta_p_m: 0.0")
    path = tmp_path / "zero.csv"
    assert run(["simulate", cfg, "--t-end", "2", "--output", str(path)])[0] == 0
    with open(path) as fh:
        _, data = read_trajectory_csv(fh)
    assert np.all(data[:, 1:-1] == 0)


def test_simulate_nonlinear_close_to_linear(tmp_path):
    paths = {m: tmp_path / f"{m}.csv" for m in ("linear", "nonlinear")}
    for model, path in paths.items():
        assert run(["simulate", "testgrid6", "--model", model, "--output", str(path)])[0] == 0
    data = {}
    for model, path in paths.items():
        with open(path) as fh:
            data[model] = read_trajectory_csv(fh)[1]
    v = slice(7, 13)
    assert np.max(np.abs(data["linear"][:, v] - data["nonlinear"][:, v])) < 1e-3


def test_simulate_flags_and_stdout(capsys):
    out = io.StringIO()
    assert main(["simulate", "testgrid6", "--t-end", "2", "--dt-output", "0.5"], out=out) == 0
    lines = out.getvalue().strip().splitlines()
    assert len(lines) == 1 + 5
    assert "objective gap" in capsys.readouterr().err


def test_simulate_failure_exit_code(tmp_path):
    cfg = write_variant(tmp_path, "delta_p_m: -0.2", "delta_p_m: -30.0")
    code, _ = run(["simulate", cfg, "--model", "nonlinear", "--t-end", "3", "--output", str(tmp_path / "x.csv")])
    assert code == 2


def test_csv_round_trip(grid6):
    sd, sc = grid6
    sc = type(sc)(events=sc.events, t_end=3.0, dt_output=0.01)
    tr = simulate(sd, sc)
    buf = io.StringIO()
    write_trajectory_csv(tr, buf)
    buf.seek(0)
    _, data = read_trajectory_csv(buf)
    n = 6
    np.testing.assert_array_equal(data[:, 0], tr.t)
    np.testing.assert_array_equal(data[:, 1:1 + 4 * n], tr.state)
    np.testing.assert_array_equal(data[:, 1 + 4 * n:1 + 5 * n], tr.p_gen)
    np.testing.assert_array_equal(data[:, 1 + 5 * n:1 + 6 * n], tr.p_inj)
    np.testing.assert_array_equal(data[:, -1], tr.w_lyap)


def test_csv_w_missing_is_nan(tmp_path):
    phi = "phi_edges:\n  proportional_to_dc: 15.0"
    explicit = "phi_edges:\n" + "".join(
        f"  - {{i: {i}, j: {j}, weight: {w}}}\n" for i, j, w in [(1, 2, 1.0), (2, 3, 2.0), (3, 4, 1.0), (4, 5, 1.0), (5, 6, 3.0)]
    )
    cfg = write_variant(tmp_path, phi, explicit)
    path = tmp_path / "w.csv"
    assert run(["simulate", cfg, "--t-end", "1", "--output", str(path)])[0] == 0
    with open(path) as fh:
        _, data = read_trajectory_csv(fh)
    assert np.all(np.isnan(data[:, -1]))


def test_equilibrium_report():
    code, out = run(["equilibrium", "testgrid6"])
    assert code == 0
    assert "p_gen: [0.0333333, 0.0333333" in out
    for key in ("k2 measured", "k2 candidate (product)", "k2 candidate (quotient)", "kkt generation gap"):
        assert key in out


def test_equilibrium_zero_input(tmp_path):
    code, out = run(["equilibrium", write_variant(tmp_path, "delta_p_m: -0.2", "delta_p_m: 0.0")])
    assert code == 0
    assert "p_gen: [0, 0, 0, 0, 0, 0]" in out and "k2 measured (mean eta): 0 " in out


def test_equilibrium_heterogeneous_droop(tmp_path):
    node1 = "  - {m: 10.0, c: 0.375e-3, v_ref: 1.0, k_omega: 1000.0, k_v: 100.0, k_droop: 9.0, k_droop_i: 3.35}\n"
    # doubling K^droop moves the optimum; doubling K^droop,I with it moves the equilibrium the same way
    cfg = write_variant(tmp_path, node1, node1.replace("k_droop: 9.0, k_droop_i: 3.35", "k_droop: 18.0, k_droop_i: 6.7"), 1)
    code, out = run(["equilibrium", cfg])
    assert code == 0
    line = next(ln for ln in out.splitlines() if ln.startswith("p_gen:"))
    shares = [float(x) for x in line.split("[")[1].rstrip("]").split(",")]
    assert shares[0] == pytest.approx(2 * 0.2 / 7, rel=1e-5)
    assert shares[1] == pytest.approx(0.2 / 7, rel=1e-5)
    opt = next(ln for ln in out.splitlines() if ln.startswith("p_gen optimum:"))
    assert opt.split(": ", 1)[1] == line.split(": ", 1)[1]


def test_equilibrium_singular_exit_code(tmp_path):
    code, _ = run(["equilibrium", write_variant(tmp_path, "k_droop_i: 3.35", "k_droop_i: 0.0")])
    assert code == 2


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "mtdcctl", "certify", "testgrid6"], capture_output=True, text=True)
    assert res.returncode == 0 and "direct-hurwitz" in res.stdout
