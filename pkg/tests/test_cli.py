import json
import os

import numpy as np
import pytest

from plap import cli
from plap.cli import (
    ConfigError,
    ExperimentConfig,
    config_to_text,
    load_config,
    main,
    parse_config_text,
    to_json,
)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# -- config parsing ------------------------------------------------------------------


def test_empty_config_gives_defaults():
    cfg = parse_config_text("")
    assert cfg == ExperimentConfig()


def test_minimal_config_fills_defaults():
    cfg = parse_config_text("[problem]\np = 2.5\n")
    assert cfg.p == 2.5
    assert cfg.tol == 1e-8
    assert cfg.resolution == (33, 33)


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="line 3.*duplicate"):
        parse_config_text("[problem]\np = 3\np = 4\n")


def test_unknown_key_and_section_rejected():
    with pytest.raises(ConfigError, match="unknown key problem.quux"):
        parse_config_text("[problem]\nquux = 1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config_text("[nope]\n")


def test_key_outside_section_rejected():
    with pytest.raises(ConfigError, match="outside"):
        parse_config_text("p = 3\n")


def test_p_equals_two_rejected():
    with pytest.raises(ConfigError, match="p must avoid 2"):
        parse_config_text("[problem]\np = 2\n")


def test_expression_error_carries_offset():
    with pytest.raises(ConfigError, match="offset 2"):
        parse_config_text("[problem]\ngamma = 1+*x1\n")


def test_bad_value_reports_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("[solver]\ntol = banana\n")


def test_comments_and_blank_lines_ignored():
    cfg = parse_config_text("# top\n\n[problem]\np = 3.5  # inline\n")
    assert cfg.p == 3.5


def test_config_round_trip():
    cfg = parse_config_text(
        "[problem]\np = 2.5\ngamma = 1+0.1*x1\n[domain]\nresolution = 17 17\n"
        "[recover]\np_list = 1.3 3.0\n[run]\nseed = 7\n"
    )
    assert parse_config_text(config_to_text(cfg)) == cfg


def test_eps_schedule_must_decrease():
    with pytest.raises(ConfigError, match="decreasing"):
        parse_config_text("[linearize]\neps_schedule = 0.01 0.1\n")


# -- deterministic serialization --------------------------------------------------------


def test_json_float_format_round_trips():
    x = 0.1 + 0.2
    text = to_json({"v": x})
    assert json.loads(text)["v"] == x


def test_json_rejects_unknown_types():
    with pytest.raises(TypeError):
        to_json({"v": object()})


# -- end-to-end runs ----------------------------------------------------------------------


def test_checks_run_and_determinism(tmp_path):
    cfg = _write(tmp_path, "c.cfg", "[domain]\nresolution = 9 9\n[problem]\np = 2.5\n")
    out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
    assert main(["checks", "--config", cfg, "--out", out1]) == 0
    assert main(["checks", "--config", cfg, "--out", out2]) == 0
    b1 = open(os.path.join(out1, "report.json"), "rb").read()
    b2 = open(os.path.join(out2, "report.json"), "rb").read()
    assert b1 == b2
    report = json.loads(b1)
    assert report["pass"] is True
    assert report["results"]["det_identity_max_dev"] < 1e-12


def test_report_config_echo_reparses(tmp_path):
    from dataclasses import replace

    cfg_path = _write(tmp_path, "c.cfg", "[domain]\nresolution = 9 9\n")
    out = str(tmp_path / "out")
    assert main(["checks", "--config", cfg_path, "--out", out]) == 0
    report = json.loads(open(os.path.join(out, "report.json")).read())
    echoed = parse_config_text(report["config"])
    assert echoed == replace(load_config(cfg_path), command="checks")


def test_forward_reports_extension_deviation(tmp_path):
    cfg = _write(
        tmp_path,
        "f.cfg",
        "[domain]\nresolution = 17 17\n[problem]\np = 3\ngamma = 1\ndata = expr:x1\n",
    )
    out = str(tmp_path / "out")
    assert main(["forward", "--config", cfg, "--out", out]) == 0
    report = json.loads(open(os.path.join(out, "report.json")).read())
    assert report["results"]["max_dev_from_extension"] <= 1e-8
    assert os.path.exists(os.path.join(out, "tables", "residual_history.csv"))
    assert os.path.exists(os.path.join(out, "run_meta.json"))


def test_dn_pseudo1d_run(tmp_path):
    cfg = _write(
        tmp_path,
        "d.cfg",
        "[domain]\nresolution = 17 17\n[problem]\np = 3\ngamma = 1+x1\ndata = pseudo1d\n",
    )
    out = str(tmp_path / "out")
    assert main(["dn", "--config", cfg, "--out", out]) == 0
    report = json.loads(open(os.path.join(out, "report.json")).read())
    assert abs(report["results"]["flux_balance"]) < 0.05
    lines = open(os.path.join(out, "tables", "flux.csv")).read().splitlines()
    assert lines[0] == "face,x1,x2,flux"
    assert len(lines) == 1 + 4 * 17


def test_dn_dense_matrix_opt_in(tmp_path):
    cfg = _write(
        tmp_path,
        "dm.cfg",
        "[domain]\nresolution = 9 9\n[problem]\np = 3\ngamma = 1\ndata = expr:x1\n"
        "[dn]\ndn_matrix = true\n",
    )
    out = str(tmp_path / "out")
    assert main(["dn", "--config", cfg, "--out", out]) == 0
    report = json.loads(open(os.path.join(out, "report.json")).read())
    assert report["results"]["dn_matrix_nodes"] == 32
    lines = open(os.path.join(out, "tables", "dn_matrix.csv")).read().splitlines()
    # one row per (flux node, boundary bump) pair
    assert len(lines) == 1 + (4 * 9) * 32


def test_linearize_run(tmp_path):
    cfg = _write(
        tmp_path,
        "l.cfg",
        "[domain]\nresolution = 17 17\n[problem]\np = 3\ngamma = 1\ndata = expr:x1\n"
        "[linearize]\nphi = x2^2 - x2\neps_schedule = 0.1 0.01 0.001\n",
    )
    out = str(tmp_path / "out")
    assert main(["linearize", "--config", cfg, "--out", out]) == 0
    report = json.loads(open(os.path.join(out, "report.json")).read())
    assert report["results"]["monotone_verdict"] is True
    devs = report["results"]["deviations"]
    assert devs[0] > devs[-1]


def test_fixedpoint_run(tmp_path):
    cfg = _write(
        tmp_path,
        "fp.cfg",
        "[domain]\nresolution = 17 17\n[problem]\np = 1.5\ngamma = 1+0.05*x1\nzeta = 1 0\n",
    )
    out = str(tmp_path / "out")
    assert main(["fixedpoint", "--config", cfg, "--out", out]) == 0
    report = json.loads(open(os.path.join(out, "report.json")).read())
    assert report["results"]["sup_grad_R"] < 0.5
    assert report["results"]["min_grad_u0"] > 0.5


def test_nonpositive_weight_serialized_as_error(tmp_path):
    cfg = _write(
        tmp_path,
        "w.cfg",
        "[domain]\nresolution = 9 9\n[problem]\np = 3\ngamma = x1 - 0.5\ndata = expr:x1\n",
    )
    out = str(tmp_path / "out")
    assert main(["forward", "--config", cfg, "--out", out]) == 3
    report = json.loads(open(os.path.join(out, "report.json")).read())
    assert "strictly positive" in report["error"]["message"]


def test_fixedpoint_solver_error_serialized(tmp_path):
    cfg = _write(
        tmp_path,
        "fp.cfg",
        "[domain]\nresolution = 17 17\n[problem]\np = 3\ngamma = 1+5*x1\nzeta = 1 0\n",
    )
    out = str(tmp_path / "out")
    assert main(["fixedpoint", "--config", cfg, "--out", out]) == 3
    report = json.loads(open(os.path.join(out, "report.json")).read())
    assert report["error"]["type"] == "BallEscape"
    assert report["pass"] is False


def test_recover_run_and_jobs_merge(tmp_path):
    text = (
        "[recover]\nprofile = exp(0.2*x1)\nrzeta = 0.48 -0.6 0.64\nz = 0.1 -0.3 0.2\n"
        "order = 6\np_list = 1.5 3.0\n"
    )
    cfg = _write(tmp_path, "r.cfg", text)
    out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
    assert main(["recover", "--config", cfg, "--out", out1]) == 0
    assert main(["recover", "--config", cfg, "--jobs", "2", "--out", out2]) == 0
    b1 = open(os.path.join(out1, "report.json"), "rb").read()
    b2 = open(os.path.join(out2, "report.json"), "rb").read()
    assert b1 == b2
    report = json.loads(b1)
    assert [s["p"] for s in report["results"]["scenarios"]] == [1.5, 3.0]
    assert report["results"]["canonical_theta_det_direct"] == 4.0
    assert report["results"]["canonical_theta_det_closed_form"] == 6.0


def test_rescale_run(tmp_path):
    cfg = _write(
        tmp_path,
        "rs.cfg",
        "[domain]\nresolution = 17 17\n[problem]\np = 3\ngamma = 1+x2^2\nzeta = 1 0\n",
    )
    out = str(tmp_path / "out")
    assert main(["rescale", "--config", cfg, "--out", out]) == 0
    report = json.loads(open(os.path.join(out, "report.json")).read())
    assert report["results"]["stretch"] == pytest.approx(1.0 / np.sqrt(2.0), rel=1e-14)


def test_output_dir_from_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = _write(tmp_path, "c.cfg", "[domain]\nresolution = 9 9\n[output]\ndir = from_config\n")
    assert main(["checks", "--config", cfg]) == 0
    assert (tmp_path / "from_config" / "report.json").exists()
    # the CLI flag wins over the config key
    assert main(["checks", "--config", cfg, "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "report.json").exists()


def test_cli_config_error_exit_code(tmp_path):
    cfg = _write(tmp_path, "bad.cfg", "[problem]\np = 2\n")
    assert main(["forward", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_cli_missing_config_file(tmp_path):
    assert main(["forward", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_run_command_mismatch(tmp_path):
    cfg = _write(tmp_path, "c.cfg", "[run]\ncommand = checks\n")
    with pytest.raises(ConfigError, match="does not match"):
        cli.run("forward", load_config(cfg), str(tmp_path / "o"))
