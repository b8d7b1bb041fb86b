import io
import json
import math

import numpy as np
import pytest

from pdhjb import ConfigError, load_config
from pdhjb.cli import main
from pdhjb.config import ExperimentConfig
from pdhjb.harness import (ConvergenceRow, build_problem, make_initial_path,
                           read_convergence_csv, run_convergence,
                           write_convergence_csv)
from pdhjb.errors import PdhjbError

LQ_TOML = """
seed = 7

[problem]
lagrangian = "quadratic"
terminal = "terminal_square"
terminal_params = { center = 1.0 }

[[initial_data]]
id = "origin"
t0 = 0.0
path = "zero"

[schedule]
n = [1, 2]

[tolerances]
gap = 0.56
"""


@pytest.fixture
def lq_config(tmp_path):
    p = tmp_path / "lq.toml"
    p.write_text(LQ_TOML)
    return p


def test_load_config_roundtrip(lq_config):
    cfg = load_config(lq_config)
    assert cfg.seed == 7
    assert cfg.problem.terminal == "terminal_square"
    assert cfg.n_schedule == (1, 2)
    assert len(cfg.config_hash) == 64
    cfg2 = cfg.with_overrides(seed=11, out="elsewhere")
    assert cfg2.seed == 11 and cfg2.output.directory == "elsewhere"
    assert cfg.seed == 7   # original untouched


def test_unknown_keys_rejected(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text(LQ_TOML + "\n[solver]\ncellz = 3\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_bad_toml_rejected(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("seed = = 3")
    with pytest.raises(ConfigError):
        load_config(p)


def test_nonpositive_tolerances_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"tolerances": {"gap": 0.0}})


def test_initial_datum_needs_id():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"initial_data": [{"t0": 0.0}]})


def test_build_problem_unknown_names():
    with pytest.raises(ConfigError):
        build_problem(ExperimentConfig.from_dict(
            {"problem": {"lagrangian": "bogus"}}))
    with pytest.raises(ConfigError):
        build_problem(ExperimentConfig.from_dict(
            {"problem": {"terminal": "bogus"}}))


def test_make_initial_path_kinds():
    cfg = ExperimentConfig.from_dict({})
    datum = cfg.initial_data[0]
    zero = make_initial_path(datum, 1, 1.0)
    assert np.all(zero.values == 0.0)
    from pdhjb.config import InitialDatum
    lin = make_initial_path(InitialDatum("l", 0.0, "linear",
                                         {"slope": 2.0}), 1, 1.0)
    assert lin.at(0.5)[0] == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        make_initial_path(InitialDatum("b", 0.0, "bogus"), 1, 1.0)


def test_convergence_csv_round_trip():
    rows = [ConvergenceRow.make(1, "origin", 0.88, 0.002, 1.0 / 3.0),
            ConvergenceRow.make(2, "origin", 0.61, 0.001, 1.0 / 3.0)]
    buf = io.StringIO()
    write_convergence_csv(rows, buf)
    buf.seek(0)
    back = read_convergence_csv(buf)
    assert [vars(r) for r in back] == [vars(r) for r in rows]


def test_convergence_csv_integrity_check():
    buf = io.StringIO("n,datum,v_n,se,v_0,gap\n1,origin,0.9,0.0,0.3,0.4\n")
    with pytest.raises(PdhjbError):
        read_convergence_csv(buf)


def test_run_convergence_deterministic(lq_config):
    cfg = load_config(lq_config)
    r1 = run_convergence(cfg)
    r2 = run_convergence(cfg)
    assert [vars(r) for r in r1.rows] == [vars(r) for r in r2.rows]


def test_cli_converge_writes_outputs(lq_config, tmp_path):
    out = tmp_path / "out"
    code = main(["converge", "--config", str(lq_config), "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert "convergence.csv" in manifest["files"]
    with open(out / "convergence.csv") as fp:
        rows = read_convergence_csv(fp)
    assert {r.n for r in rows} == {1, 2}
    for r in rows:
        assert abs(r.gap - math.log(3.0) / (2.0 * r.n)) < 0.01


def test_cli_seed_override_changes_oracle_draws(lq_config, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["converge", "--config", str(lq_config), "--out", str(out1)]) == 0
    assert main(["converge", "--config", str(lq_config), "--out", str(out2),
                 "--seed", "12345"]) == 0
    with open(out1 / "convergence.csv") as fp:
        r1 = read_convergence_csv(fp)
    with open(out2 / "convergence.csv") as fp:
        r2 = read_convergence_csv(fp)
    assert any(a.v_n != b.v_n for a, b in zip(r1, r2))


def test_cli_missing_config_exit_2():
    assert main(["converge", "--config", "/definitely/not/here.toml"]) == 2


def test_cli_bad_schema_exit_2(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[solver]\nuse_oracle = 'sometimes'\n")
    assert main(["converge", "--config", str(p)]) == 2


def test_cli_node_budget_exit_3(tmp_path):
    p = tmp_path / "budget.toml"
    p.write_text(LQ_TOML + "\n[solver]\nuse_oracle = 'never'\n"
                 "steps = 10\nnode_budget = 1000\n")
    assert main(["converge", "--config", str(p),
                 "--out", str(tmp_path / "o")]) == 3


def test_cli_gap_tolerance_exit_1(tmp_path):
    p = tmp_path / "tight.toml"
    p.write_text(LQ_TOML.replace("gap = 0.56", "gap = 0.01"))
    assert main(["converge", "--config", str(p),
                 "--out", str(tmp_path / "o")]) == 1


def test_cli_legendre(lq_config, tmp_path):
    out = tmp_path / "leg"
    assert main(["legendre", "--config", str(lq_config),
                 "--out", str(out)]) == 0
    data = json.loads((out / "legendre.json").read_text())
    assert data["max_discrepancy"] < 1e-6
    assert len(data["rows"]) == 21


def test_emission_byte_identical(lq_config, tmp_path):
    out1, out2 = tmp_path / "x", tmp_path / "y"
    assert main(["converge", "--config", str(lq_config), "--out", str(out1)]) == 0
    assert main(["converge", "--config", str(lq_config), "--out", str(out2)]) == 0
    assert (out1 / "convergence.csv").read_bytes() == \
        (out2 / "convergence.csv").read_bytes()
    assert (out1 / "convergence.json").read_bytes() == \
        (out2 / "convergence.json").read_bytes()
