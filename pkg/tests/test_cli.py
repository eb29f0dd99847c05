import json
from pathlib import Path

import numpy as np
import pytest

from conftest import FIXTURES
from wtodest.cli import main

MODEL = str(FIXTURES / "paper_sec4.json")
GAINS = str(FIXTURES / "paper_sec4_gains.json")


def test_validate_ok(capsys):
    assert main(["validate", MODEL]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_broken_row_sum(tmp_path, capsys):
    with open(MODEL) as fh:
        doc = json.load(fh)
    doc["transitions"][0][0] = 0.9  # row now sums to 1.6
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["validate", str(bad)]) == 1
    assert "RowSumViolation" in capsys.readouterr().out


def test_missing_file_is_io_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.json")]) == 2
    assert main(["simulate", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")]) == 2


def test_simulate_is_deterministic(tmp_path):
    args = ["simulate", MODEL, "--gains", GAINS, "--horizon", "40",
            "--runs", "2", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("run_000.csv", "run_001.csv", "ensemble.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_simulate_outputs_are_well_formed(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", MODEL, "--gains", GAINS, "--horizon", "25",
                 "--runs", "3", "--seed", "1", "--out", str(out)]) == 0
    header = (out / "run_000.csv").read_text().splitlines()[0]
    assert header == "k,mode,node,x1,x2,e1,e2,e3,e4,ztilde_sq,V"
    lines = (out / "run_000.csv").read_text().splitlines()
    assert len(lines) == 26
    summary = json.loads((out / "summary.json").read_text())
    assert summary["runs"] == 3
    assert sum(summary["node_counts"]) == 3 * 25
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["seed"] == 1 and cfg["horizon"] == 25


def test_simulate_without_gains_fails(tmp_path, capsys):
    assert main(["simulate", MODEL, "--out", str(tmp_path / "o")]) == 1
    assert "no gains" in capsys.readouterr().err


def test_verify_feasible_and_infeasible(tmp_path, capsys):
    out = tmp_path / "v"
    assert main(["verify", MODEL, "--gains", GAINS, "--gamma", "2.0",
                 "--out", str(out)]) == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert "Z" in cert and "P1_0_0" in cert
    # an absurdly small level cannot be certified for these gains
    assert main(["verify", MODEL, "--gains", GAINS, "--gamma", "1e-6",
                 "--out", str(tmp_path / "v2")]) == 1
    assert "infeasible" in capsys.readouterr().out


def test_float_format_round_trips(tmp_path):
    out = tmp_path / "fmt"
    main(["simulate", MODEL, "--gains", GAINS, "--horizon", "10",
          "--runs", "1", "--seed", "3", "--out", str(out)])
    rows = (out / "run_000.csv").read_text().splitlines()[1:]
    for row in rows:
        cells = row.split(",")
        for cell in cells[3:]:
            assert float(cell) == float(format(float(cell), ".17g"))
