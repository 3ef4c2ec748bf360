import json

import numpy as np
import pytest

from causalbias.cli import main
from causalbias.scm import Dataset, save_scm
from causalbias.zoo import builtin


def run(capsys, *argv) -> tuple[int, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out


def test_identify_exit_codes(capsys, tmp_path):
    code, out = run(capsys, "identify", "--model", "builtin:confounding")
    verdict = json.loads(out)
    assert code == 3
    assert verdict["identifiable"] is False
    assert verdict["violations"][0]["noise"] == "U_V1"
    assert verdict["adjustment_criterion_agrees"] is True

    code, out = run(capsys, "identify", "--model", "builtin:lesser-evil", "--observe", "V1")
    assert code == 0
    assert json.loads(out)["identifiable"] is True

    code, _ = run(capsys, "identify", "--model", str(tmp_path / "missing.json"))
    assert code == 1


def test_identify_uses_declared_roles_by_default(capsys):
    # the clinical model declares the admissible adjustment set as observed
    code, out = run(capsys, "identify", "--model", "builtin:ascvd")
    assert code == 0
    assert json.loads(out)["identifiable"] is True


def test_identify_loads_model_documents(capsys, tmp_path):
    path = tmp_path / "model.json"
    save_scm(builtin("overcontrol"), path)
    code, out = run(capsys, "identify", "--model", str(path))
    assert code == 3  # observing the mediator breaks identifiability


def test_bias_command_matches_formula(capsys):
    code, out = run(
        capsys,
        "bias", "--model", "builtin:confounding", "--x", "1",
        "--method", "laplace", "--samples", "10000", "--seed", "7",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["bias_B"] == pytest.approx(0.5, abs=1e-9)
    assert payload["association_A"] == pytest.approx(1.5, abs=1e-9)


def test_bias_observed_mediator_value(capsys):
    # fixing the nonlinear model's mediator at 2 flips the bias to -beta*delta
    code, out = run(
        capsys,
        "bias", "--model", "builtin:lesser-evil", "--x", "1",
        "--observe", "V2=2", "--method", "laplace",
    )
    assert code == 0
    assert json.loads(out)["bias_B"] == pytest.approx(-1.0, abs=1e-9)


def test_bias_is_byte_identical_across_runs(capsys):
    argv = [
        "bias", "--model", "builtin:selection", "--x", "0.8",
        "--observe", "V1=0.4", "--method", "is", "--samples", "20000",
        "--seed", "123", "--format", "csv",
    ]
    code1, out1 = run(capsys, *argv)
    code2, out2 = run(capsys, *argv)
    assert code1 == code2 == 0
    assert out1 == out2


def test_numerical_failure_exit_code(capsys):
    # dose targets outside the open unit interval cannot be inverted
    code, _ = run(
        capsys,
        "bias", "--model", "builtin:ascvd", "--x", "1.5",
        "--observe", "A=55,L=4.9,F=0.3,D=0.1", "--method", "is", "--samples", "100",
    )
    assert code == 2


def test_effect_command(capsys):
    code, out = run(
        capsys,
        "effect", "--model", "builtin:overcontrol", "--x", "0.0",
        "--observe", "V1=0.2", "--method", "laplace",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["effect_C"] == pytest.approx(2.0, abs=1e-9)  # beta + gamma*alpha


def test_simulate_round_trip(capsys, tmp_path):
    out_path = tmp_path / "draws.csv"
    code, _ = run(
        capsys,
        "simulate", "--model", "builtin:confounding",
        "--samples", "50", "--seed", "3", "--out", str(out_path),
    )
    assert code == 0
    ds = Dataset.from_csv(out_path)
    assert ds.columns == ("V1", "X", "Y")
    assert ds.n == 50
    direct = __import__("causalbias").sample_observational(builtin("confounding"), 50, 3)
    assert np.array_equal(ds.data, direct.data)


def test_dump_posterior(capsys, tmp_path):
    dump = tmp_path / "posterior.csv"
    code, _ = run(
        capsys,
        "bias", "--model", "builtin:confounding", "--x", "1",
        "--method", "is", "--samples", "500", "--seed", "1",
        "--dump-posterior", str(dump),
    )
    assert code == 0
    table = Dataset.from_csv(dump)
    assert set(table.columns) == {"U_V1", "U_X", "U_Y", "weight"}
    assert table.n == 500


def test_experiment_lesser_evil_small_grid(capsys):
    code, out = run(
        capsys, "experiment", "lesser-evil", "--grid-points", "3", "--seed", "1"
    )
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "alpha,x,abs_bias_unobserved,se_unobserved,abs_bias_observed,se_observed"
    assert len(lines) == 1 + 2 * 3
    from causalbias.cli import LESSER_EVIL_CONFIGS

    levels = {p.alpha: abs(p.beta * p.delta) for p in LESSER_EVIL_CONFIGS}
    for line in lines[1:]:
        alpha, x, b_hidden, _, b_seen, _ = (float(v) for v in line.split(","))
        assert b_seen == pytest.approx(levels[alpha], abs=1e-8)  # |B| = |beta*delta|


def test_experiment_ascvd_smoke(capsys):
    code, out = run(
        capsys, "experiment", "ascvd", "--draws", "2", "--samples", "2000", "--seed", "5"
    )
    assert code == 0
    lines = out.strip().splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["section", "draw", "observed_set", "x"]
    draw_lines = [l for l in lines[1:] if l.startswith("draw,")]
    assert len(draw_lines) == 2 * 5  # two draws, five observed sets
    assert sum(1 for l in lines if l.startswith("mean,")) == 5
    assert sum(1 for l in lines if l.startswith("sd,")) == 5


def test_usage_error_exit_code(capsys):
    assert main(["bias", "--model", "builtin:confounding"]) == 1  # missing --x
    capsys.readouterr()
