import json
import math
import subprocess
import sys

import numpy as np
import pytest

from viewreg import cli
from viewreg.features import FeatureMapStack, build_descriptor
from viewreg.io import read_matrix_csv, write_embeddings_csv, write_feature_stack, write_matrix_csv
from viewreg.spd import lem_distance_sq
from viewreg.view_order import ViewEmbeddingSequence, similarities, svo_loss


def invoke(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out else None), (json.loads(err) if err else None)


def fan(sims):
    rows = [[1.0, 0.0]] + [[s, math.sqrt(1 - s * s)] for s in sims]
    return np.array(rows)


@pytest.fixture
def emb(tmp_path):
    def make(sims, azimuths=None):
        p = tmp_path / "emb.csv"
        azimuths = azimuths or [0.0] + [45.0 * (i + 1) for i in range(len(sims))]
        write_embeddings_csv(p, fan(sims), azimuths)
        return p
    return make


# --- svo -------------------------------------------------------------------------------

def test_svo_ordered_zero(capsys, emb):
    code, rep, _ = invoke(capsys, "svo", emb([0.9, 0.7, 0.5]), "--margin", 0.1)
    assert code == 0 and rep["status"] == "ok" and rep["command"] == "svo"
    assert rep["outputs"]["loss"] == 0.0
    assert rep["outputs"]["azimuths"] == [45.0, 90.0, 135.0]


def test_svo_matches_library(capsys, emb, rng):
    raw = rng.standard_normal((6, 8))
    p = emb([0.5])
    write_embeddings_csv(p, raw, [0, 30, 60, 90, 120, 150])
    _, rep, _ = invoke(capsys, "svo", p)
    lib = svo_loss(similarities(ViewEmbeddingSequence(raw, (30, 60, 90, 120, 150))), 0.05)
    assert rep["outputs"]["loss"] == lib.loss
    assert rep["outputs"]["sims"] == lib.sims.tolist()


def test_svo_violation_positive(capsys, emb):
    _, rep, _ = invoke(capsys, "svo", emb([0.5, 0.9]))
    assert rep["outputs"]["loss"] == pytest.approx(0.9 - 0.5 + 0.05, abs=1e-15)


def test_svo_missing_reference(capsys, tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("azimuth_deg,e_0,e_1\n0,1,0\n0,0,1\n90,1,1\n")
    code, out, err = invoke(capsys, "svo", p)
    assert code == 1 and out is None
    assert err["error_kind"] == "MissingReference"


def test_svo_bad_margin(capsys, emb):
    code, _, err = invoke(capsys, "svo", emb([0.9, 0.5]), "--margin", -1)
    assert code == 1 and err["error_kind"] == "InvalidMargin"


def test_parse_error_line(capsys, tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("azimuth_deg,e_0\n0,1\n45,abc\n")
    code, _, err = invoke(capsys, "svo", p)
    assert code == 1 and err["error_kind"] == "ParseError"
    assert err["message"].startswith("line 3:")


# --- spd -------------------------------------------------------------------------------

def mat(tmp_path, name, m):
    p = tmp_path / name
    write_matrix_csv(p, np.asarray(m, dtype=float))
    return p


def test_spd_identical_zero(capsys, tmp_path):
    a = mat(tmp_path, "a.csv", [[2.0, 0.3], [0.3, 1.0]])
    _, rep, _ = invoke(capsys, "spd", a, a)
    assert rep["outputs"]["lem_distance_sq"] == 0.0


def test_spd_known_value(capsys, tmp_path):
    a = mat(tmp_path, "a.csv", np.diag([math.e, 1.0]))
    b = mat(tmp_path, "b.csv", np.eye(2))
    _, rep, _ = invoke(capsys, "spd", a, b, "--eps", 0)
    assert rep["outputs"]["lem_distance_sq"] == pytest.approx(1.0, abs=1e-14)


def test_spd_asymmetric(capsys, tmp_path):
    a = mat(tmp_path, "a.csv", [[1.0, 0.5], [0.0, 1.0]])
    code, _, err = invoke(capsys, "spd", a, a)
    assert code == 1 and err["error_kind"] == "NotSymmetric"


def test_spd_not_pd(capsys, tmp_path):
    a = mat(tmp_path, "a.csv", [[1.0, 0.0], [0.0, -1.0]])
    code, _, err = invoke(capsys, "spd", a, a)
    assert code == 1 and err["error_kind"] == "NotPositiveDefinite"


def test_spd_dim_mismatch(capsys, tmp_path):
    code, _, err = invoke(capsys, "spd", mat(tmp_path, "a.csv", np.eye(2)), mat(tmp_path, "b.csv", np.eye(3)))
    assert code == 1 and err["error_kind"] == "DimMismatch"


def test_missing_file(capsys, tmp_path):
    code, _, err = invoke(capsys, "spd", tmp_path / "nope.csv", tmp_path / "nope.csv")
    assert code == 1 and err["error_kind"] == "IOError"


# --- descriptor --------------------------------------------------------------------------

@pytest.fixture
def stack_dir(tmp_path, rng):
    stack = FeatureMapStack(rng.standard_normal((3, 4, 8, 8)), (0.0, 90.0, 180.0))
    write_feature_stack(tmp_path / "stack", stack)
    return tmp_path / "stack", stack


def test_descriptor_matches_library(capsys, stack_dir, tmp_path):
    d, stack = stack_dir
    out = tmp_path / "c.csv"
    _, rep, _ = invoke(capsys, "descriptor", d, "--out", out)
    desc = build_descriptor(stack, d=4, eps=1e-6)
    assert read_matrix_csv(out).tobytes() == desc.c.entries.tobytes()
    o = rep["outputs"]
    assert o["dim"] == 17
    assert o["min_eigenvalue"] > 0
    assert o["det_c"] == pytest.approx(o["det_sigma_reg"], rel=1e-8)


def test_descriptor_byte_identical(capsys, stack_dir, tmp_path):
    d, _ = stack_dir
    invoke(capsys, "descriptor", d, "--out", tmp_path / "a.csv")
    invoke(capsys, "descriptor", d, "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_descriptor_constant_stack(capsys, tmp_path):
    stack = FeatureMapStack(np.full((2, 4, 4, 4), 0.5), (0.0, 180.0))
    write_feature_stack(tmp_path / "s", stack)
    _, rep, _ = invoke(capsys, "descriptor", tmp_path / "s", "--eps", 1e-3)
    o = rep["outputs"]
    assert o["mean"] == [0.5] * 16
    assert o["logdet_sigma_reg"] == pytest.approx(16 * math.log(1e-3), rel=1e-12)
    assert o["logdet_c"] == pytest.approx(16 * math.log(1e-3), rel=1e-9)


def test_descriptor_spd_round_trip(capsys, stack_dir, tmp_path):
    d, stack = stack_dir
    invoke(capsys, "descriptor", d, "--out", tmp_path / "c.csv")
    other = FeatureMapStack(stack.maps * 1.5 + 0.1, stack.azimuths)
    write_feature_stack(tmp_path / "s2", other)
    invoke(capsys, "descriptor", tmp_path / "s2", "--out", tmp_path / "t.csv")
    _, rep, _ = invoke(capsys, "spd", tmp_path / "c.csv", tmp_path / "t.csv", "--eps", 0)
    lib = lem_distance_sq(build_descriptor(stack).c, build_descriptor(other).c)
    assert abs(rep["outputs"]["lem_distance_sq"] - lib) <= 1e-12 * max(1.0, lib)


def test_descriptor_bad_patch(capsys, stack_dir):
    code, _, err = invoke(capsys, "descriptor", stack_dir[0], "--patch", 3)
    assert code == 1 and err["error_kind"] == "ShapeError"


# --- gradcheck ---------------------------------------------------------------------------

@pytest.mark.parametrize("target", ["spd", "svo", "harness"])
def test_gradcheck_passes(capsys, target):
    code, rep, _ = invoke(capsys, "gradcheck", target, "--seed", 2)
    assert code == 0 and rep["outputs"]["passed"]
    assert rep["outputs"]["max_rel_err"] < 1e-5


def test_gradcheck_svo_satisfied(capsys):
    _, rep, _ = invoke(capsys, "gradcheck", "svo", "--satisfied")
    o = rep["outputs"]
    assert o["passed"] and o["analytic_max_abs"] == 0.0


def test_gradcheck_unknown_target(capsys):
    code, _, err = invoke(capsys, "gradcheck", "bogus")
    assert code == 1 and err["error_kind"] == "UsageError"


def test_seed_env_override(capsys, monkeypatch):
    monkeypatch.setenv("MOC_SEED", "11")
    _, rep, _ = invoke(capsys, "gradcheck", "spd", "--seed", 2)
    assert rep["inputs"]["seed"] == 11


def test_seed_env_invalid(capsys, monkeypatch):
    monkeypatch.setenv("MOC_SEED", "eleven")
    code, _, err = invoke(capsys, "gradcheck", "spd")
    assert code == 1 and err["error_kind"] == "UsageError"


def test_usage_error(capsys):
    code, _, err = invoke(capsys, "frobnicate")
    assert code == 1 and err["error_kind"] == "UsageError"


# --- optimize ----------------------------------------------------------------------------

def write_config(tmp_path, data):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    return p


SHORT = {"optimizer": {"iterations": 60}}


def test_optimize_writes_trace(capsys, tmp_path):
    out = tmp_path / "t.csv"
    code, rep, _ = invoke(capsys, "optimize", write_config(tmp_path, SHORT), "--out", out)
    assert code == 0 and rep["outputs"]["iterations"] == 60
    lines = out.read_text().splitlines()
    assert lines[0].startswith("iter,total") and len(lines) == 62


def test_optimize_repeatable(capsys, tmp_path):
    cfg = write_config(tmp_path, SHORT)
    invoke(capsys, "optimize", cfg, "--out", tmp_path / "a.csv")
    invoke(capsys, "optimize", cfg, "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_optimize_seed_changes_trace(capsys, tmp_path):
    cfg = write_config(tmp_path, SHORT)
    invoke(capsys, "optimize", cfg, "--seed", 1, "--out", tmp_path / "a.csv")
    invoke(capsys, "optimize", cfg, "--seed", 2, "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()


def test_optimize_zero_weights(capsys, tmp_path):
    cfg = write_config(tmp_path, {"optimizer": {"iterations": 20},
                                  "schedule": {"svo_initial": 0, "svo_final": 0, "spd_base": 0, "spd_peak": 0}})
    _, rep, _ = invoke(capsys, "optimize", cfg, "--out", tmp_path / "t.csv")
    o = rep["outputs"]
    assert o["final_total"] == o["initial_total"] == 0.0
    assert o["final_lem_dist"] == o["initial_lem_dist"]


def test_optimize_config_error_keys(capsys, tmp_path):
    code, _, err = invoke(capsys, "optimize", write_config(tmp_path, {"scene": {"viewz": 3}}))
    assert code == 1 and err["error_kind"] == "ConfigError"
    assert "scene.viewz" in err["message"]


def test_optimize_bad_json(capsys, tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text('{\n  "scene": ,\n}')
    code, _, err = invoke(capsys, "optimize", p)
    assert code == 1 and err["error_kind"] == "ConfigError" and "line 2" in err["message"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "viewreg", "gradcheck", "svo", "--seed", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["outputs"]["passed"]
    bad = subprocess.run([sys.executable, "-m", "viewreg", "spd", str(tmp_path / "x.csv"), "y.csv"],
                         capture_output=True, text=True)
    assert bad.returncode == 1 and bad.stdout == ""
    assert json.loads(bad.stderr)["error_kind"] == "IOError"
