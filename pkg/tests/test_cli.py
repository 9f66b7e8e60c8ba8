import csv
import json

import pytest

from robustwf import cli
from robustwf.annular import MonotonicityError
from robustwf.cli import annular_document, main, spherical_document

from conftest import small_scenario


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def sph_config(tmp_path):
    doc = spherical_document(small_scenario(), [1.0, 0.5j], 0.3, {"randomization_trials": 8})
    return _write(tmp_path / "sph.json", doc)


@pytest.fixture
def ann_config(tmp_path):
    doc = annular_document(small_scenario(), [1.0, 0.3], [1.5, 0.8], {"randomization_trials": 4})
    return _write(tmp_path / "ann.json", doc)


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_design_and_eval_roundtrip(tmp_path, sph_config):
    out = tmp_path / "res.json"
    assert main(["design", "spherical", "--config", str(sph_config), "--out", str(out), "--quiet"]) == 0
    result = json.loads(out.read_text())
    assert result["status"] == "ok"
    manifest = json.loads((tmp_path / "res.json.manifest.json").read_text())
    for key in ("tool", "version", "config_hash", "rng_seed", "algorithm", "tolerances", "wall_time_s", "outputs"):
        assert key in manifest

    pat = tmp_path / "pat.csv"
    assert main(["eval", "pattern", "--result", str(out), "--config", str(sph_config), "--out", str(pat),
                 "--quiet"]) == 0
    rows = _rows(pat)
    assert rows[0] == list(cli.PATTERN_HEADER) and len(rows) == 722

    smp = tmp_path / "smp.csv"
    assert main(["eval", "sinr-samples", "--result", str(out), "--config", str(sph_config),
                 "--out", str(smp), "--count", "17", "--quiet"]) == 0
    rows = _rows(smp)
    assert rows[0] == list(cli.SAMPLE_HEADER) and len(rows) == 18
    assert all(r[-1] == "1" for r in rows[1:])


def test_annular_design(tmp_path, ann_config):
    out = tmp_path / "res.json"
    assert main(["design", "annular", "--config", str(ann_config), "--out", str(out), "--quiet"]) == 0
    doc = json.loads(out.read_text())
    assert doc["algorithm"] == "dmdsdr"
    assert doc["trace"]["p_rs"][0] is None


def test_design_is_byte_identical(tmp_path, sph_config):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["design", "spherical", "--config", str(sph_config), "--out", str(out), "--quiet"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_override_changes_manifest(tmp_path, sph_config):
    out = tmp_path / "res.json"
    assert main(["design", "spherical", "--config", str(sph_config), "--out", str(out), "--seed", "9",
                 "--quiet"]) == 0
    assert json.loads((tmp_path / "res.json.manifest.json").read_text())["rng_seed"] == 9


def test_degraded_design_is_flagged(tmp_path):
    doc = spherical_document(small_scenario(), [1.0, 0.5j], 2.0, {"randomization_trials": 2})
    cfg = _write(tmp_path / "big.json", doc)
    out = tmp_path / "res.json"
    assert main(["design", "spherical", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    assert json.loads(out.read_text())["status"] == "degraded"


@pytest.mark.parametrize("content", ["{not json", json.dumps({"scenario": {}})])
def test_bad_config_exits_2(tmp_path, content):
    cfg = tmp_path / "bad.json"
    cfg.write_text(content)
    assert main(["design", "spherical", "--config", str(cfg), "--out", str(tmp_path / "o.json"), "--quiet"]) == 2
    assert not (tmp_path / "o.json").exists()


def test_dimension_mismatch_exits_2(tmp_path):
    doc = spherical_document(small_scenario(), [1.0, 0.5j, 0.1], 0.3)
    cfg = _write(tmp_path / "mm.json", doc)
    assert main(["design", "spherical", "--config", str(cfg), "--out", str(tmp_path / "o.json"), "--quiet"]) == 2


def test_kind_mismatch_and_unknown_experiment_exit_2(tmp_path, ann_config):
    assert main(["design", "spherical", "--config", str(ann_config), "--out", str(tmp_path / "o.json"),
                 "--quiet"]) == 2
    assert main(["experiment", "fig99", "--out", str(tmp_path / "x"), "--quiet"]) == 2


def test_unknown_algorithm_key_exits_2(tmp_path):
    doc = spherical_document(small_scenario(), [1.0, 0.5j], 0.3, {"bogus": 1})
    cfg = _write(tmp_path / "k.json", doc)
    assert main(["design", "spherical", "--config", str(cfg), "--out", str(tmp_path / "o.json"), "--quiet"]) == 2


def test_solver_failure_exits_3(tmp_path, sph_config, monkeypatch):
    def boom(*a, **k):
        raise MonotonicityError(1, 2.0, 1.0, "W-step value")

    monkeypatch.setattr(cli, "run_design", boom)
    out = tmp_path / "o.json"
    assert main(["design", "spherical", "--config", str(sph_config), "--out", str(out), "--quiet"]) == 3
    assert not out.exists()


def test_missing_result_exits_4(tmp_path, sph_config):
    assert main(["eval", "pattern", "--result", str(tmp_path / "none.json"), "--config", str(sph_config),
                 "--out", str(tmp_path / "p.csv"), "--quiet"]) == 4


def test_scenario_hash_mismatch_exits_4(tmp_path, sph_config):
    out = tmp_path / "res.json"
    assert main(["design", "spherical", "--config", str(sph_config), "--out", str(out), "--quiet"]) == 0
    other = spherical_document(small_scenario(sigma2=3.0), [1.0, 0.5j], 0.3)
    cfg2 = _write(tmp_path / "other.json", other)
    assert main(["eval", "pattern", "--result", str(out), "--config", str(cfg2),
                 "--out", str(tmp_path / "p.csv"), "--quiet"]) == 4


def test_bad_count_exits_2(tmp_path, sph_config):
    assert main(["eval", "sinr-samples", "--result", "x", "--config", str(sph_config),
                 "--out", str(tmp_path / "s.csv"), "--count", "0", "--quiet"]) == 2


@pytest.mark.parametrize("kind", ["spherical", "annular"])
def test_example_config_loads(tmp_path, kind):
    out = tmp_path / f"{kind}.json"
    assert main(["example-config", kind, "--out", str(out), "--quiet"]) == 0
    scenario, uset, cfg = cli.load_design_config(out)
    assert uset.dim == scenario.num_paths == 3


def test_fig4_sweep_is_monotone(tmp_path):
    out = tmp_path / "fig4"
    assert main(["experiment", "fig4", "--out", str(out), "--quiet"]) == 0
    rows = _rows(out / "fig4_radius_sweep.csv")
    assert rows[0][:2] == ["radius", "worst_case_sinr"]
    radii = [float(r[0]) for r in rows[1:]]
    values = [float(r[1]) for r in rows[1:]]
    bounds = [float(r[3]) for r in rows[1:]]
    assert radii == pytest.approx([0.1 * k for k in range(1, 10)])
    assert all(b >= a * (1 - 1e-9) for a, b in zip(values[1:], values))
    assert all(v <= bnd * (1 + 1e-6) for v, bnd in zip(values, bounds))
    assert (out / "fig4.manifest.json").exists()
