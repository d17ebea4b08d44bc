import hashlib
import json
from pathlib import Path

import pytest
import yaml

from abnonlocal.cli import ConfigError, ENV_OUTPUT_DIR, main, resolved, validate

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _doc(name):
    return yaml.safe_load((CONFIGS / name).read_text())


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_empty_document_lists_required():
    with pytest.raises(ConfigError) as e:
        validate("")
    paths = {err["path"] for err in e.value.errors}
    assert {"experiment", "parameters"} <= paths


def test_bad_alpha_type_path():
    doc = _doc("interfere.yaml")
    doc["parameters"]["alpha"] = "abc"
    with pytest.raises(ConfigError) as e:
        validate(doc)
    assert [err["path"] for err in e.value.errors] == ["parameters.alpha"]


def test_all_errors_at_once():
    doc = _doc("interfere.yaml")
    doc["parameters"]["alpha"] = "abc"
    doc["parameters"]["steps"] = -1
    doc["parameters"]["colour"] = "red"
    del doc["parameters"]["screen_row"]
    with pytest.raises(ConfigError) as e:
        validate(doc)
    paths = {err["path"] for err in e.value.errors}
    assert paths == {"parameters.alpha", "parameters.steps", "parameters.colour", "parameters.screen_row"}


def test_unknown_top_level_key():
    doc = _doc("scatter.yaml")
    doc["verbose"] = True
    with pytest.raises(ConfigError) as e:
        validate(doc)
    assert e.value.errors[0]["path"] == "verbose"


def test_valid_interfere_echoes_defaults():
    doc = _doc("interfere.yaml")
    del doc["parameters"]["backend"]
    cfg = validate(doc)
    r = resolved(cfg)
    assert r["parameters"]["backend"] == "hopping"
    assert r["parameters"]["mass"] == 1.0
    assert r["parameters"]["lattice"]["nx"] == 64
    assert r["parameters"]["singular_radius"] is None


@pytest.mark.parametrize("name", ["interfere.yaml", "scan.yaml", "winding.yaml", "return_chain.yaml",
                                  "return_lattice.yaml", "propagate.yaml", "gauge_check.yaml", "scatter.yaml"])
def test_shipped_configs_validate(name):
    validate((CONFIGS / name).read_text())


def test_dof_command(tmp_path, capsys):
    code, out, _ = _run(["dof", "--group", "su3", "--fermion", "quark:3", "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "dof.json").read_text())
    assert doc["ghost_dof"] == 16 and doc["fermion_dof"] == 12 and doc["confinement_flag"] is True
    assert "ghost_dof" in out and "16" in out


def test_return_check_chain(tmp_path, capsys):
    code, _, _ = _run(["return-check", "--config", str(CONFIGS / "return_chain.yaml"),
                       "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "return.json").read_text())
    assert doc["deviation"] < 1e-10 and doc["factorization_residual"] < 1e-10


def test_numerical_failure_exit_2(tmp_path, capsys):
    code, _, err = _run(["return-check", "--config", str(CONFIGS / "return_chain.yaml"),
                         "--set", "parameters.absorbing_slice=2", "--output-dir", str(tmp_path)], capsys)
    assert code == 2
    doc = json.loads(err)
    assert doc["error"] == "singular-slice-operator"
    assert doc["condition"] == "inf"


def test_validation_failure_exit_1(tmp_path, capsys):
    code, _, err = _run(["interfere", "--config", str(CONFIGS / "interfere.yaml"), "--alpha", "abc",
                         "--output-dir", str(tmp_path)], capsys)
    assert code == 1
    doc = json.loads(err)
    assert doc["error"] == "validation-error"
    assert doc["errors"][0]["path"] == "parameters.alpha"


def test_domain_error_exit_1(tmp_path, capsys):
    code, _, err = _run(["winding", "--config", str(CONFIGS / "winding.yaml"), "--set", "parameters.to=[2,2]",
                         "--set", "parameters.from=[1,1]", "--set", "parameters.slices=7",
                         "--output-dir", str(tmp_path)], capsys)
    assert code == 1
    assert json.loads(err)["error"] == "instance-too-large"


def test_flags_override_document(tmp_path, capsys):
    code, _, _ = _run(["scatter-oracle", "--config", str(CONFIGS / "scatter.yaml"), "--alpha", "0.25",
                       "--thetas", "4", "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["parameters"] == {"alpha": 0.25, "k": 1.0, "thetas": 4}
    assert len((tmp_path / "cross_section.csv").read_text().strip().split("\n")) == 5


def test_env_output_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path / "env"))
    code, _, _ = _run(["scatter-oracle", "--config", str(CONFIGS / "scatter.yaml")], capsys)
    assert code == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_mismatched_experiment(tmp_path, capsys):
    code, _, err = _run(["dof", "--config", str(CONFIGS / "scatter.yaml"), "--output-dir", str(tmp_path)], capsys)
    assert code == 1
    assert json.loads(err)["errors"][0]["path"] == "experiment"


def test_manifest_digests(tmp_path, capsys):
    _run(["winding", "--config", str(CONFIGS / "winding.yaml"), "--output-dir", str(tmp_path)], capsys)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    files = sorted(p.name for p in tmp_path.iterdir() if p.name != "manifest.json")
    assert [o["file"] for o in manifest["outputs"]] == files
    for o in manifest["outputs"]:
        assert hashlib.sha256((tmp_path / o["file"]).read_bytes()).hexdigest() == o["sha256"]
    assert manifest["version"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["deviation"] < 1e-12


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())}


@pytest.mark.parametrize("argv", [
    ["interfere", "--config", str(CONFIGS / "interfere.yaml"), "--alpha", "0"],
    ["gauge-check", "--config", str(CONFIGS / "gauge_check.yaml")],
    ["propagate", "--config", str(CONFIGS / "propagate.yaml")],
])
def test_determinism(tmp_path, capsys, argv):
    for run in ("a", "b"):
        assert main(argv + ["--output-dir", str(tmp_path / run)]) == 0
    capsys.readouterr()
    a, b = _outputs(tmp_path / "a"), _outputs(tmp_path / "b")
    assert a.keys() == b.keys() and a == b
