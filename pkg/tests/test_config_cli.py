import json

import numpy as np
import pytest

from bootdiff.cli import EXIT_CONFIG, EXIT_OK, main
from bootdiff.config import load_config, parse_config
from bootdiff.errors import ConfigError


def _base_doc(out_dir="run"):
    return {
        "seed": 3,
        "out_dir": out_dir,
        "spec": {"preset": "small", "height": 2, "width": 2,
                 "n_components": 1, "rho_g": 0.0, "rank": 0, "seed": 11},
        "views": [{"kind": "patch_tiling", "patch_h": 1, "patch_w": 2}],
        "sizes": {"n0": 16, "view": 48, "calib": 24},
        "train": {
            "views": {"epochs": 1, "batch_size": 16, "seed": 3,
                      "hidden": [8], "max_steps": 4},
            "residual": {"lam": 0.1, "mode": "adapter",
                         "inner": {"epochs": 1, "batch_size": 8, "seed": 3,
                                   "hidden": [8], "max_steps": 4}}},
        "schedule": {"sigma_min": 0.01, "sigma_max": 2.0, "Q": 10},
        "eval": {"n_mc": 200, "bins": 4, "kl_n_mc": 16},
    }


def test_parse_config_builds_everything():
    cfg = parse_config(_base_doc())
    assert cfg.spec.m == 4
    assert len(cfg.operators) == 2  # two 1x2 patches tile a 2x2 grid
    assert cfg.view_sizes == [48, 48]
    assert cfg.n0 == 16 and cfg.calib_size == 24
    assert cfg.schedule.Q == 10
    assert cfg.view_cfg.hidden == (8,)
    assert cfg.residual_cfg.mode == "adapter"


def test_parse_config_per_view_sizes():
    doc = _base_doc()
    doc["sizes"]["view"] = [10, 20]
    assert parse_config(doc).view_sizes == [10, 20]
    doc["sizes"]["view"] = [10]
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_unknown_keys_rejected_with_path():
    doc = _base_doc()
    doc["bogus"] = 1
    with pytest.raises(ConfigError, match="config.bogus"):
        parse_config(doc)
    doc = _base_doc()
    doc["sizes"]["extra"] = 1
    with pytest.raises(ConfigError, match="config.sizes.extra"):
        parse_config(doc)
    doc = _base_doc()
    doc["views"][0]["typo"] = 1
    with pytest.raises(ConfigError, match=r"views\[0\].typo"):
        parse_config(doc)


def test_type_errors_rejected():
    doc = _base_doc()
    doc["seed"] = "three"
    with pytest.raises(ConfigError, match="config.seed"):
        parse_config(doc)
    doc = _base_doc()
    doc["seed"] = True  # bool is not an int here
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_unknown_view_kind_rejected():
    doc = _base_doc()
    doc["views"] = [{"kind": "mystery"}]
    with pytest.raises(ConfigError, match="unknown view kind"):
        parse_config(doc)


def test_load_config_reports_json_line(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "seed": 1,\n}\n')
    with pytest.raises(ConfigError, match=r"bad\.json:3"):
        load_config(bad)
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")


def test_spec_json_round_trip():
    from bootdiff.synthdata import spec_to_json
    cfg = parse_config(_base_doc())
    doc = _base_doc()
    doc["spec"] = {"spec_json": json.loads(spec_to_json(cfg.spec))}
    cfg2 = parse_config(doc)
    assert spec_to_json(cfg2.spec) == spec_to_json(cfg.spec)


@pytest.fixture
def workdir(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(_base_doc()))
    return tmp_path, cfg_path


def _run(tmp_path, *argv):
    return main(["--data-dir", str(tmp_path), "--threads", "1", *argv])


def test_cli_gen_and_bootstrap_pipeline(workdir):
    tmp_path, cfg_path = workdir
    assert _run(tmp_path, "gen", "--config", str(cfg_path)) == EXIT_OK
    run = tmp_path / "run"
    assert (run / "s0.bdl").exists() and (run / "calib.bdl").exists()
    assert (run / "view_data_0.bdl").exists()
    assert (run / "resolved_config.json").exists()

    assert _run(tmp_path, "bootstrap", "--config", str(cfg_path)) == EXIT_OK
    assert (run / "manifest.json").exists()
    assert (run / "combined.json").exists()

    assert _run(tmp_path, "eval", "--config", str(cfg_path), "--csv") \
        == EXIT_OK
    csv = (run / "eval.csv").read_text()
    assert csv.splitlines()[0].startswith("sigma_lo,sigma_hi,R_hat")
    assert (run / "eval.svg").read_text().startswith("<svg")

    assert _run(tmp_path, "sample", "--config", str(cfg_path),
                "--n", "4", "--steps", "8") == EXIT_OK
    x = np.load(run / "samples.npy")
    assert x.shape == (4, 4) and np.all(np.isfinite(x))


def test_cli_manifest_rerun_reproduces(workdir):
    tmp_path, cfg_path = workdir
    assert _run(tmp_path, "bootstrap", "--config", str(cfg_path)) == EXIT_OK
    manifest = tmp_path / "run" / "manifest.json"
    assert _run(tmp_path, "bootstrap", "--manifest", str(manifest),
                "--rerun-dir", "again") == EXIT_OK
    rec1 = json.loads((tmp_path / "run" / "manifest.json").read_text())
    rec2 = json.loads((tmp_path / "again" / "manifest.json").read_text())
    assert rec1["hashes"] == rec2["hashes"]


def test_cli_bounds_worked_example(tmp_path, capsys):
    assert _run(tmp_path, "bounds") == EXIT_OK
    out = capsys.readouterr().out
    assert "0.082085" in out
    assert (tmp_path / "bounds.csv").read_text().startswith("N,K,m,U")


def test_cli_exit_codes(workdir, capsys):
    tmp_path, cfg_path = workdir
    assert _run(tmp_path, "bootstrap") == EXIT_CONFIG  # no config/manifest
    assert _run(tmp_path, "eval", "--config", str(cfg_path)) == EXIT_CONFIG
    missing = tmp_path / "nope.json"
    assert _run(tmp_path, "gen", "--config", str(missing)) == EXIT_CONFIG
    capsys.readouterr()


def test_cli_train_views_requires_gen(workdir):
    tmp_path, cfg_path = workdir
    assert _run(tmp_path, "train-views", "--config", str(cfg_path)) \
        == EXIT_CONFIG
    assert _run(tmp_path, "gen", "--config", str(cfg_path)) == EXIT_OK
    assert _run(tmp_path, "train-views", "--config", str(cfg_path)) \
        == EXIT_OK
    assert (tmp_path / "run" / "view_0.net.bin").exists()
