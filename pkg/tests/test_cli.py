from __future__ import annotations

import hashlib
import json

import pytest

from conftest import TOY_DIR
from reviewpanel import cli
from reviewpanel.config import ConfigError, RunConfig, load_config

STAGES = ("ingest", "summary", "features", "panel", "regress", "tables")

# Outputs built from integer arithmetic and plain string formatting; these are
# stable across BLAS builds.  Regression outputs are checked by rerun instead.
GOLDEN = {
    "features.csv": "8c61a42162d76f115dc7884340bdc8d0da084f23787e1005e235d62ae8c8f22a",
    "summary.csv": "8084f53935d80e16cc45d03f2187890f6ddd1bc5beda5df27ca2131157c8a8c5",
    "ingest_report.json": "1457a1dbd4831f46af0e8ddcd63e6d7fa14eaaacf0e7912dc250b98719a20533",
    "store/F01.csv": "cb2ec0310fe68bd49e2ac9f2281ea769d67bc50c1f4bccd10cfdee6a3d932c08",
    "store/F02.csv": "477eb4337744b89e225807772d0ba7f98906b25ee013d2dd7e052433c6f3471d",
    "store/F03.csv": "73726e37034e11b61cb367657cff446d3f2acba16b04bc02effe6de3b96bd793",
}


def sha(path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_toy(out, *stages, extra=()):
    return [cli.main([s, "--config", str(TOY_DIR / "toy.cfg"), "--out-dir", str(out), "--log-level", "ERROR", *extra])
            for s in stages]


@pytest.fixture(scope="module")
def toy_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    assert run_toy(out, *STAGES) == [0] * len(STAGES)
    return out


def test_golden_digests(toy_out):
    for name, digest in GOLDEN.items():
        assert sha(toy_out / name) == digest, name


def test_features_equal_bundled_golden(toy_out):
    assert (toy_out / "features.csv").read_bytes() == (TOY_DIR / "golden_features.csv").read_bytes()


def test_summary_counts(toy_out, toy_manifest):
    lines = (toy_out / "summary.csv").read_text().splitlines()
    assert lines[1] == f"all,{toy_manifest['n_valid_unique']},{toy_manifest['n_products']},3"
    report = json.loads((toy_out / "ingest_report.json").read_text())
    assert report["duplicates_dropped"] == toy_manifest["n_duplicates"]
    assert report["invalid_dropped"] == toy_manifest["n_invalid"]


def test_every_table_written(toy_out):
    names = {p.stem for p in (toy_out / "tables").glob("*.csv")}
    assert names == {"cnst_cpst", "ost_fst", "sentiment", "growth_value", "transparency", "surprises", "profitability"}
    headings = [ln for ln in (toy_out / "tables" / "report.md").read_text().splitlines() if ln.startswith("### ")]
    assert len(headings) == len(names)


def test_run_manifests_record_digests(toy_out):
    run = json.loads((toy_out / "run_features.json").read_text())
    assert run["outputs"]["features.csv"] == GOLDEN["features.csv"]
    assert run["config_digest"] == load_config(toy_out / "config.cfg").digest()
    assert set(run["versions"]) >= {"numpy", "pandas", "scipy", "python"}


def test_rerun_is_byte_identical(toy_out, tmp_path):
    assert run_toy(tmp_path, *STAGES) == [0] * len(STAGES)
    first = sorted(p.relative_to(toy_out) for p in toy_out.rglob("*") if p.is_file() and not p.name.startswith("run_"))
    second = sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*") if p.is_file() and not p.name.startswith("run_"))
    assert first == second
    for rel in first:
        if rel.name == "config.cfg":
            continue  # records the output directory
        assert (toy_out / rel).read_bytes() == (tmp_path / rel).read_bytes(), rel


def test_regress_before_panel_fails(tmp_path, capsys):
    assert run_toy(tmp_path, "regress") == [2]
    assert "panel file not found" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["ingest", "--config", str(tmp_path / "nope.cfg")]) == 2
    assert "config file not found" in capsys.readouterr().err


def test_bad_override(tmp_path, capsys):
    assert run_toy(tmp_path, "ingest", extra=("--set", "se=bootstrap")) == [2]
    assert "se must be" in capsys.readouterr().err
    assert run_toy(tmp_path, "ingest", extra=("--set", "noequals")) == [2]


def test_unknown_table_is_estimation_error(toy_out, capsys):
    assert run_toy(toy_out, "tables", extra=("--set", "tables=nonsense")) == [1]
    assert "unknown table" in capsys.readouterr().err


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])


def test_synth_and_mc_commands(tmp_path):
    assert cli.main(["synth", "--out-dir", str(tmp_path), "--seed", "3", "--log-level", "ERROR",
                     "--set", "synth_weeks=10"]) == 0
    manifest = json.loads((tmp_path / "bundle" / "manifest.json").read_text())
    assert manifest["bundle_spec"]["seed"] == 3
    assert cli.main(["mc", "--out-dir", str(tmp_path), "--log-level", "ERROR", "--set", "mc_reps=3",
                     "--set", "mc_firms=50", "--set", "mc_weeks=6", "--set", "mc_estimator=fe"]) == 0
    result = json.loads((tmp_path / "mc_fe.json").read_text())
    assert result["reps"] == 3 and result["n_failed"] == 0


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nmin_reviews = 10\ncollapse = true\nmarket = data/m.csv\nsurprise_clamp = 5\n")
    cfg = load_config(path, {"seed": "7", "se": "robust"})
    assert cfg.min_reviews == 10 and cfg.collapse is True and cfg.seed == 7 and cfg.se == "robust"
    assert cfg.surprise_clamp == 5.0
    assert cfg.market == str((tmp_path / "data" / "m.csv").resolve())
    assert load_config(path).digest() == load_config(path).digest()
    assert load_config(path).digest() != load_config(path, {"seed": "1"}).digest()


def test_config_text_round_trip(tmp_path):
    cfg = RunConfig(min_reviews=5, surprise_clamp=None, time_fe="none", out_dir=str(tmp_path))
    path = tmp_path / "c.cfg"
    path.write_text(cfg.to_text())
    back = load_config(path)
    assert back == cfg.resolve_paths(tmp_path)
    assert back.time_fe_value is None


def test_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("min_revews = 10\n")
    with pytest.raises(ConfigError):
        load_config(path)
