import csv
import json

import pytest

from gai_forge.cli import main
from gai_forge.experiment import ExperimentConfig
from gai_forge.numcore import load_tensors

TINY = """
seeds = [0, 1]
[data]
image_size = 8
train_count = 300
test_count = 60
real_test_count = 200
[data.train_counts]
P2 = 0
[benchmark]
shots = 3
[schedule.base]
iterations = 40
[schedule.finetune]
iterations = 20
[coverage]
iterations = 30
train_count = 100
"""


@pytest.fixture(scope="module")
def config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.toml"
    path.write_text(TINY)
    return str(path)


def run(config, out, *args):
    return main([args[0], "--config", config, "--output", str(out), *args[1:]])


def test_gen_data_layout_and_determinism(config, tmp_path, capsys):
    assert run(config, tmp_path / "a", "gen-data") == 0
    assert run(config, tmp_path / "b", "gen-data") == 0
    [da] = (tmp_path / "a" / "data").iterdir()
    [db] = (tmp_path / "b" / "data").iterdir()
    assert da.name == db.name
    assert (da / "manifest.json").read_bytes() == (db / "manifest.json").read_bytes()
    fams = sorted(p.name for p in (da / "families").iterdir())
    assert fams == ["C1", "C2", "P1", "P2", "S1", "S2"]
    assert not (da / "families" / "P2" / "train.gait").exists()
    manifest = json.loads((da / "manifest.json").read_text())
    assert "P2" in json.dumps(manifest)
    assert (da / "families" / "P2" / "test.gait").exists()
    for f in ("real/train.gait", "families/S1/train.gait"):
        assert (da / f).read_bytes() == (db / f).read_bytes()


def test_coverage_outputs(config, tmp_path, capsys):
    # P2 has no training data in this config, so give it some
    extra = ("--set", "data.train_counts.P2=100")
    assert run(config, tmp_path, "gen-data", *extra) == 0
    assert run(config, tmp_path, "coverage", *extra) == 0
    [d] = (tmp_path / "coverage").iterdir()
    assert {p.name for p in d.iterdir()} >= {"coverage.csv", "taxonomy.dot", "edges.txt", "components.json"}
    comps = json.loads((d / "components.json").read_text())
    assert sorted(comps["components"]) == ["C1", "C2", "P1", "P2", "S1", "S2"]


def test_coverage_needs_generated_data(config, tmp_path, capsys):
    assert run(config, tmp_path, "coverage") == 1
    assert "gen-data" in capsys.readouterr().err
    assert run(config, tmp_path, "gen-data") == 0
    # P2 has a zero training count here
    assert run(config, tmp_path, "coverage") == 1
    assert "P2" in capsys.readouterr().err


def test_usage_errors_exit_2(config, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run(config, tmp_path, "run", "--method", "bogus")
    assert exc.value.code == 2
    assert run(config, tmp_path, "run", "--set", "gai.nonsense=1") == 2
    assert run(config, tmp_path, "run", "--set", "seeds=[]") == 2
    assert run(config, tmp_path, "export-samples", "--count", "0") == 2
    assert "usage error" in capsys.readouterr().err


def test_run_is_bitwise_reproducible(config, tmp_path, monkeypatch, capsys):
    assert run(config, tmp_path / "a", "run", "--method", "gai") == 0
    monkeypatch.setenv("GAI_FORGE_THREADS", "2")
    assert run(config, tmp_path / "b", "run", "--method", "gai") == 0
    [ra] = (tmp_path / "a" / "reports").iterdir()
    [rb] = (tmp_path / "b" / "reports").iterdir()
    names = sorted(p.name for p in ra.iterdir())
    assert names == sorted(p.name for p in rb.iterdir())
    assert {"aggregate.json", "aggregate.csv", "seed0.json", "seed1.json", "seed0_history.csv"} <= set(names)
    for n in names:
        assert (ra / n).read_bytes() == (rb / n).read_bytes(), n
    seed = json.loads((ra / "seed0.json").read_text())
    assert seed["method"] == "gai" and seed["generated"] >= seed["accepted"]
    assert "gai:" in capsys.readouterr().out


def test_config_hash_ignores_output_and_int_float_spelling():
    a = ExperimentConfig.load(None, ["gai.tau=0"])
    b = ExperimentConfig.load(None, ["gai.tau=0.0", 'output="elsewhere"'])
    assert a.hash == b.hash
    assert a.hash != ExperimentConfig.load(None, ["gai.tau=0.25"]).hash


def test_ablate_table(config, tmp_path, capsys):
    assert run(config, tmp_path, "ablate", "--sweep", "tau", "--values", "0,0.5", "--set", "seeds=[0]") == 0
    [table] = (tmp_path / "ablate").iterdir()
    rows = list(csv.DictReader(open(table)))
    assert [float(r["value"]) for r in rows] == [0.0, 0.5]
    assert {"acc_minor", "acc_minor_std", "auc"} <= set(rows[0])


def test_export_samples(config, tmp_path, capsys):
    assert run(config, tmp_path, "export-samples", "--count", "2", "--set", "seeds=[1]") == 0
    [d] = (tmp_path / "samples").iterdir()
    index = json.loads((d / "index.json").read_text())
    assert len(index["samples"]) == 2
    quint = load_tensors(d / "sample0.gait")
    assert len(quint) == 5 and quint[0].shape == (8, 8, 3)


def test_train_base_caches_models(config, tmp_path, capsys):
    assert run(config, tmp_path, "train-base") == 0
    first = capsys.readouterr().out
    assert run(config, tmp_path, "train-base") == 0
    assert capsys.readouterr().out == first
    assert len(list((tmp_path / "models").glob("base-*.ckpt"))) == 2
