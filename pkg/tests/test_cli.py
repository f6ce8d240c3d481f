import csv
import json
import struct

import numpy as np
import pytest

from quicci.cli import main
from quicci.descriptor import load_descriptor_set
from quicci.experiments.corpus import write_toy_corpus


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    write_toy_corpus(d, 6, seed=3)
    return d


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_generate_header_and_contents(toy_dir, tmp_path):
    out = tmp_path / "a.qdf"
    assert main(["generate", str(toy_dir / "toy_0000.obj"), "-o", str(out), "--width", "63", "--seed", "1"]) == 0
    raw = out.read_bytes()
    magic, version, width, height, count, _ = struct.unpack_from("<4sIHHQI", raw, 0)
    assert (magic, version, width, height) == (b"QIDS", 1, 63, 64)
    dset = load_descriptor_set(out)
    assert count == len(dset)
    # 63 x 64 bits fill exactly 63 words per descriptor
    assert dset.words.shape[1] == 63
    assert dset.width == 63 and len(dset) > 0
    assert (dset.provenance[:, 0] == 0).all()


def test_missing_input_fails(tmp_path, capsys):
    assert main(["generate", str(tmp_path / "nope.obj"), "-o", str(tmp_path / "x.qdf")]) != 0
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "x.qdf").exists()


def test_build_and_query_finds_stored_descriptor(toy_dir, tmp_path, capsys):
    qdf = tmp_path / "d.qdf"
    assert main(["generate", str(toy_dir), "-o", str(qdf), "--width", "16", "--height", "16"]) == 0
    idx = tmp_path / "idx"
    assert main(["index", "build", str(qdf), "-o", str(idx), "--chunk-bits", "32", "--leaf-threshold", "16"]) == 0
    res = tmp_path / "hits.csv"
    assert main(["index", "query", str(idx), "--needles", str(qdf), "--needle-index", "5", "--k", "4",
                 "-o", str(res)]) == 0
    rows = read_csv(res)
    assert rows[0] == ["rank", "distance", "object_id", "vertex_index"]
    assert len(rows) == 5 and rows[1][:2] == ["0", "0"]
    capsys.readouterr()
    assert main(["index", "stats", str(idx)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["entry_count"] == len(load_descriptor_set(qdf))


def test_clutterbox_is_reproducible(toy_dir, tmp_path):
    args = ["experiment", "clutterbox", "--dataset", str(toy_dir), "--runs", "2", "--object-counts", "1,3",
            "--width", "15", "--height", "16", "--clutter-samples", "200", "--seed", "42"]
    assert main(args + ["-o", str(tmp_path / "a")]) == 0
    assert main(args + ["-o", str(tmp_path / "b"), "--threads", "2"]) == 0
    for name in ("rank_histograms.csv", "rank_summary.csv", "clutter_heatmap.csv", "runs.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 42 and manifest["config"]["object_counts"] == [1, 3]


def test_clutterbox_missing_dataset(tmp_path):
    assert main(["experiment", "clutterbox", "--dataset", str(tmp_path / "none"), "-o", str(tmp_path / "o"),
                 "--seed", "1"]) != 0
    assert not (tmp_path / "o").exists()


def test_config_file_and_flag_precedence(toy_dir, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\nruns = 1\nobject-counts = 1,2\nwidth = 15\nheight = 16\nclutter_samples = 100\n"
                   "seed = 9\n")
    out = tmp_path / "o"
    assert main(["experiment", "clutterbox", "--config", str(cfg), "--dataset", str(toy_dir), "-o", str(out),
                 "--seed", "7"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert manifest["config"]["runs"] == 1 and manifest["config"]["object_counts"] == [1, 2]
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 3\n")
    assert main(["experiment", "clutterbox", "--config", str(bad), "--dataset", str(toy_dir),
                 "-o", str(tmp_path / "p")]) != 0


def test_threads_from_environment(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("QUICCI_THREADS", "3")
    assert main(["corpus", "-o", str(tmp_path / "c"), "--count", "2", "--seed", "0"]) == 0
    err = capsys.readouterr().err
    assert '"threads": 3' in err and "seed: 0" in err
    monkeypatch.setenv("QUICCI_THREADS", "lots")
    assert main(["corpus", "-o", str(tmp_path / "d"), "--count", "1"]) != 0


def test_seed_is_printed_when_random(tmp_path, capsys):
    assert main(["corpus", "-o", str(tmp_path / "c"), "--count", "1"]) == 0
    line = [l for l in capsys.readouterr().err.splitlines() if l.startswith("seed: ")]
    assert line and int(line[0].split()[1]) >= 0


def test_small_experiments_write_csv(toy_dir, tmp_path):
    assert main(["experiment", "distance-study", "--dataset", str(toy_dir), "-o", str(tmp_path / "ds"),
                 "--objects", "2", "--pairs", "2", "--sphere-step", "5", "--sphere-max", "10",
                 "--width", "15", "--height", "16", "--seed", "1"]) == 0
    means = read_csv(tmp_path / "ds" / "distance_means.csv")
    assert means[0] == ["sphere_count", "mean_hamming", "mean_clutter", "mean_weighted"] and len(means) == 4
    assert main(["experiment", "bench-compare", "-o", str(tmp_path / "bc"), "--images", "500",
                 "--duration", "0.05", "--seed", "1"]) == 0
    assert main(["experiment", "runindex-study", "-o", str(tmp_path / "ri"), "--images", "300", "--needles", "2",
                 "--densities", "4,64", "--width", "16", "--height", "16", "--seed", "1"]) == 0
    rows = read_csv(tmp_path / "ri" / "runindex_costs.csv")
    assert [r[0] for r in rows[1:]] == ["4", "64"]
    assert np.all([r[-1] == r[1] for r in rows[1:]])
