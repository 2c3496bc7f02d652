import json
import os

import numpy as np
import pytest
from scipy.io import wavfile

from pbn import Dataset, DenseMap, LayerSpec, Network, OutputPriorConfig, save_model
from pbn.cli import main, parse_config
from pbn.errors import ConfigError
from pbn.features import read_archive, write_archive_text


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


@pytest.fixture
def wav_tree(tmp_path):
    rng = np.random.default_rng(100)
    root = tmp_path / "wavs"
    for cls in ("bird", "bed"):
        d = root / cls
        d.mkdir(parents=True)
        for i in range(8):
            samples = (rng.uniform(-0.5, 0.5, 8000) * 32767).astype(np.int16)
            wavfile.write(str(d / f"clip{i}.wav"), 16000, samples)
    return str(root)


@pytest.fixture
def toy_archive(tmp_path):
    rng = np.random.default_rng(200)
    rows, labels = [], []
    for label, center in enumerate((1.0, -1.0)):
        rows.append(rng.normal(center, 0.4, size=(12, 6)))
        labels.append(np.full(12, label))
    data = Dataset(
        np.vstack(rows), np.concatenate(labels), [f"c{l}/s{i:02d}" for l in (0, 1) for i in range(12)]
    )
    path = str(tmp_path / "toy.csv")
    write_archive_text(path, data)
    return path


@pytest.fixture
def toy_config(tmp_path):
    path = tmp_path / "toy.cfg"
    path.write_text(
        "arch=custom\n"
        "input_shape=6\n"
        "layers=dense:4:tg,dense:2:shift\n"
        "n_classes=2\n"
        "C=20\n"
        "standardize=true\n"
        "epochs=2\n"
        "learning_rate=0.0001\n"
        "pretrain_epochs=2\n"
        "pretrain_learning_rate=0.01\n"
    )
    return str(path)


@pytest.fixture
def toy_model(tmp_path, toy_archive, toy_config, capsys):
    model = str(tmp_path / "toy_model.json")
    rc, _, _ = run(
        capsys,
        "train",
        "--features",
        toy_archive,
        "--config",
        toy_config,
        "--out-model",
        model,
        "--seed",
        "1",
    )
    assert rc == 0
    return model


class TestExtract:
    def test_archive_and_split(self, wav_tree, tmp_path, capsys):
        arch = str(tmp_path / "features.csv")
        rc, out, _ = run(
            capsys,
            "extract", "--wav-dir", wav_tree, "--out", arch,
            "--n-train", "4", "--n-val", "2", "--seed", "3",
        )
        assert rc == 0
        assert "16 samples, 2 classes" in out
        data = read_archive(arch)
        assert data.x.shape == (16, 900)
        assert data.ids[0].startswith("bed/")
        first = open(arch).readline()
        assert first.startswith("# pbn v") and "seed=3" in first and "config=" in first

        split_path = str(tmp_path / "features_split.csv")
        body = [
            ln for ln in open(split_path).read().splitlines() if not ln.startswith("#")
        ]
        assert body[0] == "id,label,split"
        names = [ln.split(",")[2] for ln in body[1:]]
        assert names.count("train") == 8
        assert names.count("val") == 4
        assert names.count("test") == 4

    def test_double_run_is_byte_identical(self, wav_tree, tmp_path, capsys):
        paths = []
        for tag in ("one", "two"):
            arch = str(tmp_path / f"{tag}.csv")
            rc, _, _ = run(
                capsys,
                "extract", "--wav-dir", wav_tree, "--out", arch,
                "--n-train", "4", "--n-val", "2", "--seed", "9",
            )
            assert rc == 0
            paths.append(arch)
        assert read_bytes(paths[0]) == read_bytes(paths[1])
        assert read_bytes(paths[0][:-4] + "_split.csv") == read_bytes(
            paths[1][:-4] + "_split.csv"
        )

    def test_binary_archive(self, wav_tree, tmp_path, capsys):
        arch = str(tmp_path / "features.pbnf")
        rc, _, _ = run(
            capsys,
            "extract", "--wav-dir", wav_tree, "--out", arch,
            "--n-train", "4", "--n-val", "2", "--binary",
        )
        assert rc == 0
        assert read_bytes(arch)[:7] == b"PBNFEAT"
        assert read_archive(arch).x.shape == (16, 900)

    def test_missing_dir_is_usage_error(self, tmp_path, capsys):
        rc, _, err = run(
            capsys, "extract", "--wav-dir", "/no/such/dir", "--out", str(tmp_path / "x.csv")
        )
        assert rc == 2
        assert "error:" in err


class TestTrain:
    def test_model_and_history(self, tmp_path, toy_archive, toy_config, capsys):
        model = str(tmp_path / "m.json")
        rc, out, _ = run(
            capsys,
            "train", "--features", toy_archive, "--config", toy_config,
            "--out-model", model, "--seed", "1",
        )
        assert rc == 0
        assert "trained 2 epochs" in out
        doc = json.loads(open(model).read())
        assert doc["meta"]["seed"] == 1
        assert doc["meta"]["config"]["C"] == "20"
        assert doc["meta"]["config_hash"] == doc["meta"]["config_hash"].lower()
        history = str(tmp_path / "m_history.csv")
        body = [ln for ln in open(history).read().splitlines() if not ln.startswith("#")]
        assert body[0] == "phase,epoch,objective,val_accuracy,efficiency"
        assert len(body) == 3
        assert all(ln.startswith("pbn,") for ln in body[1:])

    def test_pretrain_phase_rows(self, tmp_path, toy_archive, toy_config, capsys):
        model = str(tmp_path / "mp.json")
        rc, _, _ = run(
            capsys,
            "train", "--features", toy_archive, "--config", toy_config,
            "--out-model", model, "--pretrain", "--seed", "1",
        )
        assert rc == 0
        body = [
            ln
            for ln in open(str(tmp_path / "mp_history.csv")).read().splitlines()
            if not ln.startswith("#")
        ][1:]
        phases = [ln.split(",")[0] for ln in body]
        assert phases == ["pretrain", "pretrain", "pbn", "pbn"]

    def test_double_run_is_byte_identical(self, tmp_path, toy_archive, toy_config, capsys):
        blobs = []
        for tag in ("a", "b"):
            model = str(tmp_path / f"m{tag}.json")
            rc, _, _ = run(
                capsys,
                "train", "--features", toy_archive, "--config", toy_config,
                "--out-model", model, "--pretrain", "--seed", "4",
            )
            assert rc == 0
            blobs.append(
                (read_bytes(model), read_bytes(str(tmp_path / f"m{tag}_history.csv")))
            )
        assert blobs[0][0] == blobs[1][0]
        hist_a = b"\n".join(blobs[0][1].splitlines())
        hist_b = b"\n".join(blobs[1][1].splitlines())
        assert hist_a == hist_b

    def test_unknown_config_key(self, tmp_path, toy_archive, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("arch=wordpair\nwhat=ever\n")
        rc, _, err = run(
            capsys,
            "train", "--features", toy_archive, "--config", str(cfg),
            "--out-model", str(tmp_path / "m.json"),
        )
        assert rc == 2
        assert "unknown config key" in err

    def test_split_manifest_selects_validation(self, tmp_path, toy_archive, toy_config, capsys):
        data = read_archive(toy_archive)
        split = tmp_path / "split.csv"
        lines = ["id,label,split"]
        for i, sample_id in enumerate(data.ids):
            part = "train" if i % 3 else "val"
            lines.append(f"{sample_id},{int(data.labels[i])},{part}")
        split.write_text("\n".join(lines) + "\n")
        model = str(tmp_path / "ms.json")
        rc, _, _ = run(
            capsys,
            "train", "--features", toy_archive, "--config", toy_config,
            "--out-model", model, "--split", str(split), "--seed", "2",
        )
        assert rc == 0
        body = [
            ln
            for ln in open(str(tmp_path / "ms_history.csv")).read().splitlines()
            if not ln.startswith("#")
        ][1:]
        assert all(ln.split(",")[3] != "" for ln in body)

    def test_config_defaults_resolve(self):
        cfg = parse_config(None)
        assert cfg["arch"] == "wordpair"
        assert cfg["C"] == "200"
        assert cfg["L"] == "1"


class TestEval:
    def test_scores_table(self, tmp_path, toy_archive, toy_model, capsys):
        scores = str(tmp_path / "scores.csv")
        rc, out, _ = run(
            capsys,
            "eval", "--model", toy_model, "--features", toy_archive,
            "--out-scores", scores, "--seed", "1",
        )
        assert rc == 0
        assert "accuracy=" in out and "n=24" in out
        body = [ln for ln in open(scores).read().splitlines() if not ln.startswith("#")]
        assert body[0] == "id,label,ll0,ll1,recon_stat"
        assert len(body) == 25

    def test_double_run_is_byte_identical(self, tmp_path, toy_archive, toy_model, capsys):
        blobs = []
        for tag in ("a", "b"):
            scores = str(tmp_path / f"s{tag}.csv")
            rc, _, _ = run(
                capsys,
                "eval", "--model", toy_model, "--features", toy_archive,
                "--out-scores", scores, "--seed", "1",
            )
            assert rc == 0
            blobs.append(read_bytes(scores))
        assert blobs[0] == blobs[1]

    def test_bad_stat_layer(self, tmp_path, toy_archive, toy_model, capsys):
        rc, _, err = run(
            capsys,
            "eval", "--model", toy_model, "--features", toy_archive,
            "--out-scores", str(tmp_path / "s.csv"), "--stat-layer", "9",
        )
        assert rc == 2
        assert "stat-layer" in err


class TestReconstruct:
    def identity_model(self, tmp_path):
        layers = [
            LayerSpec(DenseMap(np.eye(3)), np.zeros(3), "gaussian", "linear"),
            LayerSpec(DenseMap(np.eye(3)), np.zeros(3), "gaussian", "linear"),
        ]
        path = str(tmp_path / "ident.json")
        save_model(Network(layers), path)
        return path

    def identity_archive(self, tmp_path):
        rng = np.random.default_rng(7)
        data = Dataset(rng.normal(size=(3, 3)), np.zeros(3, dtype=int), ["a", "b", "c"])
        path = str(tmp_path / "id3.csv")
        write_archive_text(path, data)
        return path

    def test_identity_network_zero_mse(self, tmp_path, capsys):
        model = self.identity_model(tmp_path)
        arch = self.identity_archive(tmp_path)
        out_dir = str(tmp_path / "rec")
        rc, out, _ = run(
            capsys,
            "reconstruct", "--model", model, "--features", arch,
            "--layer", "1", "--out-images", out_dir,
        )
        assert rc == 0
        body = [
            ln
            for ln in open(os.path.join(out_dir, "mse.csv")).read().splitlines()
            if not ln.startswith("#")
        ][1:]
        for ln in body:
            assert float(ln.split(",")[1]) < 1e-12

    def test_emits_image_pairs_and_raw_values(self, tmp_path, toy_archive, toy_model, capsys):
        out_dir = str(tmp_path / "rec2")
        rc, _, _ = run(
            capsys,
            "reconstruct", "--model", toy_model, "--features", toy_archive,
            "--layer", "1", "--out-images", out_dir, "--count", "2",
        )
        assert rc == 0
        names = sorted(os.listdir(out_dir))
        pgms = [n for n in names if n.endswith(".pgm")]
        assert len(pgms) == 4
        for name in pgms:
            assert read_bytes(os.path.join(out_dir, name)).startswith(b"P5\n")
        raw = [
            ln
            for ln in open(os.path.join(out_dir, "raw_values.csv")).read().splitlines()
            if not ln.startswith("#")
        ]
        assert len(raw) == 5
        kinds = [ln.split(",")[1] for ln in raw[1:]]
        assert kinds == ["orig", "recon", "orig", "recon"]

    def test_bad_layer(self, tmp_path, toy_archive, toy_model, capsys):
        rc, _, err = run(
            capsys,
            "reconstruct", "--model", toy_model, "--features", toy_archive,
            "--layer", "7", "--out-images", str(tmp_path / "x"),
        )
        assert rc == 2
        assert "--layer" in err


class TestSynthesize:
    def linear_model(self, tmp_path):
        rng = np.random.default_rng(8)
        layers = [
            LayerSpec(DenseMap(rng.normal(size=(4, 3))), np.zeros(3), "gaussian", "linear"),
            LayerSpec(DenseMap(rng.normal(size=(3, 2))), np.zeros(2), "gaussian", "linear"),
        ]
        path = str(tmp_path / "lin.json")
        save_model(Network(layers), path)
        return path

    def test_count_and_determinism(self, tmp_path, capsys):
        model = self.linear_model(tmp_path)
        dirs = []
        for tag in ("a", "b"):
            out_dir = str(tmp_path / f"syn{tag}")
            rc, out, _ = run(
                capsys,
                "synthesize", "--model", model, "--count", "3",
                "--seed", "5", "--out-images", out_dir,
            )
            assert rc == 0
            assert "synthesized 3/3" in out
            dirs.append(out_dir)
        names = sorted(os.listdir(dirs[0]))
        assert names == sorted(os.listdir(dirs[1]))
        assert len([n for n in names if n.endswith(".pgm")]) == 3
        for name in names:
            assert read_bytes(os.path.join(dirs[0], name)) == read_bytes(
                os.path.join(dirs[1], name)
            )

    def test_seed_changes_output(self, tmp_path, capsys):
        model = self.linear_model(tmp_path)
        outs = []
        for seed in ("5", "6"):
            out_dir = str(tmp_path / f"seed{seed}")
            rc, _, _ = run(
                capsys,
                "synthesize", "--model", model, "--count", "1",
                "--seed", seed, "--out-images", out_dir,
            )
            assert rc == 0
            raw = os.path.join(out_dir, "raw_values.csv")
            outs.append([ln for ln in open(raw) if not ln.startswith("#")][1])
        assert outs[0].split(",")[1:] != outs[1].split(",")[1:]


class TestOutofset:
    def subspace_model(self, tmp_path, coords, tag):
        w1 = np.zeros((4, 2))
        w1[coords[0], 0] = 1.0
        w1[coords[1], 1] = 1.0
        layers = [
            LayerSpec(DenseMap(w1), np.zeros(2), "gaussian", "linear"),
            LayerSpec(DenseMap(np.eye(2)), np.zeros(2), "gaussian", "linear"),
        ]
        path = str(tmp_path / f"sub{tag}.json")
        save_model(Network(layers), path)
        return path

    def subspace_archive(self, tmp_path, coords, tag, n=10):
        rng = np.random.default_rng(40 + coords[0])
        x = rng.normal(scale=0.01, size=(n, 4))
        x[:, coords] += rng.normal(scale=2.0, size=(n, 2))
        data = Dataset(x, np.zeros(n, dtype=int), [f"{tag}{i}" for i in range(n)])
        path = str(tmp_path / f"arch{tag}.csv")
        write_archive_text(path, data)
        return path

    def test_separates_subspaces(self, tmp_path, capsys):
        model_a = self.subspace_model(tmp_path, (0, 1), "a")
        model_b = self.subspace_model(tmp_path, (2, 3), "b")
        arch_a = self.subspace_archive(tmp_path, (0, 1), "a")
        arch_b = self.subspace_archive(tmp_path, (2, 3), "b")
        out = str(tmp_path / "oos.csv")
        rc, text, _ = run(
            capsys,
            "outofset", "--model-a", model_a, "--model-b", model_b,
            "--features-a", arch_a, "--features-b", arch_b, "--out", out,
        )
        assert rc == 0
        accuracy = float(text.split("accuracy=")[1].split()[0])
        assert accuracy >= 0.85
        body = [ln for ln in open(out).read().splitlines() if not ln.startswith("#")]
        assert body[0] == "id,true_model,stat_a,stat_b,decision"
        assert len(body) == 21

    def test_single_archive_mode(self, tmp_path, capsys):
        model_a = self.subspace_model(tmp_path, (0, 1), "a")
        model_b = self.subspace_model(tmp_path, (2, 3), "b")
        arch = self.subspace_archive(tmp_path, (0, 1), "solo")
        out = str(tmp_path / "solo.csv")
        rc, text, _ = run(
            capsys,
            "outofset", "--model-a", model_a, "--model-b", model_b,
            "--features", arch, "--out", out,
        )
        assert rc == 0
        assert "decisions for 10" in text
        body = [ln for ln in open(out).read().splitlines() if not ln.startswith("#")][1:]
        assert all(ln.split(",")[4] == "a" for ln in body)

    def test_requires_exactly_one_mode(self, tmp_path, capsys):
        model = self.subspace_model(tmp_path, (0, 1), "x")
        rc, _, err = run(
            capsys,
            "outofset", "--model-a", model, "--model-b", model, "--out", str(tmp_path / "o.csv"),
        )
        assert rc == 2
        assert "--features" in err


class TestCombine:
    def score_table(self, tmp_path, flips=2):
        rows = ["id,label,ll0,ll1,recon_stat"]
        rng = np.random.default_rng(70)
        for i in range(10):
            label = i % 2
            margin = 2.0 if i >= flips else -2.0
            ll0 = margin if label == 0 else -margin
            ll0 += rng.normal(scale=0.1)
            rows.append(f"s{i:02d},{label},{ll0:.6f},0.0,1.0")
        path = tmp_path / "scores.csv"
        path.write_text("\n".join(rows) + "\n")
        return str(path)

    def external_table(self, tmp_path, ids_labels):
        rows = ["id,score0,score1"]
        for sample_id, label in ids_labels:
            hi, lo = (3.0, 0.0) if label == 0 else (0.0, 3.0)
            rows.append(f"{sample_id},{hi},{lo}")
        path = tmp_path / "external.csv"
        path.write_text("\n".join(rows) + "\n")
        return str(path)

    def test_sweep_endpoints_and_dominance(self, tmp_path, capsys):
        scores = self.score_table(tmp_path)
        ids_labels = [(f"s{i:02d}", i % 2) for i in range(10)]
        external = self.external_table(tmp_path, ids_labels)
        out = str(tmp_path / "sweep.csv")
        rc, _, _ = run(
            capsys,
            "combine", "--scores", scores, "--external", external,
            "--sweep", "10", "--out", out,
        )
        assert rc == 0
        body = [ln for ln in open(out).read().splitlines() if not ln.startswith("#")][1:]
        table = {float(ln.split(",")[0]): float(ln.split(",")[1]) for ln in body}
        assert len(table) == 11
        assert table[1.0] == 1.0
        assert max(table.values()) >= max(table[0.0], table[1.0])

    def test_id_mismatch_raises(self, tmp_path, capsys):
        scores = self.score_table(tmp_path)
        external = self.external_table(tmp_path, [("nope", 0)])
        rc, _, err = run(
            capsys,
            "combine", "--scores", scores, "--external", external,
            "--out", str(tmp_path / "o.csv"),
        )
        assert rc == 2
        assert "mismatch" in err

    def test_val_ids_standardization_subset(self, tmp_path, capsys):
        scores = self.score_table(tmp_path)
        ids_labels = [(f"s{i:02d}", i % 2) for i in range(10)]
        external = self.external_table(tmp_path, ids_labels)
        val = tmp_path / "val.txt"
        val.write_text("s00\ns01\ns02\ns03\n")
        out = str(tmp_path / "sweep_val.csv")
        rc, _, _ = run(
            capsys,
            "combine", "--scores", scores, "--external", external,
            "--sweep", "4", "--out", out, "--val-ids", str(val),
        )
        assert rc == 0
        body = [ln for ln in open(out).read().splitlines() if not ln.startswith("#")]
        assert body[0] == "weight,accuracy"
        assert len(body) == 6

    def test_unknown_val_id_raises(self, tmp_path, capsys):
        scores = self.score_table(tmp_path)
        ids_labels = [(f"s{i:02d}", i % 2) for i in range(10)]
        external = self.external_table(tmp_path, ids_labels)
        val = tmp_path / "val.txt"
        val.write_text("missing-id\n")
        rc, _, err = run(
            capsys,
            "combine", "--scores", scores, "--external", external,
            "--out", str(tmp_path / "o.csv"), "--val-ids", str(val),
        )
        assert rc == 2


class TestParser:
    def test_threads_must_be_positive(self, capsys):
        with pytest.raises(SystemExit):
            main(["eval", "--model", "m", "--features", "f", "--out-scores", "s", "--threads", "0"])

    def test_missing_subcommand(self, capsys):
        with pytest.raises(SystemExit):
            main([])

    def test_config_file_with_comments(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# a comment\n\nC=50\n")
        assert parse_config(str(cfg))["C"] == "50"

    def test_config_rejects_bare_words(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("justaword\n")
        with pytest.raises(ConfigError):
            parse_config(str(cfg))
