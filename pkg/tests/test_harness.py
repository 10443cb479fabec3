import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from evifuse import cli
from evifuse.config import ExperimentConfig, config_help, load_config, parse_config
from evifuse.dataio import export_features, fmt, ingest_features, load_heads, save_heads
from evifuse.errors import ConfigError, DataError, DomainError
from evifuse.fusion import FusionStrategy
from evifuse.harness import expected_files, run_experiment
from evifuse.metrics import compute_metrics, conflict_statistics, uncertainty_density
from evifuse.toymodel import MultiViewDataset, PipelineConfig, SyntheticConfig, generate_dataset, infer, train


def small_config(out, **pipe):
    return ExperimentConfig(
        synthetic=SyntheticConfig(samples_per_class=30, seed=1),
        pipeline=PipelineConfig(epochs=4, seed=1, **pipe),
        out_dir=str(out),
    )


class TestMetrics:
    def test_perfect(self):
        m = compute_metrics([0, 1, 2, 3, 4], [0, 1, 2, 3, 4])
        assert m.accuracy == 1.0 and m.macro_f1 == 1.0

    def test_hand_example(self):
        m = compute_metrics([0, 1, 1, 1], [0, 0, 1, 1], n_classes=2)
        assert m.accuracy == 0.75
        np.testing.assert_allclose(m.per_class_f1, [2 / 3, 0.8], atol=1e-15)
        assert m.macro_f1 == pytest.approx(11 / 15, abs=1e-15)
        np.testing.assert_array_equal(m.confusion, [[1, 1], [0, 2]])

    def test_constant_prediction(self):
        labels = np.repeat(np.arange(5), 4)
        m = compute_metrics(np.zeros(20, dtype=int), labels, 5)
        assert m.accuracy == 0.2

    def test_absent_class_flagged(self):
        m = compute_metrics([0, 1, 0], [0, 1, 1], n_classes=4)
        assert m.absent.tolist() == [False, False, True, True]
        assert m.per_class_f1[2] == 0.0
        assert m.macro_f1 == pytest.approx(m.per_class_f1.mean(), abs=1e-15)

    def test_empty(self):
        with pytest.raises(DataError):
            compute_metrics([], [])

    def test_internal_consistency(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            y = rng.integers(0, 5, 200)
            p = np.where(rng.random(200) < 0.6, y, rng.integers(0, 5, 200))
            m = compute_metrics(p, y, 5)
            assert abs(m.accuracy - np.trace(m.confusion) / m.confusion.sum()) <= 1e-12
            assert abs(m.macro_f1 - m.per_class_f1.mean()) <= 1e-12
            np.testing.assert_array_equal(m.support, np.bincount(y, minlength=5))


class TestConflictStatistics:
    def test_all_zero(self):
        r = conflict_statistics(np.zeros(7))
        assert r.counts.tolist() == [7, 0, 0]
        assert r.percent[0] == 100.0 and r.mean == 0.0

    def test_one_per_bucket(self):
        r = conflict_statistics([0.1, 0.4, 0.9])
        assert r.counts.tolist() == [1, 1, 1]
        assert r.mean == pytest.approx(1.4 / 3, abs=1e-15)
        assert round(r.mean, 4) == 0.4667

    def test_boundaries(self):
        r = conflict_statistics([0.3, 0.6, 1.0, 0.2999999999])
        assert r.counts.tolist() == [1, 1, 2]

    def test_crosstab(self):
        r = conflict_statistics([0.1, 0.7, 0.8, 0.5], [False, True, False, True])
        assert r.crosstab.tolist() == [[1, 0], [0, 1], [1, 1]]
        assert r.injected_share()[2] == 0.5
        assert r.counts.sum() == r.n_samples == 4

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            conflict_statistics([0.5, 1.5])


class TestDensity:
    def test_point_mass(self):
        centers, dens = uncertainty_density(np.full(50, 0.5), 10)
        assert len(centers) == 10
        assert dens.max() == 10.0 and np.count_nonzero(dens) == 1

    def test_integrates_to_one(self):
        u = np.random.default_rng(2).random(5000)
        for bins in (1, 7, 20, 64):
            _, dens = uncertainty_density(u, bins)
            assert abs(dens.sum() / bins - 1.0) <= 1e-9

    def test_uniform_is_flat(self):
        _, dens = uncertainty_density(np.random.default_rng(3).random(200_000), 10)
        assert np.max(np.abs(dens - 1.0)) < 0.05

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            uncertainty_density([0.2, 1.01], 10)


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


class TestIngest:
    def test_two_views(self, tmp_path):
        a = _write(tmp_path / "a.csv", "x1,x2,label\n1,2,0\n3,4,1\n5,6,2\n7,8,4\n")
        b = _write(tmp_path / "b.csv", "label,y\n0,0.5\n1,1.5\n2,2.5\n4,3.5\n")
        ds = ingest_features([a, b])
        assert len(ds) == 4
        assert ds.views[1].shape == (4, 1)
        assert ds.feature_names == (("x1", "x2"), ("y",))

    def test_row_mismatch(self, tmp_path):
        a = _write(tmp_path / "a.csv", "x,label\n" + "1,0\n" * 4)
        b = _write(tmp_path / "b.csv", "x,label\n" + "1,0\n" * 5)
        with pytest.raises(DataError, match=r"a\.csv has 4 rows.*b\.csv has 5"):
            ingest_features([a, b])

    def test_label_range(self, tmp_path):
        a = _write(tmp_path / "a.csv", "x,label\n1,0\n2,7\n")
        with pytest.raises(DataError, match="label 7 outside"):
            ingest_features([a], n_classes=5)

    def test_missing_label(self, tmp_path):
        with pytest.raises(DataError, match="no 'label' column"):
            ingest_features([_write(tmp_path / "a.csv", "x,y\n1,2\n")])

    def test_non_numeric_location(self, tmp_path):
        a = _write(tmp_path / "a.csv", "x,z,label\n1,2,0\n3,oops,1\n")
        with pytest.raises(DataError, match="row 3, column 'z'"):
            ingest_features([a])

    def test_ragged_row(self, tmp_path):
        with pytest.raises(DataError, match="row 2"):
            ingest_features([_write(tmp_path / "a.csv", "x,label\n1,0,9\n")])

    def test_round_trip(self, tmp_path):
        ds = generate_dataset(SyntheticConfig(samples_per_class=15, seed=4))
        paths = export_features(ds, [tmp_path / "v0.csv", tmp_path / "v1.csv"])
        back = ingest_features(paths)
        assert back.identical_to(ds)


class TestHeads:
    def test_round_trip_is_exact(self, tmp_path):
        ds = generate_dataset(SyntheticConfig(samples_per_class=20))
        pipe = train(PipelineConfig(epochs=2), ds).pipeline
        save_heads(pipe, tmp_path / "h.txt")
        back = load_heads(tmp_path / "h.txt")
        assert all(a.same_as(b) for a, b in zip(pipe.heads, back.heads))
        np.testing.assert_array_equal(back.mapping.entries, pipe.mapping.entries)
        i1 = infer(pipe, ds.views, (FusionStrategy.CMAM,))
        i2 = infer(back, ds.views, (FusionStrategy.CMAM,))
        np.testing.assert_array_equal(i1.joint_uncertainty[FusionStrategy.CMAM], i2.joint_uncertainty[FusionStrategy.CMAM])

    def test_bad_header(self, tmp_path):
        with pytest.raises(DataError):
            load_heads(_write(tmp_path / "h.txt", "EVHEADS 99\n"))
        with pytest.raises(DataError):
            load_heads(_write(tmp_path / "g.txt", "hello\n"))


class TestConfig:
    def test_defaults_match_dataclasses(self):
        assert parse_config({}) == ExperimentConfig()

    def test_text_round_trip(self):
        cfg = parse_config("data.conflict_rate = 0.1, 0.2\npipeline.fusion = harmonic\n# comment\n\n")
        assert cfg.synthetic.conflict_rate == (0.1, 0.2)
        assert cfg.pipeline.fusion == (FusionStrategy.HARMONIC_REFERENCE,)
        assert parse_config(cfg.to_text()) == cfg

    def test_unknown_key_named(self, tmp_path):
        with pytest.raises(ConfigError, match="pipeline.learnig_rate"):
            load_config(_write(tmp_path / "c.cfg", "pipeline.learnig_rate = 0.1\n"))

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="pipeline.epochs"):
            parse_config({"pipeline.epochs": "many"})
        with pytest.raises(ConfigError):
            parse_config({"data.conflict_rate": "2"})

    def test_help_lists_every_key(self):
        text = config_help()
        assert "pipeline.learning_rate" in text and "output.density_bins" in text

    def test_seed_override(self):
        cfg = ExperimentConfig().with_seed(9)
        assert cfg.synthetic.seed == cfg.pipeline.seed == cfg.split_seed == 9


class TestRunExperiment:
    def test_manifest_and_determinism(self, tmp_path):
        r1 = run_experiment(small_config(tmp_path / "r1"))
        r2 = run_experiment(small_config(tmp_path / "r2"))
        files = sorted(p.name for p in (tmp_path / "r1").iterdir())
        assert tuple(files) == expected_files(small_config(tmp_path)) == r1.files
        for name in files:
            if name == "config.txt":
                continue
            assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes(), name
        doc = json.loads((tmp_path / "r1" / "metrics.json").read_text())
        assert sorted(doc) == ["average", "cmam"]
        assert set(doc["cmam"]) == {"acc", "mf1", "per_class_f1", "n_samples"}
        assert doc["cmam"]["n_samples"] == len(r1.test) == 45
        assert r2.metrics.keys() == r1.metrics.keys()

    def test_csv_only(self, tmp_path):
        cfg = replace(small_config(tmp_path / "r"), formats=("csv",))
        run_experiment(cfg)
        assert not list((tmp_path / "r").glob("*.png"))

    def test_strategies_share_training(self, tmp_path):
        res = run_experiment(replace(small_config(tmp_path / "r"), formats=("csv",)))
        inf = res.inference
        assert set(inf.predictions) == {FusionStrategy.CMAM, FusionStrategy.AVERAGE_EVIDENCE}

    def test_csv_source(self, tmp_path):
        ds = generate_dataset(SyntheticConfig(samples_per_class=20))
        paths = export_features(ds, [tmp_path / "a.csv", tmp_path / "b.csv"])
        cfg = replace(small_config(tmp_path / "r"), source="csv", csv_paths=tuple(map(str, paths)), formats=("csv",))
        res = run_experiment(cfg)
        assert res.metrics[FusionStrategy.CMAM].n_samples == 30

    def test_error_context(self, tmp_path):
        bad = tmp_path / "a.csv"
        bad.write_text("x,label\n1,9\n")
        cfg = replace(small_config(tmp_path / "r"), source="csv", csv_paths=(str(bad),))
        with pytest.raises(DataError, match="experiment"):
            run_experiment(cfg)


class TestCli:
    def test_fuse(self, capsys):
        assert cli.main(["fuse", "--evidence", "4,0,0,0,0", "--evidence", "0,4,0,0,0", "--strategy", "cmam"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[1].startswith("cmam,0,0.555555556,0.222222222,0.222222222")
        assert out[-1] == "conflict,0,1,1"

    def test_density(self, capsys):
        assert cli.main(["density", "--values", "0.5,0.5", "--bins", "10"]) == 0
        rows = capsys.readouterr().out.splitlines()
        assert len(rows) == 11 and "0.55,10" in rows

    def test_usage_error(self, capsys):
        assert _exit_code(["nope"]) == 1
        assert _exit_code(["fuse"]) == 1

    def test_config_error(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.cfg", "bogus.key = 1\n")
        assert cli.main(["report", "--config", str(cfg)]) == 1
        assert "bogus.key" in capsys.readouterr().err

    def test_data_error(self, tmp_path, capsys):
        a = _write(tmp_path / "a.csv", "x,label\n1,0\n")
        b = _write(tmp_path / "b.csv", "x,label\n1,0\n2,1\n")
        assert cli.main(["train", "--data", str(a), str(b), "--out", str(tmp_path / "o")]) == 2
        assert "row count mismatch" in capsys.readouterr().err

    def test_density_out_of_range_is_data_error(self, capsys):
        assert cli.main(["density", "--values", "1.5"]) == 2

    def test_gen_train_eval(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.cfg", "data.samples_per_class = 12\npipeline.epochs = 2\n")
        assert cli.main(["--config", str(cfg), "gen", "--out", str(tmp_path / "d"), "--seed", "2"]) == 0
        views = [str(tmp_path / "d" / f"view_{v}.csv") for v in (0, 1)]
        assert cli.main(["train", "--config", str(cfg), "--data", *views, "--out", str(tmp_path / "m")]) == 0
        heads = str(tmp_path / "m" / "heads.txt")
        assert cli.main(["eval", "--heads", heads, "--data", *views, "--out", str(tmp_path / "e")]) == 0
        doc = json.loads((tmp_path / "e" / "metrics.json").read_text())
        assert doc["cmam"]["n_samples"] == 60

    def test_report(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.cfg", "data.samples_per_class = 12\npipeline.epochs = 2\noutput.formats = csv\n")
        assert cli.main(["report", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
        assert (tmp_path / "r" / "metrics.json").exists()


def _exit_code(argv):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    return exc.value.code


def test_fmt():
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(np.int64(7)) == "7"
    assert fmt(float("nan")) == "nan"
