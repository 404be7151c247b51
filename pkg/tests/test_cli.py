import json
import os

from asdmeta import tabular
from asdmeta.cli import main, read_pair_table
from asdmeta.hier import read_site_report

FAST = [
    "--n-sites", "6", "--size-min", "30", "--size-max", "60",
    "--d", "8", "--k-informative", "2", "--effect-size", "3.0",
]
FAST_SELECT = ["--n-iter", "3", "--n-pop", "8", "--n-trees", "6", "--max-rounds", "2"]
FAST_BOOT = ["--replicates", "6", "--n-trees", "5"]
FAST_EMBED = ["--perplexity", "1.2", "--iterations", "60"]


def run(argv, capsys=None):
    code = main(argv)
    return code


def run_pipeline(out_dir, seed="7", threads="1"):
    base = ["--seed", seed, "--out-dir", str(out_dir), "--threads", threads]
    assert main(["synth", *base, *FAST]) == 0
    assert main(["select", *base, *FAST_SELECT]) == 0
    assert main(["bootstrap", *base, *FAST_BOOT]) == 0
    assert main(["correlate", *base]) == 0
    assert main(["embed", *base, *FAST_EMBED]) == 0


class TestSynthAndValidate:
    def test_synth_writes_artifacts(self, tmp_path):
        assert main(["synth", "--seed", "3", "--out-dir", str(tmp_path), *FAST]) == 0
        for name in ("features.csv", "phenotypes.csv", "scan_params.csv",
                     "truth_mask.txt", "synth_schedule.csv"):
            assert (tmp_path / name).exists(), name
        table = tabular.load_feature_table(tmp_path / "features.csv")
        assert table.d == 8 and len(set(table.site_ids)) == 6
        mask_line = [ln for ln in (tmp_path / "truth_mask.txt").read_text().splitlines()
                     if ln and not ln.startswith("#")]
        assert mask_line[0].count("1") == 2

    def test_outputs_embed_seed_and_version(self, tmp_path):
        main(["synth", "--seed", "9", "--out-dir", str(tmp_path), *FAST])
        head = (tmp_path / "features.csv").read_text().splitlines()[:5]
        assert any("seed = 9" in line for line in head)
        assert any("version" in line for line in head)

    def test_validate_good_files(self, tmp_path, capsys):
        main(["synth", "--seed", "1", "--out-dir", str(tmp_path), *FAST])
        code = main(["validate",
                     "--features", str(tmp_path / "features.csv"),
                     "--phenotypes", str(tmp_path / "phenotypes.csv"),
                     "--scan-params", str(tmp_path / "scan_params.csv")])
        report = json.loads(capsys.readouterr().out)
        assert code == 0 and report["valid"]
        assert {f["kind"] for f in report["files"]} == {
            "features", "phenotypes", "scan_params"}

    def test_validate_bad_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("SUB_ID,SITE_ID,DX_GROUP,f1\ns1,A,ASD,oops\n")
        code = main(["validate", "--features", str(bad)])
        report = json.loads(capsys.readouterr().out)
        assert code == 1 and not report["valid"]
        assert "line 2" in report["files"][0]["error"]

    def test_validate_nothing_given(self, tmp_path, capsys):
        assert main(["validate", "--out-dir", str(tmp_path)]) == 1
        assert "nothing to validate" in capsys.readouterr().err


class TestPipeline:
    def test_full_pipeline_and_report(self, tmp_path, capsys):
        run_pipeline(tmp_path)
        report_rows = read_site_report(tmp_path / "selection_report.csv")
        sites = {r.site_id for r in report_rows}
        assert len(sites) == 6
        assert all((tmp_path / "rounds" / f"{s}.json").exists() for s in sites)
        for metric in ("data_size", "mean_age", "age_std", "fm_ratio", "eye_median"):
            rows = read_pair_table(tmp_path / f"pairs_{metric}.csv")
            assert rows, metric
            assert (tmp_path / f"correlation_{metric}.json").exists()
        assert (tmp_path / "correlation_size_site_level.json").exists()
        assert (tmp_path / "embedding.csv").exists()
        assert (tmp_path / "embedding_kl.csv").exists()

        assert main(["report", "--seed", "7", "--out-dir", str(tmp_path)]) == 0
        bundle = json.loads((tmp_path / "report.json").read_text())
        assert bundle["seed"] == 7
        assert len(bundle["selection"]) == len(report_rows)
        assert bundle["correlations"]
        assert len(bundle["embedding"]) == 6
        for name in bundle["figures"]:
            assert (tmp_path / "figures" / name).exists()
        assert "scan_embedding.png" in bundle["figures"]

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_pipeline(a)
        run_pipeline(b)
        names = sorted(os.listdir(a))
        assert names == sorted(os.listdir(b))
        for name in names:
            if (a / name).is_dir():
                for sub in sorted(os.listdir(a / name)):
                    assert (a / name / sub).read_bytes() == (b / name / sub).read_bytes()
            else:
                assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_selection_report_consistent_with_round_files(self, tmp_path):
        run_pipeline(tmp_path)
        rows = read_site_report(tmp_path / "selection_report.csv")
        for row in rows:
            payload = json.loads((tmp_path / "rounds" / f"{row.site_id}.json").read_text())
            entry = payload["rounds"][row.round_index]
            assert entry["mean"] == row.acc_mean
            assert entry["std"] == row.acc_std


class TestErrorPaths:
    def test_report_without_artifacts(self, tmp_path, capsys):
        code = main(["report", "--out-dir", str(tmp_path)])
        err = json.loads(capsys.readouterr().err)
        assert code == 1
        assert err["error"] == "MissingArtifactError"
        assert "selection_report.csv" in err["message"]

    def test_select_without_features(self, tmp_path, capsys):
        code = main(["select", "--out-dir", str(tmp_path), *FAST_SELECT])
        err = json.loads(capsys.readouterr().err)
        assert code == 1 and "features" in err["message"]

    def test_bootstrap_without_select(self, tmp_path, capsys):
        assert main(["synth", "--seed", "2", "--out-dir", str(tmp_path), *FAST]) == 0
        code = main(["bootstrap", "--out-dir", str(tmp_path), *FAST_BOOT])
        err = json.loads(capsys.readouterr().err)
        assert code == 1 and "round histories" in err["message"]

    def test_bad_flag_value(self, tmp_path, capsys):
        code = main(["synth", "--out-dir", str(tmp_path), "--n-sites", "xyz"])
        assert code == 1
        assert json.loads(capsys.readouterr().err)["error"] == "usage"

    def test_bad_schema_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "f.csv"
        bad.write_text("WRONG\n1\n")
        code = main(["select", "--features", str(bad), "--out-dir", str(tmp_path)])
        assert code == 1
        assert json.loads(capsys.readouterr().err)["error"] == "TableFormatError"


class TestConfigFile:
    def test_file_values_and_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# comment line\n"
            "seed = 5\n"
            "synth.d = 10\n"
            "synth.n_sites = 4\n"
            "synth.size_min = 30\n"
            "synth.size_max = 40\n"
            "synth.k_informative = 2\n"
        )
        out = tmp_path / "out"
        assert main(["synth", "--config", str(cfg), "--out-dir", str(out),
                     "--d", "12"]) == 0
        table = tabular.load_feature_table(out / "features.csv")
        assert table.d == 12  # flag wins over file
        assert len(set(table.site_ids)) == 4  # file wins over default
        head = (out / "features.csv").read_text().splitlines()[0]
        assert "seed = 5" in head

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("nope = 1\n")
        code = main(["synth", "--config", str(cfg), "--out-dir", str(tmp_path)])
        err = json.loads(capsys.readouterr().err)
        assert code == 1 and "unknown config key" in err["message"]
