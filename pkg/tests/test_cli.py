import json
import os

import pytest

from synthnotes.cli import EXIT_CONFIG, EXIT_OK, main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(*argv):
    return main(list(argv))


class TestPipeline:
    def test_template_preprocess_stats(self, workdir, capsys):
        assert run("template", "--seed", "1", "--notes", "40", "--outdir", "t") == EXIT_OK
        assert run("preprocess", "--input", "t/notes.txt", "--outdir", "c",
                   "--seed", "2", "--min-count", "2") == EXIT_OK
        assert run("stats", "--train", "c/train.txt", "--valid", "c/valid.txt",
                   "--test", "c/test.txt", "--vocab", "c/vocab.tsv") == EXIT_OK
        out = capsys.readouterr().out
        assert "Vocab" in out and "OOV" in out

    def test_train_generate_perplexity_privacy(self, workdir, capsys):
        run("template", "--seed", "1", "--notes", "40", "--outdir", "t")
        run("preprocess", "--input", "t/notes.txt", "--outdir", "c",
            "--seed", "2", "--min-count", "2")
        assert run("train-lm", "--kind", "unigram", "--train", "c/train.txt",
                   "--vocab", "c/vocab.tsv", "--out", "uni.ptlm") == EXIT_OK
        assert run("perplexity", "--model", "uni.ptlm", "--corpus", "c/valid.txt") == EXIT_OK
        ppl = float(capsys.readouterr().out.strip().splitlines()[-1])
        assert ppl > 1.0
        assert run("generate", "--model", "uni.ptlm", "--out", "synth.txt",
                   "--target-words", "300", "--temperature", "1.0", "--seed", "5",
                   "--max-note-len", "400") == EXIT_OK
        assert run("privacy", "--kind", "unigram", "--train", "c/train.txt",
                   "--vocab", "c/vocab.tsv", "--sample-size", "3", "--seed", "4",
                   "--analyze", "--out", "priv.json") == EXIT_OK
        data = json.loads((workdir / "priv.json").read_text())
        assert data["aggregate"] >= 0.0
        assert len(data["records"]) == 3

    def test_eval_commands(self, workdir, capsys):
        run("template", "--seed", "1", "--notes", "60", "--outdir", "t")
        run("preprocess", "--input", "t/notes.txt", "--outdir", "c",
            "--seed", "2", "--min-count", "2")
        assert run("eval-sim", "--corpus", "c/train.txt", "--benchmark",
                   "t/benchmark_sim.csv", "--min-count", "1", "--dim", "16",
                   "--iterations", "1", "--negatives", "3", "--seed", "1") == EXIT_OK
        assert "spearman" in capsys.readouterr().out
        assert run("eval-nli", "--train", "t/nli_train.jsonl", "--test", "t/nli_test.jsonl",
                   "--corpus", "c/train.txt", "--dim", "16", "--epochs", "2",
                   "--seed", "1") == EXIT_OK
        assert "accuracy" in capsys.readouterr().out

    def test_eval_case_command(self, workdir, capsys):
        run("template", "--seed", "1", "--notes", "30", "--outdir", "t")
        run("preprocess", "--input", "t/notes.txt", "--outdir", "c", "--seed", "2",
            "--min-count", "2")
        run("preprocess", "--input", "t/notes.txt", "--outdir", "cl", "--seed", "2",
            "--min-count", "2", "--lowercase")
        assert run("eval-case", "--train", "c/train.txt",
                   "--test-cased", "c/test.cased.txt", "--test-lowered", "cl/test.cased.txt",
                   "--hidden", "12", "--epochs", "1", "--seed", "0") == EXIT_OK
        assert "case F1" in capsys.readouterr().out


class TestExitCodes:
    def test_unknown_flag_is_config_error(self, workdir, capsys):
        assert run("perplexity", "--bogus", "x") == EXIT_CONFIG

    def test_missing_file_is_config_error(self, workdir, capsys):
        assert run("perplexity", "--model", "missing.ptlm", "--corpus", "nope.txt") == EXIT_CONFIG

    def test_experiment_missing_config_file(self, workdir, capsys):
        assert run("experiment", "--config", "nope.ini") == EXIT_CONFIG

    def test_experiment_bad_config_key(self, workdir, capsys):
        (workdir / "bad.ini").write_text("[experiment]\nbogus_key = 1\n")
        assert run("experiment", "--config", "bad.ini") == EXIT_CONFIG

    def test_version_and_help(self, workdir, capsys):
        with pytest.raises(SystemExit):
            run("--version")
        assert "synthnotes" in capsys.readouterr().out


class TestOutdirOverride:
    def test_env_var_redirects_output(self, workdir, capsys, monkeypatch):
        monkeypatch.setenv("SYNTHNOTES_OUTDIR", str(workdir / "override"))
        assert run("template", "--seed", "3", "--notes", "5", "--outdir", "ignored") == EXIT_OK
        assert (workdir / "override" / "notes.txt").exists()
        assert not (workdir / "ignored").exists()
