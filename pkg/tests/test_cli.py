import filecmp
import json

import pytest

from ngnn.cli import main

WORLD = ["--n-train", "120", "--n-valid", "20", "--n-test", "30", "--items-per-category", "20"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else None), err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-synth", "--seed", "2", "--out-dir", str(root / "data"), *WORLD]) == 0
    assert main(["train", "--corpus", str(root / "data/corpus.jsonl"),
                 "--visual-features", str(root / "data/visual.feat"),
                 "--textual-features", str(root / "data/textual.feat"),
                 "--keep-threshold", "5", "--max-epochs", "2", "--out-dir", str(root / "run")]) == 0
    return root


def data_flags(root):
    return ["--corpus", root / "data/corpus.jsonl", "--visual-features", root / "data/visual.feat",
            "--textual-features", root / "data/textual.feat"]


def test_gen_synth_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        code, _, _ = run(capsys, "gen-synth", "--seed", 7, "--out-dir", tmp_path / name, *WORLD)
        assert code == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert sorted(cmp.same_files) == ["corpus.jsonl", "textual.feat", "visual.feat", "world.json"]
    for name in cmp.common_files:
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)


def test_train_outputs(trained):
    run_dir = trained / "run"
    for name in ("model.ckpt", "metrics.jsonl", "training.png"):
        assert (run_dir / name).exists()
    lines = (run_dir / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2


def test_build_graph(trained, tmp_path, capsys):
    code, res, _ = run(capsys, "build-graph", "--corpus", trained / "data/corpus.jsonl", "--keep-threshold", 5,
                       "--text-features", "--out-dir", tmp_path)
    assert code == 0 and res["categories"] == 12 and res["edges"] > 0
    assert (tmp_path / "graph.tsv").read_text().startswith("source\ttarget\tweight")
    assert res["text_vocab"] > 0 and (tmp_path / "textual_titles.feat").exists()


def test_eval_export_then_import(trained, tmp_path, capsys):
    ckpt = trained / "run/model.ckpt"
    code, first, _ = run(capsys, "eval-auc", *data_flags(trained), "--checkpoint", ckpt, "--seed", 3,
                         "--export-set", tmp_path / "auc.jsonl", "--out-dir", tmp_path)
    assert code == 0
    assert first["count"] == 30 and first["seed"] == 3
    assert json.loads((tmp_path / "eval_auc.json").read_text()) == first
    code, second, _ = run(capsys, "eval-auc", *data_flags(trained), "--checkpoint", ckpt,
                          "--import-set", tmp_path / "auc.jsonl", "--out-dir", tmp_path)
    assert second["value"] == first["value"] and second["eval_set_hash"] == first["eval_set_hash"]
    assert second["seed"] is None

    code, fitb, _ = run(capsys, "eval-fitb", *data_flags(trained), "--checkpoint", ckpt, "--out-dir", tmp_path)
    assert code == 0 and fitb["metric"] == "fitb" and 0 <= fitb["value"] <= 1


def test_inspect_checkpoint(trained, capsys):
    code, res, _ = run(capsys, "inspect-checkpoint", "--checkpoint", trained / "run/model.ckpt")
    assert code == 0
    assert res["config"]["variant"] == "NGNN" and res["categories"] == 12
    assert "graph.adjacency" in res["tensors"] and any(k.startswith("visual.") for k in res["tensors"])


def test_beta_zero_multimodal_is_a_config_error(trained, tmp_path, capsys):
    code, _, err = run(capsys, "train", *data_flags(trained), "--beta", 0, "--out-dir", tmp_path)
    assert code == 2
    assert err.startswith("error[config]: ") and err.count("\n") == 1
    assert "--modality textual" in err


def test_errors_are_listed_on_one_line(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--corpus", tmp_path / "missing.jsonl", "--d", 0, "--out-dir", tmp_path)
    assert code == 2
    assert err.count("\n") == 1
    assert "missing.jsonl" in err and "visual-features" in err


def test_runtime_errors_use_their_category(tmp_path, capsys):
    (tmp_path / "bad.ckpt").write_bytes(b"garbage")
    code, _, err = run(capsys, "inspect-checkpoint", "--checkpoint", tmp_path / "bad.ckpt")
    assert code == 1 and err.startswith("error[format]: ")


def test_bench(tmp_path, capsys):
    code, res, _ = run(capsys, "bench", "--n-min", 2, "--n-max", 6, "--bench-d", 3, "--bench-f", 4,
                       "--out-dir", tmp_path)
    assert code == 0
    assert res["fits"]["param_count"]["EGNN"]["verdict"] == "quadratic"
    assert res["fits"]["param_count"]["NGNN"]["verdict"] == "linear"
    for name in ("bench.tsv", "bench.dat", "scaling.json", "bench.png"):
        assert (tmp_path / name).stat().st_size > 0


def test_help_shows_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--help"])
    assert exc.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    assert "(published setting) (default: 0.2)" in text
    assert "--lr" in text and "--config" in text


def test_config_file_and_flag_precedence(trained, tmp_path, capsys):
    (tmp_path / "c.yaml").write_text("max_epochs: 1\nlr: 0.5\nunused_elsewhere: 1\n")
    code, _, err = run(capsys, "train", "--config", tmp_path / "c.yaml", *data_flags(trained),
                       "--out-dir", tmp_path)
    assert code == 2 and "unused_elsewhere" in err
    (tmp_path / "c.yaml").write_text("max_epochs: 1\nlr: 0.5\nkeep_threshold: 5\n")
    code, res, _ = run(capsys, "train", "--config", tmp_path / "c.yaml", "--lr", 0.002, *data_flags(trained),
                       "--out-dir", tmp_path)
    assert code == 0 and res["epochs_run"] == 1
    code, info, _ = run(capsys, "inspect-checkpoint", "--checkpoint", res["checkpoint"])
    assert info["extra"]["train_config"]["lr"] == 0.002
    assert info["extra"]["train_config"]["max_epochs"] == 1
