"""Config file parsing and the command-line workflow."""

import os

import pytest

from smallwav.cli import main
from smallwav.config import (
    distill_config_from,
    effective_seed,
    experiment_datasets,
    model_config_from,
    parse_config,
    synth_spec_from,
)
from smallwav.data import SynthSpec, generate_dataset, load_dataset
from smallwav.model import ConfigError, load_model

TINY_CFG_TEXT = """
# micro model, micro run
conv_layers = ((8, 6, 2), (16, 4, 2))
d_model = 16
n_transformer_layers = 2
n_heads = 2
ffn_dim = 32

n_utterances = 4
val_utterances = 2
eval_utterances = 2
tokens_per_utterance = (2, 3)
noise_std = 0.02

epochs = 1
warmup_epochs = 0
teacher_epochs = 1
teacher_warmup = 0
student_layers = 1
"""


@pytest.fixture()
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CFG_TEXT)
    return str(path)


# ---------------------------------------------------------------------------
# config parsing


def test_parse_config_reads_literals(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("d_model = 32\nepochs=3\n\n# comment\nadam_betas = (0.9, 0.95)\n")
    cfg = parse_config(path)
    assert cfg == {"d_model": 32, "epochs": 3, "adam_betas": (0.9, 0.95)}


def test_parse_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("dmodel = 32\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(path)


def test_parse_config_rejects_garbage_values(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("epochs = three\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config(path)
    path.write_text("no equals sign here\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config(path)


def test_parse_config_reports_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config("/definitely/not/here.cfg")


def test_config_seed_beats_the_flag():
    assert effective_seed({"seed": 7}, 42) == 7
    assert effective_seed({}, 42) == 42


def test_builders_pick_only_their_fields():
    cfg = {"d_model": 16, "conv_layers": ((16, 4, 2),), "epochs": 3, "noise_std": 0.1}
    mc = model_config_from(cfg)
    assert mc.d_model == 16 and mc.n_heads == 4
    dc = distill_config_from(cfg, seed=5)
    assert dc.epochs == 3 and dc.seed == 5
    spec = synth_spec_from(cfg, seed=5, n_utterances=2)
    assert spec.noise_std == 0.1 and spec.n_utterances == 2 and spec.seed == 5


def test_experiment_datasets_split_seeds():
    cfg = {"n_utterances": 3, "val_utterances": 2, "eval_utterances": 2, "noise_std": 0.02}
    train, val, eval_set = experiment_datasets(cfg, seed=9)
    assert (len(train), len(val), len(eval_set)) == (3, 2, 2)
    expect_val = generate_dataset(SynthSpec(seed=10, n_utterances=2, noise_std=0.02))
    assert all(
        (a[0] == b[0]).all() and a[1] == b[1] for a, b in zip(val, expect_val)
    )


# ---------------------------------------------------------------------------
# subcommands


def test_gen_data_writes_all_three_splits(tiny_cfg, tmp_path):
    out = str(tmp_path / "run")
    assert main(["gen-data", "--config", tiny_cfg, "--out", out]) == 0
    for name, count in (("train", 4), ("val", 2), ("eval", 2)):
        ds = load_dataset(os.path.join(out, f"{name}.npz"))
        assert len(ds) == count
        assert os.path.exists(os.path.join(out, f"{name}_transcripts.txt"))


def test_workflow_train_distill_quantize_prune_eval(tiny_cfg, tmp_path, capsys):
    out = str(tmp_path / "run")
    assert main(["train-teacher", "--config", tiny_cfg, "--out", out]) == 0
    teacher = load_model(os.path.join(out, "teacher.swav"))
    assert teacher.config.n_transformer_layers == 2
    assert os.path.exists(os.path.join(out, "teacher_history.csv"))

    assert main(["distill", "--config", tiny_cfg, "--out", out]) == 0
    student = load_model(os.path.join(out, "student.swav"))
    assert student.config.n_transformer_layers == 1
    assert os.path.exists(os.path.join(out, "history.csv"))

    assert main(["quantize", "--config", tiny_cfg, "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "model.swq8"))

    assert main(["prune", "--config", tiny_cfg, "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "pruned.swav"))
    assert os.path.exists(os.path.join(out, "sparsity.csv"))

    capsys.readouterr()
    model_path = os.path.join(out, "model.swq8")
    assert main(["eval", "--config", tiny_cfg, "--out", out, "--model", model_path]) == 0
    shown = capsys.readouterr().out
    assert "WER" in shown and "token error rate" in shown
    assert os.path.exists(os.path.join(out, "eval_transcripts.txt"))


def test_distill_without_teacher_fails_cleanly(tiny_cfg, tmp_path, capsys):
    out = str(tmp_path / "empty")
    assert main(["distill", "--config", tiny_cfg, "--out", out]) == 2
    assert "train-teacher first" in capsys.readouterr().err


def test_explicit_selection_needs_indices(tiny_cfg, tmp_path, capsys):
    out = str(tmp_path / "run")
    assert main(["train-teacher", "--config", tiny_cfg, "--out", out]) == 0
    code = main(
        ["distill", "--config", tiny_cfg, "--out", out, "--select", "explicit"]
    )
    assert code == 2
    assert "--indices" in capsys.readouterr().err


def test_bench_reruns_identically_except_wall_clock(tiny_cfg, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["bench", "--config", tiny_cfg, "--out", out, "--seed", "42"]) == 0
        outs.append(open(os.path.join(out, "bench.csv")).read().splitlines())
    first, second = outs
    assert first[0] == second[0] == "model,layers,params,bytes,cpu_s,wer"
    assert len(first) == len(second) == 4
    for a, b in zip(first[1:], second[1:]):
        fa, fb = a.split(","), b.split(",")
        assert fa[:4] == fb[:4]
        assert fa[5] == fb[5]


def test_bench_rows_are_the_three_stages(tiny_cfg, tmp_path):
    out = str(tmp_path / "run")
    assert main(["bench", "--config", tiny_cfg, "--out", out]) == 0
    lines = open(os.path.join(out, "bench.csv")).read().splitlines()
    assert [line.split(",")[0] for line in lines[1:]] == [
        "original",
        "distilled",
        "quantized",
    ]


def test_sweep_and_experiments_write_artifacts(tiny_cfg, tmp_path):
    out = str(tmp_path / "run")
    assert main(["train-teacher", "--config", tiny_cfg, "--out", out]) == 0
    assert main(["sweep-layers", "--config", tiny_cfg, "--out", out]) == 0
    lines = open(os.path.join(out, "sweep.csv")).read().splitlines()
    assert [line.split(",")[0] for line in lines[1:]] == [
        "teacher",
        "student-1",
        "student-2",
    ]
    assert os.path.exists(os.path.join(out, "sweep_time.dat"))
    assert os.path.exists(os.path.join(out, "sweep_wer.dat"))

    assert main(["exp-init", "--config", tiny_cfg, "--out", out, "--k", "1"]) == 0
    assert os.path.exists(os.path.join(out, "init_alternating.dat"))
    assert os.path.exists(os.path.join(out, "init_last_k.dat"))

    assert main(["exp-data", "--config", tiny_cfg, "--out", out, "--sizes", "2,4"]) == 0
    assert os.path.exists(os.path.join(out, "data_2.dat"))
    assert os.path.exists(os.path.join(out, "data_4.dat"))
    summary = open(os.path.join(out, "data_summary.csv")).read().splitlines()
    assert summary[0] == "size,final_val_total,final_val_wer"
    assert len(summary) == 3


def test_prune_accepts_pattern_overrides(tiny_cfg, tmp_path, capsys):
    out = str(tmp_path / "run")
    assert main(["train-teacher", "--config", tiny_cfg, "--out", out]) == 0
    code = main(
        [
            "prune",
            "--config",
            tiny_cfg,
            "--out",
            out,
            "--model",
            os.path.join(out, "teacher.swav"),
            "--sensitivity",
            "layer*.wf1=1.0",
            "--default-sensitivity",
            "0.0",
        ]
    )
    assert code == 0
    rows = open(os.path.join(out, "sparsity.csv")).read().splitlines()
    touched = [r for r in rows[1:] if r.split(",")[1] == "layer*.wf1"]
    assert len(touched) == 2
    assert all(float(r.split(",")[2]) == 1.0 for r in touched)
