"""End-to-end command-line contract: flags, exit codes, artifacts."""

import json

import numpy as np
import pytest

from lmfn.blur import synthetic_sharp_patch
from lmfn.checkpoint import save_checkpoint
from lmfn.cli import main
from lmfn.metrics import load_png, save_png
from lmfn.model import LmfnModel, ModelConfig

TINY = ["--encoder-width", "8", "--decoder-width", "8",
        "--num-scales", "2", "--num-rfdb", "2"]


@pytest.fixture
def sharp_png(tmp_path):
    path = tmp_path / "sharp.png"
    save_png(path, synthetic_sharp_patch(seed=1, size=24))
    return path


@pytest.fixture
def data_dir(tmp_path):
    d = tmp_path / "data"
    d.mkdir()
    for i in range(2):
        save_png(d / f"img{i}.png", synthetic_sharp_patch(seed=i, size=24))
    return d


def train_tiny(tmp_path, data_dir, steps=0, extra=()):
    out = tmp_path / "run"
    code = main(["train", "--data", str(data_dir), "--steps", str(steps),
                 "--out", str(out), "--patch-size", "16", "--batch-size", "2",
                 *TINY, *extra])
    assert code == 0
    return out


# -- exit codes and usage ----------------------------------------------------

def test_no_command_is_usage_error(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_command_is_usage_error(capsys):
    assert main(["frobnicate"]) == 1


def test_unknown_flag_is_usage_error(capsys):
    assert main(["params", "--bogus"]) == 1


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "blur" in capsys.readouterr().out
    for cmd in ("blur", "train", "infer", "eval", "params", "gradcheck"):
        assert main([cmd, "--help"]) == 0
        out = capsys.readouterr().out
        assert "--seed" in out and "default" in out


# -- blur --------------------------------------------------------------------

def test_blur_delta_spec_reproduces_input(tmp_path, sharp_png, capsys):
    out = tmp_path / "blurred.png"
    code = main(["blur", "--in", str(sharp_png), "--out", str(out),
                 "--kind", "gaussian", "--sigma", "0.01"])
    assert code == 0
    assert np.array_equal(load_png(out), load_png(sharp_png))


def test_blur_fixed_seed_is_byte_identical(tmp_path, sharp_png):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    args = ["--in", str(sharp_png), "--kind", "motion", "--length", "5",
            "--angle", "30", "--seed", "7"]
    assert main(["blur", "--out", str(a), *args]) == 0
    assert main(["blur", "--out", str(b), *args]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_blur_actually_blurs(tmp_path, sharp_png):
    out = tmp_path / "blurred.png"
    assert main(["blur", "--in", str(sharp_png), "--out", str(out),
                 "--sigma", "2.0"]) == 0
    blurred, sharp = load_png(out), load_png(sharp_png)
    assert np.abs(np.diff(blurred, axis=2)).mean() < \
           np.abs(np.diff(sharp, axis=2)).mean()


def test_blur_missing_input_is_data_error(tmp_path, capsys):
    code = main(["blur", "--in", str(tmp_path / "absent.png"),
                 "--out", str(tmp_path / "o.png")])
    assert code == 2
    assert "absent.png" in capsys.readouterr().err


def test_blur_bad_sigma_is_usage_error(tmp_path, sharp_png, capsys):
    code = main(["blur", "--in", str(sharp_png),
                 "--out", str(tmp_path / "o.png"), "--sigma", "-2"])
    assert code == 1
    assert "sigma" in capsys.readouterr().err


# -- train -------------------------------------------------------------------

def test_train_zero_steps_writes_init_checkpoint(tmp_path, data_dir, capsys):
    out = train_tiny(tmp_path, data_dir, steps=0)
    assert (out / "final.ckpt").exists()
    assert (out / "best.ckpt").exists()
    assert (out / "trace.csv").read_text().startswith("iteration,loss,lr")
    assert "initialization" in capsys.readouterr().out

    from lmfn.checkpoint import load_checkpoint
    stored = dict(load_checkpoint(out / "final.ckpt")["tensors"])
    fresh = LmfnModel(ModelConfig(8, 8, 2, 2), seed=0)
    for name, t in fresh.named_params():
        assert np.array_equal(stored[name], t.data)


def test_train_same_seed_identical_checkpoints(tmp_path, data_dir):
    a = train_tiny(tmp_path / "a", data_dir, steps=2)
    b = train_tiny(tmp_path / "b", data_dir, steps=2)
    assert (a / "final.ckpt").read_bytes() == (b / "final.ckpt").read_bytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
def test_train_nan_abort_is_numeric_error(tmp_path, data_dir, capsys):
    out = tmp_path / "run"
    code = main(["train", "--data", str(data_dir), "--steps", "5",
                 "--out", str(out), "--patch-size", "16", "--batch-size", "2",
                 "--lr", "1e12", *TINY])
    assert code == 3
    assert "non-finite" in capsys.readouterr().err


def test_train_empty_dir_is_data_error(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    code = main(["train", "--data", str(empty), "--steps", "1",
                 "--out", str(tmp_path / "o"), *TINY])
    assert code == 2
    assert "no .png" in capsys.readouterr().err


def test_train_indivisible_patch_is_usage_error(tmp_path, data_dir, capsys):
    code = main(["train", "--data", str(data_dir), "--steps", "1",
                 "--out", str(tmp_path / "o"), "--patch-size", "18", *TINY])
    assert code == 1
    assert "multiple of 4" in capsys.readouterr().err


# -- config file handling ----------------------------------------------------

def test_config_file_applies(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"encoder_width": 8, "decoder_width": 8,
                               "num_scales": 2, "num_rfdb": 2}))
    assert main(["params", "--config", str(cfg)]) == 0
    expected = LmfnModel(ModelConfig(8, 8, 2, 2), seed=0).param_count()
    assert f"{expected:,}" in capsys.readouterr().out


def test_flags_win_over_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"encoder_width": 8, "decoder_width": 8,
                               "num_scales": 2, "num_rfdb": 2}))
    assert main(["params", "--config", str(cfg), "--encoder-width", "16"]) == 0
    expected = LmfnModel(ModelConfig(16, 8, 2, 2), seed=0).param_count()
    assert f"{expected:,}" in capsys.readouterr().out


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"encoder_widht": 8}))
    assert main(["params", "--config", str(cfg)]) == 1
    assert "encoder_widht" in capsys.readouterr().err


def test_malformed_config_json_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert main(["params", "--config", str(cfg)]) == 1


# -- infer -------------------------------------------------------------------

def test_infer_restores_odd_dimensions(tmp_path, data_dir):
    out = train_tiny(tmp_path, data_dir, steps=0)
    odd = tmp_path / "odd.png"
    save_png(odd, synthetic_sharp_patch(seed=9, size=24)[:, :13, :17])
    restored_path = tmp_path / "restored.png"
    assert main(["infer", "--ckpt", str(out / "final.ckpt"),
                 "--in", str(odd), "--out", str(restored_path)]) == 0
    assert load_png(restored_path).shape == (3, 13, 17)


def test_infer_zero_model_outputs_black(tmp_path, sharp_png):
    model = LmfnModel(ModelConfig(8, 8, 2, 2), seed=0)
    for p in model.params():
        p.data[...] = 0.0
    ckpt = tmp_path / "zero.ckpt"
    save_checkpoint(ckpt, model)
    out = tmp_path / "out.png"
    assert main(["infer", "--ckpt", str(ckpt), "--in", str(sharp_png),
                 "--out", str(out)]) == 0
    assert np.array_equal(load_png(out), np.zeros((3, 24, 24), np.float32))


def test_infer_corrupted_checkpoint_is_data_error(tmp_path, data_dir,
                                                  sharp_png, capsys):
    out = train_tiny(tmp_path, data_dir, steps=0)
    ckpt = out / "final.ckpt"
    blob = bytearray(ckpt.read_bytes())
    blob[len(blob) // 2] ^= 0x10
    ckpt.write_bytes(bytes(blob))
    code = main(["infer", "--ckpt", str(ckpt), "--in", str(sharp_png),
                 "--out", str(tmp_path / "o.png")])
    assert code == 2
    assert "checksum" in capsys.readouterr().err


def test_infer_grayscale_input_is_data_error(tmp_path, data_dir, capsys):
    out = train_tiny(tmp_path, data_dir, steps=0)
    gray = tmp_path / "gray.png"
    save_png(gray, np.full((1, 16, 16), 0.5, np.float32))
    code = main(["infer", "--ckpt", str(out / "final.ckpt"),
                 "--in", str(gray), "--out", str(tmp_path / "o.png")])
    assert code == 2


# -- eval --------------------------------------------------------------------

def test_eval_identical_dirs_scores_perfect(tmp_path, capsys):
    pred, target = tmp_path / "pred", tmp_path / "target"
    pred.mkdir(), target.mkdir()
    for i in range(2):
        img = synthetic_sharp_patch(seed=i, size=16)
        save_png(pred / f"{i}.png", img)
        save_png(target / f"{i}.png", img)
    assert main(["eval", "--pred", str(pred), "--target", str(target)]) == 0
    out = capsys.readouterr().out
    mean_line = next(l for l in out.splitlines() if l.startswith("mean"))
    assert "100.000" in mean_line and "1.0000" in mean_line


def test_eval_single_files_and_param_count(tmp_path, data_dir, capsys):
    run = train_tiny(tmp_path, data_dir, steps=0)
    a = tmp_path / "a.png"
    save_png(a, synthetic_sharp_patch(seed=3, size=16))
    assert main(["eval", "--pred", str(a), "--target", str(a),
                 "--ckpt", str(run / "final.ckpt")]) == 0
    out = capsys.readouterr().out
    count = LmfnModel(ModelConfig(8, 8, 2, 2), seed=0).param_count()
    assert f"parameters: {count:,}" in out


def test_eval_mismatched_sets_is_data_error(tmp_path, capsys):
    pred, target = tmp_path / "pred", tmp_path / "target"
    pred.mkdir(), target.mkdir()
    img = synthetic_sharp_patch(seed=0, size=16)
    save_png(pred / "a.png", img)
    save_png(target / "b.png", img)
    assert main(["eval", "--pred", str(pred), "--target", str(target)]) == 2
    err = capsys.readouterr().err
    assert "a.png" in err and "b.png" in err


def test_eval_mixed_file_and_dir_is_data_error(tmp_path, sharp_png):
    d = tmp_path / "dir"
    d.mkdir()
    assert main(["eval", "--pred", str(sharp_png), "--target", str(d)]) == 2


# -- params ------------------------------------------------------------------

def test_params_default_prints_total_and_reference(capsys):
    assert main(["params"]) == 0
    out = capsys.readouterr().out
    total = LmfnModel(ModelConfig(), seed=0).param_count()
    assert f"{total:,}" in out
    assert "1,250,000" in out
    assert "reference" in out
    for block in ("head", "final", "alfm", "acfm"):
        assert block in out


def test_params_ablation_flags(capsys):
    assert main(["params", "--disable", "rfdb"]) == 0
    no_rfdb = capsys.readouterr().out
    assert main(["params"]) == 0
    default = capsys.readouterr().out

    def total_of(text):
        line = next(l for l in text.splitlines() if l.startswith("total"))
        return int(line.split()[-1].replace(",", ""))

    assert total_of(no_rfdb) > total_of(default)


def test_params_verbose_lists_tensors(capsys):
    assert main(["params", "--verbose", *TINY]) == 0
    out = capsys.readouterr().out
    assert "head.weight" in out and "acfm.alpha" in out


# -- gradcheck ---------------------------------------------------------------

def test_gradcheck_default_seed_passes(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "all 24 gradient checks passed" in out
    for name in ("conv2d", "softmax", "rfdb", "alfm", "acfm", "model"):
        assert f"gradcheck {name}: PASS" in out
