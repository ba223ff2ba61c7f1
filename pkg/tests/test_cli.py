import csv
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from modcodec import cli
from modcodec.codec import decode_symbols, encode_image, quantized_latent, reconstruct_from_symbols
from modcodec.data import synthetic_corpus, write_corpus
from modcodec.errors import ConfigError, DataError
from modcodec.imageio import decode_ppm, encode_ppm, read_ppm, write_ppm
from modcodec.metrics import RdCurve, RdPoint, write_rd_csv
from modcodec.network import CodecModel, NetworkConfig, load_checkpoint, save_checkpoint

TOY = ["--set", "stages=2", "--set", "hidden_channels=8", "--set", "latent_channels=8",
       "--set", "batch_size=2", "--set", "crop=16", "-q"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    write_corpus(root, synthetic_corpus(4, seed=9, size=32))
    return root


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = cli.main(["train", str(corpus), "--out", str(out), "--seed", "3", "--lambda", "0.013",
                     "--set", "max_steps=50", *TOY])
    assert code == 0
    return out


def run(*argv):
    return cli.main([*argv, "-q"])


# -- train -----------------------------------------------------------------------------


def test_train_writes_checkpoint_and_50_rows(trained):
    assert (trained / "final.ckpt").exists()
    rows = list(csv.reader(open(trained / "metrics.csv")))
    assert rows[0] == ["step", "epoch", "lr", "loss", "bpp", "mse", "psnr"]
    assert len(rows) == 51
    resolved = (trained / "config.txt").read_text()
    assert "lambda = 0.013" in resolved and "seed = 3" in resolved


def test_train_is_byte_deterministic(corpus, trained, tmp_path):
    code = cli.main(["train", str(corpus), "--out", str(tmp_path), "--seed", "3", "--lambda", "0.013",
                     "--set", "max_steps=50", *TOY])
    assert code == 0
    assert (tmp_path / "metrics.csv").read_bytes() == (trained / "metrics.csv").read_bytes()
    assert (tmp_path / "final.ckpt").read_bytes() == (trained / "final.ckpt").read_bytes()


@pytest.mark.parametrize("lam", ["0", "-0.5"])
def test_nonpositive_lambda_exits_2(corpus, tmp_path, lam):
    assert cli.main(["train", str(corpus), "--out", str(tmp_path), f"--lambda={lam}", *TOY]) == 2


def test_config_file_and_flag_precedence(corpus, tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("# toy\nstages = 2\nhidden_channels = 8\nlatent_channels = 8\nbatch_size = 2\n"
                   "crop = 16\nmax_steps = 2\nlambda = 0.5\nnonlinearity = tpm\n")
    out = tmp_path / "run"
    assert run("train", str(corpus), "--config", str(cfg), "--lambda", "0.0018", "--out", str(out)) == 0
    resolved = (out / "config.txt").read_text()
    assert "lambda = 0.0018" in resolved and "nonlinearity = tpm" in resolved
    model, _, _ = load_checkpoint(out / "final.ckpt")
    assert model.config.nonlinearity == "tpm"


def test_bad_config_keys_exit_2(corpus, tmp_path):
    assert run("train", str(corpus), "--set", "gamma=3", "--out", str(tmp_path)) == 2
    assert run("train", str(corpus), "--set", "stages=two", "--out", str(tmp_path)) == 2
    assert run("train", str(tmp_path / "missing"), "--out", str(tmp_path)) == 2


def test_train_resume_matches_uninterrupted(corpus, trained, tmp_path):
    first = tmp_path / "a"
    assert cli.main(["train", str(corpus), "--out", str(first), "--seed", "3", "--lambda", "0.013",
                     "--set", "max_steps=20", *TOY]) == 0
    assert cli.main(["train", str(corpus), "--out", str(first), "--seed", "3", "--lambda", "0.013",
                     "--set", "max_steps=50", "--resume", str(first / "final.ckpt"), *TOY]) == 0
    assert (first / "metrics.csv").read_bytes() == (trained / "metrics.csv").read_bytes()


# -- encode / decode ---------------------------------------------------------------------


def test_encode_decode_matches_direct_reconstruction(corpus, trained, tmp_path, capsys):
    ckpt = trained / "final.ckpt"
    image = sorted(corpus.glob("*.ppm"))[0]
    assert run("encode", str(ckpt), str(image), "--out", str(tmp_path / "a.tsmb")) == 0
    report = capsys.readouterr().out
    assert run("decode", str(ckpt), str(tmp_path / "a.tsmb"), "--out", str(tmp_path / "a.ppm")) == 0

    model, _, checksum = load_checkpoint(ckpt)
    img = read_ppm(image)
    symbols, extents, _ = quantized_latent(model, img)
    direct = reconstruct_from_symbols(model, symbols, extents)
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), direct)

    blob = (tmp_path / "a.tsmb").read_bytes()
    decoded, header = decode_symbols(model, checksum, blob)
    assert np.array_equal(decoded, symbols)
    enc = encode_image(model, checksum, img)
    assert enc.bitstream == blob
    assert f"{enc.payload_bytes} payload bytes" in report
    assert enc.bpp == 8 * enc.payload_bytes / (32 * 32)


def test_encode_is_reproducible_across_processes(corpus, trained, tmp_path):
    ckpt, image = trained / "final.ckpt", sorted(corpus.glob("*.ppm"))[1]
    outputs = []
    for name in ("x.tsmb", "y.tsmb"):
        subprocess.run([sys.executable, "-m", "modcodec", "encode", str(ckpt), str(image), "--out",
                        str(tmp_path / name), "-q"], check=True, capture_output=True)
        outputs.append((tmp_path / name).read_bytes())
    assert outputs[0] == outputs[1]


def test_decode_refuses_other_model(corpus, trained, tmp_path):
    image = sorted(corpus.glob("*.ppm"))[0]
    other = tmp_path / "other.ckpt"
    save_checkpoint(other, CodecModel(NetworkConfig(stages=2, hidden_channels=8, latent_channels=8), seed=99))
    assert run("encode", str(trained / "final.ckpt"), str(image), "--out", str(tmp_path / "s")) == 0
    assert run("decode", str(other), str(tmp_path / "s"), "--out", str(tmp_path / "o.ppm")) == 3
    assert not (tmp_path / "o.ppm").exists()


def test_decode_rejects_truncated_stream(corpus, trained, tmp_path):
    image = sorted(corpus.glob("*.ppm"))[0]
    assert run("encode", str(trained / "final.ckpt"), str(image), "--out", str(tmp_path / "s")) == 0
    blob = (tmp_path / "s").read_bytes()
    (tmp_path / "t").write_bytes(blob[:-3])
    assert run("decode", str(trained / "final.ckpt"), str(tmp_path / "t"), "--out", str(tmp_path / "o.ppm")) == 3


def test_untrained_model_pipeline_equivalence():
    model = CodecModel(NetworkConfig(stages=2, hidden_channels=8, latent_channels=8, nonlinearity="tpm"), seed=0)
    img = np.random.default_rng(0).integers(0, 256, (64, 64, 3), dtype=np.uint8)
    a = encode_image(model, 1234, img)
    b = encode_image(model, 1234, img)
    assert a.bitstream == b.bitstream
    symbols, _ = decode_symbols(model, 1234, a.bitstream)
    assert np.array_equal(symbols, a.symbols)
    from modcodec.codec import decode_image
    assert np.array_equal(decode_image(model, 1234, a.bitstream), reconstruct_from_symbols(model, a.symbols, (64, 64)))


def test_odd_sized_image_round_trip(trained, tmp_path):
    img = np.random.default_rng(1).integers(0, 256, (21, 37, 3), dtype=np.uint8)
    write_ppm(tmp_path / "odd.ppm", img)
    ckpt = trained / "final.ckpt"
    assert run("encode", str(ckpt), str(tmp_path / "odd.ppm"), "--out", str(tmp_path / "odd.tsmb")) == 0
    assert run("decode", str(ckpt), str(tmp_path / "odd.tsmb"), "--out", str(tmp_path / "back.ppm")) == 0
    assert read_ppm(tmp_path / "back.ppm").shape == (21, 37, 3)


# -- eval / bdrate / energy / plot -----------------------------------------------------------


def test_eval_writes_rd_csv(corpus, trained, tmp_path):
    assert run("eval", str(trained / "final.ckpt"), str(corpus), "--out", str(tmp_path / "rd.csv")) == 0
    rows = list(csv.DictReader(open(tmp_path / "rd.csv")))
    assert len(rows) == 1
    assert float(rows[0]["bpp"]) > 0 and 0 <= float(rows[0]["msssim"]) <= 1


def test_bdrate_self_is_zero(tmp_path, capsys):
    write_rd_csv(tmp_path / "a.csv", RdCurve([RdPoint(0.1, 28, 0.9), RdPoint(0.3, 31, 0.95), RdPoint(0.6, 34, 0.98)]))
    assert run("bdrate", str(tmp_path / "a.csv"), str(tmp_path / "a.csv")) == 0
    assert capsys.readouterr().out.strip() == "BD-rate (psnr): 0.00%"
    assert run("bdrate", str(tmp_path / "a.csv"), str(tmp_path / "a.csv"), "--metric", "msssim") == 0
    assert "0.00%" in capsys.readouterr().out


def test_bdrate_missing_file_exits_3(tmp_path):
    assert run("bdrate", str(tmp_path / "x.csv"), str(tmp_path / "y.csv")) == 3


@pytest.mark.parametrize("stage", [None, 0, 1])
def test_energy_rows_sum_to_one(corpus, trained, tmp_path, stage):
    argv = ["energy", str(trained / "final.ckpt"), str(sorted(corpus.glob("*.ppm"))[2]),
            "--out", str(tmp_path / "e.csv")]
    if stage is not None:
        argv += ["--stage", str(stage)]
    assert run(*argv) == 0
    rows = list(csv.DictReader(open(tmp_path / "e.csv")))
    assert len(rows) == 8
    assert abs(sum(float(r["ratio"]) for r in rows) - 1.0) < 1e-12


def test_energy_bad_stage(corpus, trained):
    assert run("energy", str(trained / "final.ckpt"), str(sorted(corpus.glob("*.ppm"))[0]), "--stage", "7") == 2


def test_plot_two_curves(tmp_path):
    write_rd_csv(tmp_path / "gdn.csv", RdCurve([RdPoint(0.1, 28, 0.9), RdPoint(0.3, 31, 0.95)]))
    write_rd_csv(tmp_path / "tpm.csv", RdCurve([RdPoint(0.12, 28.5, 0.91), RdPoint(0.28, 31.2, 0.96)]))
    for metric, label in (("psnr", "PSNR (dB)"), ("msssim", "MS-SSIM (dB)")):
        svg = tmp_path / f"{metric}.svg"
        assert run("plot", str(tmp_path / "gdn.csv"), str(tmp_path / "tpm.csv"), "--metric", metric,
                   "--out", str(svg)) == 0
        root = ET.parse(svg).getroot()
        ns = "{http://www.w3.org/2000/svg}"
        assert len(root.findall(f"{ns}polyline")) == 2
        texts = [t.text for t in root.findall(f"{ns}text")]
        assert "bpp" in texts and label in texts


def test_missing_arguments_exit_2(tmp_path):
    assert run("encode", "only-one") == 2
    assert run("bdrate", "a.csv") == 2


# -- PPM ----------------------------------------------------------------------------------------


def test_ppm_round_trip_and_comments():
    img = np.random.default_rng(2).integers(0, 256, (5, 7, 3), dtype=np.uint8)
    blob = encode_ppm(img)
    assert blob.startswith(b"P6\n7 5\n255\n")
    assert np.array_equal(decode_ppm(blob), img)
    commented = b"P6\n# made by hand\n7 5 # size\n255\n" + img.tobytes()
    assert np.array_equal(decode_ppm(commented), img)


@pytest.mark.parametrize("blob", [b"P5\n1 1\n255\n\x00", b"P6\n2 2\n255\n\x00\x00", b"P6\n1 1\n65535\n" + bytes(6)])
def test_ppm_rejects_bad_files(blob):
    with pytest.raises(DataError):
        decode_ppm(blob)


def test_config_parse_errors():
    with pytest.raises(ConfigError):
        cli.parse_config_text("stages 3")
    assert cli.parse_config_text("lambda = 0.1  # comment\n\n") == {"lmbda": "0.1"}
