import csv
import json
import math

import numpy as np
import pytest

from conftest import FIXTURES
from dctjpeg import metrics as qm
from dctjpeg.cli import main
from dctjpeg.dct_math import blocks_to_plane
from dctjpeg.jpeg_codec import decode_to_pixels, encode_pixels, read_jpeg, write_jpeg
from dctjpeg.pnm import write_pnm
from natural_corpus import natural_images


def _error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


# ---------------------------------------------------------------------------
# coeffs


def test_coeffs_zero_image(tmp_path, capsys):
    # a mid-gray image has only zero coefficients after level shift
    p = tmp_path / "gray.jpg"
    write_jpeg(p, encode_pixels(np.full((16, 16), 128, np.uint8), quality=75))
    assert main(["coeffs", str(p)]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if not ln.startswith("#")]
    assert lines and all(set(ln.split(",")) == {"0"} for ln in lines)


@pytest.mark.parametrize("name", ["f00_q10_420", "f09_q20_gray", "f17_q30_444"])
def test_coeffs_match_golden(tmp_path, golden, name):
    assert main(["coeffs", str(FIXTURES / f"{name}.jpg"), "--out", str(tmp_path), "--format", "npy"]) == 0
    for ch in ("Y", "Cb", "Cr"):
        key = f"{name}/{ch}"
        if key in golden:
            got = np.load(tmp_path / f"{name}_{ch}.npy")
            # the reference stores blocks (rows, cols, 8, 8) without MCU padding
            ref = blocks_to_plane(golden[key])
            assert np.array_equal(got[: ref.shape[0], : ref.shape[1]], ref)


def test_coeffs_csv_dequantized_and_maps(tmp_path):
    src = FIXTURES / "f12_q30_420.jpg"
    assert main(["coeffs", str(src), "--dequantize", "--out", str(tmp_path), "--maps"]) == 0
    img = read_jpeg(src)
    y = np.loadtxt(tmp_path / "f12_q30_420_Y.csv", delimiter=",")
    assert np.array_equal(y, img.planes[0] * np.tile(img.quant_tables[0], (8, 4)))
    assert len(list((tmp_path / "f12_q30_420_Y_maps").glob("*.pgm"))) == 64


def test_coeffs_missing_file(tmp_path, capsys):
    assert main(["coeffs", str(tmp_path / "nope.jpg")]) == 2
    assert _error(capsys)["error"] == "NotFound"


# ---------------------------------------------------------------------------
# analyze


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    for i, (name, px) in enumerate(natural_images()):
        if i == 3:
            break
        h, w = px.shape[:2]
        write_pnm(d / f"{name}.{'ppm' if px.ndim == 3 else 'pgm'}", px[: min(h, 128), : min(w, 128)])
    return d


def test_analyze_toy_set(toy_dir, tmp_path):
    out = tmp_path / "rep.csv"
    assert main(["analyze", str(toy_dir), "--qf", "30,50", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    # 2 QFs x 3 channels x (pixel, dct, 6 features, 64 maps) x 2 metrics
    assert len(rows) == 2 * 3 * 72 * 2
    assert {r["dataset"] for r in rows} == {toy_dir.name}
    per_image = list(csv.DictReader((tmp_path / "rep_images.csv").open()))
    # images x QFs x domains, where grayscale images only have a Y channel
    channels = sum(3 if p.suffix == ".ppm" else 1 for p in toy_dir.iterdir())
    assert len(per_image) == 2 * channels * 72 * 2
    doc = json.loads((tmp_path / "rep.json").read_text())
    assert set(doc["results"][toy_dir.name]) == {"30", "50"}
    grid = tmp_path / f"rep_maps_{toy_dir.name}_q50_Y_MI.csv"
    assert grid.exists() and len(grid.read_text().splitlines()) == 9

    def value(domain, qf="50"):
        return next(float(r["value"]) for r in rows if r["qf"] == qf and r["channel"] == "Y"
                    and r["domain"] == domain and r["metric"] == "MI")

    assert value("pixel") > 0.8 and abs(value("dct")) < 0.1


def test_analyze_is_worker_independent(toy_dir, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["analyze", str(toy_dir), "--qf", "40", "--channels", "Y", "--out", str(a)]) == 0
    assert main(["analyze", str(toy_dir), "--qf", "40", "--channels", "Y", "--out", str(b), "--workers", "2"]) == 0
    assert a.read_text() == b.read_text()


def test_analyze_prencoded_jpegs_and_config(tmp_path):
    d = tmp_path / "jpegs"
    d.mkdir()
    for i, (name, px) in enumerate(natural_images()):
        if i == 2:
            break
        write_jpeg(d / f"{name}.jpg", encode_pixels(px[:96, :96], quality=30))
    cfg = tmp_path / "c.toml"
    cfg.write_text('scheme = "rook4"\nchannels = ["Y"]\ndataset = "pre"\n')
    out = tmp_path / "r.csv"
    assert main(["analyze", str(d), "--config", str(cfg), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert {r["qf"] for r in rows} == {"30"} and {r["dataset"] for r in rows} == {"pre"}


def test_analyze_skips_bad_file(toy_dir, tmp_path, capsys):
    d = tmp_path / "mixed"
    d.mkdir()
    for p in toy_dir.iterdir():
        (d / p.name).write_bytes(p.read_bytes())
    (d / "broken.jpg").write_bytes(b"\xff\xd8\xff")
    out = tmp_path / "r.csv"
    assert main(["analyze", str(d), "--qf", "50", "--channels", "Y", "--out", str(out)]) == 1
    assert "skipped:broken.jpg" in out.read_text()
    assert _error(capsys)["file"].endswith("broken.jpg")


def test_analyze_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["analyze", str(tmp_path / "empty")]) == 2
    assert _error(capsys)["error"] == "EmptyDataset"


# ---------------------------------------------------------------------------
# upsample-verify


def test_upsample_verify_default(capsys, tmp_path):
    assert main(["upsample-verify", "--dump", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["passed"] and summary["max_abs_error"] <= 1e-9 and summary["trials"] == 1000
    assert (tmp_path / "UMEP4.csv").exists() and (tmp_path / "H2.csv").exists()


def test_upsample_verify_naive(capsys):
    assert main(["upsample-verify", "--naive", "--trials", "50"]) == 0
    assert json.loads(capsys.readouterr().out)["max_abs_error"] >= 1e-3


def test_upsample_verify_failing_tolerance(capsys):
    assert main(["upsample-verify", "--trials", "10", "--tol", "0"]) == 1


def test_upsample_verify_no_trials(capsys):
    assert main(["upsample-verify", "--trials", "0"]) == 2
    assert _error(capsys)["error"] == "NoTrials"


# ---------------------------------------------------------------------------
# enhance / weights


@pytest.fixture(scope="module")
def identity_weights(tmp_path_factory):
    p = tmp_path_factory.mktemp("w") / "identity.json"
    assert main(["gen-identity-weights", "--out", str(p)]) == 0
    return p


def _csv_line(capsys):
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "file,psnr,ssim,psnr_b"
    return lines[1].split(",")


@pytest.mark.parametrize("name", ["f06_q20_420", "f09_q20_gray", "f11_q20_444"])
def test_enhance_identity(tmp_path, capsys, identity_weights, name):
    src = FIXTURES / f"{name}.jpg"
    out = tmp_path / "out.jpg"
    assert main(["enhance", str(src), "--weights", str(identity_weights), "--out", str(out)]) == 0
    fields = _csv_line(capsys)
    psnr = math.inf if fields[1] == "inf" else float(fields[1])
    assert psnr >= 50
    a = decode_to_pixels(read_jpeg(src)).pixels
    b = decode_to_pixels(read_jpeg(out)).pixels
    assert qm.psnr(a, b) >= 50


def test_enhance_tiny_model(tmp_path, capsys, identity_weights):
    out = tmp_path / "out.jpg"
    args = ["enhance", str(FIXTURES / "f13_q30_420.jpg"), "--weights", str(identity_weights),
            "--out", str(out), "--inner", "tiny", "--seed", "4"]
    assert main(args) == 0
    first = _csv_line(capsys)
    assert main(args) == 0
    assert _csv_line(capsys)[1:] == first[1:]


def test_enhance_missing_weights(tmp_path, capsys):
    args = ["enhance", str(FIXTURES / "f00_q10_420.jpg"), "--weights", str(tmp_path / "w.json"),
            "--out", str(tmp_path / "o.jpg")]
    assert main(args) == 2
    assert _error(capsys)["error"] == "MissingWeights"


def test_gen_identity_weights_options(tmp_path):
    p = tmp_path / "w.json"
    assert main(["gen-identity-weights", "--out", str(p), "--n-embc", "1", "--alpha", "50"]) == 0
    doc = json.loads(p.read_text())
    assert doc["__metadata__"] == {"n_embc": 1, "alpha": 50.0}


# ---------------------------------------------------------------------------
# metrics


def test_metrics_identical(capsys):
    f = str(FIXTURES / "f05_q10_444.jpg")
    assert main(["metrics", f, f]) == 0
    assert _csv_line(capsys)[1:] == ["inf", "1.0", "inf"]


def test_metrics_fixture_pair_matches_library(tmp_path, capsys):
    ref = np.random.default_rng(0).integers(0, 256, size=(40, 48), dtype=np.uint8)
    test = np.clip(ref.astype(int) + np.random.default_rng(1).integers(-9, 10, size=ref.shape), 0, 255).astype(np.uint8)
    write_pnm(tmp_path / "ref.pgm", ref)
    write_pnm(tmp_path / "test.pgm", test)
    assert main(["metrics", str(tmp_path / "ref.pgm"), str(tmp_path / "test.pgm")]) == 0
    fields = [float(x) for x in _csv_line(capsys)[1:]]
    m = qm.compute_metrics(ref, test)
    assert fields == [m.psnr, m.ssim, m.psnr_b]


def test_metrics_shape_mismatch(capsys):
    assert main(["metrics", str(FIXTURES / "f00_q10_420.jpg"), str(FIXTURES / "f01_q10_420.jpg")]) == 2
    assert _error(capsys)["error"] == "ShapeMismatch"
