"""Command-line front end: ``dctjpeg <subcommand> ...``.

Exit status is 0 only when every file was processed and every check passed.
Failures are reported on stderr as one JSON object per line.
"""

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import coeff_maps, dct_math
from .config import AnalysisConfig, load_config, parse_int_list
from .correlation import CorrelationReport, analyze_dataset
from .enhance import TinyConvModel, enhance_pipeline, identity_bundle, identity_model
from .errors import DctJpegError, EmptyDataset, MissingWeights, NoTrials, NotFound
from .jpeg_codec import decode_to_pixels, dequantize, encode_pixels, read_jpeg, write_jpeg
from .metrics import compute_metrics
from .pnm import read_pnm
from .tables import estimate_quality
from .weights import WeightBundle

log = logging.getLogger("dctjpeg")

JPEG_SUFFIXES = {".jpg", ".jpeg"}
RAW_SUFFIXES = {".pgm", ".ppm"}
CHANNEL_NAMES = ("Y", "Cb", "Cr")


class ExitStatus(Exception):
    """Raised to finish a command with a nonzero status after reporting errors."""

    def __init__(self, code):
        self.code = code


def report_error(exc, **extra):
    doc = {"error": type(exc).__name__, "message": str(exc), **extra}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


def _existing(path):
    p = Path(path)
    if not p.exists():
        raise NotFound(f"{p} does not exist")
    return p


def _load_image(path):
    """Pixels of a JPEG (reference decode) or PGM/PPM file."""
    p = _existing(path)
    if p.suffix.lower() in RAW_SUFFIXES:
        return read_pnm(p)
    return decode_to_pixels(read_jpeg(p)).pixels


# ---------------------------------------------------------------------------
# coeffs


def cmd_coeffs(args):
    img = read_jpeg(_existing(args.input))
    planes = []
    for c, plane in enumerate(img.planes):
        planes.append(dequantize(plane, img.quant_tables[c]) if args.dequantize else plane)
    fmt = "%.17g" if args.dequantize else "%d"
    if args.out is None:
        for name, p in zip(CHANNEL_NAMES, planes):
            print(f"# {name} {p.shape[0]}x{p.shape[1]}")
            np.savetxt(sys.stdout, p, fmt=fmt, delimiter=",")
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(args.input).stem
        for name, p in zip(CHANNEL_NAMES, planes):
            if args.format == "npy":
                np.save(out / f"{stem}_{name}.npy", p)
            else:
                np.savetxt(out / f"{stem}_{name}.csv", p, fmt=fmt, delimiter=",")
            if args.maps:
                coeff_maps.dump_maps_pgm(coeff_maps.to_maps(p), out / f"{stem}_{name}_maps")
    return 0


# ---------------------------------------------------------------------------
# analyze


def _collect_inputs(directory):
    d = _existing(directory)
    if not d.is_dir():
        raise NotFound(f"{d} is not a directory")
    files = sorted(p for p in d.iterdir() if p.is_file())
    raws = [p for p in files if p.suffix.lower() in RAW_SUFFIXES]
    jpegs = [p for p in files if p.suffix.lower() in JPEG_SUFFIXES]
    if not raws and not jpegs:
        raise EmptyDataset(f"no PGM/PPM or JPEG files in {d}")
    return raws, jpegs


def _encode_raws(raws, qfs, workdir, subsampling):
    """Compress every raw image at every QF. Returns ({qf: [jpeg paths]}, [(qf, path, error)])."""
    by_qf = {q: [] for q in qfs}
    failures = []
    for raw in raws:
        try:
            pixels = read_pnm(raw)
        except (DctJpegError, ValueError, OSError) as exc:
            failures.extend((q, raw, f"{type(exc).__name__}: {exc}") for q in qfs)
            continue
        for q in qfs:
            dest = Path(workdir) / f"q{q}" / f"{raw.stem}.jpg"
            dest.parent.mkdir(parents=True, exist_ok=True)
            write_jpeg(dest, encode_pixels(pixels, quality=q, subsampling=subsampling))
            by_qf[q].append(dest)
    return by_qf, failures


def _group_jpegs(jpegs):
    """Group pre-encoded JPEGs by the IJG quality their luma table matches (or "unknown")."""
    groups = {}
    failures = []
    for p in jpegs:
        try:
            q = estimate_quality(read_jpeg(p).quant_tables[0])
        except (DctJpegError, OSError) as exc:
            failures.append(("unknown", p, f"{type(exc).__name__}: {exc}"))
            continue
        groups.setdefault(q if q is not None else "unknown", []).append(p)
    return groups, failures


def _write_map_grids(report, config, out):
    """8x8 per-map MI/GC grids as CSV next to the report."""
    keys = sorted({(r.dataset, str(r.qf), r.channel) for r in report.rows if r.domain.startswith("map:")})
    for dataset, qf, channel in keys:
        for metric in ("MI", "GC"):
            grid = np.full((8, 8), np.nan)
            for r in report.rows:
                if (r.dataset, str(r.qf), r.channel, r.metric) == (dataset, qf, channel, metric):
                    if r.domain.startswith("map:") and r.value is not None:
                        u, v = int(r.domain[4]), int(r.domain[5])
                        grid[u, v] = r.value
            coeff_maps.grid_to_csv(grid, out.with_name(f"{out.stem}_maps_{dataset}_q{qf}_{channel}_{metric}.csv"))


def cmd_analyze(args):
    overrides = dict(
        qfs=parse_int_list(args.qf) if args.qf else None,
        scheme=args.scheme,
        normalization=args.normalization,
        sigma=args.sigma,
        crop=args.crop,
        channels=args.channels,
        workers=args.workers,
        dataset=args.dataset,
        out=args.out,
        maps_dequantized=False if args.quantized_maps else None,
    )
    if args.config:
        config = load_config(args.config, **overrides)
    else:
        config = AnalysisConfig(**{k: v for k, v in overrides.items() if v is not None})
    if args.dataset is None and not (args.config and "dataset" in _config_keys(args.config)):
        config.dataset = Path(args.input).resolve().name

    raws, jpegs = _collect_inputs(args.input)
    report = CorrelationReport()
    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(args.jpeg_dir) if args.jpeg_dir else Path(tmp)
        groups, failures = _encode_raws(raws, config.qfs, workdir, args.subsampling)
        if jpegs:
            more, bad = _group_jpegs(jpegs)
            failures += bad
            for q, files in more.items():
                groups.setdefault(q, []).extend(files)
        for q in sorted(groups, key=str):
            if groups[q]:
                report.extend(analyze_dataset(groups[q], config, qf=q))
    for q, path, err in failures:
        report.skipped.append((config.dataset, q, str(path), err))
    report.sort()

    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(out)
    report.to_json(out.with_suffix(".json"))
    report.to_image_csv(out.with_name(f"{out.stem}_images.csv"))
    _write_map_grids(report, config, out)
    log.info("wrote %d rows to %s", len(report.rows), out)
    if report.skipped:
        for dataset, q, path, err in report.skipped:
            report_error(DctJpegError(err), file=str(path), qf=q)
        return 1
    return 0


def _config_keys(path):
    from .config import tomllib

    with open(path, "rb") as f:
        return set(tomllib.load(f))


# ---------------------------------------------------------------------------
# upsample-verify


def cmd_upsample_verify(args):
    if args.trials <= 0:
        raise NoTrials("--trials must be positive")
    rng = np.random.default_rng(args.seed)
    blocks = rng.uniform(-1024.0, 1024.0, size=(args.trials, args.size, args.size))
    oracle = dct_math.pixel_upsample_oracle(blocks)
    fast = dct_math.naive_upsample(blocks) if args.naive else dct_math.umep_upsample(blocks)
    err = float(np.abs(fast - oracle).max())
    if args.naive:
        # the naive path is expected to disagree with pixel-domain upsampling
        passed = err >= args.naive_min
        expectation = f">= {args.naive_min:g}"
    else:
        passed = err <= args.tol
        expectation = f"<= {args.tol:g}"
    summary = {
        "method": "naive" if args.naive else "umep",
        "trials": args.trials,
        "block_size": args.size,
        "max_abs_error": err,
        "expected": expectation,
        "passed": passed,
    }
    print(json.dumps(summary, sort_keys=True))
    if args.dump:
        _dump_matrices(Path(args.dump), args.size)
    if not passed:
        report_error(DctJpegError(f"max error {err:g} is not {expectation}"), check="upsample-verify")
        return 1
    return 0


def _dump_matrices(out, n):
    out.mkdir(parents=True, exist_ok=True)
    mats = {
        f"T{n}": dct_math.dct_basis(n),
        f"T{2 * n}": dct_math.dct_basis(2 * n),
        f"U{n}": dct_math.upsample_matrix(n),
        f"UMEP{n}": dct_math.umep_matrix(n),
        "H2": dct_math.subblock_matrix(),
    }
    for name, m in mats.items():
        np.savetxt(out / f"{name}.csv", m, fmt="%.17g", delimiter=",")


# ---------------------------------------------------------------------------
# enhance / metrics / weights


def _inner_model(name, seed):
    if name == "identity":
        return identity_model
    return TinyConvModel.seeded(seed)


def cmd_enhance(args):
    img = read_jpeg(_existing(args.input))
    if not Path(args.weights).exists():
        raise MissingWeights(f"weight file {args.weights} does not exist")
    bundle = WeightBundle.load(args.weights)
    out_img = enhance_pipeline(img, bundle, _inner_model(args.inner, args.seed))
    write_jpeg(args.out, out_img)
    m = compute_metrics(decode_to_pixels(img).pixels, decode_to_pixels(out_img).pixels, mode=args.mode)
    print("file,psnr,ssim,psnr_b")
    print(",".join([str(args.out)] + m.csv_fields()))
    return 0


def cmd_metrics(args):
    ref = _load_image(args.ref)
    test = _load_image(args.test)
    m = compute_metrics(ref, test, mode=args.mode)
    print("file,psnr,ssim,psnr_b")
    print(",".join([str(args.test)] + m.csv_fields()))
    return 0


def cmd_gen_identity_weights(args):
    identity_bundle(n_embc=args.n_embc, alpha=args.alpha).save(args.out)
    log.info("wrote identity weights to %s", args.out)
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="dctjpeg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("coeffs", help="dump quantized (or dequantized) DCT coefficient planes")
    s.add_argument("input")
    s.add_argument("--dequantize", action="store_true")
    s.add_argument("--out", help="output directory (default: CSV on stdout)")
    s.add_argument("--format", choices=("csv", "npy"), default="csv")
    s.add_argument("--maps", action="store_true", help="also write per-frequency PGM map stacks")
    s.set_defaults(func=cmd_coeffs)

    s = sub.add_parser("analyze", help="spatial correlation report over a directory of images")
    s.add_argument("input", help="directory of PGM/PPM raws and/or JPEG files")
    s.add_argument("--qf", help="comma-separated quality factors for raw inputs (default 10,20,30,40,50)")
    s.add_argument("--out", help="CSV report path; JSON and per-image CSV go alongside (default report.csv)")
    s.add_argument("--config", help="flat TOML file with analysis settings")
    s.add_argument("--scheme", choices=("queen8", "rook4"))
    s.add_argument("--normalization", choices=("binary", "row-standardized"))
    s.add_argument("--sigma", type=float, help="W-Sum Gaussian sigma")
    s.add_argument("--crop", type=int, help="max crop side in pixels")
    s.add_argument("--channels", help="comma-separated subset of Y,Cb,Cr")
    s.add_argument("--quantized-maps", action="store_true", help="per-map statistics on quantized values")
    s.add_argument("--workers", type=int)
    s.add_argument("--dataset", help="dataset label (default: directory name)")
    s.add_argument("--subsampling", choices=("4:2:0", "4:4:4"), default="4:2:0")
    s.add_argument("--jpeg-dir", help="keep the encoded JPEGs here instead of a temp dir")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("upsample-verify", help="check DCT-domain upsampling against the pixel-domain oracle")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--size", type=int, default=4, help="block size N (default 4)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--naive", action="store_true", help="check the naive replicate-coefficients path instead")
    s.add_argument("--naive-min", type=float, default=1e-3)
    s.add_argument("--dump", help="write the transform matrices as CSV to this directory")
    s.set_defaults(func=cmd_upsample_verify)

    s = sub.add_parser("enhance", help="run the two-stage enhancement and write a JPEG")
    s.add_argument("input")
    s.add_argument("--weights", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--inner", choices=("identity", "tiny"), default="identity")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=("y", "rgb"), default="y")
    s.set_defaults(func=cmd_enhance)

    s = sub.add_parser("metrics", help="PSNR, SSIM and PSNR-B of a test image against a reference")
    s.add_argument("ref")
    s.add_argument("test")
    s.add_argument("--mode", choices=("y", "rgb"), default="y")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("gen-identity-weights", help="write weights that make enhancement the identity")
    s.add_argument("--out", required=True)
    s.add_argument("--n-embc", type=int, default=2)
    s.add_argument("--alpha", type=float, default=100.0)
    s.set_defaults(func=cmd_gen_identity_weights)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DctJpegError, ValueError, OSError) as exc:
        report_error(exc, command=args.command)
        return 2


if __name__ == "__main__":
    sys.exit(main())
