"""Time the numba kernels against the pure-Python/numpy fallback.

Each path runs in its own interpreter because the backend is chosen at import
time from DCTJPEG_DISABLE_NUMBA.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 512]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from dctjpeg import _accel
from dctjpeg.correlation import spatial_autocorrelation
from dctjpeg.jpeg_codec import encode_coefficients, encode_pixels, parse_jpeg

size, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
yy, xx = np.mgrid[:size, :size]
pixels = np.clip(128 + 60 * (np.sin(xx / 17.0) * np.cos(yy / 23.0))[..., None] + rng.normal(0, 12, (size, size, 3)), 0, 255).astype(np.uint8)
img = encode_pixels(pixels, quality=50)
data = encode_coefficients(img)
field = rng.normal(size=(size, size)).cumsum(axis=1)

def best(fn):
    fn()  # warm-up (includes JIT compilation)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)

print(json.dumps({
    "numba": _accel.USE_NUMBA,
    "huffman_decode": best(lambda: parse_jpeg(data)),
    "huffman_encode": best(lambda: encode_coefficients(img)),
    "neighbor_sweep": best(lambda: spatial_autocorrelation(field)),
}))
"""


def run(disable, size, repeat):
    env = dict(os.environ)
    env["DCTJPEG_DISABLE_NUMBA"] = "1" if disable else "0"
    out = subprocess.run(
        [sys.executable, "-c", WORKER, str(size), str(repeat)],
        env=env, check=True, capture_output=True, text=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=512, help="image side in pixels")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    fast = run(False, args.size, args.repeat)
    slow = run(True, args.size, args.repeat)
    print(f"{'kernel':<16}{'numba [ms]':>12}{'fallback [ms]':>15}{'speedup':>10}")
    for k in ("huffman_decode", "huffman_encode", "neighbor_sweep"):
        print(f"{k:<16}{1e3 * fast[k]:>12.2f}{1e3 * slow[k]:>15.2f}{slow[k] / fast[k]:>9.1f}x")
    if not fast["numba"]:
        print("note: numba unavailable, both columns use the fallback")


if __name__ == "__main__":
    main()
