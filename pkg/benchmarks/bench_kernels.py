"""Time the compiled and numpy kernel backends on realistic workloads.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import timeit

import numpy as np

from binaural_tse import kernels


def image_workload(n_images):
    rng = np.random.default_rng(0)
    n_dirs, n_bins = 400, 4097
    spec = rng.standard_normal((2, n_dirs, n_bins)) + 1j * rng.standard_normal((2, n_dirs, n_bins))
    return (spec[0], spec[1], rng.integers(0, n_dirs, n_images), rng.uniform(0, 1, n_images),
            rng.uniform(0, 6000, n_images), 2 * (n_bins - 1))


def xcorr_workload(seconds, fs=16000):
    rng = np.random.default_rng(1)
    left, right = rng.standard_normal((2, seconds * fs))
    frame = int(0.02 * fs)
    starts = np.arange(0, len(left) - frame + 1, frame // 2)
    return left, right, starts, frame, 16


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    cases = [
        ("accumulate_image_spectra, M=10 (1561 images)", "accumulate_image_spectra", image_workload(1561)),
        ("accumulate_image_spectra, M=20 (11521 images)", "accumulate_image_spectra", image_workload(11521)),
        ("frame_xcorr, 5 s band, +-16 lags", "frame_xcorr", xcorr_workload(5)),
    ]
    backends = kernels.available_backends()
    print(f"{'case':<48}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, name, inputs in cases:
        times = []
        for backend in backends:
            fn = getattr(kernels.get_backend(backend), name)
            times.append(min(timeit.repeat(lambda: fn(*inputs), number=1, repeat=args.repeat)))
        row = f"{label:<48}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
