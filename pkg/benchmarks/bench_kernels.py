"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Sizes follow desk-scale use: 2,000 frames of 20 slots x 32 antennas for
synthesis, batch-100 transformer activations for GeLU and layer norm, and
the MAR design matrix for a 1,600-frame training split.
"""
import argparse
import timeit

import numpy as np

from chanpred import _kernels as K
from chanpred._accel import NUMBA_INSTALLED


def cases(rng):
    f, p, m = 2000, 20, 32
    gains = rng.standard_normal((f, p)) + 1j * rng.standard_normal((f, p))
    steer = np.exp(1j * rng.uniform(0, 2 * np.pi, (f, p, m)))
    omega, phase = rng.uniform(-1800, 1800, (f, p)), rng.uniform(0, 2 * np.pi, (f, p))
    act = rng.standard_normal((100, 16, 128)).astype(np.float32)
    x = rng.standard_normal((100, 16, 64)).astype(np.float32)
    gain, bias = np.ones(64, np.float32), np.zeros(64, np.float32)
    _, xhat, inv = K.layer_norm_fwd_numpy(x, gain, bias, 1e-5)
    seqs = rng.standard_normal((1600, 20, 64)).astype(np.float32)
    return {
        "synthesize": (K.synthesize_numpy, K.synthesize_numba, (gains, steer, omega, phase, 20, 5e-4)),
        "lag_matrix": (K.lag_matrix_numpy, K.lag_matrix_numba, (seqs, 16)),
        "gelu": (K.gelu_numpy, K.gelu_numba, (act,)),
        "layer_norm_fwd": (K.layer_norm_fwd_numpy, K.layer_norm_fwd_numba, (x, gain, bias, 1e-5)),
        "layer_norm_bwd": (K.layer_norm_bwd_numpy, K.layer_norm_bwd_numba, (x, xhat, inv, gain)),
    }


def best_of(fn, args, repeat):
    fn(*args)  # warm-up (and JIT compile for numba)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not NUMBA_INSTALLED:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<16s}{'numpy ms':>11s}{'numba ms':>11s}{'speedup':>9s}")
    for name, (np_fn, nb_fn, fargs) in cases(np.random.default_rng(0)).items():
        t_np, t_nb = best_of(np_fn, fargs, args.repeat), best_of(nb_fn, fargs, args.repeat)
        print(f"{name:<16s}{t_np * 1e3:11.2f}{t_nb * 1e3:11.2f}{t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
