"""Time the numba kernels against their numpy twins.

Usage: python3 benchmarks/bench_kernels.py [--rows 4096] [--k 10] [--repeat 20]

Both paths are called directly, so the env flag does not matter here.  The
first numba call (compilation or cache load) is excluded from the timings.
Also reports one short training run on whichever backend is active.
"""

import argparse
import time
import timeit

import numpy as np

from unimodal_ordinal import kernels
from unimodal_ordinal.heads import log_factorial_table


def make_inputs(rows, K, seed=0):
    rng = np.random.default_rng(seed)
    log_fact = log_factorial_table(K)
    lam = rng.uniform(0.1, K, rows)
    p = rng.uniform(0.01, 0.99, rows)
    labels = rng.integers(0, K, rows)
    upstream = rng.normal(size=(rows, K))
    return log_fact, lam, p, labels, upstream


def cases(rows, K, tau=0.7):
    log_fact, lam, p, labels, upstream = make_inputs(rows, K)
    out = {}
    for name, f, code in (("poisson", lam, kernels.POISSON), ("binomial", p, kernels.BINOMIAL)):
        h = kernels.head_logits_np(f, log_fact, code)
        mass = kernels.tempered_softmax_np(h, tau)
        out[f"head_logits[{name}]"] = lambda impl, f=f, code=code: impl["logits"](f, log_fact, code)
        out[f"tempered_softmax[{name}]"] = lambda impl, h=h: impl["softmax"](h, tau)
        out[f"head_backward[{name}]"] = lambda impl, f=f, h=h, mass=mass, code=code: impl["backward"](
            f, h, mass, upstream, tau, code
        )
    out["emd_rows"] = lambda impl, mass=mass: impl["emd"](mass, labels)
    return out


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    np_impl = {
        "logits": kernels.head_logits_np,
        "softmax": kernels.tempered_softmax_np,
        "backward": kernels.head_backward_np,
        "emd": kernels.emd_rows_np,
    }
    print(f"rows={args.rows} K={args.k} repeat={args.repeat} active backend={kernels.backend()}")
    if not kernels.HAVE_NUMBA:
        print("numba not installed; timing the numpy path only")
    nb_impl = None
    if kernels.HAVE_NUMBA:
        nb_impl = {
            "logits": kernels.head_logits_nb,
            "softmax": kernels.tempered_softmax_nb,
            "backward": kernels.head_backward_nb,
            "emd": kernels.emd_rows_nb,
        }

    print(f"{'kernel':<28}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, call in cases(args.rows, args.k).items():
        t_np = best_of(lambda: call(np_impl), args.repeat)
        if nb_impl is None:
            print(f"{name:<28}{t_np * 1e3:>10.3f}")
            continue
        call(nb_impl)  # compile or load from cache
        t_nb = best_of(lambda: call(nb_impl), args.repeat)
        print(f"{name:<28}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}{t_np / t_nb:>8.1f}x")

    from unimodal_ordinal.data import SyntheticSpec, generate_synthetic, split
    from unimodal_ordinal.network import TrainConfig, train

    tr, va = split(generate_synthetic(SyntheticSpec()), 0.1, 0)
    cfg = TrainConfig(head="binomial", loss="squared_emd", learn_tau=True, epochs=10)
    train(tr, va, TrainConfig(head="binomial", loss="squared_emd", learn_tau=True, epochs=1))
    start = time.perf_counter()
    train(tr, va, cfg)
    print(f"train 10 epochs, N=1800, binomial EMD learned tau [{kernels.backend()}]: "
          f"{time.perf_counter() - start:.2f}s")


if __name__ == "__main__":
    main()
