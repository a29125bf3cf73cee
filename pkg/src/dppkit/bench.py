"""Wall-clock timing of the samplers and log-log scaling fits."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from ._backend import use_backend
from .sampling import DualProjective, ProjectiveBasis, sample_dpp, sample_projective
from .spectral import LEnsemble, dual_factorization


@dataclass(frozen=True)
class Timing:
    n: int
    k: int
    d: int | None
    algorithm: str
    backend: str
    reps: int
    median_s: float
    min_s: float

    def as_dict(self):
        return asdict(self)


def _median_time(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), float(np.min(times))


def time_projective(n, k, algorithm, reps=5, rng=None, backend="numba", d=None):
    """Median per-draw time of one projective sampler on a random basis.

    For ``algorithm="dual"`` the input is a random rank-k factor with ``d``
    rows (default ``2k``). One untimed warm-up draw triggers compilation.
    """
    rng = np.random.default_rng(rng)
    if algorithm == "dual":
        d = d or 2 * k
        psi = rng.standard_normal((d, k)) @ ProjectiveBasis.random(n, k, rng).v.T
        source = DualProjective.from_factor(dual_factorization(psi))
    else:
        source = ProjectiveBasis.random(n, k, rng)
    with use_backend(backend):
        sample_projective(source, rng, algorithm)
        med, best = _median_time(lambda: sample_projective(source, rng, algorithm), reps)
    return Timing(n, k, d, algorithm, backend, reps, med, best)


def loglog_slope(xs, ys):
    """Least-squares slope of ``log y`` against ``log x``."""
    slope, _ = np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)
    return float(slope)


def scaling_table(n, ks, algorithms, reps=5, rng=0, backends=("numba",)):
    """Timings over a k grid plus the fitted slope per (algorithm, backend)."""
    rows = []
    slopes = {}
    for backend in backends:
        for alg in algorithms:
            timings = [time_projective(n, k, alg, reps, rng, backend) for k in ks]
            rows.extend(timings)
            if len(ks) > 1:
                slopes[f"{alg}/{backend}"] = loglog_slope(ks, [t.median_s for t in timings])
    return rows, slopes


def time_dual_vs_full(psi, n_draws, rng=0, algorithm_full="efficient"):
    """Total time of the dual route against the dense N x N route on the same factor.

    Dual: ``dual_factorization`` plus ``n_draws`` dual-sampler DPP draws.
    Full: forming ``L = Psi^T Psi``, its eigendecomposition, plus the same
    number of draws with ``algorithm_full``.
    """
    t0 = time.perf_counter()
    factor = dual_factorization(psi)
    r = np.random.default_rng(rng)
    dual_draws = [sample_dpp(factor, r, "dual") for _ in range(n_draws)]
    t_dual = time.perf_counter() - t0

    t0 = time.perf_counter()
    ens = LEnsemble(psi.T @ psi)
    ens.spectrum
    r = np.random.default_rng(rng)
    full_draws = [sample_dpp(ens, r, algorithm_full) for _ in range(n_draws)]
    t_full = time.perf_counter() - t0
    return {
        "dual_s": t_dual,
        "full_s": t_full,
        "factor": factor,
        "ensemble": ens,
        "dual_draws": dual_draws,
        "full_draws": full_draws,
    }
