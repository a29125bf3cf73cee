"""Command-line front end.

Every subcommand writes one JSON document holding the schema version, the
library version, the effective configuration (seed included) and the result.
Passing that document back with ``--config`` re-runs the same computation.

Exit codes: 0 ok, 2 input or validation failure, 3 numerical breakdown,
4 a verification tolerance failed.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from ._backend import HAVE_NUMBA, use_backend
from .bench import scaling_table, time_dual_vs_full
from .coreset import (
    Dataset,
    DegenerateVarianceWarning,
    WeightedSample,
    coreset_kernel,
    coreset_quality,
    default_theta_grid,
    estimate_size,
    gaussian_similarity,
    sensitivity_1means,
)
from .errors import DPPError, NumericalBreakdown, TooLarge, ValidationError
from .io import document, dump_json, read_matrix, write_rows_csv
from .oracle import (
    MAX_ENUMERATION,
    chi_square_pooled,
    cardinality_pmf,
    enumerate_dpp,
    enumerate_projective_kdpp,
    fit_counts,
    mask_of,
    members,
    paired_trace,
)
from .sampling import ALGORITHMS, DualProjective, ProjectiveBasis, sample_dpp, sample_projective
from .spectral import LEnsemble, dual_factorization, marginal_kernel

EXIT_OK, EXIT_INPUT, EXIT_BREAKDOWN, EXIT_VERIFY = 0, 2, 3, 4
KINDS = ("kernel_matrix", "feature_matrix", "points")
DEFAULT_TOLERANCES = {"tv": 0.01, "p_value": 0.001, "trace": 1e-8, "normalization": 1e-6}
TRACE_SEEDS = 20


def worker_count():
    raw = os.environ.get("DPPKIT_THREADS", "").strip()
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            raise ValidationError(f"DPPKIT_THREADS must be a positive integer, got {raw!r}") from None
    return cap


def trial_rng(seed, trial):
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def fan_out(fn, seed, trials):
    """``[fn(rng_t) for t in range(trials)]`` with per-trial streams, split over threads."""
    workers = min(worker_count(), max(trials, 1))
    if workers == 1:
        return [fn(trial_rng(seed, t)) for t in range(trials)]
    bounds = np.linspace(0, trials, workers + 1).astype(int)

    def chunk(lo_hi):
        lo, hi = lo_hi
        return [fn(trial_rng(seed, t)) for t in range(lo, hi)]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(chunk, zip(bounds[:-1], bounds[1:])))
    return [r for part in parts for r in part]


# -- input ------------------------------------------------------------------


def load_source(cfg):
    """Build the sampling source named by the config.

    Returns ``(source, n)`` where source is an LEnsemble, DualFactor,
    ProjectiveBasis or DualProjective (the last two in ``--k`` mode).
    Feature files hold one item per row, so ``Psi`` is the transpose.
    """
    if cfg["input"] is None:
        raise ValidationError("--input is required")
    kind, algorithm, k = cfg["kind"], cfg["algorithm"], cfg["k"]
    if algorithm == "dual" and kind != "feature_matrix":
        raise ValidationError("algorithm 'dual' requires --kind feature_matrix")
    a = read_matrix(cfg["input"])
    if kind == "kernel_matrix":
        source = LEnsemble(a)
    elif kind == "feature_matrix":
        source = dual_factorization(a.T)
    else:
        source, _ = gaussian_similarity(Dataset(a), cfg.get("bandwidth"))
    if k is None:
        return source, source.n
    if k < 0:
        raise ValidationError(f"--k must be nonnegative, got {k}")
    if isinstance(source, LEnsemble):
        if k > source.n:
            raise ValidationError(f"--k={k} exceeds N={source.n}")
        s = source.spectrum
        top = np.argsort(s.eigenvalues)[::-1][:k]
        basis = ProjectiveBasis(s.eigenvectors[:, np.sort(top)], validate=False)
        if algorithm == "dual":
            raise ValidationError("algorithm 'dual' requires --kind feature_matrix")
        return basis, source.n
    if k > source.rank:
        raise ValidationError(f"--k={k} exceeds the feature matrix rank {source.rank}")
    top = np.sort(np.argsort(source.eigenvalues)[::-1][:k])
    dp = DualProjective.from_factor(source, top)
    if algorithm == "dual":
        return dp, source.n
    return dp.lifted_basis(), source.n


def exact_marginals(source):
    if isinstance(source, LEnsemble):
        return np.diag(marginal_kernel(source)).copy()
    if isinstance(source, ProjectiveBasis):
        return np.einsum("ij,ij->i", source.v, source.v)
    if isinstance(source, DualProjective):
        v = source.lifted_basis().v
        return np.einsum("ij,ij->i", v, v)
    return source.marginals()


def draw_one(source, algorithm, rng):
    if isinstance(source, (ProjectiveBasis, DualProjective)):
        return sample_projective(source, rng, algorithm)
    return sample_dpp(source, rng, algorithm)


def run_trials(source, algorithm, seed, trials):
    return fan_out(lambda r: draw_one(source, algorithm, r), seed, trials)


# -- subcommands ------------------------------------------------------------


def cmd_sample(cfg):
    source, n = load_source(cfg)
    draws = run_trials(source, cfg["algorithm"], cfg["seed"], cfg["trials"])
    result = {
        "n": n,
        "algorithm": cfg["algorithm"],
        "seed": cfg["seed"],
        "mode": "dpp" if cfg["k"] is None else "k-dpp",
    }
    if isinstance(source, (ProjectiveBasis, DualProjective)):
        result["mu"] = float(source.k)
    else:
        result["mu"] = source.stats.mu
    if cfg["trials"] == 1:
        result["indices"] = list(draws[0].indices)
    result["draws"] = [list(d.indices) for d in draws]
    if cfg["stats"]:
        result["stats"] = sample_stats(draws, source, n)
    return result, EXIT_OK


def sample_stats(draws, source, n):
    total = len(draws)
    inc = np.zeros(n)
    sizes = np.zeros(total, dtype=np.int64)
    for t, d in enumerate(draws):
        inc[list(d.indices)] += 1
        sizes[t] = len(d.indices)
    out = {
        "trials": total,
        "marginals": exact_marginals(source),
        "empirical_inclusion": inc / total,
        "mean_size": float(sizes.mean()),
        "size_histogram": np.bincount(sizes, minlength=n + 1)[: sizes.max(initial=0) + 1],
    }
    if n <= MAX_ENUMERATION:
        counts = Counter(mask_of(d.indices) for d in draws)
        out["subset_frequencies"] = [
            {"subset": list(members(m)), "frequency": c / total} for m, c in sorted(counts.items())
        ]
    return out


def _trace_source(source):
    """Projective instance for the paired-trace check, or None for an empty basis."""
    if isinstance(source, (ProjectiveBasis, DualProjective)):
        return source if source.k > 0 else None
    if isinstance(source, LEnsemble):
        s = source.spectrum
        keep = np.flatnonzero(s.eigenvalues > 0)
        return ProjectiveBasis(s.eigenvectors[:, keep], validate=False) if keep.size else None
    if source.rank == 0:
        return None
    return DualProjective.from_factor(source)


def cmd_verify(cfg):
    source, n = load_source(cfg)
    if n > MAX_ENUMERATION:
        raise TooLarge(f"verify enumerates all subsets; N={n} exceeds the cap of {MAX_ENUMERATION}")
    tol = cfg["tolerances"]
    if isinstance(source, (ProjectiveBasis, DualProjective)):
        basis = source.lifted_basis() if isinstance(source, DualProjective) else source
        exact = enumerate_projective_kdpp(basis)
    else:
        exact = enumerate_dpp(source.to_lensemble() if not isinstance(source, LEnsemble) else source)
    draws = run_trials(source, cfg["algorithm"], cfg["seed"], cfg["trials"])
    fit = fit_counts(Counter(mask_of(d.indices) for d in draws), exact)

    checks = {
        "tv": {"value": fit.tv_distance, "tolerance": tol["tv"], "pass": fit.tv_distance <= tol["tv"]},
        "chi_square": {
            "statistic": fit.chi_square,
            "dof": fit.dof,
            "p_value": fit.p_value,
            "tolerance": tol["p_value"],
            "pass": fit.p_value > tol["p_value"],
        },
    }

    sizes = np.bincount([len(d.indices) for d in draws], minlength=n + 1)
    pmf = exact.cardinality()
    stat, dof, pval = chi_square_pooled(sizes[pmf > 0], pmf[pmf > 0] * len(draws))
    bad_size = int(sizes[pmf <= 0].sum())
    checks["cardinality"] = {
        "statistic": stat,
        "dof": dof,
        "p_value": pval,
        "tolerance": tol["p_value"],
        "pass": bad_size == 0 and pval > tol["p_value"],
    }

    worst_norm = 0.0
    for d in draws:
        if d.step_sums is not None and len(d.indices):
            target = len(d.indices) - np.arange(len(d.indices))
            worst_norm = max(worst_norm, float(np.max(np.abs(np.asarray(d.step_sums) - target))))
    checks["normalization"] = {
        "max_error": worst_norm,
        "tolerance": tol["normalization"],
        "pass": worst_norm <= tol["normalization"],
    }

    inst = _trace_source(source)
    if inst is not None:
        worst, same = 0.0, True
        for t in range(TRACE_SEEDS):
            pt = paired_trace(inst, np.random.SeedSequence([cfg["seed"], cfg["trials"] + t]))
            worst = max(worst, pt.max_discrepancy())
            same = same and pt.same_indices()
        checks["trace_equality"] = {
            "instances": TRACE_SEEDS,
            "max_discrepancy": worst,
            "indices_identical": same,
            "tolerance": tol["trace"],
            "pass": same and worst <= tol["trace"],
        }

    passed = all(c["pass"] for c in checks.values())
    result = {
        "n": n,
        "algorithm": cfg["algorithm"],
        "seed": cfg["seed"],
        "trials": cfg["trials"],
        "fit": fit.as_dict(),
        "checks": checks,
        "pass": passed,
    }
    return result, EXIT_OK if passed else EXIT_VERIFY


def cmd_coreset(cfg):
    if cfg["input"] is None:
        raise ValidationError("--input is required")
    if cfg["kind"] != "points":
        raise ValidationError("coreset needs --kind points")
    data = Dataset(read_matrix(cfg["input"]))
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateVarianceWarning)
        sens = sensitivity_1means(data, strict=cfg["strict"])
    notes.extend(str(w.message) for w in caught)
    L, bandwidth = gaussian_similarity(data, cfg.get("bandwidth"))
    ck = coreset_kernel(L)
    draw = sample_dpp(ck.ensemble, trial_rng(cfg["seed"], 0), cfg["algorithm"])
    sample = WeightedSample.from_marginals(list(draw.indices), ck.marginals)
    lo, hi = ck.mu_bounds()
    result = {
        "n": data.n,
        "seed": cfg["seed"],
        "indices": list(sample.indices),
        "weights": sample.weights,
        "marginals": sample.marginals,
        "sigma": sens.sigma,
        "sigma_total": sens.total,
        "degenerate_variance": sens.degenerate,
        "bandwidth": bandwidth,
        "alpha": ck.alpha,
        "mu": ck.mu,
        "mu_bounds": {"lower": lo, "upper": hi, "holds": bool(lo - 1e-10 <= ck.mu <= hi + 1e-10)},
        "estimated_size": estimate_size(sample),
        "notes": notes,
    }
    if cfg.get("clusters"):
        grid = default_theta_grid(data, cfg["clusters"], trial_rng(cfg["seed"], 1))
        q = coreset_quality(data, L, cfg["epsilon"], grid, cfg["trials"], trial_rng(cfg["seed"], 2))
        result["quality"] = {
            "clusters": cfg["clusters"],
            "epsilon": q.epsilon,
            "trials": q.trials,
            "hypotheses": len(grid),
            "success_fraction": q.success_fraction,
            "worst_error": q.worst_error,
        }
    return result, EXIT_OK


def cmd_bench(cfg):
    backends = ["numba", "numpy"] if cfg["backend"] == "both" else [cfg["backend"]]
    if "numba" in backends and not HAVE_NUMBA:
        raise ValidationError("numba is not installed")
    rows, slopes = scaling_table(
        cfg["n"], cfg["ks"], cfg["algorithms"], cfg["reps"], cfg["seed"] % 2**32, tuple(backends)
    )
    table = [r.as_dict() for r in rows]
    result = {"rows": table, "slopes": slopes}
    if len(backends) == 2:
        speedups = {}
        for r in rows:
            if r.backend == "numba":
                twin = next(x for x in rows if x.backend == "numpy" and (x.k, x.algorithm) == (r.k, r.algorithm))
                speedups[f"{r.algorithm}/k={r.k}"] = twin.median_s / r.median_s
        result["numba_speedup"] = speedups
    if cfg.get("dual_n"):
        rng = np.random.default_rng(cfg["seed"])
        d = cfg["dual_d"]
        psi = rng.standard_normal((d, cfg["dual_n"])) / np.sqrt(cfg["dual_n"])
        with use_backend(backends[0]):
            out = time_dual_vs_full(psi, cfg["dual_draws"], cfg["seed"], "reference")
        result["dual_vs_full"] = {
            "n": cfg["dual_n"],
            "d": d,
            "draws": cfg["dual_draws"],
            "dual_s": out["dual_s"],
            "full_s": out["full_s"],
            "full_algorithm": "reference",
        }
    if cfg.get("csv"):
        write_rows_csv(cfg["csv"], table)
    return result, EXIT_OK


def cmd_stats(cfg):
    source, n = load_source({**cfg, "k": None})
    stats = source.stats
    lam = source.spectrum.eigenvalues if isinstance(source, LEnsemble) else source.eigenvalues
    out = {
        "n": n,
        "eigenvalues": np.sort(lam)[::-1],
        "mu": stats.mu,
        "variance": stats.variance,
        "marginals": exact_marginals(source),
        "cardinality_pmf": cardinality_pmf(stats),
    }
    return out, EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "verify": cmd_verify,
    "coreset": cmd_coreset,
    "bench": cmd_bench,
    "stats": cmd_stats,
}


# -- argument handling ------------------------------------------------------


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _alg_list(text):
    algs = [x.strip() for x in text.split(",") if x.strip()]
    for a in algs:
        if a not in ALGORITHMS:
            raise argparse.ArgumentTypeError(f"unknown algorithm {a!r}")
    return algs


def _tolerance(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    if key not in DEFAULT_TOLERANCES:
        raise argparse.ArgumentTypeError(f"unknown tolerance {key!r}; known: {', '.join(DEFAULT_TOLERANCES)}")
    try:
        return key, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {key} needs a number, got {value!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="dppkit", description="Exact DPP sampling and verification.")
    parser.add_argument("--version", action="version", version=f"dppkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="headerless CSV matrix")
    common.add_argument("--kind", choices=KINDS, default="kernel_matrix")
    common.add_argument("--algorithm", choices=ALGORITHMS, default="efficient")
    common.add_argument("--k", type=int, default=None, help="projective k-DPP on the top-k eigenvectors")
    common.add_argument("--seed", type=int, default=None, help="64-bit seed (random and recorded if omitted)")
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--output", default=None, help="JSON output path (stdout if omitted)")
    common.add_argument("--tolerance", type=_tolerance, action="append", default=[], metavar="NAME=VALUE")
    common.add_argument("--bandwidth", type=float, default=None, help="Gaussian bandwidth for points input")
    common.add_argument("--backend", choices=("numba", "numpy", "both"), default=None)
    common.add_argument("--config", default=None, help="re-run the config embedded in a previous output")

    p = sub.add_parser("sample", parents=[common], help="draw samples")
    p.add_argument("--stats", action="store_true", help="report empirical frequencies")
    sub.add_parser("verify", parents=[common], help="compare the sampler with exact enumeration")
    p = sub.add_parser("coreset", parents=[common], help="weighted k-means coreset from a DPP sample")
    p.add_argument("--strict", action="store_true", help="fail on zero-variance data")
    p.add_argument("--clusters", type=int, default=None, help="evaluate coreset quality for this k")
    p.add_argument("--epsilon", type=float, default=0.1)
    p = sub.add_parser("bench", parents=[common], help="timing table and log-log slopes")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--ks", type=_int_list, default=[16, 32, 64, 128])
    p.add_argument("--algorithms", type=_alg_list, default=list(ALGORITHMS))
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--csv", default=None, help="also write the timing table as CSV")
    p.add_argument("--dual-n", type=int, default=None, help="time dual vs full route at this N")
    p.add_argument("--dual-d", type=int, default=50)
    p.add_argument("--dual-draws", type=int, default=100)
    sub.add_parser("stats", parents=[common], help="spectral summary of the kernel")
    return parser


_PLUMBING = ("config", "output", "tolerance", "func")


def resolve_config(args):
    cfg = {k: v for k, v in vars(args).items() if k not in _PLUMBING}
    if args.config:
        with open(args.config) as fh:
            saved = json.load(fh)
        saved = saved.get("config", saved)
        if saved.get("command", args.command) != args.command:
            raise ValidationError(f"--config was written by {saved['command']!r}, not {args.command!r}")
        cfg.update(saved)
    else:
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(dict(args.tolerance))
        cfg["tolerances"] = tol
        if cfg["seed"] is None:
            cfg["seed"] = secrets.randbits(64)
        if cfg["trials"] is None:
            cfg["trials"] = {"verify": 200_000, "coreset": 100}.get(args.command, 1)
        if cfg["backend"] is None:
            cfg["backend"] = "numba" if HAVE_NUMBA else "numpy"
    if not 0 <= cfg["seed"] < 2**64:
        raise ValidationError("--seed must be a 64-bit unsigned integer")
    if cfg["trials"] < 1:
        raise ValidationError("--trials must be at least 1")
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        backend = "numba" if cfg["backend"] == "both" else cfg["backend"]
        with use_backend(backend):
            result, code = COMMANDS[args.command](cfg)
        dump_json(document(args.command, cfg, result, __version__), args.output)
        if code == EXIT_VERIFY:
            failed = [k for k, c in result["checks"].items() if not c["pass"]]
            print(f"dppkit: verification failed: {', '.join(failed)}", file=sys.stderr)
        return code
    except NumericalBreakdown as exc:
        print(f"dppkit: numerical breakdown ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except (DPPError, ValueError, OSError) as exc:
        print(f"dppkit: invalid input ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
