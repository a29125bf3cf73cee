"""Brute-force ground truth for small ground sets.

Subsets are bitmasks: item ``i`` (0-based) is bit ``i``. Exhaustive laws are
stored densely, indexed by mask, so ``N`` is capped at 20.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import stats as sps

from .errors import NotPSD, TooLarge, UnsupportedSubset, ValidationError
from .sampling import (
    DualProjective,
    ProjectiveBasis,
    SampleDraw,
    sample_projective_dual,
    sample_projective_efficient,
    sample_projective_schur,
)
from .spectral import LEnsemble, SpectrumStats

MAX_ENUMERATION = 20
DET_ZERO_RTOL = 1e-14
POOL_THRESHOLD = 5.0


def mask_of(indices):
    m = 0
    for i in indices:
        m |= 1 << int(i)
    return m


def members(mask):
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


@dataclass(frozen=True, eq=False)
class SubsetDistribution:
    n: int
    probabilities: np.ndarray  # length 2**n, indexed by bitmask

    def prob(self, subset):
        return float(self.probabilities[mask_of(subset)])

    def support(self):
        return np.flatnonzero(self.probabilities > 0)

    def as_dict(self):
        return {members(int(m)): float(self.probabilities[m]) for m in self.support()}

    def marginals(self):
        masks = np.arange(self.probabilities.size)
        return np.array([self.probabilities[(masks >> i) & 1 == 1].sum() for i in range(self.n)])

    def cardinality(self):
        sizes = np.array([bin(m).count("1") for m in range(self.probabilities.size)])
        return np.bincount(sizes, weights=self.probabilities, minlength=self.n + 1)


@dataclass(frozen=True)
class FitReport:
    tv_distance: float
    chi_square: float
    dof: int
    p_value: float
    n_draws: int

    def as_dict(self):
        return {
            "tv_distance": self.tv_distance,
            "chi_square": {"statistic": self.chi_square, "dof": self.dof, "p_value": self.p_value},
            "n_draws": self.n_draws,
        }


def _minor_dets(matrix, size):
    """Determinants of every principal ``size``-minor, with their masks."""
    n = matrix.shape[0]
    combos = np.array(list(combinations(range(n), size)), dtype=np.intp)
    subs = matrix[combos[:, :, None], combos[:, None, :]]
    dets = np.linalg.det(subs)
    masks = np.sum(np.left_shift(1, combos), axis=1)
    return masks, dets


def _principal_minors(matrix):
    n = matrix.shape[0]
    scale = max(np.max(np.abs(matrix)), 1e-300)
    out = np.zeros(1 << n)
    out[0] = 1.0
    for size in range(1, n + 1):
        masks, dets = _minor_dets(matrix, size)
        dets[np.abs(dets) < DET_ZERO_RTOL * scale**size] = 0.0
        if np.any(dets < 0):
            raise NotPSD(f"negative principal minor {dets.min():.3e} of size {size}")
        out[masks] = dets
    return out


def enumerate_dpp(L):
    """``P(S) = det(L_S) / det(I + L)`` for every subset."""
    if not isinstance(L, LEnsemble):
        L = LEnsemble(L)
    if L.n > MAX_ENUMERATION:
        raise TooLarge(f"N={L.n} exceeds the enumeration cap of {MAX_ENUMERATION}")
    minors = _principal_minors(L.matrix)
    norm = np.linalg.det(np.eye(L.n) + L.matrix)
    return SubsetDistribution(L.n, minors / norm)


def enumerate_projective_kdpp(basis):
    """Set-level law ``det(P_S)`` over size-k subsets for ``P = V V^T``."""
    if not isinstance(basis, ProjectiveBasis):
        basis = ProjectiveBasis(basis)
    n, k = basis.n, basis.k
    if n > MAX_ENUMERATION:
        raise TooLarge(f"N={n} exceeds the enumeration cap of {MAX_ENUMERATION}")
    probs = np.zeros(1 << n)
    if k == 0:
        probs[0] = 1.0
        return SubsetDistribution(n, probs)
    p = basis.projection()
    masks, dets = _minor_dets(p, k)
    dets[np.abs(dets) < DET_ZERO_RTOL] = 0.0
    if np.any(dets < 0):
        raise NotPSD(f"negative principal minor {dets.min():.3e}")
    probs[masks] = dets
    return SubsetDistribution(n, probs)


def cardinality_pmf(stats):
    """Poisson-binomial pmf of ``|S|`` by sequential convolution."""
    b = stats.inclusion if isinstance(stats, SpectrumStats) else np.asarray(stats, dtype=np.float64)
    pmf = np.zeros(b.size + 1)
    pmf[0] = 1.0
    for j, bj in enumerate(b):
        pmf[1 : j + 2] = pmf[1 : j + 2] * (1.0 - bj) + pmf[: j + 1] * bj
        pmf[0] *= 1.0 - bj
    return pmf


def chi_square_pooled(observed, expected):
    """Pearson statistic over cells with expected count >= 5, rest pooled.

    A pooled cell that is still below 5 is merged into the smallest retained
    cell. Returns ``(statistic, dof, p_value)``.
    """
    observed = np.asarray(observed, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    big = expected >= POOL_THRESHOLD
    obs = list(observed[big])
    exp = list(expected[big])
    rest_o, rest_e = observed[~big].sum(), expected[~big].sum()
    if rest_e > 0 or rest_o > 0:
        if rest_e >= POOL_THRESHOLD or not exp:
            obs.append(rest_o)
            exp.append(rest_e)
        else:
            j = int(np.argmin(exp))
            obs[j] += rest_o
            exp[j] += rest_e
    obs, exp = np.array(obs), np.array(exp)
    dof = obs.size - 1
    if dof < 1:
        return 0.0, 0, 1.0
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return stat, dof, float(sps.chi2.sf(stat, dof))


def fit_counts(counts, exact):
    """Fit statistics for a mapping ``mask -> (possibly fractional) count``."""
    total = float(sum(counts.values()))
    if total <= 0:
        raise ValidationError("no draws to compare")
    probs = exact.probabilities
    empirical = np.zeros_like(probs)
    for m, c in counts.items():
        if probs[m] <= 0:
            raise UnsupportedSubset(members(m))
        empirical[m] += c
    tv = 0.5 * float(np.abs(empirical / total - probs).sum())
    support = probs > 0
    stat, dof, pval = chi_square_pooled(empirical[support], probs[support] * total)
    return FitReport(min(tv, 1.0), stat, dof, pval, int(round(total)))


def goodness_of_fit(draws, exact):
    """TV distance and pooled chi-square of draws against an exact law.

    ``draws`` may hold SampleDraw objects, index sequences or integer masks.
    """
    counts = Counter()
    for d in draws:
        if isinstance(d, SampleDraw):
            counts[d.mask] += 1
        elif isinstance(d, (int, np.integer)):
            counts[int(d)] += 1
        else:
            counts[mask_of(d)] += 1
    if not counts:
        raise ValidationError("goodness_of_fit needs at least one draw")
    return fit_counts(counts, exact)


def masks_from_indices(indices):
    """Row-wise bitmasks of a ``(n_draws, k)`` index array."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.shape[1] == 0:
        return np.zeros(indices.shape[0], dtype=np.int64)
    return np.sum(np.left_shift(1, indices), axis=1)


@dataclass(frozen=True)
class PairedTrace:
    traces: dict
    indices: dict
    scale: float

    def max_discrepancy(self):
        """Largest |p_a - p_b| over steps and items, relative to ``max p0``."""
        names = list(self.traces)
        worst = 0.0
        for a in names:
            for b in names:
                if a < b:
                    diff = np.max(np.abs(self.traces[a] - self.traces[b]))
                    worst = max(worst, diff / self.scale)
        return worst

    def same_indices(self):
        seqs = list(self.indices.values())
        return all(s == seqs[0] for s in seqs)


def paired_trace(source, seed):
    """Step-wise weights of the Schur, efficient and dual samplers on one stream.

    ``source`` is a ProjectiveBasis (the dual sampler then runs on the trivial
    factor ``Psi = V^T``) or a DualProjective with eigen factors (the primal
    samplers run on its lifted basis).
    """
    if isinstance(source, DualProjective):
        dual = source
        basis = source.lifted_basis()
    else:
        basis = source if isinstance(source, ProjectiveBasis) else ProjectiveBasis(source)
        k = basis.k
        dual = DualProjective(psi=basis.v.T.copy(), c_tilde=np.eye(k), k=k, w=np.eye(k), e=np.ones(k))
    runs = {
        "schur": sample_projective_schur(basis, np.random.default_rng(seed), record_trace=True),
        "efficient": sample_projective_efficient(basis, np.random.default_rng(seed), record_trace=True),
        "dual": sample_projective_dual(dual, np.random.default_rng(seed), record_trace=True),
    }
    scale = float(np.max(runs["efficient"].probability_trace[0]))
    return PairedTrace(
        traces={k: r.probability_trace for k, r in runs.items()},
        indices={k: r.indices for k, r in runs.items()},
        scale=scale,
    )
