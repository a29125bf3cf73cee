"""k-means coresets from DPP samples.

Sensitivities for 1-means in closed form, the scaled coreset kernel
``K = a L (I + a L)^{-1}`` with ``a = 1 / max row sum of L``, and the
inverse-marginal (Horvitz-Thompson) cost and size estimators.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import (
    DegenerateKernel,
    DegenerateVariance,
    ValidationError,
    ZeroCost,
    ZeroMarginal,
)
from .sampling import sample_dpp
from .spectral import LEnsemble, _as_rng

CENTERED_RTOL = 1e-8


class DegenerateVarianceWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Points as rows of an N x dim matrix.

    ``offset`` is the mean that was subtracted when ``centered`` is True, so
    costs can be mapped back to the original frame.
    """

    points: np.ndarray
    centered: bool = False
    offset: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        x = np.array(self.points, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValidationError(f"points must be a nonempty N x dim matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("points contain NaN or Inf")
        if self.centered:
            resid = np.linalg.norm(x.sum(axis=0))
            if resid > CENTERED_RTOL * max(np.linalg.norm(x, axis=1).sum(), 1e-300):
                raise ValidationError(f"dataset flagged centered but |sum x_i| = {resid:.3e}")
        x.setflags(write=False)
        object.__setattr__(self, "points", x)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def center(self):
        if self.centered:
            return self
        mean = self.points.mean(axis=0)
        x = self.points - mean
        # second pass removes the rounding residue of the first
        x -= x.mean(axis=0)
        return Dataset(x, centered=True, offset=mean)


@dataclass(frozen=True, eq=False)
class SensitivityVector:
    sigma: np.ndarray
    v: float
    degenerate: bool = False

    @property
    def total(self):
        return float(self.sigma.sum())

    def marginals(self, mu):
        """Sampling marginals proportional to sensitivity, summing to ``mu``."""
        return mu * self.sigma / self.sigma.sum()


@dataclass(frozen=True, eq=False)
class CentersHypothesis:
    centers: np.ndarray

    def __post_init__(self):
        c = np.array(self.centers, dtype=np.float64)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValidationError("need at least one center")
        object.__setattr__(self, "centers", c)

    @property
    def k(self):
        return self.centers.shape[0]


@dataclass(frozen=True, eq=False)
class WeightedSample:
    indices: np.ndarray
    marginals: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_marginals(cls, indices, pi):
        """Attach ``1 / pi_i`` weights to ``indices``; ``pi`` is the full marginal vector."""
        indices = np.asarray(indices, dtype=np.intp)
        m = np.asarray(pi, dtype=np.float64)[indices]
        if np.any(m <= 0):
            raise ZeroMarginal(f"sampled item {indices[np.argmax(m <= 0)]} has marginal 0")
        return cls(indices=indices, marginals=m, weights=1.0 / m)


def sensitivity_1means(data, strict=False):
    """``sigma_i = (1 + |x_i|^2 / v) / N`` on mean-centered data, ``v`` the mean squared norm.

    If all points coincide (``v = 0``) every sigma is ``1/N`` and the result
    is flagged ``degenerate``; with ``strict=True`` DegenerateVariance is raised.
    """
    if not isinstance(data, Dataset):
        data = Dataset(data)
    if data.n < 2:
        raise ValidationError("1-means sensitivity needs at least two points")
    x = data.center().points
    sq = np.sum(x * x, axis=1)
    v = float(sq.mean())
    n = data.n
    scale = float(np.mean(np.sum(data.points * data.points, axis=1)))
    if v <= 1e-24 * max(scale, 1e-300) or v == 0.0:
        if strict:
            raise DegenerateVariance("all points coincide; the 1-means sensitivity is undefined")
        warnings.warn("all points coincide; using sigma_i = 1/N", DegenerateVarianceWarning, stacklevel=2)
        return SensitivityVector(np.full(n, 1.0 / n), 0.0, degenerate=True)
    return SensitivityVector((1.0 + sq / v) / n, v)


def point_costs(data, theta):
    """``f(x_i, theta) = min_j |x_i - c_j|^2`` for every point."""
    x = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    c = theta.centers if isinstance(theta, CentersHypothesis) else np.asarray(theta, dtype=np.float64)
    return np.min(cdist(x, c, "sqeuclidean"), axis=1)


def kmeans_cost(data, theta):
    return float(point_costs(data, theta).sum())


def lloyd(data, k, rng=None, n_iter=100, init=None):
    """Plain Lloyd iterations; returns the centers and the cost after each step."""
    x = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    rng = _as_rng(rng)
    if init is None:
        centers = x[rng.choice(x.shape[0], size=k, replace=False)].copy()
    else:
        centers = np.array(init.centers if isinstance(init, CentersHypothesis) else init, dtype=np.float64)
    history = []
    for _ in range(n_iter):
        d = cdist(x, centers, "sqeuclidean")
        labels = np.argmin(d, axis=1)
        history.append(float(d[np.arange(x.shape[0]), labels].sum()))
        new = centers.copy()
        for j in range(k):
            members = x[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        if np.allclose(new, centers, rtol=0, atol=1e-14):
            centers = new
            break
        centers = new
    history.append(kmeans_cost(x, centers))
    return CentersHypothesis(centers), history


def sensitivity_grid_lower_bound(data, k, grid):
    """``max_theta f(x_i, theta) / L(theta)`` over a finite grid (a lower bound on sigma_i)."""
    if not isinstance(data, Dataset):
        data = Dataset(data)
    grid = list(grid)
    if not grid:
        raise ValidationError("empty hypothesis grid")
    best = np.zeros(data.n)
    for theta in grid:
        if not isinstance(theta, CentersHypothesis):
            theta = CentersHypothesis(theta)
        if theta.k != k:
            raise ValidationError(f"grid hypothesis has {theta.k} centers, expected {k}")
        f = point_costs(data, theta)
        total = f.sum()
        if total <= 0:
            raise ZeroCost("a grid hypothesis has zero total cost")
        np.maximum(best, f / total, out=best)
    return best


def gaussian_similarity(points, bandwidth=None):
    """``exp(-|x_i - x_j|^2 / (2 s^2))``; ``s`` defaults to the median pairwise distance.

    Returns ``(LEnsemble, s)``. If the median distance is zero, ``s = 1``.
    """
    x = points.points if isinstance(points, Dataset) else np.asarray(points, dtype=np.float64)
    if bandwidth is None:
        dists = pdist(x) if x.shape[0] > 1 else np.zeros(1)
        bandwidth = float(np.median(dists))
        if bandwidth <= 0:
            bandwidth = 1.0
    if bandwidth <= 0:
        raise ValidationError("bandwidth must be positive")
    sq = cdist(x, x, "sqeuclidean")
    return LEnsemble(np.exp(-sq / (2.0 * bandwidth**2))), bandwidth


def coreset_alpha(L):
    """``1 / max_i sum_j L_ij``."""
    m = L.matrix if isinstance(L, LEnsemble) else np.asarray(L, dtype=np.float64)
    top = float(m.sum(axis=1).max())
    if not top > 0:
        raise DegenerateKernel(f"largest row sum of L is {top:.3e}; need > 0")
    return 1.0 / top


@dataclass(frozen=True, eq=False)
class CoresetKernel:
    alpha: float
    ensemble: LEnsemble  # the scaled L-ensemble alpha * L
    kernel: np.ndarray = field(repr=False)
    marginals: np.ndarray = field(repr=False)

    @property
    def mu(self):
        return float(self.marginals.sum())

    def mu_bounds(self):
        """``(alpha N / 2, alpha N)``; they hold when L has unit diagonal."""
        n = self.marginals.size
        return self.alpha * n / 2.0, self.alpha * n


def coreset_kernel(L):
    """Marginal kernel of the scaled ensemble ``alpha L`` and its diagonal."""
    if not isinstance(L, LEnsemble):
        L = LEnsemble(L)
    alpha = coreset_alpha(L)
    scaled = LEnsemble(alpha * L.matrix)
    s = scaled.spectrum
    u = s.eigenvectors
    b = s.eigenvalues / (1.0 + s.eigenvalues)
    k = (u * b) @ u.T
    k = 0.5 * (k + k.T)
    pi = np.einsum("ij,j,ij->i", u, b, u)
    return CoresetKernel(alpha=alpha, ensemble=scaled, kernel=k, marginals=pi)


def _weights_of(sample):
    if np.any(sample.marginals <= 0):
        raise ZeroMarginal("a sampled item has zero marginal")
    return 1.0 / sample.marginals


def estimate_cost(sample, data, theta):
    """``sum_{i in S} f(x_i, theta) / pi_i``; unbiased for the full cost."""
    if len(sample.indices) == 0:
        return 0.0
    w = _weights_of(sample)
    x = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    return float(np.dot(w, point_costs(x[sample.indices], theta)))


def estimate_size(sample):
    if len(sample.indices) == 0:
        return 0.0
    return float(_weights_of(sample).sum())


def default_theta_grid(data, k, rng=None):
    """A Lloyd solution and its one-center, one-axis perturbations by the cluster spread.

    Gives ``1 + 2 * k * dim`` hypotheses.
    """
    x = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    base, _ = lloyd(x, k, rng)
    labels = np.argmin(cdist(x, base.centers, "sqeuclidean"), axis=1)
    grid = [base]
    for j in range(k):
        members = x[labels == j]
        spread = members.std(axis=0) if len(members) > 1 else x.std(axis=0)
        for a in range(x.shape[1]):
            for sign in (1.0, -1.0):
                c = base.centers.copy()
                c[j, a] += sign * spread[a]
                grid.append(CentersHypothesis(c))
    return grid


@dataclass(frozen=True)
class CoresetQuality:
    epsilon: float
    trials: int
    success_fraction: float
    worst_theta: int
    worst_error: float
    max_errors: np.ndarray = field(repr=False)


def coreset_quality(data, L, epsilon, theta_grid, trials, rng=None, sampler=None):
    """Empirical probability that a DPP sample is an epsilon-coreset over a theta grid.

    Each trial draws a sample (from the coreset kernel of ``L`` unless a
    ``sampler(rng) -> WeightedSample`` is given), evaluates
    ``|L_hat / L - 1|`` on every grid hypothesis and records the maximum.
    """
    if not isinstance(data, Dataset):
        data = Dataset(data)
    grid = [t if isinstance(t, CentersHypothesis) else CentersHypothesis(t) for t in theta_grid]
    if not grid:
        raise ValidationError("empty hypothesis grid")
    rng = _as_rng(rng)
    if sampler is None:
        ck = coreset_kernel(L)

        def sampler(r):
            draw = sample_dpp(ck.ensemble, r)
            return WeightedSample.from_marginals(list(draw.indices), ck.marginals)

    costs = np.array([point_costs(data, t) for t in grid])
    totals = costs.sum(axis=1)
    if np.any(totals <= 0):
        raise ZeroCost("a grid hypothesis has zero total cost")
    max_err = np.empty(trials)
    worst_count = np.zeros(len(grid), dtype=np.int64)
    for t in range(trials):
        sample = sampler(rng)
        if len(sample.indices):
            est = costs[:, sample.indices] @ _weights_of(sample)
        else:
            est = np.zeros(len(grid))
        err = np.abs(est / totals - 1.0)
        j = int(np.argmax(err))
        worst_count[j] += 1
        max_err[t] = err[j]
    j_worst = int(np.argmax(worst_count))
    return CoresetQuality(
        epsilon=float(epsilon),
        trials=int(trials),
        success_fraction=float(np.mean(max_err <= epsilon)),
        worst_theta=j_worst,
        worst_error=float(max_err.max()) if trials else 0.0,
        max_errors=max_err,
    )
