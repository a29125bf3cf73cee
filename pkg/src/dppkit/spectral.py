"""L-ensembles, dual factors, their spectra and the Bernoulli selection phase."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateRank, IndexOutOfRange, NotPSD, NotSymmetric, ValidationError

SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-8
DUAL_RANK_RTOL = 1e-12


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _check_finite_matrix(a, name):
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {a.shape}")
    if a.size == 0:
        raise ValidationError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return a


def check_symmetric(a, name="matrix"):
    scale = np.max(np.abs(a)) if a.size else 0.0
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > SYMMETRY_RTOL * scale:
        raise NotSymmetric(
            f"{name} is not symmetric: max |A_ij - A_ji| = {asym:.3e} exceeds "
            f"{SYMMETRY_RTOL:g} * max|A| = {SYMMETRY_RTOL * scale:.3e}"
        )


def clamp_psd(eigenvalues, name="matrix"):
    """Zero eigenvalues in ``[-PSD_RTOL * lam_max, 0)``; reject anything lower."""
    lam = np.array(eigenvalues, dtype=np.float64)
    lam_max = lam.max() if lam.size else 0.0
    floor = -PSD_RTOL * max(lam_max, 0.0)
    if lam.size and lam.min() < floor:
        raise NotPSD(
            f"{name} is not PSD: smallest eigenvalue {lam.min():.3e} is below "
            f"-{PSD_RTOL:g} * largest ({floor:.3e})"
        )
    lam[lam < 0] = 0.0
    return lam


@dataclass(frozen=True)
class Spectrum:
    """Eigenpairs of a symmetric PSD matrix, eigenvalues ascending and clamped."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self):
        return self.eigenvalues.shape[0]


@dataclass(frozen=True)
class SpectrumStats:
    """Cardinality statistics of a DPP: ``|S|`` is Poisson-binomial with ``inclusion``."""

    mu: float
    variance: float
    inclusion: np.ndarray

    @classmethod
    def from_eigenvalues(cls, eigenvalues):
        lam = np.asarray(eigenvalues, dtype=np.float64)
        b = lam / (1.0 + lam)
        return cls(mu=float(b.sum()), variance=float(np.sum(b * (1.0 - b))), inclusion=b)


@dataclass(frozen=True, eq=False)
class LEnsemble:
    """Dense symmetric PSD kernel parameterizing ``P(S) = det(L_S) / det(I + L)``.

    The eigendecomposition is computed on first use and cached; the instance
    is otherwise immutable.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = _check_finite_matrix(self.matrix, "L")
        if m.shape[0] != m.shape[1]:
            raise ValidationError(f"L must be square, got shape {m.shape}")
        check_symmetric(m, "L")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self):
        return self.matrix.shape[0]

    @cached_property
    def spectrum(self):
        return eigendecompose_symmetric(self)

    @cached_property
    def stats(self):
        return spectrum_stats(self.spectrum)

    @classmethod
    def from_features(cls, psi):
        """Build ``L = Psi^T Psi`` from a d x N feature matrix."""
        psi = _check_finite_matrix(psi, "Psi")
        return cls(psi.T @ psi)


def eigendecompose_symmetric(L):
    """Eigendecomposition of a validated L-ensemble.

    Raises NotPSD when the smallest eigenvalue is below ``-1e-8`` times the
    largest; smaller negatives are rounding and are set to zero.
    """
    matrix = L.matrix if isinstance(L, LEnsemble) else LEnsemble(L).matrix
    lam, u = np.linalg.eigh(matrix)
    lam = clamp_psd(lam, "L")
    lam.setflags(write=False)
    u.setflags(write=False)
    return Spectrum(eigenvalues=lam, eigenvectors=u)


def spectrum_stats(s):
    if isinstance(s, Spectrum):
        return SpectrumStats.from_eigenvalues(s.eigenvalues)
    return SpectrumStats.from_eigenvalues(s)


def marginal_kernel(L):
    """Marginal kernel ``K = L (I + L)^{-1}``, built from the cached spectrum."""
    if not isinstance(L, LEnsemble):
        L = LEnsemble(L)
    s = L.spectrum
    u = s.eigenvectors
    k = (u * (s.eigenvalues / (1.0 + s.eigenvalues))) @ u.T
    return 0.5 * (k + k.T)


@dataclass(frozen=True, eq=False)
class DualFactor:
    """Low-rank factor ``L = Psi^T Psi`` with the spectrum of ``C = Psi Psi^T``.

    Only eigenpairs with ``e > 1e-12 * e_max`` are kept; ``eigenvalues`` and
    the columns of ``eigenvectors`` (d x r) are those retained pairs, ascending.
    """

    psi: np.ndarray
    dual: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def d(self):
        return self.psi.shape[0]

    @property
    def n(self):
        return self.psi.shape[1]

    @property
    def rank(self):
        return self.eigenvalues.shape[0]

    @cached_property
    def stats(self):
        return SpectrumStats.from_eigenvalues(self.eigenvalues)

    @cached_property
    def psi_rows(self):
        """``Psi^T`` as a contiguous N x d array (one row per item)."""
        return np.ascontiguousarray(self.psi.T)

    @cached_property
    def lifted_sq(self):
        """r x N squared entries of the lifted eigenvectors, for O(N k) initial weights."""
        y = (self.eigenvectors.T @ self.psi) / np.sqrt(self.eigenvalues)[:, None]
        return y * y

    def lifted_basis(self, selection=None):
        """N x r matrix of lifted eigenvectors ``Psi^T r_k / sqrt(e_k)``."""
        if selection is None:
            selection = np.arange(self.rank)
        selection = np.asarray(selection, dtype=np.intp)
        w = self.eigenvectors[:, selection]
        return (self.psi.T @ w) / np.sqrt(self.eigenvalues[selection])

    def marginals(self):
        """Inclusion probabilities ``diag(K)`` computed without forming L."""
        v = self.lifted_basis()
        b = self.stats.inclusion
        return (v * v) @ b

    def to_lensemble(self):
        return LEnsemble(self.psi.T @ self.psi)


def dual_factorization(psi):
    psi = _check_finite_matrix(psi, "Psi")
    psi.setflags(write=False)
    c = psi @ psi.T
    c = 0.5 * (c + c.T)
    e, r = np.linalg.eigh(c)
    e = clamp_psd(e, "C")
    e_max = e.max()
    keep = e > DUAL_RANK_RTOL * e_max if e_max > 0 else np.zeros(e.shape, dtype=bool)
    if not keep.any():
        raise DegenerateRank("dual matrix C has no eigenvalue above the rank threshold")
    e = e[keep]
    r = np.ascontiguousarray(r[:, keep])
    for a in (c, e, r):
        a.setflags(write=False)
    return DualFactor(psi=psi, dual=c, eigenvalues=e, eigenvectors=r)


def lift_eigenvector(f, k):
    """Eigenvector of ``L`` recovered from the k-th retained dual eigenpair."""
    if not 0 <= k < f.rank:
        raise IndexOutOfRange(f"eigenpair index {k} out of range for rank {f.rank}")
    return f.psi.T @ f.eigenvectors[:, k] / np.sqrt(f.eigenvalues[k])


def bernoulli_phase(stats, rng):
    """Indices n kept independently with probability ``b_n``.

    Exactly one uniform variate is consumed per eigenvalue, in index order.
    """
    rng = _as_rng(rng)
    b = stats.inclusion if isinstance(stats, SpectrumStats) else np.asarray(stats)
    u = rng.random(b.shape[0])
    return np.flatnonzero(u < b)
