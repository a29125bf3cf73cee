"""Projective k-DPP samplers and the two-phase DPP pipeline.

Four samplers share one target law, ``P(S) = det(V_S V_S^T)`` over size-k
sets for an orthonormal ``V``:

* ``reference``: re-orthonormalize V against the sampled coordinate each step
  (QR); O(N k^3), kept as the correctness and timing baseline.
* ``schur``: recompute ``p(i) = p0(i) - P_{S,i}^T P_S^{-1} P_{S,i}`` from scratch.
* ``efficient``: incremental Gram-Schmidt vectors ``f_n``; O(N k^2).
* ``dual``: the efficient sampler run on ``Psi`` and ``C~ = W E~^{-1} W^T``
  without lifting eigenvectors to dimension N; O(N d k).

All samplers consume exactly one uniform per categorical draw, so given the
same generator state they produce identical index sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import AllZero, NumericalBreakdown, RankMismatch, ValidationError
from .spectral import DualFactor, LEnsemble, _as_rng, bernoulli_phase

ALGORITHMS = ("reference", "schur", "efficient", "dual")
ORTHONORMAL_TOL = 1e-8

_SINGLE = {
    "reference": kernels.reference_single,
    "schur": kernels.schur_single,
    "efficient": kernels.efficient_single,
}
_BATCH = {
    "reference": kernels.reference_batch,
    "schur": kernels.schur_batch,
    "efficient": kernels.efficient_batch,
}


@dataclass(frozen=True, eq=False)
class ProjectiveBasis:
    """N x k matrix with orthonormal columns; defines the projection ``P = V V^T``."""

    v: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        if v.ndim != 2:
            raise ValidationError(f"basis must be 2-D, got shape {v.shape}")
        if v.shape[1] > v.shape[0]:
            raise ValidationError(f"basis has k={v.shape[1]} columns but only N={v.shape[0]} rows")
        if self.validate:
            if not np.all(np.isfinite(v)):
                raise ValidationError("basis contains NaN or Inf")
            dev = np.max(np.abs(v.T @ v - np.eye(v.shape[1]))) if v.shape[1] else 0.0
            if dev > ORTHONORMAL_TOL:
                raise ValidationError(f"basis columns are not orthonormal: max |V^T V - I| = {dev:.3e}")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def n(self):
        return self.v.shape[0]

    @property
    def k(self):
        return self.v.shape[1]

    def projection(self):
        return self.v @ self.v.T

    @classmethod
    def random(cls, n, k, rng=None):
        """Haar-distributed k-dimensional subspace of R^n."""
        rng = _as_rng(rng)
        q, r = np.linalg.qr(rng.standard_normal((n, k)))
        return cls(q * np.sign(np.diag(r)))


@dataclass(frozen=True, eq=False)
class DualProjective:
    """Dual input of the memory-lean sampler: ``Psi`` (d x N) and ``C~`` (d x d).

    ``w`` and ``e`` (the selected dual eigenvectors and eigenvalues) are kept
    when known so that the initial weights cost O(N d k) rather than O(N d^2);
    ``p0`` and ``psi_t`` let a caller pass those weights and the row-major
    ``Psi^T`` precomputed.
    """

    psi: np.ndarray
    c_tilde: np.ndarray
    k: int
    w: np.ndarray | None = field(default=None, repr=False)
    e: np.ndarray | None = field(default=None, repr=False)
    p0: np.ndarray | None = field(default=None, repr=False)
    psi_t: np.ndarray | None = field(default=None, repr=False)
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.validate:
            self._check()
        if self.psi_t is None:
            object.__setattr__(self, "psi_t", np.ascontiguousarray(np.asarray(self.psi, dtype=np.float64).T))

    def _check(self):
        psi = np.asarray(self.psi, dtype=np.float64)
        c = np.asarray(self.c_tilde, dtype=np.float64)
        if psi.ndim != 2 or c.shape != (psi.shape[0], psi.shape[0]):
            raise ValidationError(f"C~ must be d x d with d = {psi.shape[0]}, got {c.shape}")
        scale = np.max(np.abs(c)) if c.size else 0.0
        if np.max(np.abs(c - c.T)) > 1e-10 * max(scale, 1e-300):
            raise ValidationError("C~ is not symmetric")
        lam = np.linalg.eigvalsh(c)
        rank = int(np.sum(lam > 1e-10 * lam.max())) if lam.max() > 0 else 0
        if self.k > rank:
            raise RankMismatch(f"k={self.k} exceeds rank(C~)={rank}")
        if self.k < rank:
            raise RankMismatch(f"k={self.k} is below rank(C~)={rank}; C~ must be a rank-k projector pullback")

    @classmethod
    def from_factor(cls, factor: DualFactor, selection=None):
        """Build ``C~`` from the selected retained eigenpairs of a dual factor.

        The rank check is skipped (``C~`` has rank k by construction) and the
        factor's cached ``Psi^T`` and lifted squares are reused.
        """
        if selection is None:
            selection = np.arange(factor.rank)
        selection = np.asarray(selection, dtype=np.intp)
        w = factor.eigenvectors[:, selection]
        e = factor.eigenvalues[selection]
        c_tilde = (w / e) @ w.T
        c_tilde = 0.5 * (c_tilde + c_tilde.T)
        p0 = factor.lifted_sq[selection].sum(axis=0)
        return cls(
            psi=factor.psi,
            c_tilde=c_tilde,
            k=len(selection),
            w=w,
            e=e,
            p0=p0,
            psi_t=factor.psi_rows,
            validate=False,
        )

    def initial_weights(self):
        if self.p0 is not None:
            return self.p0
        if self.w is not None:
            y = (self.w.T @ self.psi) / np.sqrt(self.e)[:, None]
            return np.sum(y * y, axis=0)
        return np.sum(self.psi * (self.c_tilde @ self.psi), axis=0)

    def lifted_basis(self):
        """``V = Psi^T W E~^{-1/2}`` (needs the eigen factors)."""
        if self.w is None:
            raise ValidationError("lifted basis requires the selected dual eigenvectors")
        return ProjectiveBasis((self.psi.T @ self.w) / np.sqrt(self.e), validate=False)


@dataclass(frozen=True, eq=False)
class SampleDraw:
    """One sample: indices in draw order, plus provenance for verification."""

    indices: tuple
    algorithm: str
    seed: int | None = None
    probability_trace: np.ndarray | None = field(default=None, repr=False)
    step_sums: np.ndarray | None = field(default=None, repr=False)
    eigen_selection: tuple | None = None

    @property
    def k(self):
        return len(self.indices)

    @property
    def mask(self):
        m = 0
        for i in self.indices:
            m |= 1 << int(i)
        return m

    def as_set(self):
        return frozenset(int(i) for i in self.indices)


def _raise_status(status, step, where=""):
    if status == kernels.NEGATIVE:
        raise NumericalBreakdown(f"{where}probability fell below the clamp budget at step {step}", step)
    if status == kernels.PIVOT:
        raise NumericalBreakdown(f"{where}normalization pivot vanished at step {step}", step)
    if status == kernels.EMPTY:
        raise AllZero(f"{where}all probabilities are zero at step {step}", step)


def _seed_of(rng):
    return rng if isinstance(rng, (int, np.integer)) else None


def _run_projective(algorithm, basis, rng, record_trace):
    seed = _seed_of(rng)
    rng = _as_rng(rng)
    u = rng.random(basis.k)
    if basis.k == 0:
        return SampleDraw((), algorithm, seed)
    status, step, idx, sums, trace = _SINGLE[algorithm](basis.v, u, record_trace)
    _raise_status(status, step, f"{algorithm}: ")
    return SampleDraw(
        tuple(int(i) for i in idx),
        algorithm,
        seed,
        probability_trace=trace if record_trace else None,
        step_sums=sums,
    )


def sample_projective_reference(basis, rng=None, record_trace=False):
    return _run_projective("reference", basis, rng, record_trace)


def sample_projective_schur(basis, rng=None, record_trace=False):
    return _run_projective("schur", basis, rng, record_trace)


def sample_projective_efficient(basis, rng=None, record_trace=False):
    """Draw a size-k sample from the projective k-DPP of ``basis`` in O(N k^2)."""
    return _run_projective("efficient", basis, rng, record_trace)


def sample_projective_dual(dp, rng=None, record_trace=False):
    """The efficient sampler on dual inputs; same law as ``efficient`` on the lifted basis."""
    seed = _seed_of(rng)
    rng = _as_rng(rng)
    u = rng.random(dp.k)
    if dp.k == 0:
        return SampleDraw((), "dual", seed)
    c = np.ascontiguousarray(dp.c_tilde)
    status, step, idx, sums, trace = kernels.dual_single(dp.psi_t, c, dp.initial_weights(), u, record_trace)
    _raise_status(status, step, "dual: ")
    return SampleDraw(
        tuple(int(i) for i in idx),
        "dual",
        seed,
        probability_trace=trace if record_trace else None,
        step_sums=sums,
    )


def sample_projective(source, rng=None, algorithm="efficient", record_trace=False):
    if algorithm == "dual":
        if not isinstance(source, DualProjective):
            raise ValidationError("the dual sampler needs a DualProjective input")
        return sample_projective_dual(source, rng, record_trace)
    if isinstance(source, DualProjective):
        source = source.lifted_basis()
    if algorithm not in _SINGLE:
        raise ValidationError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    return _run_projective(algorithm, source, rng, record_trace)


def sample_projective_many(source, n_draws, rng=None, algorithm="efficient"):
    """Many independent draws in one kernel call.

    Returns ``(indices, step_sums)``, both ``(n_draws, k)``. The random stream
    is the one ``n_draws`` successive single-draw calls would consume.
    """
    rng = _as_rng(rng)
    if algorithm == "dual":
        if not isinstance(source, DualProjective):
            raise ValidationError("the dual sampler needs a DualProjective input")
        k = source.k
        uniforms = rng.random((n_draws, k))
        if k == 0:
            return np.zeros((n_draws, 0), dtype=np.int64), np.zeros((n_draws, 0))
        status, r, step, idx, sums = kernels.dual_batch(
            source.psi_t,
            np.ascontiguousarray(source.c_tilde),
            source.initial_weights(),
            uniforms,
        )
    else:
        if isinstance(source, DualProjective):
            source = source.lifted_basis()
        if algorithm not in _BATCH:
            raise ValidationError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
        k = source.k
        uniforms = rng.random((n_draws, k))
        if k == 0:
            return np.zeros((n_draws, 0), dtype=np.int64), np.zeros((n_draws, 0))
        status, r, step, idx, sums = _BATCH[algorithm](source.v, uniforms)
    _raise_status(status, step, f"{algorithm} (draw {r}): ")
    return idx, sums


def categorical_draw(p, rng=None):
    """Index i with probability ``p[i] / sum(p)``, using exactly one uniform."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError("weights must be a nonempty 1-D array")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValidationError("weights must be finite and nonnegative")
    rng = _as_rng(rng)
    u = rng.random()
    i = kernels.categorical(p, u)
    if i < 0:
        raise AllZero("categorical weights sum to zero")
    return int(i)


def sanitize_probabilities(p, sampled=(), tau=None):
    """Zero sampled entries and clamp negatives in ``[-tau, 0)``.

    ``tau`` defaults to ``1e-8 * max(p)``. An unsampled entry below ``-tau``
    raises NumericalBreakdown.
    """
    p = np.ascontiguousarray(p, dtype=np.float64)
    if tau is None:
        tau = kernels.CLAMP_RTOL * max(float(p.max()), 0.0) if p.size else 0.0
    taken = np.zeros(p.shape[0], dtype=np.bool_)
    taken[list(sampled)] = True
    status, out = kernels.sanitize(p, taken, float(tau))
    if status != kernels.OK:
        worst = int(np.argmin(np.where(taken, np.inf, p)))
        raise NumericalBreakdown(f"p[{worst}] = {p[worst]:.3e} is below the clamp budget -{tau:.3e}")
    return out


def _selection_basis(source, selection):
    if isinstance(source, DualFactor):
        return ProjectiveBasis(source.lifted_basis(selection), validate=False)
    return ProjectiveBasis(source.spectrum.eigenvectors[:, selection], validate=False)


def sample_dpp(source, rng=None, algorithm="efficient", record_trace=False):
    """Exact DPP sample: Bernoulli eigenvector selection, then a projective sampler.

    ``source`` is an LEnsemble or a DualFactor; ``algorithm="dual"`` requires
    a DualFactor. The empty sample is returned when no eigenvector is kept.
    """
    if algorithm not in ALGORITHMS:
        raise ValidationError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if isinstance(source, np.ndarray):
        source = LEnsemble(source)
    if algorithm == "dual" and not isinstance(source, DualFactor):
        raise ValidationError("algorithm 'dual' requires a DualFactor (feature matrix) input")
    seed = _seed_of(rng)
    rng = _as_rng(rng)
    selection = bernoulli_phase(source.stats, rng)
    if selection.size == 0:
        return SampleDraw((), algorithm, seed, eigen_selection=())
    if algorithm == "dual":
        draw = sample_projective_dual(DualProjective.from_factor(source, selection), rng, record_trace)
    else:
        draw = _run_projective(algorithm, _selection_basis(source, selection), rng, record_trace)
    return SampleDraw(
        draw.indices,
        algorithm,
        seed,
        probability_trace=draw.probability_trace,
        step_sums=draw.step_sums,
        eigen_selection=tuple(int(i) for i in selection),
    )


def sample_dpp_many(source, n_draws, rng=None, algorithm="efficient"):
    """``n_draws`` successive ``sample_dpp`` calls on one generator."""
    rng = _as_rng(rng)
    return [sample_dpp(source, rng, algorithm) for _ in range(n_draws)]
