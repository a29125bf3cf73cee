import numpy as np


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    a = rng.standard_normal((n, rank))
    return a @ a.T


def binomial_band(p, trials, z=3.0):
    return z * np.sqrt(p * (1.0 - p) / trials)


START_SCALES = np.array([0.0, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0])


def sensitivity_oracle(x):
    """``max_c |x_i - c|^2 / sum_j |x_j - c|^2`` for every i by numeric optimization.

    For each point, BFGS (analytic gradient) runs from the best of a few
    starts placed on the ray from the point through the data mean, at radii
    spread over six decades of the data scale.
    """
    from scipy.optimize import minimize

    x = np.asarray(x, dtype=np.float64)
    n, dim = x.shape
    mean = x.mean(axis=0)
    sq_total = float(np.sum((x - mean) ** 2))
    radius = np.sqrt(sq_total / n)
    out = np.empty(n)
    for i in range(n):
        xi = x[i]

        def neg_scaled_ratio(c):
            diff = xi - c
            f = diff @ diff
            off = c - mean
            total = sq_total + n * (off @ off)
            grad = -n * (-2.0 * diff * total - 2.0 * n * off * f) / total**2
            return -n * f / total, grad

        d = xi - mean
        norm = np.linalg.norm(d)
        u = d / norm if norm > 0 else np.eye(dim)[0]
        starts = mean - radius * START_SCALES[:, None] * u
        best = starts[int(np.argmin([neg_scaled_ratio(s)[0] for s in starts]))]
        res = minimize(neg_scaled_ratio, best, jac=True, method="BFGS", options={"gtol": 1e-13})
        out[i] = -res.fun / n
    return out
