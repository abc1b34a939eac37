"""Independent reference computations shared by the test modules."""

import numpy as np
from scipy.special import ndtr, ndtri


def conditioned_class_frequencies(mu, sigma, eps, n_accept, rng, chunk=200_000):
    """Sample class = argmin |f_l| for f_l ~ N(mu_l, sigma_l^2) conditioned on min |f_l| <= eps.

    Uses exact conditional sampling on the union of events {|f_l| <= eps}
    (Karp-Luby): draw the event index with probability proportional to its
    mass, sample that coordinate from its truncated law and the others freely,
    then keep the draw with probability 1 / (number of events it satisfies).
    """
    mu = np.asarray(mu, float)
    sigma = np.asarray(sigma, float)
    L = len(mu)
    lo = ndtr((-eps - mu) / sigma)
    hi = ndtr((eps - mu) / sigma)
    w = hi - lo
    w = w / w.sum()
    counts = np.zeros(L, dtype=np.int64)
    total = 0
    while total < n_accept:
        n = chunk
        pick = rng.choice(L, size=n, p=w)
        f = mu + sigma * rng.standard_normal((n, L))
        u = lo[pick] + (hi[pick] - lo[pick]) * rng.random(n)
        f[np.arange(n), pick] = mu[pick] + sigma[pick] * ndtri(u)
        hits = (np.abs(f) <= eps).sum(axis=1)
        keep = rng.random(n) < 1.0 / hits
        cls = np.argmin(np.abs(f[keep]), axis=1)
        take = min(len(cls), n_accept - total)
        counts += np.bincount(cls[:take], minlength=L)
        total += take
    return counts / total, total


def rejection_class_frequencies(mu, sigma, eps, n_accept, rng, chunk=1_000_000):
    """Plain rejection sampling of the same conditional law (slow, small eps only)."""
    mu = np.asarray(mu, float)
    sigma = np.asarray(sigma, float)
    counts = np.zeros(len(mu), dtype=np.int64)
    total = 0
    while total < n_accept:
        f = mu + sigma * rng.standard_normal((chunk, len(mu)))
        a = np.abs(f)
        ok = a.min(axis=1) <= eps
        cls = np.argmin(a[ok], axis=1)[: n_accept - total]
        counts += np.bincount(cls, minlength=len(mu))
        total += len(cls)
    return counts / total, total


def matrix_power_counts(W, new_counts):
    """Echo-protocol counts from the expansion m_t = sum_tau W^(t - tau) m_tau.

    ``new_counts[t]`` is the (n, K) matrix of fresh counts injected at round t.
    Returns the list of (n, K) count matrices after each round.
    """
    W = np.asarray(W, float)
    out = []
    for t in range(len(new_counts)):
        acc = np.zeros_like(new_counts[0], dtype=float)
        for tau in range(t + 1):
            acc += np.linalg.matrix_power(W, t - tau) @ new_counts[tau]
        out.append(acc)
    return out


def full_gp_blocked(kernel, prior_mean, X, y, sigma2, queries, block=1000):
    """Dense GP posterior mean and variance for large raw data sets.

    The Gram matrix is filled in row blocks and factorized in place so the
    peak memory stays close to one n x n array.
    """
    from scipy import linalg

    from semtsdf.kernel import gram

    X = np.asarray(X, float)
    n = len(X)
    K = np.empty((n, n))
    for s in range(0, n, block):
        K[s:s + block] = gram(kernel, X[s:s + block], X)
    K.flat[:: n + 1] += sigma2
    c = linalg.cho_factor(K, lower=True, overwrite_a=True, check_finite=False)
    Kq = gram(kernel, queries, X)
    alpha = linalg.cho_solve(c, np.asarray(y, float) - prior_mean, check_finite=False)
    V = linalg.solve_triangular(c[0], Kq.T, lower=True, check_finite=False)
    return prior_mean + Kq @ alpha, kernel.signal_variance - np.sum(V * V, axis=0)
