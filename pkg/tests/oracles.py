"""Independent brute-force reference implementations used by the tests.

Everything here deliberately avoids the library's vectorized code paths:
filters are evaluated per pixel with explicit 2x2 matrix products, circular
convolution is the O(n^4) double sum, subsampling is plain spatial
decimation, and bipartite matching is exhaustive permutation search.
"""

import itertools

import numpy as np


def wrap_coords(n):
    u = np.arange(n, dtype=float)
    u[u >= n / 2] -= n
    return u


def gabor_direct(n, sigma, theta, xi, gamma):
    """Per-pixel Gabor evaluation via explicit 2x2 matrix products."""
    u = wrap_coords(n)
    R = np.array([[np.cos(theta), np.sin(theta)],
                  [-np.sin(theta), np.cos(theta)]])
    D = np.array([[1.0, 0.0], [0.0, gamma]])
    out = np.empty((n, n), complex)
    for a in range(n):
        for b in range(n):
            rot = R @ np.array([u[a], u[b]])
            w = D @ rot
            out[a, b] = np.exp(-(w @ w) / (2.0 * sigma ** 2) + 1j * xi * rot[0])
    return out


def morlet_direct(n, sigma, theta, xi, gamma):
    """Per-pixel Morlet evaluation; returns (psi, beta)."""
    gab = gabor_direct(n, sigma, theta, xi, gamma)
    env = np.abs(gab)  # carrier has unit modulus, so |gabor| is the envelope
    beta = gab.sum() / env.sum()
    return gab - beta * env, beta


def conv_circular_direct(x, h):
    """O(n^4) circular convolution y[a] = sum_b x[b] h[(a - b) mod n]."""
    n = x.shape[0]
    y = np.zeros((n, n), complex)
    for a1 in range(n):
        for a2 in range(n):
            acc = 0.0 + 0.0j
            for b1 in range(n):
                for b2 in range(n):
                    acc += x[b1, b2] * h[(a1 - b1) % n, (a2 - b2) % n]
            y[a1, a2] = acc
    return y


def decimate(x, r):
    k = 2 ** r
    return x[..., ::k, ::k]


def scattering_direct(x, psis, scales, phi, J, L):
    """Direct spatial-domain scattering (orders 0..2) for one image.

    The filter applied at a reduced resolution is the plainly decimated
    spatial filter (which is what frequency periodization realizes).
    Channel order matches the library: order 1 follows filter order; order 2
    is lexicographic in (j1, l1, j2, l2) with j1 < j2.
    """
    s0 = decimate(conv_circular_direct(x, phi), J).real
    u1, order1 = [], []
    for psi, j1 in zip(psis, scales):
        y1 = np.abs(decimate(conv_circular_direct(x, psi), j1))
        u1.append(y1)
        s1 = decimate(conv_circular_direct(y1, decimate(phi, j1)), J - j1).real
        order1.append(s1)
    order2 = []
    for i1, j1 in enumerate(scales):
        for i2, j2 in enumerate(scales):
            if j2 <= j1:
                continue
            y2 = np.abs(decimate(
                conv_circular_direct(u1[i1], decimate(psis[i2], j1)), j2 - j1))
            s2 = decimate(conv_circular_direct(y2, decimate(phi, j2)), J - j2).real
            order2.append(((j1, i1 % L, j2, i2 % L), s2))
    order2.sort(key=lambda kv: kv[0])
    return s0, order1, [s for _, s in order2]


def min_cost_matching_bruteforce(cost):
    """Exhaustive minimum over all permutations of the square cost matrix."""
    k = cost.shape[0]
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(k)):
        total = sum(cost[i, perm[i]] for i in range(k))
        if total < best:
            best, best_perm = total, perm
    return best, best_perm


def fd_grad(f, x0, h):
    """Central finite difference of a scalar function at x0 (1-D array)."""
    g = np.zeros_like(x0, dtype=float)
    for i in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        g[i] = (f(xp) - f(xm)) / (2 * h[i])
    return g
