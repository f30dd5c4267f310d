"""Independent reference implementations used to cross-check the package.

Everything here is written from the defining formulas with plain loops and no
imports from the package internals beyond data containers, so a bug in the
library cannot silently agree with its own test.
"""

from __future__ import annotations

import math

import numpy as np


def central_difference_grad(f, y: np.ndarray, h: float = 1e-6) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for j in range(y.size):
        step = np.zeros_like(y)
        step[j] = h
        out[j] = (f(y + step) - f(y - step)) / (2.0 * h)
    return out


def geometric_edges_brute(positions: np.ndarray, radius: float) -> set:
    """All unordered pairs within the radius, by exhaustive pairwise check."""
    n = len(positions)
    pairs = set()
    for i in range(n):
        for j in range(i + 1, n):
            dist = math.dist(positions[i], positions[j])
            if dist <= radius:
                pairs.add((i, j))
    return pairs


def metropolis_entries_brute(n: int, undirected_pairs: set) -> np.ndarray:
    """Metropolis weights from adjacency lists with explicit loops."""
    neighbors = {i: set() for i in range(n)}
    for i, j in undirected_pairs:
        neighbors[i].add(j)
        neighbors[j].add(i)
    w = np.zeros((n, n))
    for i in range(n):
        for j in neighbors[i]:
            w[i, j] = 1.0 / (1.0 + max(len(neighbors[i]), len(neighbors[j])))
        w[i, i] = 1.0 - sum(w[i, j] for j in neighbors[i])
    return w


def window_product_naive(matrices: list, k: int, m: int) -> np.ndarray:
    """Product of snapshots k, k-1, ..., k-m+1 applied oldest first."""
    n = matrices[0].shape[0]
    out = np.eye(n)
    for t in range(k - m + 1, k + 1):
        out = matrices[t] @ out
    return out


def diging_trajectory(model, mixings: list, alpha: float, x0: np.ndarray, iters: int):
    """Classic two-variable gradient-tracking recursion, tracker seeded at g(x0).

    x+ = W x - alpha s,  s+ = W s + g(x+) - g(x).  Equivalent to the engine's
    zero tracking term with uniform constant steps under s = u + g(x).
    """
    x = np.asarray(x0, dtype=float).copy()
    g = model.local_grads(x)
    s = g.copy()
    out = [x.copy()]
    for k in range(iters):
        w = mixings[k]
        x_new = w @ x - alpha * s
        g_new = model.local_grads(x_new)
        s = w @ s + g_new - g
        x, g = x_new, g_new
        out.append(x.copy())
    return np.asarray(out)


def sigma_hat_literal(thetas, sigma0: float) -> float:
    """Unsaturated spectral estimate as the literal nested sum.

    hat sigma after consuming thetas t_0..t_{K-1} equals
    1 + t_{K-1} + t_{K-1} t_{K-2} + ... + t_{K-1}...t_0 * sigma0.
    """
    total = 1.0
    prod = 1.0
    for th in reversed(list(thetas)):
        prod *= th
        total += prod
    # the innermost term carries sigma0 instead of 1
    return total - prod + prod * sigma0


def sigma_sequence_literal(thetas, sigma0: float, sigma_max: float) -> list:
    """Safeguarded spectral sequence via the literal sum at every prefix."""
    values = [sigma0]
    saturated = sigma0 == sigma_max
    for k, th in enumerate(thetas):
        if saturated:
            nxt = min(sigma_max, 1.0 + sigma_max * th)
        else:
            nxt = min(sigma_max, sigma_hat_literal(thetas[: k + 1], sigma0))
        values.append(nxt)
        saturated = nxt == sigma_max
    return values


def smallgain_constants_dual(b, mu, L, nu, n, m, lam, d_min, d_max) -> dict:
    """Second, independently arranged evaluation of the gain constants."""
    delta = d_max - d_min
    # geometric sum written as an explicit loop rather than the closed form
    c_sum = 0.0
    for t in range(1, m + 1):
        c_sum += lam**t
    lam_m = lam**m
    tau = max(abs(1.0 - d_min * mu), abs(1.0 - d_min * L))
    gamma = (b + L) * c_sum / (lam_m - nu)
    denom = mu * d_min - delta * L - (1.0 - lam)
    beta1 = (L * d_max / denom) if denom != 0.0 else math.inf
    beta2 = (delta / denom) if (delta > 0.0 and denom != 0.0) else 0.0
    beta5 = c_sum * d_max / lam_m
    beta4 = beta5 * L
    beta3 = nu / lam_m + beta4
    den2 = 1.0 - gamma * beta2
    gamma2 = (beta1 + gamma * beta2) / den2 if den2 > 0.0 else math.inf
    den3 = 1.0 - beta3 - gamma * beta5
    gamma3 = (beta4 + beta5 * gamma) / den3 if den3 > 0.0 else math.inf
    return {
        "delta": delta,
        "c_sum": c_sum,
        "tau": tau,
        "gamma": gamma,
        "gamma1": gamma,
        "beta1": beta1,
        "beta2": beta2,
        "beta3": beta3,
        "beta4": beta4,
        "beta5": beta5,
        "gamma2": gamma2,
        "gamma3": gamma3,
    }


def condition_margins_dual(vals: dict, mu, L, nu, n, m, lam, d_min) -> tuple:
    """Margins of the seven feasibility conditions from the dual constants."""
    lam_m = lam**m
    m1 = lam_m - nu
    m2 = 2.0 / L - d_min / n
    m3 = lam - (1.0 - mu * d_min + vals["delta"] * L)
    m4 = 1.0 - vals["gamma"] * vals["beta2"] if m1 > 0 and m3 > 0 else -math.inf
    m5 = 1.0 - vals["beta3"]
    m6 = (
        1.0 - vals["beta5"] * vals["gamma"] / (1.0 - vals["beta3"])
        if m1 > 0 and m5 > 0
        else -math.inf
    )
    m7 = (
        1.0 - vals["gamma2"] * vals["gamma3"]
        if m4 > 0 and m6 > 0 and math.isfinite(vals["gamma2"]) and math.isfinite(vals["gamma3"])
        else -math.inf
    )
    return (m1, m2, m3, m4, m5, m6, m7)


def logistic_value_naive(a_i: np.ndarray, b_i: float, reg: float, y: np.ndarray) -> float:
    t = float(b_i * np.dot(a_i, y))
    # naive form; fine for the moderate exponents used in tests
    return math.log(1.0 + math.exp(-t)) + 0.5 * reg * float(np.dot(y, y))


def averaging_mix_entries(n: int, theta: float) -> np.ndarray:
    w = np.full((n, n), theta / n)
    for i in range(n):
        w[i, i] += 1.0 - theta
    return w


def benchmark_matrix_blocks(n: int, theta: float, alpha: float) -> np.ndarray:
    """Stacked error-pair iteration matrix assembled entry by entry."""
    w = averaging_mix_entries(n, theta)
    j = np.full((n, n), 1.0 / n)
    eye = np.eye(n)
    a = np.zeros((2 * n, 2 * n))
    a[:n, :n] = w - j
    a[:n, n:] = -alpha * eye
    a[n:, :n] = w - eye
    a[n:, n:] = w - alpha * eye
    return a
