"""Independent reference solvers used only by the tests.

None of these call the package under test; each reaches the answer by a
different route (factorized gradient descent, cone projections, exhaustive
search, plain projected gradient).
"""

import itertools

import numpy as np
from scipy.optimize import minimize


def nuclear_prox_objective(x, a, tau):
    return tau * np.linalg.svd(x, compute_uv=False).sum() + 0.5 * np.sum((x - a) ** 2)


def l21_prox_objective(x, a, tau):
    return tau * np.linalg.norm(x, axis=0).sum() + 0.5 * np.sum((x - a) ** 2)


def nuclear_prox_oracle(a, tau, seed=0):
    """Minimize tau/2 (|U|^2 + |V|^2) + 1/2 |U V^T - a|^2 with L-BFGS.

    The factorized form has the nuclear-norm prox as its global minimum
    when U and V have full width; no SVD is involved.
    """
    m, n = a.shape
    k = min(m, n)
    rng = np.random.default_rng(seed)

    def f(vec):
        u = vec[: m * k].reshape(m, k)
        v = vec[m * k:].reshape(n, k)
        r = u @ v.T - a
        val = 0.5 * tau * (np.sum(u**2) + np.sum(v**2)) + 0.5 * np.sum(r**2)
        gu = tau * u + r @ v
        gv = tau * v + r.T @ u
        return val, np.concatenate([gu.ravel(), gv.ravel()])

    best = None
    for _ in range(3):
        x0 = rng.standard_normal(k * (m + n)) * 0.5
        res = minimize(f, x0, jac=True, method="L-BFGS-B",
                       options={"gtol": 1e-12, "ftol": 1e-16, "maxiter": 20000, "maxcor": 30})
        u = res.x[: m * k].reshape(m, k)
        v = res.x[m * k:].reshape(n, k)
        x = u @ v.T
        if best is None or nuclear_prox_objective(x, a, tau) < nuclear_prox_objective(best, a, tau):
            best = x
    return best


def _soc_project(x, t):
    """Project each (column x_j, scalar t_j) onto the cone |x_j| <= t_j."""
    nx = np.linalg.norm(x, axis=0)
    xo, to = x.copy(), t.copy()
    for j in range(x.shape[1]):
        if nx[j] <= t[j]:
            continue
        if nx[j] <= -t[j]:
            xo[:, j] = 0.0
            to[j] = 0.0
            continue
        c = 0.5 * (nx[j] + t[j])
        xo[:, j] = c * x[:, j] / nx[j]
        to[j] = c
    return xo, to


def l21_prox_oracle(a, tau, tol=1e-8, max_iters=100000):
    """Projected gradient on the epigraph form min tau*sum(t) + 1/2|X - a|^2, |x_j| <= t_j."""
    x = a.copy()
    t = np.linalg.norm(a, axis=0)
    step = 0.5
    for _ in range(max_iters):
        xn, tn = _soc_project(x - step * (x - a), t - step * tau)
        delta = max(np.max(np.abs(xn - x)), np.max(np.abs(tn - t)))
        x, t = xn, tn
        if delta <= tol * 1e-2:
            break
    return x


def nn_lasso_objective(w, x, d, alpha):
    return float(np.sum((x - d @ w) ** 2) + alpha * np.sum(np.abs(w)))


def nn_lasso_pg(x, d, alpha, iters=200000, tol=1e-14):
    """Accelerated projected gradient for the non-negative lasso.

    On w >= 0 the l1 term is linear, so the objective is smooth and the
    feasible set is the orthant: plain projected gradient applies.
    """
    lip = 2.0 * np.linalg.norm(d, 2) ** 2
    w = np.zeros(d.shape[1])
    y = w.copy()
    tk = 1.0
    prev = np.inf
    for _ in range(iters):
        g = 2.0 * d.T @ (d @ y - x) + alpha
        wn = np.maximum(y - g / lip, 0.0)
        tn = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        y = wn + (tk - 1) / tn * (wn - w)
        w, tk = wn, tn
        obj = nn_lasso_objective(w, x, d, alpha)
        if abs(prev - obj) <= tol:
            break
        prev = obj
    return w


def brute_force_majority(pred, truth):
    """Search every cluster->class map; return the first (lexicographic)
    maximizer of correctly labelled points and its overall accuracy."""
    p = np.asarray(pred, dtype=int)
    t = np.asarray(truth, dtype=int)
    clusters = np.unique(p)
    classes = np.unique(t)
    best, best_map = -1, None
    for combo in itertools.product(classes.tolist(), repeat=len(clusters)):
        mapping = dict(zip(clusters.tolist(), combo))
        score = sum(int(np.sum(t[p == c] == mapping[c])) for c in mapping)
        if score > best:
            best, best_map = score, mapping
    return best_map, best / p.size


def knn_brute_force(points, k):
    """Edge set of the symmetrized kNN graph by sorting all pairwise distances."""
    n = len(points)
    edges = set()
    for i in range(n):
        dists = sorted(
            (float(np.linalg.norm(points[i] - points[j])), j) for j in range(n) if j != i
        )
        for _, j in dists[:k]:
            edges.add((min(i, j), max(i, j)))
    return edges
