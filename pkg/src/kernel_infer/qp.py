"""Dense primal-dual interior-point method for convex inequality-constrained QPs

    minimize   1/2 x'Px + q'x
    subject to G x <= h

Mehrotra predictor-corrector on the slack form G x + s = h, s >= 0, with
duals z >= 0. Converged means every KKT residual is below ``tol`` in
absolute terms:

    |P x + q + G'z|_inf,  |G x + s - h|_inf,  s'z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


@dataclass
class QPResult:
    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    iterations: int
    converged: bool
    dual_residual: float
    primal_residual: float
    gap: float

    @property
    def kkt_residual(self) -> float:
        return max(self.dual_residual, self.primal_residual, self.gap)


def _residuals(P, q, G, h, x, s, z):
    rd = P @ x + q + G.T @ z
    rp = G @ x + s - h
    return rd, rp


def _max_step(v, dv):
    neg = dv < 0
    if not neg.any():
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def _factor(K):
    try:
        return linalg.cho_factor(K, lower=True, check_finite=False)
    except linalg.LinAlgError:
        shift = 1e-14 * max(1.0, float(np.max(np.abs(np.diag(K)))))
        return linalg.cho_factor(K + shift * np.eye(len(K)), lower=True,
                                 check_finite=False)


def solve_qp(P, q, G, h, x0=None, tol: float = 1e-9, max_iter: int = 20_000) -> QPResult:
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    n_ineq = len(h)

    x = np.zeros(len(q)) if x0 is None else np.array(x0, dtype=float)
    s = h - G @ x
    s = np.maximum(s, 1.0) if np.any(s <= 0) else np.maximum(s, 1e-2)
    z = np.ones(n_ineq)

    best = None
    for it in range(1, max_iter + 1):
        rd, rp = _residuals(P, q, G, h, x, s, z)
        gap = float(s @ z)
        res = (float(np.max(np.abs(rd))), float(np.max(np.abs(rp))), gap)
        if best is None or max(res) < max(best[3:]):
            best = (x.copy(), s.copy(), z.copy()) + res
        if max(res) <= tol:
            return QPResult(x, z, s, it - 1, True, *res)

        mu = gap / n_ineq
        w = z / s
        K = P + G.T @ (w[:, None] * G)
        fac = _factor(K)

        def direction(rc):
            rhs = -rd - G.T @ (w * rp + rc / s)
            dx = linalg.cho_solve(fac, rhs, check_finite=False)
            dz = w * (G @ dx + rp) + rc / s
            ds = (rc - s * dz) / z
            return dx, ds, dz

        # predictor (affine scaling)
        dx, ds, dz = direction(-s * z)
        alpha = min(_max_step(s, ds), _max_step(z, dz))
        mu_aff = float((s + alpha * ds) @ (z + alpha * dz)) / n_ineq
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector
        dx, ds, dz = direction(-s * z - ds * dz + sigma * mu)
        alpha = min(_max_step(s, ds), _max_step(z, dz))
        alpha = min(1.0, 0.99 * alpha)
        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz
        # keep strictly interior despite roundoff
        floor = 1e-300
        s = np.maximum(s, floor)
        z = np.maximum(z, floor)

    x, s, z = best[:3]
    return QPResult(x, z, s, max_iter, False, *best[3:])
