"""Decay of the quadratic-feedback equilibrium e(q) and of its Jacobian gap.

Prints ``q e(q) J(e(q)) + 3 lambda`` and the log-log slope for a few parameter sets.
"""
import numpy as np

from psentropy.models import QuadraticParams, cardano_equilibrium, quad_jacobian

SETS = {
    "degenerate": QuadraticParams(1.0, 0.0, 0.0, -1.0),
    "demo": QuadraticParams(0.1, 0.5, 0.5, -1.0),
    "mirrored": QuadraticParams(2.0, -0.3, 1.0, 0.5),
}

if __name__ == "__main__":
    qs = np.logspace(2, 6, 20)
    for name, p in SETS.items():
        sgn = -np.sign(p.gamma0)
        es = np.array([cardano_equilibrium(p, sgn * q) for q in qs])
        gap = np.array([quad_jacobian(p, sgn * q, e) + 3 * p.lam for q, e in zip(qs, es)])
        slope = np.polyfit(np.log(qs), np.log(np.abs(es)), 1)[0]
        print(f"# {name}: slope {slope:.4f}")
        for row in zip(sgn * qs, es, gap):
            print(" ".join(f"{v:.6e}" for v in row))
