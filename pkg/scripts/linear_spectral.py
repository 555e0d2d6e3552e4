"""Spectral entropy of random linear systems against the projected exponential bound.

Usage: python scripts/linear_spectral.py [n] [seed]
"""
import sys

import numpy as np

from psentropy.bounds import (
    linear_spectral_entropy,
    projected_exponential_lower_bound,
    topological_entropy_linear,
)

if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 10
    rng = np.random.default_rng(int(sys.argv[2]) if len(sys.argv) > 2 else 0)
    print("alpha spectral projected topological")
    for _ in range(n):
        A = rng.normal(size=(3, 3))
        alpha = rng.uniform(0, 2)
        print(f"{alpha:.3f} {linear_spectral_entropy(A, alpha):.6f} "
              f"{projected_exponential_lower_bound(A, alpha):.6f} {topological_entropy_linear(A, alpha):.6f}")
