"""Reference computations that share no code with the package."""

import cmath
import math


def direct_dft(x, n=None):
    """O(N^2) DFT by explicit summation, zero-padded to ``n``."""
    n = len(x) if n is None else n
    x = list(x) + [0.0] * (n - len(x))
    return [sum(x[i] * cmath.exp(-2j * math.pi * i * j / n) for i in range(n)) for j in range(n)]


def one_sided_amplitudes(X, data_length, correction=1.0):
    n = len(X)
    out = []
    for j in range(n // 2 + 1):
        edge = j == 0 or (n % 2 == 0 and j == n // 2)
        out.append(correction * (1.0 if edge else 2.0) / data_length * abs(X[j]))
    return out
