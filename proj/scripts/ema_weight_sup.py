"""Sup over 1 <= t <= 10^4 of sum_j w_{t,j}^2 * sqrt(t+1) / c for the moving-average
weights w_{t,0} = prod_k (1 - a_k), w_{t,j} = a_j prod_{k>j} (1 - a_k), a_k = c / sqrt(k+1).

Prints the sup with and without the snapshot weight w_{t,0}, and the argmax t.
"""
import math

for c in (0.1, 0.3, 0.5):
    best = {"all": (0.0, 0), "recursive": (0.0, 0)}
    for t in range(1, 10001):
        tail = 1.0
        sq = 0.0
        for j in range(t, 0, -1):
            a = c / math.sqrt(j + 1)
            sq += (a * tail) ** 2
            tail *= 1.0 - a
        scale = math.sqrt(t + 1) / c
        for name, val in (("all", sq + tail * tail), ("recursive", sq)):
            if val * scale > best[name][0]:
                best[name] = (val * scale, t)
    print(f"c={c}: all={best['all'][0]!r} at t={best['all'][1]}, "
          f"recursive={best['recursive'][0]!r} at t={best['recursive'][1]}")
