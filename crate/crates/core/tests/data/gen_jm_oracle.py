"""Reference JM distances for random Gaussian parameter pairs.

Evaluated at 60 significant digits with mpmath. Columns:
mean_a, var_a, mean_b, var_b, bhattacharyya, jm
"""
import random

import mpmath

mpmath.mp.dps = 60
FLOOR = mpmath.mpf("1e-12")


def reference(ma, va, mb, vb):
    va = max(mpmath.mpf(va), FLOOR)
    vb = max(mpmath.mpf(vb), FLOOR)
    ma, mb = mpmath.mpf(ma), mpmath.mpf(mb)
    b = (ma - mb) ** 2 / (8 * (va + vb)) + mpmath.log((va + vb) / (2 * mpmath.sqrt(va * vb))) / 2
    return b, 2 * (1 - mpmath.exp(-b))


def main():
    rng = random.Random(20240611)
    rows = []
    for i in range(1000):
        if i % 10 == 0:
            # near-identical distributions
            ma = rng.uniform(-3, 3)
            va = rng.uniform(0.01, 4)
            row = (ma, va, ma + rng.uniform(-1e-3, 1e-3), va * (1 + rng.uniform(-1e-3, 1e-3)))
        elif i % 10 == 1:
            # one degenerate class
            row = (rng.uniform(-3, 3), 0.0, rng.uniform(-3, 3), rng.uniform(0, 2))
        else:
            row = (
                rng.uniform(-10, 10),
                10 ** rng.uniform(-4, 2),
                rng.uniform(-10, 10),
                10 ** rng.uniform(-4, 2),
            )
        rows.append(row)
    with open("jm_oracle.csv", "w") as f:
        f.write("mean_a,var_a,mean_b,var_b,bhattacharyya,jm\n")
        for ma, va, mb, vb in rows:
            b, jm = reference(ma, va, mb, vb)
            f.write(f"{ma!r},{va!r},{mb!r},{vb!r},{mpmath.nstr(b, 20)},{mpmath.nstr(jm, 20)}\n")


if __name__ == "__main__":
    main()
