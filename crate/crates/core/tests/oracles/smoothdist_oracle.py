"""Arbitrary-precision reference values for the smoothed point-to-cloud metric.

Evaluates the weight, centroid, volume, distance and projection formulas
directly (no log-domain tricks) at 50 significant digits. The printed values
are frozen into crates/core/src/smoothdist.rs and barrier.rs tests.
"""
from mpmath import mp, mpf, exp, log

mp.dps = 50


def radical_inverse(i, b):
    v, f = mpf(0), mpf(1) / b
    while i > 0:
        v += f * (i % b)
        i //= b
        f /= b
    return v


def weighted(points, sigma):
    m = len(points)
    cen = [sum(p[d] for p in points) / m for d in range(len(points[0]))]
    w = [exp(-sum((p[d] - cen[d]) ** 2 for d in range(len(p))) / (2 * sigma**2)) for p in points]
    return cen, w, sum(w)


def dist_proj(points, y, eta, sigma):
    cen, w, vol = weighted(points, sigma)
    terms = [w[j] * exp(-sum((y[d] - p[d]) ** 2 for d in range(len(y))) / (2 * eta**2)) for j, p in enumerate(points)]
    s = sum(terms)
    D = -eta**2 * log(s / vol)
    proj = [sum(t * p[d] for t, p in zip(terms, points)) / s for d in range(len(y))]
    return D, proj


three = [[mpf("0.3"), mpf("-1.2"), mpf("0.7")], [mpf("1.5"), mpf("0.4"), mpf("-0.2")], [mpf("-0.6"), mpf("0.9"), mpf("1.1")]]
cen, w, vol = weighted(three, mpf("0.8"))
print("three centroid", [mp.nstr(c, 20) for c in cen])
print("three log_weights", [mp.nstr(log(x), 20) for x in w])
print("three log_volume", mp.nstr(log(vol), 20))

halton5 = [[radical_inverse(k, b) for b in (2, 3, 5)] for k in range(1, 6)]
y = [mpf(2)] * 3
D, proj = dist_proj(halton5, y, mpf("0.3"), mpf("0.8"))
print("halton5 D", mp.nstr(D, 20))
print("halton5 proj", [mp.nstr(c, 20) for c in proj])
print("halton5 beta(d_min=0.5)", mp.nstr(D - mpf("0.5"), 20))
