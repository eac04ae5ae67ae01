"""Independent reference implementations used to check the library.

Nothing here calls into dynakey; each oracle is the slow, obvious version.
"""

import math

import numpy as np


def brute_signed_distance(bits):
    """Signed distance to the nearest edge pixel by scanning every edge pixel."""
    bits = np.asarray(bits, dtype=bool)
    h, w = bits.shape
    edges = []
    for r in range(h):
        for c in range(w):
            if not bits[r, c]:
                continue
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and not bits[rr, cc]:
                    edges.append((r, c))
                    break
    out = np.empty((h, w))
    if not bits.any():
        out.fill(-math.inf)
        return out
    if not edges:
        out.fill(math.inf)
        return out
    er = np.array([e[0] for e in edges])
    ec = np.array([e[1] for e in edges])
    for r in range(h):
        for c in range(w):
            d2 = int(((er - r) ** 2 + (ec - c) ** 2).min())
            d = math.sqrt(d2)
            out[r, c] = d if bits[r, c] else -d
    return out


def brute_neighbors(p, z, dynamics, delta, rho):
    """Indices of dynamics strictly within ``delta`` px and ``rho`` m of (p, z)."""
    keep = []
    for k, (pd, zd) in enumerate(dynamics):
        if zd is None or not math.isfinite(zd):
            continue
        dist = math.sqrt((pd[0] - p[0]) ** 2 + (pd[1] - p[1]) ** 2)
        if dist < delta and abs(z - zd) < rho:
            keep.append((dist, k))
    keep.sort()
    return [k for _, k in keep]


def bayes_iterate(bel, p, eps, steps):
    """Belief trajectory of the two-state filter written out term by term."""
    out = []
    for _ in range(steps):
        stay_dyn = bel * (1 - eps)
        become_dyn = (1 - bel) * eps
        pred = stay_dyn + become_dyn
        dyn = p * pred
        sta = (1 - p) * (1 - pred)
        bel = dyn / (dyn + sta)
        out.append(bel)
    return out


def quat_to_matrix(q):
    """Rotation matrix of a unit quaternion (x, y, z, w)."""
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation(rng):
    q = rng.normal(size=4)
    return quat_to_matrix(q / np.linalg.norm(q))


def pinhole(K, R_wc, t_wc, X):
    """Project world points with a camera-to-world pose; returns (uv, depth)."""
    Xc = (np.atleast_2d(X) - t_wc) @ R_wc
    uv = Xc[:, :2] / Xc[:, 2:3]
    uv = uv * [K[0, 0], K[1, 1]] + [K[0, 2], K[1, 2]]
    return uv, Xc[:, 2]
