"""Slow, obviously-correct reference computations used by the tests.

None of these share code with the package: they loop over raw Python values.
"""

import math


def brute_interactions(cx, protein_elements, ligand_elements, cutoff, inclusive=True):
    counts = [0] * (len(protein_elements) * len(ligand_elements))
    for a in cx.atoms:
        if a.role != "protein" or a.element not in protein_elements:
            continue
        j = protein_elements.index(a.element)
        for b in cx.atoms:
            if b.role != "ligand" or b.element not in ligand_elements:
                continue
            i = ligand_elements.index(b.element)
            dx, dy, dz = a.x - b.x, a.y - b.y, a.z - b.z
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            if (d <= cutoff) if inclusive else (d < cutoff):
                counts[j * len(ligand_elements) + i] += 1
    return counts


def loop_sum(vectors):
    acc = [0.0] * len(vectors[0])
    for v in vectors:
        for k, x in enumerate(v):
            acc[k] += x
    return acc


def two_pass_std(vectors):
    n = len(vectors)
    mean = [s / n for s in loop_sum(vectors)]
    out = []
    for k in range(len(mean)):
        ss = 0.0
        for v in vectors:
            ss += (v[k] - mean[k]) ** 2
        out.append(math.sqrt(ss / n))
    return out


def exhaustive_stump(X, g, lam, min_child):
    """Best single split over every feature and every distinct-value boundary.

    Returns None when no split has positive gain (a gain under 1e-11 of the
    child terms is rounding noise and counts as zero), else a dict with the
    feature, the bracketing values (lo, hi) such that rows with x <= lo go
    left, both leaf values and the gain. Ties keep the lowest feature, then
    the lowest boundary.
    """
    n = len(g)
    g_parent = 0.0
    for v in g:
        g_parent += v
    best = None
    best_gain = 0.0
    for f in range(len(X[0])):
        values = sorted({row[f] for row in X})
        for lo, hi in zip(values, values[1:]):
            gl = gr = 0.0
            nl = nr = 0
            for row, v in zip(X, g):
                if row[f] <= lo:
                    gl += v
                    nl += 1
                else:
                    gr += v
                    nr += 1
            if nl < min_child or nr < min_child:
                continue
            children = gl * gl / (nl + lam) + gr * gr / (nr + lam)
            gain = children - g_parent * g_parent / (n + lam)
            if gain > best_gain and gain > 1e-11 * children:
                best_gain = gain
                best = {
                    "feature": f,
                    "lo": lo,
                    "hi": hi,
                    "left_value": gl / (nl + lam),
                    "right_value": gr / (nr + lam),
                    "gain": gain,
                }
    return best


def central_difference(fn, x, h=1e-6):
    grad = []
    for i in range(len(x)):
        up = list(x)
        dn = list(x)
        up[i] += h
        dn[i] -= h
        grad.append((fn(up) - fn(dn)) / (2 * h))
    return grad
