"""Independent oracle implementations used to cross-check the package.

Everything here is deliberately written the slow, obvious way (pure-Python
loops, exact fsum reductions, numpy complex arithmetic) and must not import
the implementation modules it is checking.
"""

from __future__ import annotations

import math

import numpy as np


def naive_cosine(u, v, m):
    """Prefix cosine via explicit fsum dot products."""
    us = [float(x) for x in u[:m]]
    vs = [float(x) for x in v[:m]]
    dot = math.fsum(a * b for a, b in zip(us, vs))
    nu = math.sqrt(math.fsum(a * a for a in us))
    nv = math.sqrt(math.fsum(b * b for b in vs))
    return dot / (nu * nv)


def complex_angle_delta(u, v, m):
    """Angle difference via numpy complex multiply-by-conjugate.

    q_k = z_k * conj(w_k) / (|u_m| |v_m|); the result is the sum of the
    absolute real and imaginary parts of q.
    """
    half = m // 2
    u = np.asarray(u, dtype=np.float64)[:m]
    v = np.asarray(v, dtype=np.float64)[:m]
    z = u[:half] + 1j * u[half:]
    w = v[:half] + 1j * v[half:]
    q = z * np.conj(w) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.sum(np.abs(q.real) + np.abs(q.imag)))


def complex_angle_delta_by_division(u, v, m):
    """Same quantity via explicit complex division; needs w_k != 0."""
    half = m // 2
    u = np.asarray(u, dtype=np.float64)[:m]
    v = np.asarray(v, dtype=np.float64)[:m]
    z = u[:half] + 1j * u[half:]
    w = v[:half] + 1j * v[half:]
    if np.any(w == 0):
        raise ValueError("division oracle needs nonzero complex components")
    q = (z / w) * (np.abs(w) ** 2) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.sum(np.abs(q.real) + np.abs(q.imag)))


def ranking_loss(stats, labels, tau, sign):
    """log(1 + sum exp(sign * (stat_p - stat_q)/tau)) over label_p > label_q."""
    terms = []
    for p in range(len(stats)):
        for q in range(len(stats)):
            if labels[p] > labels[q]:
                terms.append(math.exp(sign * (stats[p] - stats[q]) / tau))
    return math.log1p(math.fsum(terms))


def contrastive_loss(cosine, positives, tau):
    """Sum over anchors of -log(positive mass / total mass); pure Python."""
    total = []
    n = len(cosine)
    for i, pos in sorted(positives.items()):
        num = math.fsum(math.exp(cosine[i][k] / tau) for k in sorted(pos))
        den = math.fsum(math.exp(cosine[i][j] / tau) for j in range(n) if j != i)
        total.append(-math.log(num / den))
    return math.fsum(total)


def brute_force_rac(points, lam):
    """Round-simulating mutual-NN agglomeration, all pure Python.

    Mirrors the published round structure: every mutual nearest-neighbor
    pair with centroid cosine strictly above lam merges (weighted-mean
    centroid, smaller id wins), rounds repeat until no pair qualifies.
    Returns the partition as a frozenset of frozensets of point indices.
    """
    clusters = [
        {"id": i, "size": 1, "members": {i}, "centroid": [float(x) for x in p]}
        for i, p in enumerate(points)
    ]

    while len(clusters) > 1:
        k = len(clusters)
        norms = [
            math.sqrt(math.fsum(a * a for a in c["centroid"])) for c in clusters
        ]
        sims = [[0.0] * k for _ in range(k)]
        for i in range(k):
            ci = clusters[i]["centroid"]
            for j in range(i + 1, k):
                dot = math.fsum(a * b for a, b in zip(ci, clusters[j]["centroid"]))
                s = dot / (norms[i] * norms[j])
                sims[i][j] = s
                sims[j][i] = s
        nn = []
        for i in range(k):
            best_j, best_s = None, -math.inf
            for j in range(k):
                if j == i:
                    continue
                better = sims[i][j] > best_s or (
                    sims[i][j] == best_s and clusters[j]["id"] < clusters[best_j]["id"]
                )
                if better:
                    best_j, best_s = j, sims[i][j]
            nn.append((best_j, best_s))
        merges = []
        for i in range(k):
            j, s = nn[i]
            if j > i and nn[j][0] == i and s > lam:
                merges.append((i, j))
        if not merges:
            break
        dead = set()
        for i, j in merges:
            a, b = clusters[i], clusters[j]
            total = a["size"] + b["size"]
            centroid = [
                (a["size"] * ca + b["size"] * cb) / total
                for ca, cb in zip(a["centroid"], b["centroid"])
            ]
            a["id"] = min(a["id"], b["id"])
            a["size"] = total
            a["members"] = a["members"] | b["members"]
            a["centroid"] = centroid
            dead.add(j)
        clusters = [c for idx, c in enumerate(clusters) if idx not in dead]
        clusters.sort(key=lambda c: c["id"])
    return frozenset(frozenset(c["members"]) for c in clusters)


def auroc_pairs(scores, labels):
    """Exhaustive positive x negative comparison with half-credit ties."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def pearson_direct(xs, ys):
    """Pearson via the direct covariance formula with exact sums."""
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    cov = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = math.fsum((x - mx) ** 2 for x in xs)
    vy = math.fsum((y - my) ** 2 for y in ys)
    return cov / math.sqrt(vx * vy)


def pairwise_prf_enumerated(predicted, gold):
    """Precision/recall/F1 by walking every unordered document pair."""
    pred_of = {doc: i for i, cluster in enumerate(predicted) for doc in cluster}
    gold_of = {doc: i for i, cluster in enumerate(gold) for doc in cluster}
    docs = sorted(pred_of)
    tp = fp = fn = 0
    for a in range(len(docs)):
        for b in range(a + 1, len(docs)):
            same_pred = pred_of[docs[a]] == pred_of[docs[b]]
            same_gold = gold_of[docs[a]] == gold_of[docs[b]]
            tp += same_pred and same_gold
            fp += same_pred and not same_gold
            fn += same_gold and not same_pred
    if tp + fp == 0:
        precision = 1.0 if tp + fn == 0 else 0.0
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 1.0 if tp + fp == 0 else 0.0
    else:
        recall = tp / (tp + fn)
    f1 = 0.0 if precision == 0.0 or recall == 0.0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def relational_similarity_loops(x, y):
    """Relational similarity via the double loop over ordered row pairs."""
    n = len(x)
    xs, ys = [], []
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            xs.append(naive_cosine(x[s], x[t], len(x[s])))
            ys.append(naive_cosine(y[s], y[t], len(y[s])))
    return pearson_direct(xs, ys)
