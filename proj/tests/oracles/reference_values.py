"""Independent reference computations for values frozen in the C++ tests.

Run with: python3 tests/oracles/reference_values.py
Uses numpy only; shares no code with the library.
"""
import itertools
import math

import numpy as np


def bottleneck_forward():
    # d=3, h=2, groups [2, 1], m=2
    e = np.array([0.5, -1.0, 2.0])
    w1 = np.array([[0.2, -0.4], [0.1, 0.3], [-0.5, 0.6]])
    b1 = np.array([0.05, -0.1])
    w2 = np.array([[0.3, -0.2, 0.1], [0.4, 0.5, -0.6]])
    b2 = np.array([0.01, 0.02, -0.03])
    alpha = 0.7
    t = np.array([[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.5, 0.5, 0.5]])
    t = t / np.linalg.norm(t, axis=1, keepdims=True)
    tau = 2.0
    w_agg = np.array([[1.0, -0.5], [0.25, 0.75], [-1.0, 2.0]])
    hidden = np.maximum(w1.T @ e + b1, 0.0)
    f = w2.T @ hidden + b2
    image = alpha * e + (1 - alpha) * f
    s = t @ image / np.linalg.norm(image)
    sm = np.empty(3)
    g = np.exp(tau * s[:2])
    sm[:2] = g / g.sum()
    sm[2] = 1.0
    x = w_agg.T @ sm
    print("forward image", repr(image.tolist()))
    print("forward raw", repr(s.tolist()))
    print("forward softmaxed", repr(sm.tolist()))
    print("forward x_emb", repr(x.tolist()))


def margins():
    x = np.array([0.3, -0.2, 0.9])
    w = np.array([[1.0, 0.5, 0.2], [-0.3, 0.8, 0.1]])
    xh = x / np.linalg.norm(x)
    wh = w / np.linalg.norm(w, axis=1, keepdims=True)
    c = wh @ xh
    s, m = 64.0, 0.5
    theta = math.acos(c[0])
    plain = s * c
    cos = plain.copy(); cos[0] = s * (c[0] - m)
    arc = plain.copy(); arc[0] = s * math.cos(theta + m)
    q = 0.4
    ada = plain.copy(); ada[0] = s * (math.cos(theta - m * q) - (m * q + m))
    for name, v in [("plain", plain), ("cosface", cos), ("arcface", arc), ("adaface q=0.4", ada)]:
        print("margin", name, repr(v.tolist()))
    for name, v in [("plain", plain), ("arcface", arc), ("adaface q=0.4", ada)]:
        z = v - v.max()
        print("ce", name, repr(float(-(z[0] - math.log(np.exp(z).sum())))))


def lcs(a, b):
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a)):
        for j in range(len(b)):
            t[i + 1][j + 1] = t[i][j] + 1 if a[i] == b[j] else max(t[i][j + 1], t[i + 1][j])
    return t[-1][-1]


def tokens(s):
    out, cur = [], ""
    for ch in s.lower():
        if ch.isalnum():
            cur += ch
        elif cur:
            out.append(cur); cur = ""
    if cur:
        out.append(cur)
    return out


def rouge(c, r):
    c, r = tokens(c), tokens(r)
    l = lcs(c, r)
    if l == 0:
        return 0.0
    p, rec = l / len(c), l / len(r)
    return 2 * p * rec / (p + rec)


def meteor(c, r):
    c, r = tokens(c), tokens(r)
    # brute force: every maximal one-to-one exact alignment
    best = None
    pairs = [(i, j) for i in range(len(c)) for j in range(len(r)) if c[i] == r[j]]
    for k in range(len(pairs), 0, -1):
        for combo in itertools.combinations(pairs, k):
            if len({i for i, _ in combo}) < k or len({j for _, j in combo}) < k:
                continue
            s = sorted(combo)
            chunks = 1 + sum(1 for a, b in zip(s, s[1:]) if not (b[0] == a[0] + 1 and b[1] == a[1] + 1))
            if best is None or chunks < best[1]:
                best = (k, chunks)
        if best is not None:
            break
    if best is None:
        return 0.0
    m, ch = best
    p, rec = m / len(c), m / len(r)
    f = 10 * p * rec / (rec + 9 * p)
    return f * (1 - 0.5 * (ch / m) ** 3)


def text_metrics():
    cases = [
        ("lungs are clear", "the lungs are clear"),
        ("pleural effusion present", "pleural effusion present"),
        ("a b", "b a"),
        ("the cat sat on the mat", "on the mat the cat sat"),
        ("small left pleural effusion; cardiomegaly", "cardiomegaly with small left pleural effusion"),
        ("a a b", "b a a a"),
    ]
    for c, r in cases:
        print("text", repr(c), repr(r), "rouge", repr(rouge(c, r)), "meteor", repr(meteor(c, r)))


def sweep(sims, same):
    u = sorted(set(sims))
    cands = [u[0] - 1] + [(a + b) / 2 for a, b in zip(u, u[1:])] + [u[-1] + 1]
    best = (-1, None)
    for t in cands:
        acc = sum((s >= t) == y for s, y in zip(sims, same)) / len(sims)
        if acc > best[0]:
            best = (acc, t)
    return best


def verification():
    print("verify", sweep([0.9, 0.8, 0.4, 0.2], [1, 1, 0, 0]))
    print("verify", sweep([0.9, 0.3, 0.5, 0.1], [1, 1, 0, 0]))
    print("verify", sweep([0.7, 0.7, 0.2, 0.6, 0.6, 0.1], [1, 0, 0, 1, 1, 0]))


def adam():
    g, lr, b1, b2, eps = 0.5, 0.1, 0.9, 0.999, 1e-8
    theta = 0.0
    m = v = 0.0
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        print("adam step", t, repr(theta))
    theta, m, v = 1.0, 0.0, 0.0
    wd = 0.01
    for t in (1, 2):
        theta -= lr * wd * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        print("adamw step", t, repr(theta))


def ema():
    norms = [1.0, 2.0, 4.0]
    mu, sd, beta = 0.0, 1.0, 0.01
    mean = sum(norms) / 3
    std = math.sqrt(sum((x - mean) ** 2 for x in norms) / 2)
    print("ema", repr((1 - beta) * mu + beta * mean), repr(max(1e-3, (1 - beta) * sd + beta * std)))


if __name__ == "__main__":
    bottleneck_forward()
    margins()
    text_metrics()
    verification()
    adam()
    ema()
