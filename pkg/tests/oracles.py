"""Independent reference implementations used by several test modules."""

import math


def brute_force_span(p_begin, p_end, start, end, max_len, sentinel=None):
    """Enumerate every valid (b, e) with plain loops; first strict maximum wins."""
    best = (-math.inf, None, None)
    last = end if sentinel is None else sentinel - 1
    for b in range(start, last + 1):
        for e in range(b, min(last, b + max_len - 1) + 1):
            s = math.log(max(float(p_begin[b]), 1e-300)) + math.log(max(float(p_end[e]), 1e-300))
            if s > best[0]:
                best = (s, b, e)
    if sentinel is not None:
        s = math.log(max(float(p_begin[sentinel]), 1e-300)) + math.log(max(float(p_end[sentinel]), 1e-300))
        if s > best[0]:
            best = (s, sentinel, sentinel)
    return best


def bag_f1(prediction_tokens, reference_tokens):
    common = 0
    remaining = list(reference_tokens)
    for tok in prediction_tokens:
        if tok in remaining:
            remaining.remove(tok)
            common += 1
    if common == 0:
        return 0.0
    p = common / len(prediction_tokens)
    r = common / len(reference_tokens)
    return 2 * p * r / (p + r)


def random_span_instance(rng, max_m=64):
    """Random distributions plus segment bounds; about a third use the sentinel."""
    M = int(rng.integers(4, max_m + 1))
    p_b = rng.dirichlet(rng.uniform(0.05, 2.0) * (1 + rng.random(M)))
    p_e = rng.dirichlet(rng.uniform(0.05, 2.0) * (1 + rng.random(M)))
    start = int(rng.integers(1, M - 1))
    end = int(rng.integers(start, M))
    sentinel = end if (rng.random() < 0.35 and end > start) else None
    max_len = 40 if rng.random() < 0.5 else int(rng.integers(1, 8))
    return p_b, p_e, start, end, max_len, sentinel
