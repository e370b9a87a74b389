import numpy as np

from mcbf.symmat import lambda_min
from mcbf.system import eval_cascade, eval_H


def random_sym(rng, p, scale=1.0):
    M = rng.normal(scale=scale, size=(p, p))
    return 0.5 * (M + M.T)


def sample_in_S(sc, rng, count, high_order=False):
    """Uniform states of the scenario domain lying in S (and in S_Q if asked)."""
    out = []
    dom = sc.spec.domain
    while len(out) < count:
        x = dom.sample(rng, 1)[0]
        if lambda_min(eval_H(sc.safety, x))[0] < 0:
            continue
        if high_order and any(lambda_min(eval_cascade(sc.safety, x, q))[0] < 0
                              for q in range(1, sc.safety.relative_degree)):
            continue
        out.append(x)
    return np.array(out)
