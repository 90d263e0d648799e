"""Reference computations written from the model definitions, sharing no code
with the package. Slow and exact; only for tiny inputs."""
import itertools
import math

from scipy import integrate


def lomax_by_quadrature(shape, rate, y):
    """Integrate Exp(y | theta) * Gamma(theta | shape, rate) over theta."""
    log_norm = shape * math.log(rate) - math.lgamma(shape)

    def f(theta):
        return theta * math.exp(-theta * y) * math.exp(log_norm + (shape - 1) * math.log(theta) - rate * theta)

    val, _ = integrate.quad(f, 0, math.inf, epsabs=0, epsrel=1e-12, limit=200)
    return val


def beta_binomial_lgamma(a, b, y, n):
    lchoose = math.lgamma(n + 1) - math.lgamma(y + 1) - math.lgamma(n - y + 1)
    lbeta = lambda p, q: math.lgamma(p) + math.lgamma(q) - math.lgamma(p + q)
    return lchoose + lbeta(a + y, b + n - y) - lbeta(a, b)


# --- joint segment marginals ---------------------------------------------------------

def exp_gamma_segment(shape, rate, ys):
    """log of integral prod Exp(y_i | theta) Gamma(theta | shape, rate) dtheta."""
    n, s = len(ys), sum(ys)
    return (shape * math.log(rate) - math.lgamma(shape) + math.lgamma(shape + n)
            - (shape + n) * math.log(rate + s))


def beta_binomial_segment(a, b, ys, n):
    lbeta = lambda p, q: math.lgamma(p) + math.lgamma(q) - math.lgamma(p + q)
    lc = sum(math.lgamma(n + 1) - math.lgamma(y + 1) - math.lgamma(n - y + 1) for y in ys)
    s = sum(ys)
    return lc + lbeta(a + s, b + len(ys) * n - s) - lbeta(a, b)


def brute_force_posterior(ys, ic_logpdf, ooc_segment, h_ic, h_ooc, absorbing=False):
    """Posterior over (start of current segment r, current regime s) by
    enumerating every regime path s_1..s_T with s_1 = 0.

    ic_logpdf(y): per-observation in-control log density (fixed reference).
    ooc_segment(list): joint log marginal of an out-of-control segment.
    h_ic(d), h_ooc(d): probability a segment of length d ends after its d-th
    observation.
    """
    T = len(ys)
    post = {}
    for tail in itertools.product((0, 1), repeat=T - 1):
        path = (0,) + tail
        logp = 0.0
        ok = True
        length = 1
        for t in range(1, T):
            prev, cur = path[t - 1], path[t]
            h = h_ic(length) if prev == 0 else (0.0 if absorbing else h_ooc(length))
            p = h if cur != prev else 1.0 - h
            if p <= 0:
                ok = False
                break
            logp += math.log(p)
            length = length + 1 if cur == prev else 1
        if not ok:
            continue
        # likelihood: split into maximal segments
        start = 0
        for t in range(1, T + 1):
            if t == T or path[t] != path[start]:
                seg = ys[start:t]
                if path[start] == 0:
                    logp += sum(ic_logpdf(y) for y in seg)
                else:
                    logp += ooc_segment(seg)
                start = t
        # current segment begins after observation r
        r = T - 1
        while r > 0 and path[r - 1] == path[T - 1]:
            r -= 1
        key = (r, path[T - 1])
        post[key] = post.get(key, 0.0) + math.exp(logp)
    z = sum(post.values())
    return {k: v / z for k, v in post.items()}


def single_change_posterior(ys, m0_logpdf, m1_segment, p):
    """P(C_t = j | y) for the single-change model with geometric changepoint prior."""
    t = len(ys)
    logs = []
    m0 = [m0_logpdf(y) for y in ys]
    logs.append((t - 1) * math.log1p(-p) + sum(m0))
    for j in range(1, t):
        logs.append(math.log(p) + (j - 1) * math.log1p(-p) + sum(m0[:j]) + m1_segment(ys[j:]))
    mx = max(logs)
    w = [math.exp(v - mx) for v in logs]
    z = sum(w)
    return [v / z for v in w]
