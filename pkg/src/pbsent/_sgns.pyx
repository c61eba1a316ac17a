# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled Skip-gram negative-sampling inner loop.

Mutates the embedding matrices in place. All randomness comes from a
splitmix64 stream seeded per shard, so a single-shard (single-thread) run is
fully deterministic given the seed. Multi-shard runs update shared memory
without locks and are therefore valid but nondeterministic.
"""

from libc.math cimport exp, log1p
from libc.stdlib cimport free, malloc


cdef inline unsigned long long _next(unsigned long long *state) nogil:
    cdef unsigned long long z
    state[0] = state[0] + 0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(unsigned long long *state) nogil:
    # 53-bit mantissa in [0, 1)
    return (_next(state) >> 11) * (1.0 / 9007199254740992.0)


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _softplus(double x) nogil:
    if x > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline Py_ssize_t _sample_cdf(double[::1] cdf, double u) nogil:
    # first index with cdf[i] > u
    cdef Py_ssize_t lo = 0, hi = cdf.shape[0] - 1, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


def train_shard(double[:, ::1] inp, double[:, ::1] outp,
                int[::1] tokens, long long[::1] offsets,
                double[::1] keep_prob, double[::1] cdf,
                int window, int negatives, int epochs,
                double lr0, unsigned long long seed,
                Py_ssize_t sent_lo, Py_ssize_t sent_hi,
                double[::1] loss_sum, long long[::1] loss_cnt):
    """Run `epochs` SGD passes over sentences [sent_lo, sent_hi).

    Per (target, context) pair: one gradient step on the negative-sampling
    loss with `negatives` noise draws; the context's and negatives' output
    rows are updated immediately with the pre-step input row, the input row
    once at the end of the pair with the accumulated gradient. The learning
    rate decays linearly per sentence from lr0 to a floor of lr0 * 1e-4 over
    the shard's scheduled tokens. Noise draws matching the positive context
    are redrawn (bounded), then skipped.

    When loss_sum/loss_cnt have length `epochs`, per-pair losses are
    accumulated there (single-thread use only).
    """
    cdef Py_ssize_t d = inp.shape[1]
    cdef unsigned long long rng = seed if seed != 0 else 0xD1B54A32D192ED03ULL
    cdef long long shard_tokens = offsets[sent_hi] - offsets[sent_lo]
    cdef double schedule = <double> epochs * <double> shard_tokens + 1.0
    cdef long long processed = 0
    cdef double lr = lr0
    cdef double floor = lr0 * 1e-4
    cdef bint track = loss_sum.shape[0] > 0
    cdef Py_ssize_t max_len = 0, epoch, s, p, i, j, n, t, m, lo2, hi2
    cdef Py_ssize_t target, ctx, neg, b
    cdef int w, attempts
    cdef double a, sg, coef, pair_loss = 0.0
    cdef int *sen
    cdef double *neu

    if sent_hi <= sent_lo or epochs <= 0:
        return

    for s in range(sent_lo, sent_hi):
        if offsets[s + 1] - offsets[s] > max_len:
            max_len = offsets[s + 1] - offsets[s]
    sen = <int *> malloc((max_len if max_len > 0 else 1) * sizeof(int))
    neu = <double *> malloc(d * sizeof(double))
    if sen == NULL or neu == NULL:
        free(sen)
        free(neu)
        raise MemoryError("cannot allocate training scratch buffers")

    with nogil:
        for epoch in range(epochs):
            for s in range(sent_lo, sent_hi):
                processed += offsets[s + 1] - offsets[s]
                lr = lr0 * (1.0 - processed / schedule)
                if lr < floor:
                    lr = floor
                m = 0
                for p in range(offsets[s], offsets[s + 1]):
                    w = tokens[p]
                    if _uniform(&rng) < keep_prob[w]:
                        sen[m] = w
                        m += 1
                for i in range(m):
                    target = sen[i]
                    b = 1 + <Py_ssize_t> (_next(&rng) % <unsigned long long> window)
                    lo2 = i - b if i - b > 0 else 0
                    hi2 = i + b + 1 if i + b + 1 < m else m
                    for j in range(lo2, hi2):
                        if j == i:
                            continue
                        ctx = sen[j]
                        for t in range(d):
                            neu[t] = 0.0
                        a = 0.0
                        for t in range(d):
                            a += inp[target, t] * outp[ctx, t]
                        sg = _sigmoid(a)
                        if track:
                            pair_loss = _softplus(-a)
                        coef = sg - 1.0
                        for t in range(d):
                            neu[t] += coef * outp[ctx, t]
                        coef *= lr
                        for t in range(d):
                            outp[ctx, t] -= coef * inp[target, t]
                        for n in range(negatives):
                            attempts = 0
                            while True:
                                neg = _sample_cdf(cdf, _uniform(&rng))
                                attempts += 1
                                if neg != ctx or attempts >= 100:
                                    break
                            if neg == ctx:
                                continue
                            a = 0.0
                            for t in range(d):
                                a += inp[target, t] * outp[neg, t]
                            sg = _sigmoid(a)
                            if track:
                                pair_loss += _softplus(a)
                            coef = sg
                            for t in range(d):
                                neu[t] += coef * outp[neg, t]
                            coef *= lr
                            for t in range(d):
                                outp[neg, t] -= coef * inp[target, t]
                        for t in range(d):
                            inp[target, t] -= lr * neu[t]
                        if track:
                            loss_sum[epoch] += pair_loss
                            loss_cnt[epoch] += 1

        free(sen)
        free(neu)
