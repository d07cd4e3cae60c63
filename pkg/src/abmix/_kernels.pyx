# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled chunk kernels.

Statement-for-statement mirror of abmix._pykernels; both backends must
produce bit-identical runs from the same driver-generated random blocks.
Keep the two files in sync when touching numerics.
"""

from libc.math cimport exp, floor, log, log1p, INFINITY, M_PI
from libc.stdint cimport int64_t

from .errors import NumericError

cdef enum:
    _TK_MIXTURE = 0
    _TK_TWO_MODE_1D = 1
    _TK_TWO_MODE_2D = 2
    _RC_BETA = 0
    _RC_Q1 = 1
    _RC_MU1 = 2
    _RC_NEGLOGPOST = 3
    _RC_TOY = 4
    _MODE_ABF = 0
    _MODE_ABP = 1

TK_MIXTURE = _TK_MIXTURE
TK_TWO_MODE_1D = _TK_TWO_MODE_1D
TK_TWO_MODE_2D = _TK_TWO_MODE_2D

RC_BETA = _RC_BETA
RC_Q1 = _RC_Q1
RC_MU1 = _RC_MU1
RC_NEGLOGPOST = _RC_NEGLOGPOST
RC_TOY = _RC_TOY

MODE_ABF = _MODE_ABF
MODE_ABP = _MODE_ABP

BACKEND_NAME = "compiled"

cdef int MAXK = 64

cdef double HALF_LOG_2PI = 0.5 * log(2.0 * M_PI)


cdef inline double _logaddexp(double a, double b) noexcept nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a >= b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


cdef inline long long _bin_of(double z, double zmin, double zmax, double dz,
                              long long nb) noexcept nogil:
    cdef long long i
    if z < zmin or z > zmax:
        return -1
    if z == zmax:
        return nb - 1
    i = <long long>floor((z - zmin) / dz)
    if i < 0:
        i = 0
    elif i >= nb:
        i = nb - 1
    return i


cdef inline long long _bin_clamped(double z, double zmin, double zmax,
                                   double dz, long long nb) noexcept nogil:
    cdef long long i
    if z <= zmin:
        return 0
    if z >= zmax:
        return nb - 1
    i = <long long>floor((z - zmin) / dz)
    if i < 0:
        i = 0
    elif i >= nb:
        i = nb - 1
    return i


cdef inline bint _support_mixture(double* x, int K) noexcept nogil:
    cdef int k, j
    cdef double qsum = 0.0
    cdef double qk
    for k in range(K - 1):
        qk = x[k]
        if qk < 0.0:
            return False
        qsum += qk
    if qsum > 1.0:
        return False
    for j in range(2 * K - 1, 3 * K):
        if x[j] <= 0.0:
            return False
    return True


cdef double _potential_mixture(double* x, double* y, int n, int K, double m,
                               double kappa, double alpha, double g, double h,
                               double* ll, double* lq, double* tbuf) noexcept nogil:
    cdef int imu = K - 1
    cdef int ilam = 2 * K - 1
    cdef double beta = x[3 * K - 1]
    cdef double s_lam = 0.0
    cdef double s_mu = 0.0
    cdef double s_loglam = 0.0
    cdef double lam, dmu, v, qk, qsum, qK, yi, tmax, t, ssum, d
    cdef int i, k
    for k in range(K):
        lam = x[ilam + k]
        s_lam += lam
        dmu = x[imu + k] - m
        s_mu += dmu * dmu
        ll[k] = log(lam)
        s_loglam += ll[k]
    v = (-(alpha - 1.0) * s_loglam + 0.5 * kappa * s_mu
         + beta * (h + s_lam) - (K * alpha + g - 1.0) * log(beta))
    qsum = 0.0
    for k in range(K - 1):
        qk = x[k]
        qsum += qk
        lq[k] = log(qk) if qk > 0.0 else -INFINITY
    qK = 1.0 - qsum
    lq[K - 1] = log(qK) if qK > 0.0 else -INFINITY
    for i in range(n):
        yi = y[i]
        tmax = -INFINITY
        for k in range(K):
            d = yi - x[imu + k]
            t = lq[k] + 0.5 * ll[k] - 0.5 * x[ilam + k] * d * d
            tbuf[k] = t
            if t > tmax:
                tmax = t
        ssum = 0.0
        for k in range(K):
            ssum += exp(tbuf[k] - tmax)
        v -= tmax + log(ssum)
    return v


cdef double _loglik_mixture(double* x, double* y, int n, int K,
                            double* ll, double* lq, double* tbuf) noexcept nogil:
    cdef int imu = K - 1
    cdef int ilam = 2 * K - 1
    cdef double qsum = 0.0
    cdef double qk, qK, yi, tmax, t, ssum, d, out
    cdef int i, k
    for k in range(K):
        ll[k] = log(x[ilam + k])
    for k in range(K - 1):
        qk = x[k]
        qsum += qk
        lq[k] = log(qk) if qk > 0.0 else -INFINITY
    qK = 1.0 - qsum
    lq[K - 1] = log(qK) if qK > 0.0 else -INFINITY
    out = 0.0
    for i in range(n):
        yi = y[i]
        tmax = -INFINITY
        for k in range(K):
            d = yi - x[imu + k]
            t = lq[k] + 0.5 * ll[k] - 0.5 * x[ilam + k] * d * d
            tbuf[k] = t
            if t > tmax:
                tmax = t
        ssum = 0.0
        for k in range(K):
            ssum += exp(tbuf[k] - tmax)
        out += tmax + log(ssum)
    return out


cdef double _partial_mixture(double* x, int coord, double* y, int n, int K,
                             double m, double kappa, double alpha, double g,
                             double h, double* ll, double* lq,
                             double* ubuf) noexcept nogil:
    cdef int imu = K - 1
    cdef int ilam = 2 * K - 1
    cdef double s_lam, qsum, qk, qK, yi, tmax, t, u, ssum, lse, acc, d
    cdef int i, k
    if coord == _RC_BETA:
        s_lam = 0.0
        for k in range(K):
            s_lam += x[ilam + k]
        return h + s_lam - (K * alpha + g - 1.0) / x[3 * K - 1]

    for k in range(K):
        ll[k] = log(x[ilam + k])
    qsum = 0.0
    for k in range(K - 1):
        qk = x[k]
        qsum += qk
        lq[k] = log(qk) if qk > 0.0 else -INFINITY
    qK = 1.0 - qsum
    lq[K - 1] = log(qK) if qK > 0.0 else -INFINITY
    acc = 0.0
    for i in range(n):
        yi = y[i]
        tmax = -INFINITY
        for k in range(K):
            d = yi - x[imu + k]
            u = 0.5 * ll[k] - 0.5 * x[ilam + k] * d * d
            ubuf[k] = u
            t = lq[k] + u
            if t > tmax:
                tmax = t
        ssum = 0.0
        for k in range(K):
            ssum += exp(lq[k] + ubuf[k] - tmax)
        lse = tmax + log(ssum)
        if coord == _RC_Q1:
            acc += exp(ubuf[0] - lse) - exp(ubuf[K - 1] - lse)
        else:
            acc += x[ilam] * (yi - x[imu]) * exp(lq[0] + ubuf[0] - lse)
    if coord == _RC_Q1:
        return -acc
    return kappa * (x[imu] - m) - acc


cdef double _potential_toy(int tk, double* p, double* x) noexcept nogil:
    cdef double a, z, t1, t2, mx, w1, b, s, u, vx, vy, inv2, u1, u2, my
    if tk == _TK_TWO_MODE_1D:
        a = p[0]
        z = x[0]
        t1 = -0.5 * (z + a) * (z + a)
        t2 = -0.5 * (z - a) * (z - a)
        mx = t1 if t1 > t2 else t2
        return -(mx + log(0.5 * (exp(t1 - mx) + exp(t2 - mx)))) + HALF_LOG_2PI
    w1 = p[0]
    a = p[1]
    b = p[2]
    s = p[3]
    z = x[0]
    u = x[1]
    t1 = log(w1) - 0.5 * (z + a) * (z + a)
    t2 = log(1.0 - w1) - 0.5 * (z - a) * (z - a)
    mx = t1 if t1 > t2 else t2
    vx = -(mx + log(exp(t1 - mx) + exp(t2 - mx))) + HALF_LOG_2PI
    inv2 = 1.0 / (2.0 * s * s)
    u1 = -(u + b) * (u + b) * inv2
    u2 = -(u - b) * (u - b) * inv2
    my = u1 if u1 > u2 else u2
    vy = -(my + log(0.5 * (exp(u1 - my) + exp(u2 - my)))) + HALF_LOG_2PI + log(s)
    return vx + vy


cdef double _partial_toy(int tk, double* p, double* x, int idx) noexcept nogil:
    cdef double a, z, t1, t2, mx, e1, e2, w1, r1, b, s, u, inv2, u1, u2, my
    if tk == _TK_TWO_MODE_1D:
        a = p[0]
        z = x[0]
        t1 = -0.5 * (z + a) * (z + a)
        t2 = -0.5 * (z - a) * (z - a)
        mx = t1 if t1 > t2 else t2
        e1 = exp(t1 - mx)
        e2 = exp(t2 - mx)
        w1 = e1 / (e1 + e2)
        return w1 * (z + a) + (1.0 - w1) * (z - a)
    w1 = p[0]
    a = p[1]
    b = p[2]
    s = p[3]
    if idx == 0:
        z = x[0]
        t1 = log(w1) - 0.5 * (z + a) * (z + a)
        t2 = log(1.0 - w1) - 0.5 * (z - a) * (z - a)
        mx = t1 if t1 > t2 else t2
        e1 = exp(t1 - mx)
        e2 = exp(t2 - mx)
        r1 = e1 / (e1 + e2)
        return r1 * (z + a) + (1.0 - r1) * (z - a)
    u = x[1]
    inv2 = 1.0 / (2.0 * s * s)
    u1 = -(u + b) * (u + b) * inv2
    u2 = -(u - b) * (u - b) * inv2
    my = u1 if u1 > u2 else u2
    e1 = exp(u1 - my)
    e2 = exp(u2 - my)
    r1 = e1 / (e1 + e2)
    return (r1 * (u + b) + (1.0 - r1) * (u - b)) / (s * s)


cdef inline double _potential_any(int tk, double* tp, double* y, int n, int K,
                                  double m, double kappa, double alpha,
                                  double g, double h, double* x, double* ll,
                                  double* lq, double* tbuf) noexcept nogil:
    if tk == _TK_MIXTURE:
        return _potential_mixture(x, y, n, K, m, kappa, alpha, g, h, ll, lq, tbuf)
    return _potential_toy(tk, tp, x)


cdef inline double _force_any(int tk, double* tp, double* y, int n, int K,
                              double m, double kappa, double alpha, double g,
                              double h, double* x, int rkind, int ridx,
                              double* ll, double* lq, double* ubuf) noexcept nogil:
    if tk == _TK_MIXTURE:
        return _partial_mixture(x, rkind, y, n, K, m, kappa, alpha, g, h,
                                ll, lq, ubuf)
    return _partial_toy(tk, tp, x, ridx)


cdef inline double _abf_bias_at_bin(double* fs, int64_t* hc, long long i,
                                    double dz) noexcept nogil:
    cdef double ssum = 0.0
    cdef double fi
    cdef long long l
    for l in range(i):
        if hc[l] > 0:
            ssum += fs[l] / hc[l]
    fi = fs[i] / hc[i] if hc[i] > 0 else 0.0
    return dz * (ssum + 0.5 * fi)


cdef inline double _abf_bias_diff(double* fs, int64_t* hc, long long i_from,
                                  long long i_to, double dz) noexcept nogil:
    cdef long long lo, hi, l
    cdef double ssum, f_lo, f_hi, mag
    if i_from == i_to:
        return 0.0
    lo = i_from if i_from < i_to else i_to
    hi = i_to if i_from < i_to else i_from
    ssum = 0.0
    for l in range(lo, hi):
        if hc[l] > 0:
            ssum += fs[l] / hc[l]
    f_lo = fs[lo] / hc[lo] if hc[lo] > 0 else 0.0
    f_hi = fs[hi] / hc[hi] if hc[hi] > 0 else 0.0
    mag = dz * (ssum + 0.5 * (f_hi - f_lo))
    return mag if i_to > i_from else -mag


cdef inline double _project_rc_c(double* x, int rkind, int ridx, int K) noexcept nogil:
    if rkind == _RC_BETA:
        return x[3 * K - 1]
    if rkind == _RC_Q1:
        return x[0]
    if rkind == _RC_MU1:
        return x[K - 1]
    return x[ridx]


# ---------------------------------------------------------------------------
# Python-visible wrappers (same call signatures as the pure-Python backend)
# ---------------------------------------------------------------------------

def logaddexp(double a, double b):
    return _logaddexp(a, b)


def bin_of(double z, double zmin, double zmax, double dz, long long nb):
    return _bin_of(z, zmin, zmax, dz, nb)


def bin_clamped(double z, double zmin, double zmax, double dz, long long nb):
    return _bin_clamped(z, zmin, zmax, dz, nb)


def support_mixture(double[::1] x, int K):
    return bool(_support_mixture(&x[0], K))


cdef void _check_k(int K) except *:
    if K > MAXK:
        raise ValueError(f"compiled kernels support at most {MAXK} components")


def potential_mixture(double[::1] x, double[::1] y, int K, double m,
                      double kappa, double alpha, double g, double h):
    cdef double ll[64]
    cdef double lq[64]
    cdef double tbuf[64]
    cdef double* yp = &y[0] if y.shape[0] > 0 else NULL
    _check_k(K)
    return _potential_mixture(&x[0], yp, <int>y.shape[0], K, m, kappa, alpha,
                              g, h, ll, lq, tbuf)


def loglik_mixture(double[::1] x, double[::1] y, int K):
    cdef double ll[64]
    cdef double lq[64]
    cdef double tbuf[64]
    cdef double* yp = &y[0] if y.shape[0] > 0 else NULL
    _check_k(K)
    return _loglik_mixture(&x[0], yp, <int>y.shape[0], K, ll, lq, tbuf)


def partial_mixture(double[::1] x, int coord, double[::1] y, int K, double m,
                    double kappa, double alpha, double g, double h):
    cdef double ll[64]
    cdef double lq[64]
    cdef double ubuf[64]
    cdef double* yp = &y[0] if y.shape[0] > 0 else NULL
    _check_k(K)
    return _partial_mixture(&x[0], coord, yp, <int>y.shape[0], K, m, kappa,
                            alpha, g, h, ll, lq, ubuf)


def potential_toy(int tk, double[::1] p, double[::1] x):
    return _potential_toy(tk, &p[0], &x[0])


def partial_toy(int tk, double[::1] p, double[::1] x, int idx):
    return _partial_toy(tk, &p[0], &x[0], idx)


def potential_any(int tk, double[::1] tp, double[::1] y, int K, double m,
                  double kappa, double alpha, double g, double h, double[::1] x):
    cdef double ll[64]
    cdef double lq[64]
    cdef double tbuf[64]
    cdef double* yp = &y[0] if y.shape[0] > 0 else NULL
    cdef double* tpp = &tp[0] if tp.shape[0] > 0 else NULL
    if tk == _TK_MIXTURE:
        _check_k(K)
    return _potential_any(tk, tpp, yp, <int>y.shape[0], K, m, kappa, alpha,
                          g, h, &x[0], ll, lq, tbuf)


def force_any(int tk, double[::1] tp, double[::1] y, int K, double m,
              double kappa, double alpha, double g, double h, double[::1] x,
              int rkind, int ridx):
    cdef double ll[64]
    cdef double lq[64]
    cdef double ubuf[64]
    cdef double* yp = &y[0] if y.shape[0] > 0 else NULL
    cdef double* tpp = &tp[0] if tp.shape[0] > 0 else NULL
    if tk == _TK_MIXTURE:
        _check_k(K)
    return _force_any(tk, tpp, yp, <int>y.shape[0], K, m, kappa, alpha, g, h,
                      &x[0], rkind, ridx, ll, lq, ubuf)


def abf_bias_at_bin(double[::1] force_sum, int64_t[::1] hit_count,
                    long long i, double dz):
    return _abf_bias_at_bin(&force_sum[0], &hit_count[0], i, dz)


def abf_bias_diff(double[::1] force_sum, int64_t[::1] hit_count,
                  long long i_from, long long i_to, double dz):
    return _abf_bias_diff(&force_sum[0], &hit_count[0], i_from, i_to, dz)


def _project_rc(double[::1] x, int rkind, int ridx, int K):
    return _project_rc_c(&x[0], rkind, ridx, K)


# ---------------------------------------------------------------------------
# Chunk loops
# ---------------------------------------------------------------------------

def run_adapt_chunk(int tk, double[::1] tp, double[::1] y, int K, double m,
                    double kappa, double alpha, double g, double h,
                    int rkind, int ridx, double zmin, double zmax, double dz,
                    long long nb, int mode,
                    double[::1] x, double[::1] tau, double[::1] cache,
                    int64_t[::1] ibox,
                    double[::1] force_sum, int64_t[::1] hit_count,
                    double[::1] log_weight, double[::1] sbox,
                    double[:, ::1] noise, double[::1] unif,
                    long long t0, long long thin,
                    int64_t[::1] tr_iter, double[::1] tr_xi, double[::1] tr_v,
                    double[::1] tr_bias, double[:, ::1] tr_x,
                    int64_t[::1] pbox, int64_t[::1] abox, int debug):
    cdef long long nsteps = noise.shape[0]
    cdef long long d = noise.shape[1]
    cdef double ll[64]
    cdef double lq[64]
    cdef double tbuf[64]
    cdef double xp[192]
    cdef double* yp = &y[0] if y.shape[0] > 0 else NULL
    cdef double* tpp = &tp[0] if tp.shape[0] > 0 else NULL
    cdef int n = <int>y.shape[0]
    cdef double xi = cache[0]
    cdef double v = cache[1]
    cdef double f = cache[2]
    cdef long long bin_ = ibox[0]
    cdef long long fvalid = ibox[1]
    cdef double log_s = sbox[0]
    cdef double ldz = log(dz)
    cdef long long s, t, p, ip
    cdef long long j
    cdef double vp = 0.0
    cdef double xip = 0.0
    cdef double da, logr, u, lu, w, vchk, xichk
    cdef bint ok
    if tk == _TK_MIXTURE:
        _check_k(K)
    if d > 192:
        raise ValueError("state dimension exceeds the compiled limit (192)")
    for s in range(nsteps):
        t = t0 + s + 1
        ok = True
        for j in range(d):
            xp[j] = x[j] + tau[j] * noise[s, j]
        if tk == _TK_MIXTURE:
            ok = _support_mixture(xp, K)
        if ok:
            if rkind == _RC_NEGLOGPOST:
                vp = _potential_any(tk, tpp, yp, n, K, m, kappa, alpha, g, h,
                                    xp, ll, lq, tbuf)
                if vp != vp:
                    raise NumericError("NaN potential in adaptive run",
                                       [xp[j] for j in range(d)], t)
                xip = vp
                ok = zmin <= xip <= zmax
            else:
                xip = _project_rc_c(xp, rkind, ridx, K)
                ok = zmin <= xip <= zmax
                if ok:
                    vp = _potential_any(tk, tpp, yp, n, K, m, kappa, alpha,
                                        g, h, xp, ll, lq, tbuf)
                    if vp != vp:
                        raise NumericError("NaN potential in adaptive run",
                                           [xp[j] for j in range(d)], t)
        if ok:
            ip = _bin_of(xip, zmin, zmax, dz, nb)
            if mode == _MODE_ABF:
                da = _abf_bias_diff(&force_sum[0], &hit_count[0], bin_, ip, dz)
            else:
                da = log_weight[bin_] - log_weight[ip]
            logr = (v - vp) + da
            u = unif[s]
            lu = log(u) if u > 0.0 else -INFINITY
            if lu < logr:
                for j in range(d):
                    x[j] = xp[j]
                xi = xip
                v = vp
                bin_ = ip
                fvalid = 0
                abox[0] += 1
        # record the (possibly repeated) current state
        if mode == _MODE_ABF:
            if not fvalid:
                f = _force_any(tk, tpp, yp, n, K, m, kappa, alpha, g, h,
                               &x[0], rkind, ridx, ll, lq, tbuf)
                fvalid = 1
            force_sum[bin_] += f
            hit_count[bin_] += 1
        else:
            w = log_weight[bin_] - (ldz + log_s)
            log_weight[bin_] = _logaddexp(log_weight[bin_], w)
            log_s = _logaddexp(log_s, w)
            hit_count[bin_] += 1
        if thin > 0 and t % thin == 0:
            p = pbox[0]
            tr_iter[p] = t
            tr_xi[p] = xi
            tr_v[p] = v
            if mode == _MODE_ABF:
                tr_bias[p] = _abf_bias_at_bin(&force_sum[0], &hit_count[0],
                                              bin_, dz)
            else:
                tr_bias[p] = (ldz + log_s) - log_weight[bin_]
            for j in range(d):
                tr_x[p, j] = x[j]
            pbox[0] = p + 1
        if debug and t % 10000 == 0:
            vchk = _potential_any(tk, tpp, yp, n, K, m, kappa, alpha, g, h,
                                  &x[0], ll, lq, tbuf)
            xichk = vchk if rkind == _RC_NEGLOGPOST else \
                _project_rc_c(&x[0], rkind, ridx, K)
            if vchk != v or xichk != xi or \
                    _bin_of(xichk, zmin, zmax, dz, nb) != bin_:
                raise AssertionError(f"stale chain-state cache at iteration {t}")
    cache[0] = xi
    cache[1] = v
    cache[2] = f
    ibox[0] = bin_
    ibox[1] = fvalid
    sbox[0] = log_s


def run_sample_chunk(int tk, double[::1] tp, double[::1] y, int K, double m,
                     double kappa, double alpha, double g, double h,
                     int rkind, int ridx, double zmin, double zmax, double dz,
                     long long nb,
                     double[::1] aprof,
                     double[::1] x, double[::1] tau, double[::1] cache,
                     int64_t[::1] ibox,
                     double[:, ::1] noise, double[::1] unif,
                     long long t0, long long thin,
                     int64_t[::1] tr_iter, double[::1] tr_xi, double[::1] tr_v,
                     double[::1] tr_bias, double[:, ::1] tr_x,
                     int64_t[::1] pbox, int64_t[::1] abox, int debug):
    cdef long long nsteps = noise.shape[0]
    cdef long long d = noise.shape[1]
    cdef double ll[64]
    cdef double lq[64]
    cdef double tbuf[64]
    cdef double xp[192]
    cdef double* yp = &y[0] if y.shape[0] > 0 else NULL
    cdef double* tpp = &tp[0] if tp.shape[0] > 0 else NULL
    cdef int n = <int>y.shape[0]
    cdef double xi = cache[0]
    cdef double v = cache[1]
    cdef long long bin_ = ibox[0]
    cdef long long s, t, p, ip
    cdef long long j
    cdef double vp = 0.0
    cdef double xip = 0.0
    cdef double logr, u, lu, vchk, xichk
    cdef bint ok
    if tk == _TK_MIXTURE:
        _check_k(K)
    if d > 192:
        raise ValueError("state dimension exceeds the compiled limit (192)")
    for s in range(nsteps):
        t = t0 + s + 1
        ok = True
        for j in range(d):
            xp[j] = x[j] + tau[j] * noise[s, j]
        if tk == _TK_MIXTURE:
            ok = _support_mixture(xp, K)
        if ok:
            vp = _potential_any(tk, tpp, yp, n, K, m, kappa, alpha, g, h,
                                xp, ll, lq, tbuf)
            if vp != vp:
                raise NumericError("NaN potential in sampling run",
                                   [xp[j] for j in range(d)], t)
            xip = vp if rkind == _RC_NEGLOGPOST else \
                _project_rc_c(xp, rkind, ridx, K)
            ip = _bin_clamped(xip, zmin, zmax, dz, nb)
            logr = (v - vp) + (aprof[ip] - aprof[bin_])
            u = unif[s]
            lu = log(u) if u > 0.0 else -INFINITY
            if lu < logr:
                for j in range(d):
                    x[j] = xp[j]
                xi = xip
                v = vp
                bin_ = ip
                abox[0] += 1
        if thin > 0 and t % thin == 0:
            p = pbox[0]
            tr_iter[p] = t
            tr_xi[p] = xi
            tr_v[p] = v
            tr_bias[p] = aprof[bin_]
            for j in range(d):
                tr_x[p, j] = x[j]
            pbox[0] = p + 1
        if debug and t % 10000 == 0:
            vchk = _potential_any(tk, tpp, yp, n, K, m, kappa, alpha, g, h,
                                  &x[0], ll, lq, tbuf)
            xichk = vchk if rkind == _RC_NEGLOGPOST else \
                _project_rc_c(&x[0], rkind, ridx, K)
            if vchk != v or xichk != xi or \
                    _bin_clamped(xichk, zmin, zmax, dz, nb) != bin_:
                raise AssertionError(f"stale chain-state cache at iteration {t}")
    cache[0] = xi
    cache[1] = v
    ibox[0] = bin_
