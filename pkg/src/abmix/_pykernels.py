"""Pure-Python chunk kernels.

Reference implementation of the hot loops; the compiled module
``abmix._kernels`` mirrors these functions statement for statement so that
either backend produces bit-identical runs from the same driver-generated
random blocks.  Keep both files in sync when touching numerics.
"""

from math import exp, floor, inf, log, log1p, pi

from .errors import NumericError

# target kinds
TK_MIXTURE = 0
TK_TWO_MODE_1D = 1
TK_TWO_MODE_2D = 2

# reaction coordinate kinds (0..2 double as partial_mixture coord ids)
RC_BETA = 0
RC_Q1 = 1
RC_MU1 = 2
RC_NEGLOGPOST = 3
RC_TOY = 4

MODE_ABF = 0
MODE_ABP = 1

HALF_LOG_2PI = 0.5 * log(2.0 * pi)

BACKEND_NAME = "python"


def _exp(v):
    # C exp() saturates to +inf instead of raising
    try:
        return exp(v)
    except OverflowError:
        return inf


def logaddexp(a, b):
    if a == -inf:
        return b
    if b == -inf:
        return a
    if a >= b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


def bin_of(z, zmin, zmax, dz, nb):
    """Half-open bins, right edge closed at zmax; -1 when out of range."""
    if z < zmin or z > zmax:
        return -1
    if z == zmax:
        return nb - 1
    i = int(floor((z - zmin) / dz))
    if i < 0:
        i = 0
    elif i >= nb:
        i = nb - 1
    return i


def bin_clamped(z, zmin, zmax, dz, nb):
    """Like bin_of but clamped to the boundary bins (constant extension)."""
    if z <= zmin:
        return 0
    if z >= zmax:
        return nb - 1
    i = int(floor((z - zmin) / dz))
    if i < 0:
        i = 0
    elif i >= nb:
        i = nb - 1
    return i


# ---------------------------------------------------------------------------
# Gaussian mixture target.  State layout, zero-based:
#   x[0 .. K-2]        free weights q_1..q_{K-1}
#   x[K-1 .. 2K-2]     means mu_1..mu_K
#   x[2K-1 .. 3K-2]    precisions lambda_1..lambda_K
#   x[3K-1]            beta
# ---------------------------------------------------------------------------

def support_mixture(x, K):
    qsum = 0.0
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


def potential_mixture(x, y, K, m, kappa, alpha, g, h):
    """Minus log of prior * likelihood, dropping state-independent constants."""
    imu = K - 1
    ilam = 2 * K - 1
    beta = x[3 * K - 1]
    s_lam = 0.0
    s_mu = 0.0
    s_loglam = 0.0
    ll = [0.0] * K
    for k in range(K):
        lam = x[ilam + k]
        s_lam += lam
        dmu = x[imu + k] - m
        s_mu += dmu * dmu
        ll[k] = log(lam)
        s_loglam += ll[k]
    v = (-(alpha - 1.0) * s_loglam + 0.5 * kappa * s_mu
         + beta * (h + s_lam) - (K * alpha + g - 1.0) * log(beta))
    lq = [0.0] * K
    qsum = 0.0
    for k in range(K - 1):
        qk = x[k]
        qsum += qk
        lq[k] = log(qk) if qk > 0.0 else -inf
    qK = 1.0 - qsum
    lq[K - 1] = log(qK) if qK > 0.0 else -inf
    tbuf = [0.0] * K
    for i in range(len(y)):
        yi = y[i]
        tmax = -inf
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


def loglik_mixture(x, y, K):
    """Mixture log-likelihood dropping the (2*pi)^(-n/2) constant."""
    imu = K - 1
    ilam = 2 * K - 1
    ll = [log(x[ilam + k]) for k in range(K)]
    lq = [0.0] * K
    qsum = 0.0
    for k in range(K - 1):
        qk = x[k]
        qsum += qk
        lq[k] = log(qk) if qk > 0.0 else -inf
    qK = 1.0 - qsum
    lq[K - 1] = log(qK) if qK > 0.0 else -inf
    out = 0.0
    tbuf = [0.0] * K
    for i in range(len(y)):
        yi = y[i]
        tmax = -inf
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


def partial_mixture(x, coord, y, K, m, kappa, alpha, g, h):
    """dV/d(beta|q1|mu1) for coord 0|1|2."""
    imu = K - 1
    ilam = 2 * K - 1
    if coord == RC_BETA:
        s_lam = 0.0
        for k in range(K):
            s_lam += x[ilam + k]
        return h + s_lam - (K * alpha + g - 1.0) / x[3 * K - 1]

    ll = [log(x[ilam + k]) for k in range(K)]
    lq = [0.0] * K
    qsum = 0.0
    for k in range(K - 1):
        qk = x[k]
        qsum += qk
        lq[k] = log(qk) if qk > 0.0 else -inf
    qK = 1.0 - qsum
    lq[K - 1] = log(qK) if qK > 0.0 else -inf
    ubuf = [0.0] * K
    acc = 0.0
    for i in range(len(y)):
        yi = y[i]
        tmax = -inf
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
        if coord == RC_Q1:
            acc += _exp(ubuf[0] - lse) - _exp(ubuf[K - 1] - lse)
        else:
            acc += x[ilam] * (yi - x[imu]) * _exp(lq[0] + ubuf[0] - lse)
    if coord == RC_Q1:
        return -acc
    return kappa * (x[imu] - m) - acc


# ---------------------------------------------------------------------------
# Toy targets (oracle-checkable)
# ---------------------------------------------------------------------------

def potential_toy(tk, p, x):
    if tk == TK_TWO_MODE_1D:
        a = p[0]
        z = x[0]
        t1 = -0.5 * (z + a) * (z + a)
        t2 = -0.5 * (z - a) * (z - a)
        mx = t1 if t1 > t2 else t2
        return -(mx + log(0.5 * (exp(t1 - mx) + exp(t2 - mx)))) + HALF_LOG_2PI
    # two-mode marginal in the first coordinate, metastable second coordinate
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


def partial_toy(tk, p, x, idx):
    if tk == TK_TWO_MODE_1D:
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


def potential_any(tk, tp, y, K, m, kappa, alpha, g, h, x):
    if tk == TK_MIXTURE:
        return potential_mixture(x, y, K, m, kappa, alpha, g, h)
    return potential_toy(tk, tp, x)


def force_any(tk, tp, y, K, m, kappa, alpha, g, h, x, rkind, ridx):
    if tk == TK_MIXTURE:
        return partial_mixture(x, rkind, y, K, m, kappa, alpha, g, h)
    return partial_toy(tk, tp, x, ridx)


# ---------------------------------------------------------------------------
# Bias bookkeeping
# ---------------------------------------------------------------------------

def abf_bias_at_bin(force_sum, hit_count, i, dz):
    """Bias at bin midpoint: integrate the running mean force to mid-bin."""
    ssum = 0.0
    for l in range(i):
        if hit_count[l] > 0:
            ssum += force_sum[l] / hit_count[l]
    fi = force_sum[i] / hit_count[i] if hit_count[i] > 0 else 0.0
    return dz * (ssum + 0.5 * fi)


def abf_bias_diff(force_sum, hit_count, i_from, i_to, dz):
    """A(mid(i_to)) - A(mid(i_from)); exactly antisymmetric in its arguments."""
    if i_from == i_to:
        return 0.0
    lo = i_from if i_from < i_to else i_to
    hi = i_to if i_from < i_to else i_from
    ssum = 0.0
    for l in range(lo, hi):
        if hit_count[l] > 0:
            ssum += force_sum[l] / hit_count[l]
    f_lo = force_sum[lo] / hit_count[lo] if hit_count[lo] > 0 else 0.0
    f_hi = force_sum[hi] / hit_count[hi] if hit_count[hi] > 0 else 0.0
    mag = dz * (ssum + 0.5 * (f_hi - f_lo))
    return mag if i_to > i_from else -mag


def _project_rc(x, rkind, ridx, K):
    if rkind == RC_BETA:
        return x[3 * K - 1]
    if rkind == RC_Q1:
        return x[0]
    if rkind == RC_MU1:
        return x[K - 1]
    return x[ridx]


# ---------------------------------------------------------------------------
# Chunk loops.  State is carried in small arrays so chunks can resume:
#   cache: float64[3] = (xi, V, force at current state)
#   ibox:  int64[2]   = (bin index, force-cache-valid flag)
#   sbox:  float64[1] = log of the ABP accumulator total
#   pbox/abox: int64[1] trace write position / accepted count
# ---------------------------------------------------------------------------

def run_adapt_chunk(tk, tp, y, K, m, kappa, alpha, g, h,
                    rkind, ridx, zmin, zmax, dz, nb, mode,
                    x, tau, cache, ibox,
                    force_sum, hit_count, log_weight, sbox,
                    noise, unif, t0, thin,
                    tr_iter, tr_xi, tr_v, tr_bias, tr_x, pbox, abox,
                    debug):
    nsteps = noise.shape[0]
    d = noise.shape[1]
    xi = cache[0]
    v = cache[1]
    f = cache[2]
    bin_ = int(ibox[0])
    fvalid = int(ibox[1])
    log_s = sbox[0]
    ldz = log(dz)
    xp = [0.0] * d
    for s in range(nsteps):
        t = t0 + s + 1
        ok = True
        for j in range(d):
            xp[j] = x[j] + tau[j] * noise[s, j]
        if tk == TK_MIXTURE:
            ok = support_mixture(xp, K)
        if ok:
            if rkind == RC_NEGLOGPOST:
                vp = potential_any(tk, tp, y, K, m, kappa, alpha, g, h, xp)
                if vp != vp:
                    raise NumericError("NaN potential in adaptive run", xp, t)
                xip = vp
                ok = zmin <= xip <= zmax
            else:
                xip = _project_rc(xp, rkind, ridx, K)
                ok = zmin <= xip <= zmax
                if ok:
                    vp = potential_any(tk, tp, y, K, m, kappa, alpha, g, h, xp)
                    if vp != vp:
                        raise NumericError("NaN potential in adaptive run", xp, t)
        if ok:
            ip = bin_of(xip, zmin, zmax, dz, nb)
            if mode == MODE_ABF:
                da = abf_bias_diff(force_sum, hit_count, bin_, ip, dz)
            else:
                da = log_weight[bin_] - log_weight[ip]
            logr = (v - vp) + da
            u = unif[s]
            lu = log(u) if u > 0.0 else -inf
            if lu < logr:
                for j in range(d):
                    x[j] = xp[j]
                xi = xip
                v = vp
                bin_ = ip
                fvalid = 0
                abox[0] += 1
        # record the (possibly repeated) current state
        if mode == MODE_ABF:
            if not fvalid:
                f = force_any(tk, tp, y, K, m, kappa, alpha, g, h, x, rkind, ridx)
                fvalid = 1
            force_sum[bin_] += f
            hit_count[bin_] += 1
        else:
            w = log_weight[bin_] - (ldz + log_s)
            log_weight[bin_] = logaddexp(log_weight[bin_], w)
            log_s = logaddexp(log_s, w)
            hit_count[bin_] += 1
        if thin > 0 and t % thin == 0:
            p = int(pbox[0])
            tr_iter[p] = t
            tr_xi[p] = xi
            tr_v[p] = v
            if mode == MODE_ABF:
                tr_bias[p] = abf_bias_at_bin(force_sum, hit_count, bin_, dz)
            else:
                tr_bias[p] = (ldz + log_s) - log_weight[bin_]
            for j in range(d):
                tr_x[p, j] = x[j]
            pbox[0] = p + 1
        if debug and t % 10000 == 0:
            vchk = potential_any(tk, tp, y, K, m, kappa, alpha, g, h, x)
            xichk = vchk if rkind == RC_NEGLOGPOST else _project_rc(x, rkind, ridx, K)
            if vchk != v or xichk != xi or bin_of(xichk, zmin, zmax, dz, nb) != bin_:
                raise AssertionError(f"stale chain-state cache at iteration {t}")
    cache[0] = xi
    cache[1] = v
    cache[2] = f
    ibox[0] = bin_
    ibox[1] = fvalid
    sbox[0] = log_s


def run_sample_chunk(tk, tp, y, K, m, kappa, alpha, g, h,
                     rkind, ridx, zmin, zmax, dz, nb,
                     aprof,
                     x, tau, cache, ibox,
                     noise, unif, t0, thin,
                     tr_iter, tr_xi, tr_v, tr_bias, tr_x, pbox, abox,
                     debug):
    nsteps = noise.shape[0]
    d = noise.shape[1]
    xi = cache[0]
    v = cache[1]
    bin_ = int(ibox[0])
    xp = [0.0] * d
    for s in range(nsteps):
        t = t0 + s + 1
        ok = True
        for j in range(d):
            xp[j] = x[j] + tau[j] * noise[s, j]
        if tk == TK_MIXTURE:
            ok = support_mixture(xp, K)
        if ok:
            vp = potential_any(tk, tp, y, K, m, kappa, alpha, g, h, xp)
            if vp != vp:
                raise NumericError("NaN potential in sampling run", xp, t)
            xip = vp if rkind == RC_NEGLOGPOST else _project_rc(xp, rkind, ridx, K)
            ip = bin_clamped(xip, zmin, zmax, dz, nb)
            logr = (v - vp) + (aprof[ip] - aprof[bin_])
            u = unif[s]
            lu = log(u) if u > 0.0 else -inf
            if lu < logr:
                for j in range(d):
                    x[j] = xp[j]
                xi = xip
                v = vp
                bin_ = ip
                abox[0] += 1
        if thin > 0 and t % thin == 0:
            p = int(pbox[0])
            tr_iter[p] = t
            tr_xi[p] = xi
            tr_v[p] = v
            tr_bias[p] = aprof[bin_]
            for j in range(d):
                tr_x[p, j] = x[j]
            pbox[0] = p + 1
        if debug and t % 10000 == 0:
            vchk = potential_any(tk, tp, y, K, m, kappa, alpha, g, h, x)
            xichk = vchk if rkind == RC_NEGLOGPOST else _project_rc(x, rkind, ridx, K)
            if vchk != v or xichk != xi or bin_clamped(xichk, zmin, zmax, dz, nb) != bin_:
                raise AssertionError(f"stale chain-state cache at iteration {t}")
    cache[0] = xi
    cache[1] = v
    ibox[0] = bin_
