"""Compiled inner loops.

Everything here works on plain numpy arrays and returns status codes instead
of raising; the public wrappers in :mod:`unbflow.hermlin`, :mod:`unbflow.gp`
and :mod:`unbflow.opscale` turn those codes into exceptions.
"""
import numpy as np
from numba import njit

EPS = np.finfo(np.float64).eps
ROT_TOL = 2.0 * EPS


@njit(cache=True)
def jacobi_eigh(H, max_sweeps, abs_tol):
    """Cyclic Jacobi for a complex Hermitian matrix.

    Returns ``(w, U, sweeps)`` with ``U^H H U = diag(w)`` (unsorted) and
    ``sweeps = -1`` when the sweep cap was hit before convergence.
    A pair is skipped when ``|a_pq| <= tol * sqrt(|a_pp a_qq|)`` (relative
    test, keeps graded positive definite input accurate) or when
    ``|a_pq| <= abs_tol * ||H||_F``.  Pass ``abs_tol=0`` for graded input.
    """
    n = H.shape[0]
    a = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            a[i, j] = 0.5 * (H[i, j] + np.conj(H[j, i]))
    u = np.zeros((n, n), dtype=np.complex128)
    fro = 0.0
    for i in range(n):
        u[i, i] = 1.0
        for j in range(n):
            fro += a[i, j].real ** 2 + a[i, j].imag ** 2
    floor = np.sqrt(fro) * abs_tol
    tol = ROT_TOL * n
    w = np.empty(n)
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = np.abs(apq)
                if mag == 0.0:
                    continue
                app = a[p, p].real
                aqq = a[q, q].real
                if mag <= tol * np.sqrt(np.abs(app * aqq)) or mag <= floor:
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    continue
                rotated = True
                zeta = (aqq - app) / (2.0 * mag)
                t = 1.0 / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ph = apq / mag
                sph = s * ph
                sphc = s * np.conj(ph)
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - sphc * akq
                    a[k, q] = sph * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - sph * aqk
                    a[q, k] = sphc * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = app - t * mag
                a[q, q] = aqq + t * mag
                for k in range(n):
                    ukp = u[k, p]
                    ukq = u[k, q]
                    u[k, p] = c * ukp - sphc * ukq
                    u[k, q] = sph * ukp + c * ukq
        if not rotated:
            for i in range(n):
                w[i] = a[i, i].real
            return w, u, sweep + 1
    for i in range(n):
        w[i] = a[i, i].real
    return w, u, -1


@njit(cache=True)
def herm_exp_scaled(H, scale, max_sweeps):
    """``exp(scale * H)`` for Hermitian ``H``; second output is the sweep code."""
    w, u, sweeps = jacobi_eigh(H, max_sweeps, EPS)
    n = H.shape[0]
    out = np.zeros((n, n), dtype=np.complex128)
    for k in range(n):
        e = np.exp(scale * w[k])
        for i in range(n):
            uik = u[i, k] * e
            for j in range(n):
                out[i, j] += uik * np.conj(u[j, k])
    return out, sweeps


@njit(cache=True)
def graded_svd(C, ell, max_sweeps):
    """One-sided Jacobi SVD of ``G = C @ diag(exp(ell))`` without forming ``G``.

    Returns ``(W, logsv, Z, sweeps)`` with ``G Z = W diag(exp(logsv))``.
    Column scales may differ by far more than the float range; rotations
    are parametrised by ``t / r`` with ``r = exp(-|ell_j - ell_i|)`` so every
    stored quantity stays O(1).
    """
    n = C.shape[0]
    r_ = C.shape[1]
    c = C.copy()
    z = np.zeros((r_, r_), dtype=np.complex128)
    for i in range(r_):
        z[i, i] = 1.0
    tol = ROT_TOL * max(n, r_)
    for sweep in range(max_sweeps):
        rotated = False
        for i in range(r_ - 1):
            for j in range(i + 1, r_):
                a = 0.0
                b = 0.0
                g = 0.0 + 0.0j
                for k in range(n):
                    a += c[k, i].real ** 2 + c[k, i].imag ** 2
                    b += c[k, j].real ** 2 + c[k, j].imag ** 2
                    g += np.conj(c[k, i]) * c[k, j]
                mag = np.abs(g)
                if mag == 0.0 or mag <= tol * np.sqrt(a * b):
                    continue
                rotated = True
                ph = g / mag
                d = ell[j] - ell[i]
                if d <= 0.0:
                    r = np.exp(d)
                    rz = (r * r * b - a) / (2.0 * mag)
                else:
                    r = np.exp(-d)
                    rz = (b - r * r * a) / (2.0 * mag)
                tr = 1.0 / (np.abs(rz) + np.sqrt(r * r + rz * rz))
                if rz < 0.0:
                    tr = -tr
                t = tr * r
                cs = 1.0 / np.sqrt(1.0 + t * t)
                s = t * cs
                if d <= 0.0:
                    ci_cj = cs * tr * r * r
                    cj_ci = cs * tr
                else:
                    ci_cj = cs * tr
                    cj_ci = cs * tr * r * r
                for k in range(n):
                    cki = c[k, i]
                    ckj = c[k, j]
                    c[k, i] = cs * cki - ci_cj * np.conj(ph) * ckj
                    c[k, j] = cj_ci * ph * cki + cs * ckj
                for k in range(r_):
                    zki = z[k, i]
                    zkj = z[k, j]
                    z[k, i] = cs * zki - s * np.conj(ph) * zkj
                    z[k, j] = s * ph * zki + cs * zkj
        if not rotated:
            logsv = np.empty(r_)
            for i in range(r_):
                nrm = 0.0
                for k in range(n):
                    nrm += c[k, i].real ** 2 + c[k, i].imag ** 2
                nrm = np.sqrt(nrm)
                logsv[i] = ell[i] + np.log(nrm)
                for k in range(n):
                    c[k, i] = c[k, i] / nrm
            return c, logsv, z, sweep + 1
    return c, ell.copy(), z, -1


@njit(cache=True)
def _moment_parts(B, mu1, mu2):
    """Fill ``mu1, mu2`` with the moment map of a unit-norm tuple ``B``."""
    N, n, m = B.shape
    for i in range(n):
        for j in range(n):
            mu1[i, j] = 0.0
    for i in range(m):
        for j in range(m):
            mu2[i, j] = 0.0
    # rank-one accumulation over nonzero entries; sparse tuples stay cheap
    for l in range(N):
        for k in range(m):
            for i in range(n):
                bik = B[l, i, k]
                if bik == 0.0:
                    continue
                for j in range(n):
                    mu1[i, j] += bik * np.conj(B[l, j, k])
        for k in range(n):
            for i in range(m):
                bki = B[l, k, i]
                if bki == 0.0:
                    continue
                cb = np.conj(bki)
                for j in range(m):
                    mu2[i, j] += cb * B[l, k, j]
    # exact Hermitian symmetry and tracelessness
    sq = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            v = 0.5 * (mu1[i, j] + np.conj(mu1[j, i]))
            mu1[i, j] = v
            mu1[j, i] = np.conj(v)
            sq += 2.0 * (v.real ** 2 + v.imag ** 2)
    tr = 0.0
    for i in range(n):
        tr += mu1[i, i].real
    for i in range(n):
        mu1[i, i] = mu1[i, i].real - tr / n
        sq += mu1[i, i].real ** 2
    for i in range(m):
        for j in range(i + 1, m):
            v = 0.5 * (mu2[i, j] + np.conj(mu2[j, i]))
            mu2[i, j] = v
            mu2[j, i] = np.conj(v)
            sq += 2.0 * (v.real ** 2 + v.imag ** 2)
    tr = 0.0
    for i in range(m):
        tr += mu2[i, i].real
    for i in range(m):
        mu2[i, i] = mu2[i, i].real - tr / m
        sq += mu2[i, i].real ** 2
    return np.sqrt(sq)


@njit(cache=True)
def _left_mul(E, X):
    n = E.shape[0]
    cols = X.shape[1]
    out = np.zeros((n, cols), dtype=np.complex128)
    for i in range(n):
        for k in range(n):
            e = E[i, k]
            for j in range(cols):
                out[i, j] += e * X[k, j]
    return out


@njit(cache=True)
def gp_eval(omegas, loga, x):
    """Max-shifted log-sum-exp value and softmax-weighted gradient."""
    N, n = omegas.shape
    z = np.empty(N)
    zmax = -np.inf
    for l in range(N):
        acc = loga[l]
        for i in range(n):
            acc += omegas[l, i] * x[i]
        z[l] = acc
        if acc > zmax:
            zmax = acc
    s = 0.0
    for l in range(N):
        z[l] = np.exp(z[l] - zmax)
        s += z[l]
    wsum = 0.0
    for l in range(N):
        z[l] /= s
        wsum += z[l]
    grad = np.zeros(n)
    for l in range(N):
        wl = z[l] / wsum
        for i in range(n):
            grad[i] += wl * omegas[l, i]
    return zmax + np.log(s), grad


@njit(cache=True)
def gp_descent_kernel(omegas, loga, x0, iters, L, f_slack, g_slack):
    """Fixed-step Euclidean descent; returns the full trace plus a status.

    Status 0 ok, 1 value inequality violated, 2 gradient norm increased;
    ``bad`` is the iteration index of the violating iterate.
    """
    n = x0.shape[0]
    xs = np.empty((iters + 1, n))
    fs = np.empty(iters + 1)
    gs = np.empty((iters + 1, n))
    x = x0.copy()
    for i in range(iters + 1):
        f, g = gp_eval(omegas, loga, x)
        xs[i] = x
        fs[i] = f
        gs[i] = g
        if i > 0:
            gn2 = 0.0
            gp2 = 0.0
            for j in range(n):
                gn2 += g[j] * g[j]
                gp2 += gs[i - 1, j] * gs[i - 1, j]
            if f > fs[i - 1] - gn2 / L + f_slack:
                return xs, fs, gs, 1, i
            gpn = np.sqrt(gp2)
            if np.sqrt(gn2) > gpn + g_slack * max(1.0, gpn):
                return xs, fs, gs, 2, i
        if i < iters:
            for j in range(n):
                x[j] = x[j] - g[j] / L
    return xs, fs, gs, 0, iters


@njit(cache=True)
def _matmul(X, Y):
    n, r = X.shape
    c = Y.shape[1]
    out = np.zeros((n, c), dtype=np.complex128)
    for i in range(n):
        for k in range(r):
            x = X[i, k]
            if x == 0.0:
                continue
            for j in range(c):
                out[i, j] += x * Y[k, j]
    return out


@njit(cache=True)
def _rotate_frame(B, Wg, Wh):
    """``B_l <- Wg^H B_l Wh`` in place."""
    N, n, m = B.shape
    WgH = np.conj(Wg.T).copy()
    for l in range(N):
        B[l] = _matmul(_matmul(WgH, B[l].copy()), Wh)


@njit(cache=True)
def _deflate(B, F, lg, lh, log_thr):
    """Zero entries whose value in ``sigma A tau^H`` is at most ``exp(log_thr)``.

    Returns ``(F, count, backward)`` where ``backward`` is the Frobenius norm
    of the removed part of ``sigma A tau^H``.
    """
    N, n, m = B.shape
    count = 0
    back2 = 0.0
    for l in range(N):
        for i in range(n):
            for j in range(m):
                b = np.abs(B[l, i, j])
                if b == 0.0:
                    continue
                lm = np.log(b) + 0.5 * F - lg[i] - lh[j]
                if lm <= log_thr:
                    back2 += np.exp(2.0 * lm)
                    B[l, i, j] = 0.0
                    count += 1
    if count:
        nrm2 = 0.0
        for l in range(N):
            for i in range(n):
                for j in range(m):
                    nrm2 += B[l, i, j].real ** 2 + B[l, i, j].imag ** 2
        s = 1.0 / np.sqrt(nrm2)
        for l in range(N):
            for i in range(n):
                for j in range(m):
                    B[l, i, j] *= s
        F += np.log(nrm2)
    return F, count, np.sqrt(back2)


@njit(cache=True)
def descent_run(B, F, Vg, lg, Vh, lh, k0, steps, L, refresh, log_thr,
                mu_prev, dF_prev, max_sweeps, f_slack, mu_rel_slack, mu_abs_slack):
    """Run ``steps`` descent steps with periodic folding and deflation.

    State: unit tuple ``B`` in the spectral frame, ``F``, and the log-scaled
    factors ``g = diag(e^lg) Vg^H``, ``h = diag(e^lh) Vh^H``.  Arrays are
    updated in place; scalars are returned.

    At every global step ``k0 + it`` divisible by ``refresh`` the accumulated
    factors are folded by a graded SVD, ``B`` is rotated back into the
    spectral frame and deflated (skipped when ``log_thr = -inf``).  The last
    state of a call is folded but not deflated, so the schedule does not
    depend on how a run is split into calls.  Both descent inequalities are checked at
    every step against the tuple actually iterated: after a deflation the
    reference values are taken from the deflated tuple.

    Per-step records (index ``it`` is the state before step ``it``, with one
    extra entry for the final state) are the checked moment-map norms and
    values of F.  Status: 0 ok, 1 value inequality, 2 gradient norm
    increase, 3 eigensolver failure; ``bad`` is the local iteration index.
    """
    N, n, m = B.shape
    mus = np.empty(steps + 1)
    Fs = np.empty(steps + 1)
    cap = steps // refresh + 2
    ev_k = np.empty(cap, dtype=np.int64)
    ev_count = np.empty(cap, dtype=np.int64)
    ev_back = np.empty(cap)
    ev_jump = np.empty(cap)
    n_ev = 0
    mu1 = np.empty((n, n), dtype=np.complex128)
    mu2 = np.empty((m, m), dtype=np.complex128)
    Bt = np.empty((n, m), dtype=np.complex128)
    Pg = np.eye(n, dtype=np.complex128)
    Ph = np.eye(m, dtype=np.complex128)
    status = 0
    bad = -1
    for it in range(steps + 1):
        mu = _moment_parts(B, mu1, mu2)
        mus[it] = mu
        Fs[it] = F
        if mu_prev >= 0.0:
            if dF_prev > -mu * mu / L + f_slack:
                status, bad = 1, it
                break
            if mu > mu_prev * (1.0 + mu_rel_slack) + mu_abs_slack:
                status, bad = 2, it
                break
        on_grid = (k0 + it) % refresh == 0 and k0 + it > 0
        if it == steps or (on_grid and (it > 0 or k0 > 0)):
            Wg, lg1, Zg, sg = graded_svd(Pg, lg, max_sweeps)
            Wh, lh1, Zh, sh = graded_svd(Ph, lh, max_sweeps)
            if sg < 0 or sh < 0:
                status, bad = 3, it
                break
            Vg[:, :] = _matmul(Vg, Zg)
            Vh[:, :] = _matmul(Vh, Zh)
            lg[:] = lg1 - np.mean(lg1)
            lh[:] = lh1 - np.mean(lh1)
            _rotate_frame(B, Wg, Wh)
            Pg = np.eye(n, dtype=np.complex128)
            Ph = np.eye(m, dtype=np.complex128)
            if it < steps and on_grid and log_thr > -np.inf:
                F, count, back = _deflate(B, F, lg, lh, log_thr)
                if count:
                    mu_new = _moment_parts(B, mu1, mu2)
                    ev_k[n_ev] = it
                    ev_count[n_ev] = count
                    ev_back[n_ev] = back
                    ev_jump[n_ev] = mu_new - mu
                    n_ev += 1
                    mu = mu_new
            if it < steps:
                # the frame changed, so recompute the parts in it
                mu = _moment_parts(B, mu1, mu2)
        if it == steps:
            break
        E1, s1 = herm_exp_scaled(mu1, -0.5 / L, max_sweeps)
        E2, s2 = herm_exp_scaled(mu2, -0.5 / L, max_sweeps)
        if s1 < 0 or s2 < 0:
            status, bad = 3, it
            break
        nrm2 = 0.0
        for l in range(N):
            for i in range(n):
                for j in range(m):
                    Bt[i, j] = 0.0
            for k in range(n):
                for j in range(m):
                    b = B[l, k, j]
                    if b == 0.0:
                        continue
                    for i in range(n):
                        Bt[i, j] += E1[i, k] * b
            for i in range(n):
                for j in range(m):
                    B[l, i, j] = 0.0
            for i in range(n):
                for k in range(m):
                    b = Bt[i, k]
                    if b == 0.0:
                        continue
                    for j in range(m):
                        B[l, i, j] += b * E2[k, j]
            for i in range(n):
                for j in range(m):
                    nrm2 += B[l, i, j].real ** 2 + B[l, i, j].imag ** 2
        scale = 1.0 / np.sqrt(nrm2)
        for l in range(N):
            for i in range(n):
                for j in range(m):
                    B[l, i, j] *= scale
        dF = np.log(nrm2)
        F += dF
        Pg = _left_mul(E1, Pg)
        Ph = _left_mul(E2, Ph)
        mu_prev = mu
        dF_prev = dF
    return (mus, Fs, F, mu_prev, dF_prev, status, bad,
            ev_k[:n_ev], ev_count[:n_ev], ev_back[:n_ev], ev_jump[:n_ev])
