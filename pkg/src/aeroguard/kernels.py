"""Compiled right-hand side of the coupled plant.

The numpy implementation in :class:`aeroguard.sim.CoupledPlant` is the
reference; these numba kernels evaluate the same equations with scalar loops
and are checked against it in the test suite.  Per-time wing quantities are
packed into flat rows (see :func:`pack_wing_entry`) so a whole gait period can
be tabulated once.
"""

import numpy as np
from numba import njit

# offsets inside a packed wing entry
_DUINV = 0
_DUA = 36
_BM = 42
_BC = 43
_BCD = 46
_BSB = 49
_BAB = 52
_BJ = 55
_BK = 64
_STRIPS = 73


def entry_size(n_strips):
    return _STRIPS + 15 * n_strips


def pack_wing_entry(wk, Du_inv, dua_qdd, bias):
    k = wk.strip_rho.shape[0]
    out = np.empty(entry_size(k))
    out[_DUINV:_DUA] = Du_inv.ravel()
    out[_DUA:_BM] = dua_qdd
    out[_BM] = bias.M
    out[_BC:_BCD] = bias.c
    out[_BCD:_BSB] = bias.c_dot
    out[_BSB:_BAB] = bias.s_b
    out[_BAB:_BJ] = bias.a_b
    out[_BJ:_BK] = bias.J.ravel()
    out[_BK:_STRIPS] = bias.K.ravel()
    strips = np.concatenate([wk.strip_rho, wk.strip_rho_dot, wk.strip_chord_dir,
                             wk.strip_span_dir, wk.strip_normal], axis=1)
    out[_STRIPS:] = strips.ravel()
    return out


@njit(cache=True, fastmath=False)
def _cross(a0, a1, a2, b0, b1, b2):
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


@njit(cache=True)
def rhs(x, thrust, W, scal, JG, JG_inv, anchors, attach, Pi1, Pi2, Pi3, Pi4,
        chord2, width2, out):
    """Write ``x_dot`` into ``out``; returns False on a non-finite result.

    ``scal = [m_G, g, k_band, L0, damping, bands_on, aero_on, rho, cd0, cd90]``.
    """
    mG, grav, kb, L0, damp = scal[0], scal[1], scal[2], scal[3], scal[4]
    bands_on = scal[5] > 0.5
    aero_on = scal[6] > 0.5
    rho_air, cd0, cd90 = scal[7], scal[8], scal[9]

    RG = x[6:15].reshape(3, 3)
    RA = x[24:33].reshape(3, 3)
    pG = x[0:3]
    vG = x[3:6]
    wG = x[15:18]
    pA = x[18:21]
    vA = x[21:24]
    wA = x[33:36]

    # bands
    FA = np.zeros(3)
    tA_w = np.zeros(3)
    tG_w = np.zeros(3)
    if bands_on:
        wGw = RG @ wG
        wAw = RA @ wA
        for b in range(anchors.shape[0]):
            rG = RG @ anchors[b]
            rA = RA @ attach[b]
            l0 = pA[0] + rA[0] - pG[0] - rG[0]
            l1 = pA[1] + rA[1] - pG[1] - rG[1]
            l2 = pA[2] + rA[2] - pG[2] - rG[2]
            if L0 > 0.0:
                L = np.sqrt(l0 * l0 + l1 * l1 + l2 * l2)
                s = kb * (L - L0) / L if L > 1e-12 else 0.0
            else:
                s = kb
            f0, f1, f2 = -s * l0, -s * l1, -s * l2
            if damp > 0.0:
                cg = _cross(wGw[0], wGw[1], wGw[2], rG[0], rG[1], rG[2])
                ca = _cross(wAw[0], wAw[1], wAw[2], rA[0], rA[1], rA[2])
                f0 -= damp * (vA[0] + ca[0] - vG[0] - cg[0])
                f1 -= damp * (vA[1] + ca[1] - vG[1] - cg[1])
                f2 -= damp * (vA[2] + ca[2] - vG[2] - cg[2])
            FA[0] += f0
            FA[1] += f1
            FA[2] += f2
            ta = _cross(rA[0], rA[1], rA[2], f0, f1, f2)
            tg = _cross(rG[0], rG[1], rG[2], -f0, -f1, -f2)
            for i in range(3):
                tA_w[i] += ta[i]
                tG_w[i] += tg[i]
    MG = RG.T @ tG_w
    MA = RA.T @ tA_w

    # guard
    for i in range(3):
        out[i] = vG[i]
        out[3 + i] = (RG[i, 2] * thrust[0] - FA[i]) / mG
    out[5] -= grav
    for i in range(3):
        c0 = _cross(RG[i, 0], RG[i, 1], RG[i, 2], wG[0], wG[1], wG[2])
        # row i of R hat(w) is R[i] x w
        out[6 + 3 * i + 0] = c0[0]
        out[6 + 3 * i + 1] = c0[1]
        out[6 + 3 * i + 2] = c0[2]
    Jw = JG @ wG
    gy = _cross(wG[0], wG[1], wG[2], Jw[0], Jw[1], Jw[2])
    tq = np.empty(3)
    for i in range(3):
        tq[i] = thrust[1 + i] + MG[i] - gy[i]
    dw = JG_inv @ tq
    for i in range(3):
        out[15 + i] = dw[i]

    # vehicle generalized force
    Du_inv = W[_DUINV:_DUA].reshape(6, 6)
    M = W[_BM]
    c = W[_BC:_BCD]
    cd = W[_BCD:_BSB]
    sb = W[_BSB:_BAB]
    ab = W[_BAB:_BJ]
    Jl = W[_BJ:_BK].reshape(3, 3)
    K = W[_BK:_STRIPS].reshape(3, 3)
    gb0, gb1, gb2 = -grav * RA[2, 0], -grav * RA[2, 1], -grav * RA[2, 2]
    wc = _cross(wA[0], wA[1], wA[2], c[0], c[1], c[2])
    wwc = _cross(wA[0], wA[1], wA[2], wc[0], wc[1], wc[2])
    wcd = _cross(wA[0], wA[1], wA[2], cd[0], cd[1], cd[2])
    JwA = Jl @ wA
    KwA = K @ wA
    wJw = _cross(wA[0], wA[1], wA[2], JwA[0], JwA[1], JwA[2])
    cg = _cross(c[0], c[1], c[2], gb0, gb1, gb2)
    gb = (gb0, gb1, gb2)
    FAb = RA.T @ FA
    rhs6 = np.empty(6)
    for i in range(3):
        rhs6[i] = -W[_DUA + i] - (wwc[i] + 2.0 * wcd[i] + sb[i] - M * gb[i]) + FAb[i]
        rhs6[3 + i] = -W[_DUA + 3 + i] - (wJw[i] + 2.0 * KwA[i] + ab[i] - cg[i]) + MA[i]

    nx = Pi1.shape[0]
    m = Pi3.shape[0]
    if aero_on:
        k = chord2.shape[0]
        S = W[_STRIPS:].reshape(k, 15)
        y1 = np.empty(k)
        uw = np.empty((k, 3))
        cw = np.empty((k, 3))
        sw = np.empty((k, 3))
        nw = np.empty((k, 3))
        for j in range(k):
            loc = _cross(wA[0], wA[1], wA[2], S[j, 0], S[j, 1], S[j, 2])
            l0 = loc[0] + S[j, 3]
            l1 = loc[1] + S[j, 4]
            l2 = loc[2] + S[j, 5]
            for i in range(3):
                uw[j, i] = -(vA[i] + RA[i, 0] * l0 + RA[i, 1] * l1 + RA[i, 2] * l2)
                cw[j, i] = RA[i, 0] * S[j, 6] + RA[i, 1] * S[j, 7] + RA[i, 2] * S[j, 8]
                sw[j, i] = RA[i, 0] * S[j, 9] + RA[i, 1] * S[j, 10] + RA[i, 2] * S[j, 11]
                nw[j, i] = RA[i, 0] * S[j, 12] + RA[i, 1] * S[j, 13] + RA[i, 2] * S[j, 14]
            y1[j] = uw[j, 0] * nw[j, 0] + uw[j, 1] * nw[j, 1] + uw[j, 2] * nw[j, 2]
        xiL = x[36:36 + nx]
        xiR = x[36 + nx:36 + 2 * nx]
        beta = np.empty(k)
        beta[:m] = Pi3 @ xiL + Pi4 @ y1[:m]
        beta[m:] = Pi3 @ xiR + Pi4 @ y1[m:]
        out[36:36 + nx] = Pi1 @ xiL + Pi2 @ y1[:m]
        out[36 + nx:36 + 2 * nx] = Pi1 @ xiR + Pi2 @ y1[m:]
        for j in range(k):
            us = uw[j, 0] * sw[j, 0] + uw[j, 1] * sw[j, 1] + uw[j, 2] * sw[j, 2]
            p0 = uw[j, 0] - us * sw[j, 0]
            p1 = uw[j, 1] - us * sw[j, 1]
            p2 = uw[j, 2] - us * sw[j, 2]
            U = np.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
            if U > 1e-12:
                h0, h1, h2 = p0 / U, p1 / U, p2 / U
            else:
                h0, h1, h2 = 0.0, 0.0, 0.0
            uc = h0 * cw[j, 0] + h1 * cw[j, 1] + h2 * cw[j, 2]
            un = h0 * nw[j, 0] + h1 * nw[j, 1] + h2 * nw[j, 2]
            lmag = rho_air * U * (np.pi * chord2[j] * beta[j]) * width2[j]
            dmag = 0.5 * rho_air * U * U * chord2[j] * width2[j] * (cd0 + cd90 * un * un)
            fw0 = lmag * (un * cw[j, 0] - uc * nw[j, 0]) + dmag * h0
            fw1 = lmag * (un * cw[j, 1] - uc * nw[j, 1]) + dmag * h1
            fw2 = lmag * (un * cw[j, 2] - uc * nw[j, 2]) + dmag * h2
            fb0 = RA[0, 0] * fw0 + RA[1, 0] * fw1 + RA[2, 0] * fw2
            fb1 = RA[0, 1] * fw0 + RA[1, 1] * fw1 + RA[2, 1] * fw2
            fb2 = RA[0, 2] * fw0 + RA[1, 2] * fw1 + RA[2, 2] * fw2
            rhs6[0] += fb0
            rhs6[1] += fb1
            rhs6[2] += fb2
            tb = _cross(S[j, 0], S[j, 1], S[j, 2], fb0, fb1, fb2)
            rhs6[3] += tb[0]
            rhs6[4] += tb[1]
            rhs6[5] += tb[2]
    else:
        for i in range(36, 36 + 2 * nx):
            out[i] = 0.0

    nu = Du_inv @ rhs6
    for i in range(3):
        out[18 + i] = vA[i]
        out[21 + i] = RA[i, 0] * nu[0] + RA[i, 1] * nu[1] + RA[i, 2] * nu[2]
        c0 = _cross(RA[i, 0], RA[i, 1], RA[i, 2], wA[0], wA[1], wA[2])
        out[24 + 3 * i + 0] = c0[0]
        out[24 + 3 * i + 1] = c0[1]
        out[24 + 3 * i + 2] = c0[2]
        out[33 + i] = nu[3 + i]
    for i in range(out.shape[0]):
        if not np.isfinite(out[i]):
            return False
    return True


@njit(cache=True)
def _polar(R):
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0.0:
        U[:, 2] *= -1.0
        Q = U @ Vt
    return Q


@njit(cache=True)
def rk4_substeps(x, k0, nsub, dt, thrust, table, period, scal, JG, JG_inv, anchors,
                 attach, Pi1, Pi2, Pi3, Pi4, chord2, width2):
    """Advance ``nsub`` RK4 steps from half-step index ``k0``.

    Row ``i % period`` of ``table`` holds the wing entry at half-step ``i``.
    Returns the new state and the number of completed steps (``< nsub`` when a
    non-finite value was met).
    """
    n = x.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xs = x.copy()
    tmp = np.empty(n)
    for s in range(nsub):
        h = k0 + 2 * s
        W0 = table[h % period]
        W1 = table[(h + 1) % period]
        W2 = table[(h + 2) % period]
        if not rhs(xs, thrust, W0, scal, JG, JG_inv, anchors, attach, Pi1, Pi2, Pi3, Pi4,
                   chord2, width2, k1):
            return xs, s
        for i in range(n):
            tmp[i] = xs[i] + 0.5 * dt * k1[i]
        if not rhs(tmp, thrust, W1, scal, JG, JG_inv, anchors, attach, Pi1, Pi2, Pi3, Pi4,
                   chord2, width2, k2):
            return xs, s
        for i in range(n):
            tmp[i] = xs[i] + 0.5 * dt * k2[i]
        if not rhs(tmp, thrust, W1, scal, JG, JG_inv, anchors, attach, Pi1, Pi2, Pi3, Pi4,
                   chord2, width2, k3):
            return xs, s
        for i in range(n):
            tmp[i] = xs[i] + dt * k3[i]
        if not rhs(tmp, thrust, W2, scal, JG, JG_inv, anchors, attach, Pi1, Pi2, Pi3, Pi4,
                   chord2, width2, k4):
            return xs, s
        for i in range(n):
            xs[i] = xs[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not np.isfinite(xs[i]):
                return xs, s
        xs[6:15] = _polar(xs[6:15].reshape(3, 3).copy()).ravel()
        xs[24:33] = _polar(xs[24:33].reshape(3, 3).copy()).ravel()
    return xs, nsub
