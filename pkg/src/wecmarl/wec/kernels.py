"""Compiled inner loops for the tether kinematics and the rigid-body integrator.

Everything here works on plain float64 arrays so numba can compile it once
and cache it.  Model constants travel in four packed arrays (see ``pack``)
to keep per-call dispatch cheap, and the loops are written scalar-style to
avoid small temporaries.  Python-facing wrappers live in the sibling modules.
"""

from __future__ import annotations

import numpy as np
from numba import njit

SEMI_IMPLICIT_EULER = 0
RK4 = 1

# fault bits
FAULT_TENSION = 1  # tension limit needed more generator force than rated
FAULT_ROTATION = 2  # left the small-rotation regime
FAULT_GEOMETRY = 4  # attachment coincident with anchor

# accumulator layout: excitation work, radiated energy, captured energy x3, int F_gen dt x3
ACC_EXC = 0
ACC_RAD = 1
ACC_CAPT = 2
ACC_FGEN = 5
N_ACC = 8

# layout of the vector returned by ``advance``
OUT_E = 0
OUT_V = 6
OUT_ACC = 12
OUT_A = 20
OUT_G = 26
OUT_GD = 29
OUT_GDD = 32
OUT_T = 35
OUT_FGEN = 38
N_OUT = 41

# rows of the packed ``vecs`` array
_MASK, _PRELOAD, _SPRING, _REST, _PRETENSION, _LIMITS, _ANCHORS = 0, 1, 2, 3, 4, 5, 6

MAX_ROTATION = 0.5


def pack(inverse_mass, damping, stiffness, gain, mask, anchors, attachments, preload,
         spring, rest, pretension, f_max, t_min, t_max):
    """Model constants as (mats, vecs, gain, attach) for ``advance``."""
    mats = np.ascontiguousarray(np.stack([inverse_mass, damping, stiffness]), dtype=float)
    vecs = np.zeros((9, 6))
    vecs[_MASK] = mask
    vecs[_PRELOAD] = preload
    vecs[_SPRING, :3] = spring
    vecs[_REST, :3] = rest
    vecs[_PRETENSION, :3] = pretension
    vecs[_LIMITS, :3] = (f_max, t_min, t_max)
    vecs[_ANCHORS:_ANCHORS + 3, :3] = anchors
    return (mats, vecs, np.ascontiguousarray(gain, dtype=float),
            np.ascontiguousarray(attachments, dtype=float))


@njit(cache=True)
def _rotation(ang, rot):
    """rot[0] = R = Rz(yaw) Ry(pitch) Rx(roll); rot[1..3] = dR/droll, dR/dpitch, dR/dyaw."""
    cf, sf = np.cos(ang[0]), np.sin(ang[0])
    ct, st = np.cos(ang[1]), np.sin(ang[1])
    cp, sp = np.cos(ang[2]), np.sin(ang[2])
    rot[0, 0, 0] = cp * ct
    rot[0, 0, 1] = cp * st * sf - sp * cf
    rot[0, 0, 2] = cp * st * cf + sp * sf
    rot[0, 1, 0] = sp * ct
    rot[0, 1, 1] = sp * st * sf + cp * cf
    rot[0, 1, 2] = sp * st * cf - cp * sf
    rot[0, 2, 0] = -st
    rot[0, 2, 1] = ct * sf
    rot[0, 2, 2] = ct * cf

    rot[1, 0, 0] = 0.0
    rot[1, 0, 1] = cp * st * cf + sp * sf
    rot[1, 0, 2] = -cp * st * sf + sp * cf
    rot[1, 1, 0] = 0.0
    rot[1, 1, 1] = sp * st * cf - cp * sf
    rot[1, 1, 2] = -sp * st * sf - cp * cf
    rot[1, 2, 0] = 0.0
    rot[1, 2, 1] = ct * cf
    rot[1, 2, 2] = -ct * sf

    rot[2, 0, 0] = -cp * st
    rot[2, 0, 1] = cp * ct * sf
    rot[2, 0, 2] = cp * ct * cf
    rot[2, 1, 0] = -sp * st
    rot[2, 1, 1] = sp * ct * sf
    rot[2, 1, 2] = sp * ct * cf
    rot[2, 2, 0] = -ct
    rot[2, 2, 1] = -st * sf
    rot[2, 2, 2] = -st * cf

    rot[3, 0, 0] = -sp * ct
    rot[3, 0, 1] = -sp * st * sf - cp * cf
    rot[3, 0, 2] = -sp * st * cf + cp * sf
    rot[3, 1, 0] = cp * ct
    rot[3, 1, 1] = cp * st * sf - sp * cf
    rot[3, 1, 2] = cp * st * cf + sp * sf
    rot[3, 2, 0] = 0.0
    rot[3, 2, 1] = 0.0
    rot[3, 2, 2] = 0.0


@njit(cache=True)
def _kin(e, vecs, attach, rot, g, jac):
    """Leg lengths into ``g`` and dg/de into ``jac``; True if a leg is degenerate."""
    _rotation(e[3:6], rot)
    bad = False
    for k in range(3):
        a0, a1, a2 = attach[k, 0], attach[k, 1], attach[k, 2]
        d0 = e[0] - vecs[_ANCHORS + k, 0] + rot[0, 0, 0] * a0 + rot[0, 0, 1] * a1 + rot[0, 0, 2] * a2
        d1 = e[1] - vecs[_ANCHORS + k, 1] + rot[0, 1, 0] * a0 + rot[0, 1, 1] * a1 + rot[0, 1, 2] * a2
        d2 = e[2] - vecs[_ANCHORS + k, 2] + rot[0, 2, 0] * a0 + rot[0, 2, 1] * a1 + rot[0, 2, 2] * a2
        length = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        if length < 1e-9:
            bad = True
            length = 1e-9
        g[k] = length
        u0, u1, u2 = d0 / length, d1 / length, d2 / length
        jac[k, 0] = u0
        jac[k, 1] = u1
        jac[k, 2] = u2
        for r in range(1, 4):
            jac[k, 2 + r] = (u0 * (rot[r, 0, 0] * a0 + rot[r, 0, 1] * a1 + rot[r, 0, 2] * a2)
                             + u1 * (rot[r, 1, 0] * a0 + rot[r, 1, 1] * a1 + rot[r, 1, 2] * a2)
                             + u2 * (rot[r, 2, 0] * a0 + rot[r, 2, 1] * a1 + rot[r, 2, 2] * a2))
    return bad


def tether_kinematics(pose, anchors, attach):
    """Leg lengths g (3,), Jacobian dg/de (3, 6) and a degenerate flag."""
    vecs = np.zeros((9, 6))
    vecs[_ANCHORS:_ANCHORS + 3, :3] = anchors
    g = np.empty(3)
    jac = np.empty((3, 6))
    bad = _kin(np.ascontiguousarray(pose, dtype=float), vecs, np.ascontiguousarray(attach, dtype=float),
               np.empty((4, 3, 3)), g, jac)
    return g, jac, bool(bad)


@njit(cache=True)
def pto_clamp(cmd, g, k_s, g0, f_max, t_min, t_max):
    """Spring + generator force for one leg with rating and tension clamps.

    Returns (F_pto, F_gen_applied, tension, infeasible).  The tension clamp
    is applied after the rating clamp and wins when both cannot hold.
    """
    f_spring = -k_s * (g - g0)
    f_gen = min(max(cmd, -f_max), f_max)
    tension = -(f_spring + f_gen)
    if tension < t_min:
        tension = t_min
        f_gen = -t_min - f_spring
    elif tension > t_max:
        tension = t_max
        f_gen = -t_max - f_spring
    infeasible = abs(f_gen) > f_max * (1.0 + 1e-12)
    return f_spring + f_gen, f_gen, tension, infeasible


@njit(cache=True)
def _rhs(e, v, w, cmd, mats, vecs, gain, attach, work, rot, a_out, rate):
    """Acceleration into ``a_out`` and energy/force rates into ``rate``; returns fault bits.

    ``work`` rows: 0 g, 1 gdot, 2 tension, 3 F_gen, 4 generalised force,
    5..7 Jacobian; ``rot`` is (4, 3, 3) scratch.
    """
    g, gd, ten, fg, f = work[0, :3], work[1, :3], work[2, :3], work[3, :3], work[4]
    jac = work[5:8]
    flags = FAULT_GEOMETRY if _kin(e, vecs, attach, rot, g, jac) else 0
    f_max, t_min, t_max = vecs[_LIMITS, 0], vecs[_LIMITS, 1], vecs[_LIMITS, 2]
    p_exc = 0.0
    for i in range(6):
        fe = gain[i, 0] * w[0] + gain[i, 1] * w[1] + gain[i, 2] * w[2]
        p_exc += fe * v[i]
        f[i] = fe + vecs[_PRELOAD, i]
    rate[ACC_EXC] = p_exc
    for k in range(3):
        s = 0.0
        for i in range(6):
            s += jac[k, i] * v[i]
        gd[k] = s
        fp, fgk, tk, bad = pto_clamp(cmd[k], g[k], vecs[_SPRING, k], vecs[_REST, k], f_max, t_min, t_max)
        if bad:
            flags |= FAULT_TENSION
        ten[k] = tk
        fg[k] = fgk
        rate[ACC_CAPT + k] = -fgk * s
        rate[ACC_FGEN + k] = fgk
        # PTO force plus the static pretension pulling the buoy toward the anchor
        ft = fp - vecs[_PRETENSION, k]
        for i in range(6):
            f[i] += jac[k, i] * ft
    p_rad = 0.0
    for i in range(6):
        bv = 0.0
        kx = 0.0
        for j in range(6):
            bv += mats[1, i, j] * v[j]
            kx += mats[2, i, j] * e[j]
        p_rad += v[i] * bv
        f[i] -= bv + kx
    rate[ACC_RAD] = p_rad
    for i in range(6):
        s = 0.0
        for j in range(6):
            s += mats[0, i, j] * f[j]
        a_out[i] = s * vecs[_MASK, i]
    return flags


@njit(cache=True)
def advance(e0, v0, wave, i0, n_sub, h, method, cmd, mats, vecs, gain, attach):
    """Integrate ``n_sub`` substeps of size ``h`` holding ``cmd`` constant.

    ``wave`` is (n, 3) elevation/rate/acceleration sampled every ``h/2``;
    substep ``s`` starts at row ``i0 + 2*s``.  Returns (out, flags) with
    ``out`` laid out per the OUT_* offsets: final pose and velocity, energy
    accumulators, then acceleration, g, gdot, gddot, tension and F_gen at
    the end of the interval.
    """
    out = np.zeros(N_OUT)
    e = out[OUT_E:OUT_E + 6]
    v = out[OUT_V:OUT_V + 6]
    acc = out[OUT_ACC:OUT_ACC + N_ACC]
    e[:] = e0
    v[:] = v0
    work = np.empty((8, 6))
    rot = np.empty((4, 3, 3))
    ke = np.empty((4, 6))
    kv = np.empty((4, 6))
    rates = np.empty((4, N_ACC))
    es = np.empty(6)
    vs = np.empty(6)
    flags = 0
    for s in range(n_sub):
        i = i0 + 2 * s
        if method == SEMI_IMPLICIT_EULER:
            flags |= _rhs(e, v, wave[i], cmd, mats, vecs, gain, attach, work, rot, kv[0], rates[0])
            for j in range(6):
                v[j] += h * kv[0, j]
                e[j] += h * v[j]
            for j in range(N_ACC):
                acc[j] += h * rates[0, j]
        else:
            for st in range(4):
                if st == 0:
                    for j in range(6):
                        es[j] = e[j]
                        vs[j] = v[j]
                    row = i
                else:
                    c = h if st == 3 else 0.5 * h
                    for j in range(6):
                        es[j] = e[j] + c * ke[st - 1, j]
                        vs[j] = v[j] + c * kv[st - 1, j]
                    row = i + 2 if st == 3 else i + 1
                flags |= _rhs(es, vs, wave[row], cmd, mats, vecs, gain, attach, work, rot, kv[st], rates[st])
                for j in range(6):
                    ke[st, j] = vs[j]
            w6 = h / 6.0
            for j in range(6):
                e[j] += w6 * (ke[0, j] + 2.0 * ke[1, j] + 2.0 * ke[2, j] + ke[3, j])
                v[j] += w6 * (kv[0, j] + 2.0 * kv[1, j] + 2.0 * kv[2, j] + kv[3, j])
            for j in range(N_ACC):
                acc[j] += w6 * (rates[0, j] + 2.0 * rates[1, j] + 2.0 * rates[2, j] + rates[3, j])
        for r in range(3, 6):
            if abs(e[r]) >= MAX_ROTATION:
                flags |= FAULT_ROTATION

    # end-of-interval quantities for observations and logging
    a = out[OUT_A:OUT_A + 6]
    flags |= _rhs(e, v, wave[i0 + 2 * n_sub], cmd, mats, vecs, gain, attach, work, rot, a, rates[0])
    out[OUT_G:OUT_G + 3] = work[0, :3]
    out[OUT_GD:OUT_GD + 3] = work[1, :3]
    out[OUT_T:OUT_T + 3] = work[2, :3]
    out[OUT_FGEN:OUT_FGEN + 3] = work[3, :3]
    # gddot = J a + (dJ/dt) v, the second term by a central difference along v
    gdd = out[OUT_GDD:OUT_GDD + 3]
    for k in range(3):
        s_ = 0.0
        for j in range(6):
            s_ += work[5 + k, j] * a[j]
        gdd[k] = s_
    speed = np.sqrt(np.sum(v * v))
    if speed > 0.0:
        delta = 1e-5 / speed
        gp = np.empty(3)
        jp = np.empty((3, 6))
        jm = np.empty((3, 6))
        _kin(e + delta * v, vecs, attach, rot, gp, jp)
        _kin(e - delta * v, vecs, attach, rot, gp, jm)
        for k in range(3):
            s_ = 0.0
            for j in range(6):
                s_ += (jp[k, j] - jm[k, j]) * v[j]
            gdd[k] += s_ / (2.0 * delta)
    return out, flags


@njit(cache=True)
def wave_grid(omega, amp, phase, t0, dt, n):
    """(n, 3) samples of z, dz, ddz at ``t0 + i*dt``.

    Each component is advanced by the angle-addition recurrence and
    re-anchored with a direct cos/sin every 64 samples, so rounding drift
    stays at the 1e-14 level.
    """
    out = np.zeros((n, 3))
    for j in range(len(omega)):
        w = omega[j]
        a = amp[j]
        cd, sd = np.cos(w * dt), np.sin(w * dt)
        c = 0.0
        s = 0.0
        for i in range(n):
            if i % 64 == 0:
                arg = w * (t0 + i * dt) + phase[j]
                c, s = np.cos(arg), np.sin(arg)
            else:
                c, s = c * cd - s * sd, s * cd + c * sd
            out[i, 0] += a * c
            out[i, 1] -= a * w * s
            out[i, 2] -= a * w * w * c
    return out
