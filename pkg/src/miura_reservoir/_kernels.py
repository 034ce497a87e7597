"""Compiled inner loops for the bar-and-hinge integrator.

All quantities are SI (m, kg, N, s). Arrays are float64 and contiguous.
"""

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi


@njit(cache=True)
def _cross(a0, a1, a2, b0, b1, b2):
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


@njit(cache=True)
def dihedral(x, p, q, k, l):
    """Dihedral angle in (0, 2pi) of hinge p->q with left wing k and right wing l.

    Equals pi for a flat pair of triangles.
    """
    ex = x[q, 0] - x[p, 0]
    ey = x[q, 1] - x[p, 1]
    ez = x[q, 2] - x[p, 2]
    nl0, nl1, nl2 = _cross(ex, ey, ez, x[k, 0] - x[p, 0], x[k, 1] - x[p, 1], x[k, 2] - x[p, 2])
    nr0, nr1, nr2 = _cross(x[l, 0] - x[p, 0], x[l, 1] - x[p, 1], x[l, 2] - x[p, 2], ex, ey, ez)
    c0, c1, c2 = _cross(nl0, nl1, nl2, nr0, nr1, nr2)
    elen = np.sqrt(ex * ex + ey * ey + ez * ez)
    s = (c0 * ex + c1 * ey + c2 * ez) / elen
    c = nl0 * nr0 + nl1 * nr1 + nl2 * nr2
    return np.pi + np.arctan2(s, c)


@njit(cache=True)
def dihedral_gradient(x, p, q, k, l, out):
    """Write d(theta)/dx for the four hinge nodes into out[4, 3] (order p, q, k, l)."""
    ex = x[q, 0] - x[p, 0]
    ey = x[q, 1] - x[p, 1]
    ez = x[q, 2] - x[p, 2]
    e2 = ex * ex + ey * ey + ez * ez
    elen = np.sqrt(e2)
    ak0 = x[k, 0] - x[p, 0]
    ak1 = x[k, 1] - x[p, 1]
    ak2 = x[k, 2] - x[p, 2]
    al0 = x[l, 0] - x[p, 0]
    al1 = x[l, 1] - x[p, 1]
    al2 = x[l, 2] - x[p, 2]
    nl0, nl1, nl2 = _cross(ex, ey, ez, ak0, ak1, ak2)
    nr0, nr1, nr2 = _cross(al0, al1, al2, ex, ey, ez)
    nl2n = nl0 * nl0 + nl1 * nl1 + nl2 * nl2
    nr2n = nr0 * nr0 + nr1 * nr1 + nr2 * nr2
    gk = -elen / nl2n
    gl = -elen / nr2n
    sk = (ak0 * ex + ak1 * ey + ak2 * ez) / e2
    sl = (al0 * ex + al1 * ey + al2 * ez) / e2
    out[2, 0] = gk * nl0
    out[2, 1] = gk * nl1
    out[2, 2] = gk * nl2
    out[3, 0] = gl * nr0
    out[3, 1] = gl * nr1
    out[3, 2] = gl * nr2
    for d in range(3):
        out[0, d] = (sk - 1.0) * out[2, d] + (sl - 1.0) * out[3, d]
        out[1, d] = -sk * out[2, d] - sl * out[3, d]


@njit(cache=True)
def _wrap(dtheta):
    if dtheta > np.pi:
        return dtheta - TWO_PI
    if dtheta < -np.pi:
        return dtheta + TWO_PI
    return dtheta


@njit(cache=True)
def accumulate_forces(x, v, bars, bar_len0, bar_k, bar_c, hinges, hinge_theta0, hinge_k,
                      mass, alpha, gravity, force):
    """Overwrite ``force`` with bar, hinge, damping and gravity forces.

    ``x`` may carry trailing anchor points beyond ``mass.shape[0]``; forces on
    them are accumulated but ignored by the caller.
    """
    n = mass.shape[0]
    force[:, :] = 0.0
    for b in range(bars.shape[0]):
        i = bars[b, 0]
        j = bars[b, 1]
        d0 = x[j, 0] - x[i, 0]
        d1 = x[j, 1] - x[i, 1]
        d2 = x[j, 2] - x[i, 2]
        length = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        u0 = d0 / length
        u1 = d1 / length
        u2 = d2 / length
        rate = (v[j, 0] - v[i, 0]) * u0 + (v[j, 1] - v[i, 1]) * u1 + (v[j, 2] - v[i, 2]) * u2
        f = bar_k[b] * (length - bar_len0[b]) + bar_c[b] * rate
        force[i, 0] += f * u0
        force[i, 1] += f * u1
        force[i, 2] += f * u2
        force[j, 0] -= f * u0
        force[j, 1] -= f * u1
        force[j, 2] -= f * u2
    grad = np.empty((4, 3))
    for h in range(hinges.shape[0]):
        p = hinges[h, 0]
        q = hinges[h, 1]
        k = hinges[h, 2]
        l = hinges[h, 3]
        theta = dihedral(x, p, q, k, l)
        moment = -hinge_k[h] * _wrap(theta - hinge_theta0[h])
        dihedral_gradient(x, p, q, k, l, grad)
        for d in range(3):
            force[p, d] += moment * grad[0, d]
            force[q, d] += moment * grad[1, d]
            force[k, d] += moment * grad[2, d]
            force[l, d] += moment * grad[3, d]
    for i in range(n):
        for d in range(3):
            force[i, d] += mass[i] * (gravity[d] - alpha * v[i, d])


@njit(cache=True)
def elastic_energy(x, bars, bar_len0, bar_k, hinges, hinge_theta0, hinge_k):
    e = 0.0
    for b in range(bars.shape[0]):
        i = bars[b, 0]
        j = bars[b, 1]
        d0 = x[j, 0] - x[i, 0]
        d1 = x[j, 1] - x[i, 1]
        d2 = x[j, 2] - x[i, 2]
        stretch = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2) - bar_len0[b]
        e += 0.5 * bar_k[b] * stretch * stretch
    for h in range(hinges.shape[0]):
        dth = _wrap(dihedral(x, hinges[h, 0], hinges[h, 1], hinges[h, 2], hinges[h, 3]) - hinge_theta0[h])
        e += 0.5 * hinge_k[h] * dth * dth
    return e


@njit(cache=True)
def integrate(x, v, rest, free, clamped, anchor_rows, anchor_rest, anchor_ref,
              bars, bar_len0, bar_k, bar_c, hinges, hinge_theta0, hinge_k,
              mass, alpha, gravity, axis, drive_t0, drive_amp, drive_freq, drive_phase_t0,
              t0, dt, n_steps, record_every, force_bound, out_x, out_v):
    """Advance ``n_steps`` of semi-implicit Euler in place.

    Clamped nodes follow ``rest + u(t) * e_axis`` where u is the piecewise
    sinusoid described by the drive arrays (segment start times, amplitudes,
    frequencies, phase origin). Rows of ``out_x`` receive the state every
    ``record_every`` steps, starting with the state after the first block.

    Returns the number of the failing step, or -1 on success.
    """
    n = mass.shape[0]
    n_anchor = anchor_rows.shape[0]
    force = np.zeros_like(x)
    rec = 0
    inv_m = 1.0 / mass
    for step in range(n_steps):
        t = t0 + step * dt
        # anchors ride rigidly with their reference clamped node
        for a in range(n_anchor):
            row = anchor_rows[a]
            ref = anchor_ref[a]
            for d in range(3):
                x[row, d] = anchor_rest[a, d] + x[ref, d] - rest[ref, d]
        accumulate_forces(x, v, bars, bar_len0, bar_k, bar_c, hinges, hinge_theta0, hinge_k,
                          mass, alpha, gravity, force)
        for idx in range(free.shape[0]):
            i = free[idx]
            for d in range(3):
                f = force[i, d]
                if not (abs(f) <= force_bound):
                    return step
                v[i, d] += dt * f * inv_m[i]
                x[i, d] += dt * v[i, d]
        t_next = t + dt
        seg = 0
        for s in range(drive_t0.shape[0]):
            if t_next >= drive_t0[s]:
                seg = s
        tau = t_next - drive_phase_t0[seg]
        w = 2.0 * np.pi * drive_freq[seg]
        u = drive_amp[seg] * np.sin(w * tau)
        du = drive_amp[seg] * w * np.cos(w * tau)
        for idx in range(clamped.shape[0]):
            i = clamped[idx]
            for d in range(3):
                x[i, d] = rest[i, d]
                v[i, d] = 0.0
            x[i, axis] = rest[i, axis] + u
            v[i, axis] = du
        if record_every > 0 and (step + 1) % record_every == 0:
            for i in range(n):
                for d in range(3):
                    out_x[rec, i, d] = x[i, d]
                    out_v[rec, i, d] = v[i, d]
            rec += 1
    return -1
