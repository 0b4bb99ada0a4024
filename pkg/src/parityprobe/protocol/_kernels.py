"""Compiled inner loops of the density-matrix engine.

State layout: ``S[p, m, a, b, x, y]`` with input pair p, register-decay mask
m, ancilla indices a, b and cavity indices x, y.  ``active[a, b]`` marks the
ancilla blocks that may be nonzero; the others are skipped and stay zero.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def jumps(S, out, cav_w, cond, gamma, gamma_anc, active):
    """Jump (recycling) part of the Lindbladian.

    ``cav_w[x, y] = kappa*sqrt((x+1)(y+1))``; ``cond[p, m, q]`` is 1 when
    register qubit q is excited on both sides of block (p, m); ``gamma[q]``
    are register relaxation rates.
    """
    P, M, A, B, N, _ = S.shape
    for p in range(P):
        for m in range(M):
            for a in range(A):
                for b in range(B):
                    if not active[a, b]:
                        continue
                    for x in range(N):
                        for y in range(N):
                            v = 0j
                            if x < N - 1 and y < N - 1:
                                v += cav_w[x, y] * S[p, m, a, b, x + 1, y + 1]
                            for q in range(3):
                                src = m ^ (4 >> q)
                                if cond[p, src, q] and gamma[q] != 0.0:
                                    v += gamma[q] * S[p, src, a, b, x, y]
                            if a == 0 and b == 0 and gamma_anc != 0.0:
                                v += gamma_anc * S[p, m, 1, 1, x, y]
                            out[p, m, a, b, x, y] = v


@numba.njit(cache=True)
def _combine(kind, u, E1, E2, h, k1, k2, k3, k4, tmp, active):
    P, M, A, B, N, _ = u.shape
    hh = 0.5 * h
    for p in range(P):
        for m in range(M):
            for a in range(A):
                for b in range(B):
                    if not active[a, b]:
                        continue
                    for x in range(N):
                        for y in range(N):
                            i = (p, m, a, b, x, y)
                            if kind == 1:
                                tmp[i] = E2[i] * (u[i] + hh * k1[i])
                            elif kind == 2:
                                tmp[i] = E2[i] * u[i] + hh * k2[i]
                            elif kind == 3:
                                tmp[i] = E1[i] * u[i] + h * E2[i] * k3[i]
                            else:
                                u[i] = E1[i] * u[i] + (h / 6) * (
                                    E1[i] * k1[i] + 2 * E2[i] * (k2[i] + k3[i]) + k4[i])


@numba.njit(cache=True)
def lawson_rk4(u, E1, E2, h, steps, cav_w, cond, gamma, gamma_anc, active):
    """``steps`` integrating-factor RK4 steps of size h, in place on ``u``.

    E1 = exp(G h) and E2 = exp(G h / 2) elementwise.
    """
    k1 = np.zeros_like(u)
    k2 = np.zeros_like(u)
    k3 = np.zeros_like(u)
    k4 = np.zeros_like(u)
    tmp = np.zeros_like(u)
    for _ in range(steps):
        jumps(u, k1, cav_w, cond, gamma, gamma_anc, active)
        _combine(1, u, E1, E2, h, k1, k2, k3, k4, tmp, active)
        jumps(tmp, k2, cav_w, cond, gamma, gamma_anc, active)
        _combine(2, u, E1, E2, h, k1, k2, k3, k4, tmp, active)
        jumps(tmp, k3, cav_w, cond, gamma, gamma_anc, active)
        _combine(3, u, E1, E2, h, k1, k2, k3, k4, tmp, active)
        jumps(tmp, k4, cav_w, cond, gamma, gamma_anc, active)
        _combine(4, u, E1, E2, h, k1, k2, k3, k4, tmp, active)
