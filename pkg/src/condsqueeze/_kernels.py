"""Compiled moment-equation kernels.

The moment vector is unpacked into reduced matrices of one atom and one atom
pair, which makes the equations of motion compact:

    R[m, l]             = <s_lm>                 (3x3, Hermitian, tr = 1)
    M[m, l]             = <a s_lm>               (3x3, tr = <a>)
    Q[3m+q, 3l+p]       = <s_lm(1) s_pq(2)>      (9x9, Hermitian)

so that <X> = tr(x R), <a X> = tr(x M), <a^dag X> = tr(x M^dag) for a single
atom operator with matrix x.  Third-order moments are replaced by their
cumulant closure before they enter the right-hand side.

Level indices are zero-based here: 0 = |1>, 1 = |2>, 2 = |3>.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .model import SLOT_INDEX, SLOTS, N_SLOTS, PAIR_START

# coefficient vector layout
C_N, C_WC, C_FRE, C_FIM, C_G, C_KAPPA, C_GAMMA, C_CHI, C_MEAS, C_PHASE = range(10)
N_COEFFS = 10


def _pair_tables():
    """Index table for filling Q from stored slots.

    For each of the 81 ordered pairs (l,m),(p,q) not involving s11 returns
    (slot, conj) such that <s_lm s_pq> = slot value or its conjugate.
    """
    src = -np.ones((3, 3, 3, 3), dtype=np.int64)
    cnj = np.zeros((3, 3, 3, 3), dtype=np.int64)
    for k, name in enumerate(SLOTS[PAIR_START:]):
        x, y = name.split("*")
        l, m = int(x[1]) - 1, int(x[2]) - 1
        p, q = int(y[1]) - 1, int(y[2]) - 1
        for (a, b, c, d, conj) in (
            (l, m, p, q, 0), (p, q, l, m, 0), (m, l, q, p, 1), (q, p, m, l, 1)
        ):
            if src[a, b, c, d] < 0:
                src[a, b, c, d] = PAIR_START + k
                cnj[a, b, c, d] = conj
    return src, cnj


PAIR_SRC, PAIR_CONJ = _pair_tables()
_STORED_PAIRS = np.array(
    [[int(n[1]) - 1, int(n[2]) - 1, int(n[5]) - 1, int(n[6]) - 1] for n in SLOTS[PAIR_START:]],
    dtype=np.int64,
)

I_A = SLOT_INDEX["a"]
I_S12, I_S13, I_S23, I_S22, I_S33 = (SLOT_INDEX[s] for s in ("s12", "s13", "s23", "s22", "s33"))
I_N, I_M = SLOT_INDEX["adag*a"], SLOT_INDEX["a*a"]
I_AD12, I_AD13, I_AD23, I_AD22, I_AD33 = (
    SLOT_INDEX[s] for s in ("adag*s12", "adag*s13", "adag*s23", "adag*s22", "adag*s33")
)
I_A12, I_A13, I_A23, I_A32 = (SLOT_INDEX[s] for s in ("a*s12", "a*s13", "a*s23", "a*s32"))


@njit(cache=True)
def unpack(y):
    alpha = y[I_A]
    n = y[I_N]
    m = y[I_M]
    R = np.zeros((3, 3), dtype=np.complex128)
    R[1, 0] = y[I_S12]
    R[2, 0] = y[I_S13]
    R[2, 1] = y[I_S23]
    R[0, 1] = np.conj(y[I_S12])
    R[0, 2] = np.conj(y[I_S13])
    R[1, 2] = np.conj(y[I_S23])
    R[1, 1] = y[I_S22]
    R[2, 2] = y[I_S33]
    R[0, 0] = 1.0 - y[I_S22] - y[I_S33]

    M = np.zeros((3, 3), dtype=np.complex128)
    M[1, 0] = y[I_A12]
    M[2, 0] = y[I_A13]
    M[2, 1] = y[I_A23]
    M[0, 1] = np.conj(y[I_AD12])
    M[0, 2] = np.conj(y[I_AD13])
    M[1, 2] = np.conj(y[I_AD23])
    M[1, 1] = np.conj(y[I_AD22])
    M[2, 2] = np.conj(y[I_AD33])
    M[0, 0] = alpha - M[1, 1] - M[2, 2]

    # P[l, m, p, q] = <s_lm(1) s_pq(2)>
    P = np.zeros((3, 3, 3, 3), dtype=np.complex128)
    for l in range(3):
        for mm in range(3):
            if l == 0 and mm == 0:
                continue
            for p in range(3):
                for q in range(3):
                    if p == 0 and q == 0:
                        continue
                    k = PAIR_SRC[l, mm, p, q]
                    v = y[k]
                    if PAIR_CONJ[l, mm, p, q] == 1:
                        v = np.conj(v)
                    P[l, mm, p, q] = v
    # s11 = 1 - s22 - s33 on either atom
    for p in range(3):
        for q in range(3):
            if p == 0 and q == 0:
                continue
            v = R[q, p] - P[1, 1, p, q] - P[2, 2, p, q]
            P[0, 0, p, q] = v
            P[p, q, 0, 0] = v
    P[0, 0, 0, 0] = R[0, 0] - P[0, 0, 1, 1] - P[0, 0, 2, 2]

    Q = np.zeros((9, 9), dtype=np.complex128)
    for l in range(3):
        for mm in range(3):
            for p in range(3):
                for q in range(3):
                    Q[3 * mm + q, 3 * l + p] = P[l, mm, p, q]
    return alpha, n, m, R, M, Q


@njit(cache=True)
def pack(alpha, n, m, R, M, Q, out):
    out[I_A] = alpha
    out[I_S12] = R[1, 0]
    out[I_S13] = R[2, 0]
    out[I_S23] = R[2, 1]
    out[I_S22] = R[1, 1]
    out[I_S33] = R[2, 2]
    out[I_N] = n
    out[I_M] = m
    out[I_AD12] = np.conj(M[0, 1])
    out[I_AD13] = np.conj(M[0, 2])
    out[I_AD23] = np.conj(M[1, 2])
    out[I_AD22] = np.conj(M[1, 1])
    out[I_AD33] = np.conj(M[2, 2])
    out[I_A12] = M[1, 0]
    out[I_A13] = M[2, 0]
    out[I_A23] = M[2, 1]
    out[I_A32] = M[1, 2]
    for k in range(_STORED_PAIRS.shape[0]):
        l = _STORED_PAIRS[k, 0]
        mm = _STORED_PAIRS[k, 1]
        p = _STORED_PAIRS[k, 2]
        q = _STORED_PAIRS[k, 3]
        out[PAIR_START + k] = Q[3 * mm + q, 3 * l + p]


@njit(cache=True)
def _dissipator(Y, gamma, chi):
    """Spontaneous emission |3>->|2> and |2>/|3> dephasing acting on a 3x3 block."""
    z = np.array([0.0, 1.0, -1.0])
    out = np.empty_like(Y)
    for i in range(3):
        for j in range(3):
            rate = 0.25 * chi * (z[i] - z[j]) ** 2
            if i == 2:
                rate += 0.5 * gamma
            if j == 2:
                rate += 0.5 * gamma
            out[i, j] = -rate * Y[i, j]
    out[1, 1] += gamma * Y[2, 2]
    return out


@njit(cache=True)
def _dissipator_pair(Q, gamma, chi):
    z = np.array([0.0, 1.0, -1.0])
    out = np.empty_like(Q)
    for i in range(3):
        for k in range(3):
            for j in range(3):
                for l in range(3):
                    rate = 0.25 * chi * ((z[i] - z[j]) ** 2 + (z[k] - z[l]) ** 2)
                    if i == 2:
                        rate += 0.5 * gamma
                    if j == 2:
                        rate += 0.5 * gamma
                    if k == 2:
                        rate += 0.5 * gamma
                    if l == 2:
                        rate += 0.5 * gamma
                    out[3 * i + k, 3 * j + l] = -rate * Q[3 * i + k, 3 * j + l]
    for k in range(3):
        for l in range(3):
            out[3 + k, 3 + l] += gamma * Q[6 + k, 6 + l]
    for i in range(3):
        for j in range(3):
            out[3 * i + 1, 3 * j + 1] += gamma * Q[3 * i + 2, 3 * j + 2]
    return out


@njit(cache=True)
def _mm(A, B):
    """Small dense product; explicit loops beat BLAS calls at 3x3 and 9x9."""
    n = A.shape[0]
    out = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        for k in range(n):
            a = A[i, k]
            if a != 0.0:
                for j in range(n):
                    out[i, j] += a * B[k, j]
    return out


@njit(cache=True)
def _comm(A, B):
    return _mm(A, B) - _mm(B, A)


@njit(cache=True)
def _kron(A, B):
    out = np.empty((9, 9), dtype=np.complex128)
    for i in range(3):
        for j in range(3):
            a = A[i, j]
            for k in range(3):
                for l in range(3):
                    out[3 * i + k, 3 * j + l] = a * B[k, l]
    return out


@njit(cache=True)
def _add_comm_unit(out, X, i0, j0, scale):
    """out += scale [X, E] with E the matrix unit |i0><j0|."""
    n = X.shape[0]
    for i in range(n):
        out[i, j0] += scale * X[i, i0]
    for j in range(n):
        out[i0, j] -= scale * X[j0, j]


@njit(cache=True)
def _add_comm_pair_unit(out, X, i0, j0, scale):
    """out += scale [X, E (x) 1 + 1 (x) E] for 9x9 X and E = |i0><j0|."""
    for k in range(3):
        _add_comm_unit(out, X, 3 * i0 + k, 3 * j0 + k, scale)
        _add_comm_unit(out, X, 3 * k + i0, 3 * k + j0, scale)


@njit(cache=True)
def _closures(alpha, n, m, R, M, Q):
    """Cumulant closures of the third-order moments that enter the equations.

    Returns (N_mat, MM, T): <a^dag a X> = tr(x N_mat), <a a X> = tr(x MM),
    <a X(1) Y(2)> = tr((x (x) y) T).
    """
    Md = np.conj(M.T)
    ac = np.conj(alpha)
    N_mat = n * R + ac * M + alpha * Md - 2.0 * (alpha * ac).real * R
    MM = m * R + 2.0 * alpha * M - 2.0 * alpha * alpha * R
    T = alpha * Q + _kron(R, M) + _kron(M, R) - 2.0 * alpha * _kron(R, R)
    return N_mat, MM, T


@njit(cache=True)
def field_closures(alpha, n, m):
    """Closed <a^dag a a> and <a a a>."""
    ac = np.conj(alpha)
    adaa = ac * m + 2.0 * alpha * n - 2.0 * alpha * alpha * ac
    aaa = 3.0 * alpha * m - 2.0 * alpha ** 3
    return adaa, aaa


@njit(cache=True)
def drift_full(alpha, n, m, R, M, Q, h, coeffs):
    N_mat, MM, T = _closures(alpha, n, m, R, M, Q)
    return drift_core(alpha, n, m, R, M, Q, N_mat, MM, T, h, coeffs)


@njit(cache=True)
def diffusion_full(alpha, n, m, R, M, Q, coeffs):
    N_mat, MM, T = _closures(alpha, n, m, R, M, Q)
    adaa, aaa = field_closures(alpha, n, m)
    return diffusion_core(alpha, n, m, R, M, Q, N_mat, MM, T, adaa, aaa, coeffs)


@njit(cache=True)
def drift_core(alpha, n, m, R, M, Q, N_mat, MM, T, h, coeffs):
    """Deterministic part of the moment equations in matrix form.

    ``h`` is the single-atom Hamiltonian (3x3) in the chosen frame; ``coeffs``
    holds N, cavity frequency, drive amplitude f (H_p = f a + f* a^dag), g,
    kappa, gamma, chi.  ``N_mat``, ``MM`` and ``T`` carry the third-order
    moments (see :func:`_closures`).
    """
    N = coeffs[C_N].real
    wc = coeffs[C_WC].real
    f = coeffs[C_FRE].real + 1j * coeffs[C_FIM].real
    g = coeffs[C_G].real
    kappa = coeffs[C_KAPPA].real
    gamma = coeffs[C_GAMMA].real
    chi = coeffs[C_CHI].real
    fc = np.conj(f)
    ig = 1j * g

    # c = |2><3| is the matrix unit E_12 (zero-based), c^dag = E_21
    Md = np.conj(M.T)

    tr_cR = R[2, 1]            # <s23>
    tr_cM = M[2, 1]            # <a s23>
    tr_cMd = Md[2, 1]          # <a^dag s23>
    tr_cdM = M[1, 2]           # <s32 a>

    d_alpha = -(1j * wc + 0.5 * kappa) * alpha - 1j * fc - ig * N * tr_cR
    d_n = -kappa * n + 1j * (f * alpha - fc * np.conj(alpha)) \
        - ig * N * (tr_cMd - tr_cdM)
    d_m = -(2j * wc + kappa) * m - 2j * fc * alpha - 2.0 * ig * N * tr_cM

    d_R = -1j * _comm(h, R) + _dissipator(R, gamma, chi)
    _add_comm_unit(d_R, Md, 1, 2, ig)
    _add_comm_unit(d_R, M, 2, 1, ig)

    # C2 = tr_2[(1 (x) s23) Q], the pair term <s23(2) X(1)>
    d_M = (
        -(1j * wc + 0.5 * kappa) * M
        - 1j * fc * R
        - 1j * _comm(h, M)
        + _dissipator(M, gamma, chi)
    )
    for j in range(3):
        for i in range(3):
            d_M[j, i] -= ig * (N - 1.0) * Q[3 * j + 2, 3 * i + 1]
    for i in range(3):
        d_M[i, 2] -= ig * R[i, 1]          # R c
    _add_comm_unit(d_M, N_mat, 1, 2, ig)
    _add_comm_unit(d_M, R, 1, 2, ig)
    _add_comm_unit(d_M, MM, 2, 1, ig)

    H2 = np.zeros((9, 9), dtype=np.complex128)
    for i in range(3):
        for j in range(3):
            for k in range(3):
                H2[3 * i + k, 3 * j + k] += h[i, j]
                H2[3 * k + i, 3 * k + j] += h[i, j]
    Td = np.conj(T.T)
    d_Q = -1j * _comm(H2, Q) + _dissipator_pair(Q, gamma, chi)
    _add_comm_pair_unit(d_Q, Td, 1, 2, ig)
    _add_comm_pair_unit(d_Q, T, 2, 1, ig)
    if N < 2.0:
        d_Q[:, :] = 0.0
    return d_alpha, d_n, d_m, d_R, d_M, d_Q


@njit(cache=True)
def diffusion_core(alpha, n, m, R, M, Q, N_mat, MM, T, adaa, aaa, coeffs):
    """Coefficients of dW (Ito) for homodyne detection of exp(i phase) a."""
    s = coeffs[C_MEAS].real
    ph = coeffs[C_PHASE].real
    if s == 0.0:
        z3 = np.zeros((3, 3), dtype=np.complex128)
        return 0j, 0j, 0j, z3, z3.copy(), np.zeros((9, 9), dtype=np.complex128)
    p = np.exp(1j * ph)
    pc = np.conj(p)
    two_re = 2.0 * (p * alpha).real
    b_alpha = s * (p * m + pc * n - two_re * alpha)
    b_n = s * (p * adaa + pc * np.conj(adaa) - two_re * n)
    b_m = s * (p * aaa + pc * adaa - two_re * m)
    Md = np.conj(M.T)
    b_R = s * (p * M + pc * Md - two_re * R)
    b_M = s * (p * MM + pc * N_mat - two_re * M)
    b_Q = s * (p * T + pc * np.conj(T.T) - two_re * Q)
    if coeffs[C_N].real < 2.0:
        b_Q[:, :] = 0.0
    return b_alpha, b_n, b_m, b_R, b_M, b_Q


@njit(cache=True)
def drift_vec(y, h, coeffs):
    alpha, n, m, R, M, Q = unpack(y)
    da, dn, dm, dR, dM, dQ = drift_full(alpha, n, m, R, M, Q, h, coeffs)
    out = np.empty(N_SLOTS, dtype=np.complex128)
    pack(da, dn, dm, dR, dM, dQ, out)
    return out


@njit(cache=True)
def diffusion_vec(y, coeffs):
    alpha, n, m, R, M, Q = unpack(y)
    ba, bn, bm, bR, bM, bQ = diffusion_full(alpha, n, m, R, M, Q, coeffs)
    out = np.empty(N_SLOTS, dtype=np.complex128)
    pack(ba, bn, bm, bR, bM, bQ, out)
    return out


@njit(cache=True)
def drift_diffusion_vec(y, h, coeffs):
    """Drift and dW coefficient together, sharing the unpacking and closures."""
    alpha, n, m, R, M, Q = unpack(y)
    N_mat, MM, T = _closures(alpha, n, m, R, M, Q)
    d = np.empty(N_SLOTS, dtype=np.complex128)
    da, dn, dm, dR, dM, dQ = drift_core(alpha, n, m, R, M, Q, N_mat, MM, T, h, coeffs)
    pack(da, dn, dm, dR, dM, dQ, d)
    b = np.zeros(N_SLOTS, dtype=np.complex128)
    if coeffs[C_MEAS] != 0.0:
        adaa, aaa = field_closures(alpha, n, m)
        ba, bn, bm, bR, bM, bQ = diffusion_core(
            alpha, n, m, R, M, Q, N_mat, MM, T, adaa, aaa, coeffs
        )
        pack(ba, bn, bm, bR, bM, bQ, b)
    return d, b
