"""numba kernels for batched 2x2 (optionally controlled) gate updates.

States are ``(N, 2**m)`` C-contiguous complex128 arrays; qubit ``q`` maps to
bit ``m - 1 - q`` of the basis index.  ``control < 0`` means uncontrolled.
"""
import numba as nb
import numpy as np


@nb.njit(cache=True, inline="always")
def _pair_index(k, tbit):
    # insert a zero at bit position ``tbit`` of ``k``
    low = k & ((1 << tbit) - 1)
    return ((k >> tbit) << (tbit + 1)) | low


@nb.njit(cache=True, nogil=True)
def apply_gate(state, u, m, target, control):
    tbit = m - 1 - target
    tmask = 1 << tbit
    cmask = 0 if control < 0 else 1 << (m - 1 - control)
    u00, u01, u10, u11 = u[0, 0], u[0, 1], u[1, 0], u[1, 1]
    half = state.shape[1] >> 1
    for b in range(state.shape[0]):
        row = state[b]
        for k in range(half):
            i0 = _pair_index(k, tbit)
            if (i0 & cmask) != cmask:
                continue
            i1 = i0 | tmask
            a0 = row[i0]
            a1 = row[i1]
            row[i0] = u00 * a0 + u01 * a1
            row[i1] = u10 * a0 + u11 * a1


@nb.njit(cache=True, nogil=True)
def overlap_and_undo(psi, lam, u_dag, m, target, control, red):
    """Accumulate ``red[a, b] = Σ conj(lam_a) psi_b`` over the gate's amplitude pairs,
    then apply ``u_dag`` to both ``psi`` and ``lam`` in place."""
    tbit = m - 1 - target
    tmask = 1 << tbit
    cmask = 0 if control < 0 else 1 << (m - 1 - control)
    u00, u01, u10, u11 = u_dag[0, 0], u_dag[0, 1], u_dag[1, 0], u_dag[1, 1]
    r00 = r01 = r10 = r11 = 0j
    half = psi.shape[1] >> 1
    for b in range(psi.shape[0]):
        prow = psi[b]
        lrow = lam[b]
        for k in range(half):
            i0 = _pair_index(k, tbit)
            if (i0 & cmask) != cmask:
                continue
            i1 = i0 | tmask
            p0 = prow[i0]
            p1 = prow[i1]
            l0 = lrow[i0].conjugate()
            l1 = lrow[i1].conjugate()
            r00 += l0 * p0
            r01 += l0 * p1
            r10 += l1 * p0
            r11 += l1 * p1
            prow[i0] = u00 * p0 + u01 * p1
            prow[i1] = u10 * p0 + u11 * p1
            q0 = lrow[i0]
            q1 = lrow[i1]
            lrow[i0] = u00 * q0 + u01 * q1
            lrow[i1] = u10 * q0 + u11 * q1
    red[0, 0] = r00
    red[0, 1] = r01
    red[1, 0] = r10
    red[1, 1] = r11


def warmup() -> None:
    s = np.ones((1, 4), dtype=complex)
    u = np.eye(2, dtype=complex)
    apply_gate(s, u, 2, 0, 1)
    overlap_and_undo(s, s.copy(), u, 2, 0, -1, np.zeros((2, 2), dtype=complex))


@nb.njit(cache=True, nogil=True)
def run_gates(state, us, m, targets, controls):
    for k in range(us.shape[0]):
        apply_gate(state, us[k], m, targets[k], controls[k])


@nb.njit(cache=True, nogil=True)
def adjoint_sweep(psi, lam, udags, m, targets, controls, reds):
    """Walk the circuit backwards filling ``reds[k]`` with gate ``k``'s reduced overlap."""
    for k in range(udags.shape[0] - 1, -1, -1):
        overlap_and_undo(psi, lam, udags[k], m, targets[k], controls[k], reds[k])
