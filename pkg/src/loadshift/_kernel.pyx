# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled revision-protocol kernel.

Mirrors ``_kernel_py.run_revisions`` operation for operation: identical
arithmetic, identical draw order, identical results from the same bit
generator. Any change here must be applied to the pure-Python twin.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp
from libc.stdlib cimport free, malloc

from numpy.random cimport bitgen_t

cdef int PAIRWISE_LOGIT = 0
cdef int PAIRWISE = 1


def run_revisions(
    int[::1] level_idx,
    int[::1] n_levels,
    double[:, ::1] gain,
    double[:, ::1] qval,
    double[:, ::1] bonus,
    double aggregate_kwh,
    double beta0,
    double beta1,
    double q_ref,
    double eta,
    double restrict_prob,
    double clock_rate,
    int protocol_kind,
    long max_steps,
    long stop_window,
    generator,
    double[::1] q_traj,
    signed char[::1] accept_traj,
    int[::1] tracked_idx,
    long tracked_stride,
    double[:, ::1] tracked_out,
):
    """Run up to max_steps revision opportunities; mutates level_idx.

    Returns (steps_done, accepted_count, final_aggregate_kwh, tracked_rows).
    """
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(
        generator.bit_generator.capsule, "BitGenerator"
    )
    cdef int n_agents = level_idx.shape[0]
    cdef int n_tracked = tracked_idx.shape[0]
    cdef int max_k = gain.shape[1]
    cdef int *improving = <int *> malloc(max_k * sizeof(int))
    if improving == NULL:
        raise MemoryError()

    cdef double q = aggregate_kwh
    cdef long last_accept = -1
    cdef long accepted_count = 0
    cdef long tracked_rows = 0
    cdef long steps_done = 0
    cdef long step
    cdef int a, k, cur, cand, j, m, idx, t_i, ag, c, accepted
    cdef double u1, u2, u3, u4
    cdef double q_cur, q_j, q_cand, agg_j, agg_cand
    cdef double price_cur, price, pi_cur, pi_j, pi_cand, d, e, rho, p_switch

    try:
        with nogil:
            for step in range(max_steps):
                u1 = rng.next_double(rng.state)
                a = <int> (u1 * n_agents)
                if a >= n_agents:
                    a = n_agents - 1
                k = n_levels[a]
                accepted = 0
                if k >= 2:
                    cur = level_idx[a]
                    q_cur = qval[a, cur]
                    price_cur = beta0 + beta1 * q / q_ref
                    pi_cur = gain[a, cur] - price_cur * q_cur + bonus[a, cur]

                    u2 = rng.next_double(rng.state)
                    u3 = rng.next_double(rng.state)
                    cand = -1
                    if u2 < restrict_prob:
                        m = 0
                        for j in range(k):
                            if j == cur:
                                continue
                            q_j = qval[a, j]
                            agg_j = q - q_cur + q_j
                            pi_j = (
                                gain[a, j]
                                - (beta0 + beta1 * agg_j / q_ref) * q_j
                                + bonus[a, j]
                            )
                            if pi_j > pi_cur:
                                improving[m] = j
                                m += 1
                        if m > 0:
                            idx = <int> (u3 * m)
                            if idx >= m:
                                idx = m - 1
                            cand = improving[idx]
                    if cand < 0:
                        idx = <int> (u3 * (k - 1))
                        if idx >= k - 1:
                            idx = k - 2
                        cand = idx + 1 if idx >= cur else idx

                    q_cand = qval[a, cand]
                    agg_cand = q - q_cur + q_cand
                    pi_cand = (
                        gain[a, cand]
                        - (beta0 + beta1 * agg_cand / q_ref) * q_cand
                        + bonus[a, cand]
                    )

                    if protocol_kind == PAIRWISE_LOGIT:
                        d = (pi_cand - pi_cur) / eta
                        if d >= 0.0:
                            rho = 1.0 / (1.0 + exp(-d))
                        else:
                            e = exp(d)
                            rho = e / (1.0 + e)
                    else:
                        rho = pi_cand - pi_cur
                        if rho < 0.0:
                            rho = 0.0
                    p_switch = rho / clock_rate
                    if p_switch > 1.0:
                        p_switch = 1.0

                    u4 = rng.next_double(rng.state)
                    if u4 < p_switch:
                        level_idx[a] = cand
                        q = agg_cand
                        accepted = 1
                        accepted_count += 1
                        last_accept = step

                q_traj[step] = q
                accept_traj[step] = <signed char> accepted
                if n_tracked > 0 and step % tracked_stride == 0:
                    price = beta0 + beta1 * q / q_ref
                    for t_i in range(n_tracked):
                        ag = tracked_idx[t_i]
                        c = level_idx[ag]
                        tracked_out[tracked_rows, t_i] = (
                            gain[ag, c] - price * qval[ag, c] + bonus[ag, c]
                        )
                    tracked_rows += 1
                steps_done = step + 1
                if step - last_accept >= stop_window:
                    break
    finally:
        free(improving)

    return steps_done, accepted_count, q, tracked_rows
