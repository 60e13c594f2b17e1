"""Pure-Python revision-protocol kernel.

Reference implementation of the per-opportunity revision loop. The
compiled kernel in ``_kernel.pyx`` follows the exact same arithmetic and
random-draw order, so both produce bit-identical trajectories from the
same bit generator. Keep the two in lockstep when changing either.

Draw order per opportunity (consumed as uniform doubles):
  u1  agent selection (uniform over agents; the embedded chain of the
      unit-rate alarm-clock process)
  -- agents with fewer than two allowed levels stop here --
  u2  branch: u2 < restrict_prob scans for strictly improving candidates
  u3  candidate index (over improving set if the branch chose it and the
      set is non-empty, otherwise uniform over the other levels)
  u4  acceptance against rho / clock_rate
"""
from __future__ import annotations

import math

PAIRWISE_LOGIT = 0
PAIRWISE = 1


def run_revisions(
    level_idx,
    n_levels,
    gain,
    qval,
    bonus,
    aggregate_kwh,
    beta0,
    beta1,
    q_ref,
    eta,
    restrict_prob,
    clock_rate,
    protocol_kind,
    max_steps,
    stop_window,
    generator,
    q_traj,
    accept_traj,
    tracked_idx,
    tracked_stride,
    tracked_out,
):
    """Run up to max_steps revision opportunities; mutates level_idx.

    Returns (steps_done, accepted_count, final_aggregate_kwh, tracked_rows).
    """
    n_agents = len(level_idx)
    levels = level_idx  # python list, mutated in place by caller contract
    gain_l = [row[:] for row in gain]
    qval_l = [row[:] for row in qval]
    bonus_l = [row[:] for row in bonus]
    nlev = list(n_levels)
    q = float(aggregate_kwh)
    rnd = generator.random

    last_accept = -1
    accepted_count = 0
    tracked_rows = 0
    n_tracked = len(tracked_idx)
    steps_done = 0

    for step in range(max_steps):
        u1 = rnd()
        a = int(u1 * n_agents)
        if a >= n_agents:
            a = n_agents - 1
        k = nlev[a]
        accepted = 0
        if k >= 2:
            g_a = gain_l[a]
            q_a = qval_l[a]
            b_a = bonus_l[a]
            cur = levels[a]
            q_cur = q_a[cur]
            price_cur = beta0 + beta1 * q / q_ref
            pi_cur = g_a[cur] - price_cur * q_cur + b_a[cur]

            u2 = rnd()
            u3 = rnd()
            cand = -1
            if u2 < restrict_prob:
                improving = []
                for j in range(k):
                    if j == cur:
                        continue
                    q_j = q_a[j]
                    agg_j = q - q_cur + q_j
                    pi_j = g_a[j] - (beta0 + beta1 * agg_j / q_ref) * q_j + b_a[j]
                    if pi_j > pi_cur:
                        improving.append(j)
                m = len(improving)
                if m > 0:
                    idx = int(u3 * m)
                    if idx >= m:
                        idx = m - 1
                    cand = improving[idx]
            if cand < 0:
                idx = int(u3 * (k - 1))
                if idx >= k - 1:
                    idx = k - 2
                cand = idx + 1 if idx >= cur else idx

            q_cand = qval_l[a][cand]
            agg_cand = q - q_cur + q_cand
            pi_cand = (
                g_a[cand] - (beta0 + beta1 * agg_cand / q_ref) * q_cand + b_a[cand]
            )

            if protocol_kind == PAIRWISE_LOGIT:
                d = (pi_cand - pi_cur) / eta
                if d >= 0.0:
                    rho = 1.0 / (1.0 + math.exp(-d))
                else:
                    e = math.exp(d)
                    rho = e / (1.0 + e)
            else:
                rho = pi_cand - pi_cur
                if rho < 0.0:
                    rho = 0.0
            p_switch = rho / clock_rate
            if p_switch > 1.0:
                p_switch = 1.0

            u4 = rnd()
            if u4 < p_switch:
                levels[a] = cand
                q = agg_cand
                accepted = 1
                accepted_count += 1
                last_accept = step

        q_traj[step] = q
        accept_traj[step] = accepted
        if n_tracked and step % tracked_stride == 0:
            price = beta0 + beta1 * q / q_ref
            for t_i in range(n_tracked):
                ag = tracked_idx[t_i]
                c = levels[ag]
                tracked_out[tracked_rows][t_i] = (
                    gain_l[ag][c] - price * qval_l[ag][c] + bonus_l[ag][c]
                )
            tracked_rows += 1
        steps_done = step + 1
        if step - last_accept >= stop_window:
            break

    return steps_done, accepted_count, q, tracked_rows
