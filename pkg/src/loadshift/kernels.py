"""Revision-kernel selection.

The compiled extension is preferred when it imported cleanly; the
pure-Python twin is the fallback. Both consume uniform doubles from the
supplied generator in the same order and perform the same float64
arithmetic, so trajectories are bit-identical across backends. Set
LOADSHIFT_PURE_PYTHON=1 to force the fallback (used by the parity tests
and the benchmark).
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernel_py

PAIRWISE_LOGIT = _kernel_py.PAIRWISE_LOGIT
PAIRWISE = _kernel_py.PAIRWISE

try:
    from . import _kernel as _compiled
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None

if os.environ.get("LOADSHIFT_PURE_PYTHON"):
    _compiled = None

ACTIVE = "compiled" if _compiled is not None else "python"


def have_compiled() -> bool:
    return _compiled is not None


def run_revisions(
    level_idx: np.ndarray,
    n_levels: np.ndarray,
    gain: np.ndarray,
    qval: np.ndarray,
    bonus: np.ndarray,
    aggregate_kwh: float,
    beta0: float,
    beta1: float,
    q_ref: float,
    eta: float,
    restrict_prob: float,
    clock_rate: float,
    protocol_kind: int,
    max_steps: int,
    stop_window: int,
    generator: np.random.Generator,
    q_traj: np.ndarray,
    accept_traj: np.ndarray,
    tracked_idx: np.ndarray,
    tracked_stride: int,
    tracked_out: np.ndarray,
    backend: str | None = None,
):
    """Dispatch to the active kernel; mutates level_idx and the output buffers."""
    use = backend or ACTIVE
    if use == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel requested but not available")
        return _compiled.run_revisions(
            level_idx,
            n_levels,
            gain,
            qval,
            bonus,
            float(aggregate_kwh),
            float(beta0),
            float(beta1),
            float(q_ref),
            float(eta),
            float(restrict_prob),
            float(clock_rate),
            int(protocol_kind),
            int(max_steps),
            int(stop_window),
            generator,
            q_traj,
            accept_traj,
            tracked_idx,
            int(tracked_stride),
            tracked_out,
        )
    levels_list = level_idx.tolist()
    result = _kernel_py.run_revisions(
        levels_list,
        n_levels.tolist(),
        gain.tolist(),
        qval.tolist(),
        bonus.tolist(),
        float(aggregate_kwh),
        float(beta0),
        float(beta1),
        float(q_ref),
        float(eta),
        float(restrict_prob),
        float(clock_rate),
        int(protocol_kind),
        int(max_steps),
        int(stop_window),
        generator,
        q_traj,
        accept_traj,
        tracked_idx.tolist(),
        int(tracked_stride),
        tracked_out,
    )
    level_idx[:] = levels_list
    return result
