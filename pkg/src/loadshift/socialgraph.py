"""Small-world influence networks and stubborn-agent opinion dynamics.

Households exchange views over a Watts-Strogatz graph. Two topics are
tracked per scenario: how much a household subjectively values electricity,
and how willing it is to enroll in a demand-response program. Opinions
update by mixing the agent's fixed initial opinion (weighted by her
stubbornness), her own current opinion (self-confidence) and the
credibility-weighted opinions of her neighbors:

    sigma_i(t+1) = (1 - mu_i) sigma_i(0) + mu_i A_ii sigma_i(t)
                   + mu_i (1 - A_ii) sum_j A_ij sigma_j(t)

Off-diagonal credibilities A_ij are row-stochastic with zero diagonal;
the update is a convex combination, so opinions started in [0, 1] stay
in [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

ROW_SUM_TOL = 1e-12


class GraphParamError(ValueError):
    """Invalid small-world construction parameters."""


class DimensionError(ValueError):
    """Opinion vector does not match the graph size."""


@dataclass(frozen=True)
class WsParams:
    """Watts-Strogatz construction parameters (k even, k < n)."""

    n: int
    k: int
    p_rewire: float
    seed: int = 0

    def validate(self) -> None:
        if self.n < 3:
            raise GraphParamError(f"node count n={self.n} must be at least 3")
        if self.k % 2 != 0:
            raise GraphParamError(f"mean degree k={self.k} must be even")
        if self.k >= self.n:
            raise GraphParamError(f"mean degree k={self.k} must be below n={self.n}")
        if self.k < 2:
            raise GraphParamError(f"mean degree k={self.k} must be at least 2")
        if not 0.0 <= self.p_rewire <= 1.0:
            raise GraphParamError(f"p_rewire={self.p_rewire} outside [0, 1]")


@dataclass
class SocialGraph:
    """Weighted influence network.

    adjacency holds the neighbor credibilities (zero diagonal, each row
    summing to 1); self-confidence and susceptibility are kept separately
    because they weight the diagonal and the prejudice term of the update.
    """

    n: int
    adjacency: np.ndarray
    self_confidence: np.ndarray
    susceptibility: np.ndarray

    def validate(self) -> None:
        a = self.adjacency
        if a.shape != (self.n, self.n):
            raise DimensionError(f"adjacency shape {a.shape} != ({self.n}, {self.n})")
        if np.any(np.abs(np.diag(a)) > 0):
            raise GraphParamError("adjacency diagonal must be zero")
        if np.any(a < 0) or np.any(a > 1):
            raise GraphParamError("adjacency weights must lie in [0, 1]")
        row_sums = a.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
            worst = int(np.argmax(np.abs(row_sums - 1.0)))
            raise GraphParamError(
                f"row {worst} of adjacency sums to {row_sums[worst]!r}, expected 1"
            )
        for name, vec in (
            ("self_confidence", self.self_confidence),
            ("susceptibility", self.susceptibility),
        ):
            if vec.shape != (self.n,):
                raise DimensionError(f"{name} shape {vec.shape} != ({self.n},)")
            if np.any(vec < 0) or np.any(vec > 1):
                raise GraphParamError(f"{name} must lie in [0, 1]")


@dataclass
class OpinionState:
    initial: np.ndarray
    current: np.ndarray
    t: int = 0


@dataclass
class FjResult:
    state: OpinionState
    steps: int
    converged: bool
    trajectory: np.ndarray | None = None


def generate_ws_graph(
    params: WsParams,
    susceptibility: float | np.ndarray = 0.5,
    self_confidence: float | np.ndarray = 0.5,
) -> SocialGraph:
    """Build a connected small-world influence graph.

    Credibility is spread uniformly over each node's neighbors. Rewiring
    is retried (up to 100 attempts) until the graph is connected.
    """
    params.validate()
    try:
        g = nx.connected_watts_strogatz_graph(
            params.n, params.k, params.p_rewire, tries=100, seed=params.seed
        )
    except nx.NetworkXError as exc:
        raise GraphParamError(f"could not build a connected graph: {exc}") from exc

    adjacency = np.zeros((params.n, params.n))
    for i in range(params.n):
        neighbors = list(g[i])
        if not neighbors:
            raise GraphParamError(f"node {i} has no neighbors")
        adjacency[i, neighbors] = 1.0 / len(neighbors)

    graph = SocialGraph(
        n=params.n,
        adjacency=adjacency,
        self_confidence=np.broadcast_to(
            np.asarray(self_confidence, dtype=float), (params.n,)
        ).copy(),
        susceptibility=np.broadcast_to(
            np.asarray(susceptibility, dtype=float), (params.n,)
        ).copy(),
    )
    graph.validate()
    return graph


def fj_step(graph: SocialGraph, state: OpinionState) -> OpinionState:
    """One opinion update; convex combination of prejudice, self and neighbors."""
    if state.current.shape != (graph.n,) or state.initial.shape != (graph.n,):
        raise DimensionError(
            f"opinion vectors {state.initial.shape}/{state.current.shape} "
            f"do not match graph size {graph.n}"
        )
    mu = graph.susceptibility
    a_ii = graph.self_confidence
    neighbor_mean = graph.adjacency @ state.current
    nxt = (1.0 - mu) * state.initial + mu * a_ii * state.current
    nxt = nxt + mu * (1.0 - a_ii) * neighbor_mean
    return OpinionState(initial=state.initial, current=nxt, t=state.t + 1)


def fj_run(
    graph: SocialGraph,
    state: OpinionState,
    tol: float = 1e-8,
    max_steps: int = 10_000,
    record: bool = False,
) -> FjResult:
    """Iterate fj_step until the max-norm change drops below tol.

    Non-convergence within max_steps is reported, not raised.
    """
    if tol <= 0:
        raise ValueError(f"tol={tol} must be positive")
    rows = [state.current.copy()] if record else None
    current = state
    converged = False
    steps = 0
    for steps in range(1, max_steps + 1):
        nxt = fj_step(graph, current)
        change = float(np.max(np.abs(nxt.current - current.current)))
        current = nxt
        if rows is not None:
            rows.append(current.current.copy())
        if change < tol:
            converged = True
            break
    trajectory = np.asarray(rows) if rows is not None else None
    return FjResult(state=current, steps=steps, converged=converged, trajectory=trajectory)


def export_graph(graph: SocialGraph, path) -> None:
    """Write the edge-list text format: header with n and per-node
    (susceptibility, self-confidence), then one `i j weight` line per edge."""
    graph.validate()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n {graph.n}\n")
        mu = graph.susceptibility.tolist()
        conf = graph.self_confidence.tolist()
        for i in range(graph.n):
            fh.write(f"node {i} {mu[i]!r} {conf[i]!r}\n")
        rows, cols = np.nonzero(graph.adjacency)
        for i, j in zip(rows.tolist(), cols.tolist()):
            fh.write(f"{i} {j} {float(graph.adjacency[i, j])!r}\n")


def import_graph(path) -> SocialGraph:
    """Parse the edge-list format written by export_graph."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "n":
            raise ValueError(f"{path}: malformed header {header!r}")
        n = int(header[1])
        susceptibility = np.zeros(n)
        self_confidence = np.zeros(n)
        adjacency = np.zeros((n, n))
        for _ in range(n):
            tag, idx, mu, a_ii = fh.readline().split()
            if tag != "node":
                raise ValueError(f"{path}: expected node line, got {tag!r}")
            susceptibility[int(idx)] = float(mu)
            self_confidence[int(idx)] = float(a_ii)
        for line in fh:
            if not line.strip():
                continue
            i, j, w = line.split()
            adjacency[int(i), int(j)] = float(w)
    graph = SocialGraph(
        n=n,
        adjacency=adjacency,
        self_confidence=self_confidence,
        susceptibility=susceptibility,
    )
    graph.validate()
    return graph


def write_opinion_csv(path, trajectory: np.ndarray) -> None:
    """Trajectory CSV: one row per step, columns step, agent_0..agent_{n-1}."""
    steps, n = trajectory.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step," + ",".join(f"agent_{i}" for i in range(n)) + "\n")
        for t in range(steps):
            fh.write(f"{t}," + ",".join(repr(v) for v in trajectory[t].tolist()) + "\n")
