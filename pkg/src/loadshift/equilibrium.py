"""Stochastic-stability validation on small homogeneous instances.

For a population of identical agents revising over a shared level grid
with a fixed energy price, per-agent payoffs do not depend on what the
others play, so the summed payoff acts as a potential: its discrete
per-agent differences reproduce individual payoffs exactly. Under the
pairwise-logit protocol the long-run distribution over population
compositions is then available in closed form,

    mu(m) proportional to  N! / prod_k m_k!  *  exp(f(m) / eta),

which this module evaluates exactly (log domain) and cross-checks three
independent ways: against the left eigenvector of the explicitly built
transition matrix, against detailed balance on adjacent compositions,
and against long-run visit frequencies of a simulated chain. With an
aggregate-dependent price the potential identity breaks; the checker
reports the violations rather than hiding them.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

MAX_STATES = 100_000


class CapacityError(ValueError):
    """State space too large to enumerate."""


@dataclass(frozen=True)
class SmallInstance:
    """Homogeneous single-population game small enough to enumerate.

    q_levels are the per-period energies (kWh) of each level; payoffs, if
    given, override the preference/price computation (useful for
    degenerate cases like an identically-zero potential).
    """

    n_agents: int
    levels: tuple
    theta: float = 0.5
    elasticity: float = 0.2
    valuation: float = 2.0
    q_levels: tuple | None = None
    beta0: float = 1.0
    beta1: float = 0.0
    q_ref: float = 1.0
    eta: float = 0.3
    payoffs: tuple | None = None

    def validate(self) -> None:
        n, k = self.n_agents, len(self.levels)
        if n < 1:
            raise ValueError("need at least one agent")
        if k < 2:
            raise ValueError("need at least two strategies")
        if self.eta <= 0:
            raise ValueError(f"eta={self.eta} must be positive")
        size = math.comb(n + k - 1, k - 1)
        if size > MAX_STATES:
            raise CapacityError(
                f"state space has {size} compositions, above the "
                f"{MAX_STATES} enumeration cap"
            )

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def energies(self) -> np.ndarray:
        if self.q_levels is not None:
            return np.asarray(self.q_levels, dtype=float)
        return np.asarray(self.levels, dtype=float)

    def fixed_payoffs(self) -> np.ndarray:
        """Per-strategy payoffs at the base price (beta1 ignored)."""
        if self.payoffs is not None:
            return np.asarray(self.payoffs, dtype=float)
        x = np.asarray(self.levels, dtype=float)
        match = np.exp(-np.abs(x - self.theta) / self.elasticity)
        return self.valuation * match - self.beta0 * self.energies()

    def price(self, aggregate: float) -> float:
        return self.beta0 + self.beta1 * aggregate / self.q_ref

    def clever_payoff_pair(self, counts, i: int, j: int) -> tuple:
        """(current payoff of an agent at i, clever payoff of moving to j)."""
        q = self.energies()
        base = self.fixed_payoffs() + self.beta0 * q  # valuation part only
        aggregate = float(np.dot(counts, q))
        pi_i = base[i] - self.price(aggregate) * q[i]
        agg_j = aggregate - q[i] + q[j]
        pi_j = base[j] - self.price(agg_j) * q[j]
        return pi_i, pi_j


@dataclass
class StationaryDistribution:
    states: np.ndarray  # (S, K) integer compositions
    probabilities: np.ndarray  # (S,)
    log_normalizer: float

    def index(self) -> dict:
        return {tuple(int(c) for c in row): s for s, row in enumerate(self.states)}


@dataclass
class DerivativeReport:
    checked: int
    max_violation: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_violation < 1e-9


def enumerate_compositions(n_agents: int, n_levels: int) -> np.ndarray:
    """All compositions of n_agents over n_levels strategies."""
    states = [
        comp
        for comp in _compositions(n_agents, n_levels)
    ]
    return np.asarray(states, dtype=np.int64)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def potential_value(counts, instance: SmallInstance) -> float:
    """Summed per-agent payoff terms of the composition (fixed price)."""
    payoffs = instance.fixed_payoffs()
    total = 0.0
    for k, m in enumerate(counts):
        for _ in range(int(m)):
            total += payoffs[k]
    return total


def stationary_distribution(instance: SmallInstance) -> StationaryDistribution:
    """Closed-form long-run distribution over compositions (log domain)."""
    instance.validate()
    states = enumerate_compositions(instance.n_agents, instance.n_levels)
    payoffs = instance.fixed_payoffs()
    potentials = states @ payoffs
    log_multinomial = gammaln(instance.n_agents + 1) - gammaln(states + 1.0).sum(
        axis=1
    )
    log_w = log_multinomial + potentials / instance.eta
    log_z = float(logsumexp(log_w))
    return StationaryDistribution(
        states=states,
        probabilities=np.exp(log_w - log_z),
        log_normalizer=log_z,
    )


def _logistic(d: float) -> float:
    if d >= 0.0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


def switch_probability(instance: SmallInstance, counts, i: int, j: int) -> float:
    """Pairwise-logit acceptance for one agent moving i -> j (clever payoff)."""
    pi_i, pi_j = instance.clever_payoff_pair(counts, i, j)
    return _logistic((pi_j - pi_i) / instance.eta)


def transition_matrix(instance: SmallInstance) -> tuple:
    """Embedded one-revision transition matrix over compositions.

    Law: agent uniform over the population, candidate uniform over the
    other strategies, pairwise-logit acceptance with clever payoffs.
    Returns (states, matrix).
    """
    instance.validate()
    states = enumerate_compositions(instance.n_agents, instance.n_levels)
    index = {tuple(int(c) for c in row): s for s, row in enumerate(states)}
    n, k = instance.n_agents, instance.n_levels
    size = len(states)
    p = np.zeros((size, size))
    for s, row in enumerate(states):
        stay = 1.0
        for i in range(k):
            if row[i] == 0:
                continue
            for j in range(k):
                if j == i:
                    continue
                rho = switch_probability(instance, row, i, j)
                prob = (row[i] / n) * (1.0 / (k - 1)) * rho
                if prob == 0.0:
                    continue
                target = list(row)
                target[i] -= 1
                target[j] += 1
                t = index[tuple(target)]
                p[s, t] += prob
                stay -= prob
        p[s, s] += stay
    return states, p


def detailed_balance_report(instance: SmallInstance) -> dict:
    """Max |mu_x P(x,y) - mu_y P(y,x)| over adjacent composition pairs."""
    dist = stationary_distribution(instance)
    states, p = transition_matrix(instance)
    mu = dist.probabilities
    worst = 0.0
    worst_pair = None
    for s in range(len(states)):
        for t in range(len(states)):
            if s >= t or (p[s, t] == 0.0 and p[t, s] == 0.0):
                continue
            gap = abs(mu[s] * p[s, t] - mu[t] * p[t, s])
            if gap > worst:
                worst = gap
                worst_pair = (tuple(states[s]), tuple(states[t]))
    return {"max_violation": worst, "worst_pair": worst_pair}


def stationary_from_eigenvector(instance: SmallInstance) -> np.ndarray:
    """Left unit eigenvector of the transition matrix (independent route)."""
    _, p = transition_matrix(instance)
    vals, vecs = np.linalg.eig(p.T)
    idx = int(np.argmin(np.abs(vals - 1.0)))
    v = np.real(vecs[:, idx])
    v = np.abs(v)
    return v / v.sum()


def check_discrete_derivative(
    instance: SmallInstance, max_states: int | None = None, rng=None
) -> DerivativeReport:
    """Verify f(x) - f(x - e_i) equals the per-agent clever payoff.

    With a fixed price the identity holds exactly; with an
    aggregate-dependent price the report lists the violations. f is the
    total population utility at the composition.
    """
    instance.validate()
    states = enumerate_compositions(instance.n_agents, instance.n_levels)
    if max_states is not None and len(states) > max_states:
        if rng is None:
            rng = np.random.default_rng(0)
        pick = rng.choice(len(states), size=max_states, replace=False)
        states = states[pick]
    q = instance.energies()
    gains = instance.fixed_payoffs() + instance.beta0 * q  # valuation terms

    def total_utility(counts):
        aggregate = float(np.dot(counts, q))
        rate = instance.price(aggregate)
        return float(np.dot(counts, gains) - rate * aggregate)

    checked = 0
    max_violation = 0.0
    violations = []
    for row in states:
        f_here = total_utility(row)
        aggregate = float(np.dot(row, q))
        rate = instance.price(aggregate)
        for i in range(instance.n_levels):
            if row[i] == 0:
                continue
            reduced = row.copy()
            reduced[i] -= 1
            clever = gains[i] - rate * q[i]
            gap = abs((f_here - total_utility(reduced)) - clever)
            checked += 1
            if gap > max_violation:
                max_violation = gap
            if gap >= 1e-9:
                violations.append(
                    {"state": [int(c) for c in row], "strategy": i, "gap": gap}
                )
    return DerivativeReport(
        checked=checked, max_violation=max_violation, violations=violations
    )


def empirical_distribution(
    instance: SmallInstance,
    steps: int,
    rng: np.random.Generator,
    burn_in: int = 10_000,
    initial_level: int = 0,
) -> np.ndarray:
    """Visit frequencies over compositions from a simulated chain.

    Same law as transition_matrix: uniform agent, uniform candidate over
    the other strategies, pairwise-logit acceptance, clever payoffs. Every
    post-burn-in step counts once (self-transitions included).
    """
    instance.validate()
    states = enumerate_compositions(instance.n_agents, instance.n_levels)
    index = {tuple(int(c) for c in row): s for s, row in enumerate(states)}
    n, k = instance.n_agents, instance.n_levels
    q = instance.energies().tolist()
    gains = (instance.fixed_payoffs() + instance.beta0 * np.asarray(q)).tolist()
    beta0, beta1, q_ref, eta = (
        instance.beta0,
        instance.beta1,
        instance.q_ref,
        instance.eta,
    )

    agent_level = [initial_level] * n
    counts = [0] * k
    counts[initial_level] = n
    aggregate = n * q[initial_level]
    visits = np.zeros(len(states), dtype=np.int64)
    state_idx = index[tuple(counts)]
    rnd = rng.random

    for step in range(burn_in + steps):
        u1 = rnd()
        a = int(u1 * n)
        if a >= n:
            a = n - 1
        i = agent_level[a]
        u2 = rnd()
        idx = int(u2 * (k - 1))
        if idx >= k - 1:
            idx = k - 2
        j = idx + 1 if idx >= i else idx

        pi_i = gains[i] - (beta0 + beta1 * aggregate / q_ref) * q[i]
        agg_j = aggregate - q[i] + q[j]
        pi_j = gains[j] - (beta0 + beta1 * agg_j / q_ref) * q[j]
        rho = _logistic((pi_j - pi_i) / eta)
        u3 = rnd()
        if u3 < rho:
            agent_level[a] = j
            counts[i] -= 1
            counts[j] += 1
            aggregate = agg_j
            state_idx = index[tuple(counts)]
        if step >= burn_in:
            visits[state_idx] += 1
    return visits / visits.sum()


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def analyze(
    instance: SmallInstance,
    steps: int = 1_000_000,
    burn_in: int = 10_000,
    rng: np.random.Generator | None = None,
) -> dict:
    """Full validation report for one instance."""
    if rng is None:
        rng = np.random.default_rng(0)
    dist = stationary_distribution(instance)
    derivative = check_discrete_derivative(instance)
    balance = detailed_balance_report(instance)
    eig = stationary_from_eigenvector(instance)
    empirical = empirical_distribution(instance, steps, rng, burn_in=burn_in)
    return {
        "instance": {
            "n_agents": instance.n_agents,
            "levels": list(instance.levels),
            "theta": instance.theta,
            "elasticity": instance.elasticity,
            "valuation": instance.valuation,
            "q_levels": list(instance.energies()),
            "beta0": instance.beta0,
            "beta1": instance.beta1,
            "eta": instance.eta,
        },
        "n_states": int(len(dist.states)),
        "potential_max_violation": derivative.max_violation,
        "potential_checked": derivative.checked,
        "detailed_balance_max_violation": balance["max_violation"],
        "eigenvector_max_diff": float(np.max(np.abs(eig - dist.probabilities))),
        "tv_empirical_vs_closed_form": total_variation(
            empirical, dist.probabilities
        ),
        "steps": int(steps),
        "burn_in": int(burn_in),
    }


def instance_from_dict(payload: dict) -> SmallInstance:
    known = {
        "n_agents",
        "levels",
        "theta",
        "elasticity",
        "valuation",
        "q_levels",
        "beta0",
        "beta1",
        "q_ref",
        "eta",
        "payoffs",
    }
    extra = set(payload) - known - {"steps", "burn_in", "seed"}
    if extra:
        raise ValueError(f"unknown instance fields: {sorted(extra)}")
    kwargs = {k: payload[k] for k in known if k in payload}
    for tup in ("levels", "q_levels", "payoffs"):
        if kwargs.get(tup) is not None:
            kwargs[tup] = tuple(kwargs[tup])
    inst = SmallInstance(**kwargs)
    inst.validate()
    return inst


def write_distribution_csv(path, dist: StationaryDistribution, empirical=None):
    with open(path, "w", encoding="utf-8") as fh:
        k = dist.states.shape[1]
        header = ",".join(f"count_{i}" for i in range(k)) + ",closed_form"
        if empirical is not None:
            header += ",empirical"
        fh.write(header + "\n")
        for s, row in enumerate(dist.states):
            line = ",".join(str(int(c)) for c in row)
            line += f",{float(dist.probabilities[s])!r}"
            if empirical is not None:
                line += f",{float(empirical[s])!r}"
            fh.write(line + "\n")


def write_report_json(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
