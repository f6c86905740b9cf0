"""Executable verification of the total-variation-distance inequalities
and the worst-case performance lower bound on small enumerable problems.

Conventions. Discounted returns here follow the bound's own indexing: the
reward in slot t (t = 1, 2, ...) is weighted by gamma^t, so the first
slot already carries one factor of gamma. Transition dynamics depend on
the environment parameter but not on the action, mirroring the fact that
channel-state evolution is unrelated to the agent's policy; this is what
makes the policy-independent state marginals in the proof exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def validate_dist(p: np.ndarray, what: str = "distribution") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError(f"{what} has negative entries")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"{what} must sum to 1 within 1e-12, got {p.sum()}")
    return p


def validate_rows(t: np.ndarray, what: str = "conditional table") -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError(f"{what} has negative entries")
    if np.any(np.abs(t.sum(axis=-1) - 1.0) > 1e-12):
        raise ValueError(f"{what} rows must sum to 1 within 1e-12")
    return t


def tv_distance(p, q) -> float:
    """Half the L1 distance between two distributions on a common support."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"support mismatch: {p.shape} vs {q.shape}")
    return float(0.5 * np.abs(p - q).sum())


# --- Lemma 1: joint TV <= E[conditional TV] + marginal TV -----------------------

@dataclass
class LemmaResult:
    lhs: float
    rhs: float
    holds: bool


def lemma1_check(p1_x, p2_x, p1_y_given_x, p2_y_given_x,
                 tol: float = 1e-12) -> LemmaResult:
    """Check the joint-distribution TV bound for one instance."""
    p1_x = validate_dist(p1_x, "p1(x)")
    p2_x = validate_dist(p2_x, "p2(x)")
    c1 = validate_rows(p1_y_given_x, "p1(y|x)")
    c2 = validate_rows(p2_y_given_x, "p2(y|x)")
    joint1 = p1_x[:, None] * c1
    joint2 = p2_x[:, None] * c2
    lhs = tv_distance(joint1.ravel(), joint2.ravel())
    cond_tv = 0.5 * np.abs(c1 - c2).sum(axis=1)
    rhs = float(p1_x @ cond_tv + tv_distance(p1_x, p2_x))
    return LemmaResult(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs + tol))


# --- Lemma 2: state-marginal TV <= (t-1) * max_t E[transition-row TV] ------------

@dataclass
class MarkovChainSpec:
    initial: np.ndarray      # (S,)
    transitions: np.ndarray  # (S, S) row-stochastic

    def __post_init__(self):
        self.initial = validate_dist(self.initial, "initial distribution")
        self.transitions = validate_rows(self.transitions, "transition matrix")


@dataclass
class Lemma2Result:
    lhs: np.ndarray   # TV of the time-t marginals, t = 1..horizon
    rhs: np.ndarray   # (t-1) * running max of expected row TV
    holds: bool


def lemma2_check(chain1: MarkovChainSpec, chain2: MarkovChainSpec,
                 horizon: int, tol: float = 1e-12) -> Lemma2Result:
    """Propagate exact marginals and check the bound for every t <= horizon."""
    if not np.array_equal(chain1.initial, chain2.initial):
        raise ValueError("lemma 2 requires equal initial state distributions")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    row_tv = 0.5 * np.abs(chain1.transitions - chain2.transitions).sum(axis=1)
    mu1 = chain1.initial.copy()
    mu2 = chain2.initial.copy()
    lhs = np.zeros(horizon)
    rhs = np.zeros(horizon)
    running_max = 0.0
    lhs[0] = tv_distance(mu1, mu2)  # t = 1: shared initial, bound is 0
    for t in range(2, horizon + 1):
        running_max = max(running_max, float(mu1 @ row_tv))
        mu1 = mu1 @ chain1.transitions
        mu2 = mu2 @ chain2.transitions
        lhs[t - 1] = tv_distance(mu1, mu2)
        rhs[t - 1] = (t - 1) * running_max
    return Lemma2Result(lhs=lhs, rhs=rhs, holds=bool(np.all(lhs <= rhs + tol)))


# --- Theorem 1: worst-case performance lower bound --------------------------------

@dataclass
class TabularMdp:
    """Enumerable MDP family: action-independent transitions per parameter."""

    initial: np.ndarray      # (S,)
    transitions: np.ndarray  # (n_params, S, S)
    rewards: np.ndarray      # (S, A), |r| <= r_max
    r_max: float
    gamma: float
    horizon: int

    def __post_init__(self):
        self.initial = validate_dist(self.initial, "initial distribution")
        self.transitions = validate_rows(self.transitions, "transition tensor")
        self.rewards = np.asarray(self.rewards, dtype=float)
        if np.any(np.abs(self.rewards) > self.r_max + 1e-12):
            raise ValueError("rewards exceed r_max")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1); the bound is asserted "
                             "only for positive discounts")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def n_params(self) -> int:
        return self.transitions.shape[0]

    def marginals(self, param: int) -> np.ndarray:
        """State marginals mu_t for slots t = 1..horizon (policy-free)."""
        mu = np.zeros((self.horizon, self.initial.size))
        mu[0] = self.initial
        for t in range(1, self.horizon):
            mu[t] = mu[t - 1] @ self.transitions[param]
        return mu

    def value(self, policy: np.ndarray, param: int) -> float:
        """eta(policy | param) = sum_{t=1}^{horizon} gamma^t E[r_t]."""
        policy = validate_rows(policy, "policy")
        r_bar = (policy * self.rewards).sum(axis=1)
        mu = self.marginals(param)
        weights = self.gamma ** np.arange(1, self.horizon + 1)
        return float(weights @ (mu @ r_bar))


@dataclass
class BoundReport:
    lhs: float                   # eta(pi_tilde | p_w)
    rhs: float                   # full right-hand side of the bound
    slack: float                 # lhs - rhs
    truncation: float            # tail allowance 2 r_max gamma^(H+1) / (1-gamma)
    eps_pi: float
    eps_p: np.ndarray            # per-parameter dynamics divergence from p_w
    etas: np.ndarray             # eta(pi_tilde | p) per parameter
    worst: int
    holds: bool = field(default=False)

    @property
    def accounted_slack(self) -> float:
        return self.slack + self.truncation


def theorem1_verify(mdp: TabularMdp, weights: np.ndarray, pi: np.ndarray,
                    pi_tilde: np.ndarray, tol: float = 1e-6) -> BoundReport:
    """Evaluate both sides of the worst-case lower bound exactly.

    The expectations in the divergence terms use exact state marginals
    under the worst parameter; with action-independent transitions those
    marginals are the same under either policy, so no sampling-policy
    choice arises.
    """
    weights = validate_dist(weights, "parameter distribution")
    if weights.size != mdp.n_params:
        raise ValueError("weights and transition tensor disagree on parameter count")
    pi = validate_rows(pi, "pi")
    pi_tilde = validate_rows(pi_tilde, "pi_tilde")

    etas = np.array([mdp.value(pi_tilde, p) for p in range(mdp.n_params)])
    worst = int(np.argmin(etas))
    mu_w = mdp.marginals(worst)

    policy_tv = 0.5 * np.abs(pi_tilde - pi).sum(axis=1)
    eps_pi = float(np.max(mu_w @ policy_tv))
    eps_p = np.zeros(mdp.n_params)
    for p in range(mdp.n_params):
        row_tv = 0.5 * np.abs(mdp.transitions[worst] - mdp.transitions[p]).sum(axis=1)
        eps_p[p] = float(np.max(mu_w @ row_tv))

    g = mdp.gamma
    penalty_pi = 4.0 * mdp.r_max * g / (1.0 - g) * eps_pi
    penalty_p = 2.0 * mdp.r_max * g * g / (1.0 - g) ** 2 * float(weights @ eps_p)
    rhs = float(weights @ etas) - penalty_pi - penalty_p
    lhs = float(etas[worst])
    truncation = 2.0 * mdp.r_max * g ** (mdp.horizon + 1) / (1.0 - g)
    report = BoundReport(lhs=lhs, rhs=rhs, slack=lhs - rhs, truncation=truncation,
                         eps_pi=eps_pi, eps_p=eps_p, etas=etas, worst=worst)
    report.holds = report.accounted_slack >= -tol
    return report


def policy_gap_check(mdp: TabularMdp, pi: np.ndarray, pi_tilde: np.ndarray,
                     tol: float = 1e-12) -> LemmaResult:
    """Spot-check of the intermediate step: the value gap between the two
    policies on the worst parameter is within 2 r_max sum_t gamma^t eps_pi."""
    etas = np.array([mdp.value(pi_tilde, p) for p in range(mdp.n_params)])
    worst = int(np.argmin(etas))
    mu_w = mdp.marginals(worst)
    policy_tv = 0.5 * np.abs(pi_tilde - pi).sum(axis=1)
    eps_pi = float(np.max(mu_w @ policy_tv))
    lhs = abs(mdp.value(pi_tilde, worst) - mdp.value(pi, worst))
    weights = mdp.gamma ** np.arange(1, mdp.horizon + 1)
    rhs = 2.0 * mdp.r_max * float(weights.sum()) * eps_pi
    return LemmaResult(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs + tol))


# --- random instances and sweeps ----------------------------------------------------

def random_dist(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n))


def random_rows(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.dirichlet(np.ones(cols), size=rows)


def random_mdp_instance(rng: np.random.Generator, max_states: int = 4,
                        max_actions: int = 3, max_params: int = 3,
                        gammas=(0.5, 0.9), horizon: int = 60):
    """Full-support random instance; some draws pin pi_tilde = pi or
    duplicate all parameters to exercise the equality families."""
    S = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(2, max_actions + 1))
    n_params = int(rng.integers(1, max_params + 1))
    r_max = float(rng.uniform(0.5, 2.0))
    transitions = np.stack([random_rows(rng, S, S) for _ in range(n_params)])
    if rng.uniform() < 0.2:
        transitions[:] = transitions[0]
    mdp = TabularMdp(initial=random_dist(rng, S), transitions=transitions,
                     rewards=rng.uniform(0.0, r_max, size=(S, A)), r_max=r_max,
                     gamma=float(rng.choice(gammas)), horizon=horizon)
    weights = random_dist(rng, n_params)
    pi = random_rows(rng, S, A)
    pi_tilde = pi.copy() if rng.uniform() < 0.2 else random_rows(rng, S, A)
    return mdp, weights, pi, pi_tilde


@dataclass
class SweepReport:
    suite: str
    instances: int
    violations: int
    min_margin: float   # min over instances of (rhs - lhs), or accounted slack
    detail: str = ""

    def ok(self) -> bool:
        return self.violations == 0

    def render(self) -> str:
        status = "PASS" if self.ok() else "FAIL"
        return (f"[{status}] suite={self.suite} instances={self.instances} "
                f"violations={self.violations} min_margin={self.min_margin:.3e}"
                + (f" ({self.detail})" if self.detail else ""))


def sweep_lemma1(n_instances: int, seed: int, max_support: int = 6) -> SweepReport:
    rng = np.random.default_rng(seed)
    violations = 0
    min_margin = np.inf
    for _ in range(n_instances):
        nx = int(rng.integers(2, max_support + 1))
        ny = int(rng.integers(2, max_support + 1))
        res = lemma1_check(random_dist(rng, nx), random_dist(rng, nx),
                           random_rows(rng, nx, ny), random_rows(rng, nx, ny))
        violations += not res.holds
        min_margin = min(min_margin, res.rhs - res.lhs)
    return SweepReport("lemma1", n_instances, violations, float(min_margin))


def sweep_lemma2(n_instances: int, seed: int, max_states: int = 5,
                 horizon: int = 10) -> SweepReport:
    rng = np.random.default_rng(seed)
    violations = 0
    min_margin = np.inf
    for _ in range(n_instances):
        S = int(rng.integers(2, max_states + 1))
        init = random_dist(rng, S)
        res = lemma2_check(MarkovChainSpec(init, random_rows(rng, S, S)),
                           MarkovChainSpec(init.copy(), random_rows(rng, S, S)),
                           horizon)
        violations += not res.holds
        min_margin = min(min_margin, float(np.min(res.rhs - res.lhs)))
    return SweepReport("lemma2", n_instances, violations, float(min_margin))


def sweep_theorem1(n_instances: int, seed: int, tol: float = 1e-6,
                   **instance_kwargs) -> SweepReport:
    rng = np.random.default_rng(seed)
    violations = 0
    min_slack = np.inf
    gap_failures = 0
    for _ in range(n_instances):
        mdp, weights, pi, pi_tilde = random_mdp_instance(rng, **instance_kwargs)
        report = theorem1_verify(mdp, weights, pi, pi_tilde, tol=tol)
        violations += not report.holds
        min_slack = min(min_slack, report.accounted_slack)
        gap_failures += not policy_gap_check(mdp, pi, pi_tilde).holds
    detail = f"policy-gap failures={gap_failures}" if gap_failures else ""
    return SweepReport("theorem1", n_instances, violations + gap_failures,
                       float(min_slack), detail=detail)
