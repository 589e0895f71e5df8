"""Numerical verification harness for SGD convergence on quadratics.

The objective is a strongly convex quadratic with a known spectrum, so
smoothness and PL constants are exact.  Stochastic gradient oracles
are constructed so their bias is zero and their second moment matches
the assumed bounds exactly:

    g = grad + c * ||grad|| * u + sigma * v,   u, v independent unit vectors,

with c = 0 for the in-distribution oracle, sqrt(epsilon/2) for the
friendly oracle and sqrt(nu/2) for the unfriendly oracle, giving
E||g - grad||^2 = c^2 ||grad||^2 + sigma^2.  Mixture runs combine the
three oracles with weights lambda, (1-lambda) tau, (1-lambda)(1-tau).

Three step-size regimes are exercised: (a) the whole mixture with the
conservative step forced by the unfriendly variance, (b) labeled data
only with a log-scaled step over n steps, (c) labeled plus friendly
data over n + m steps.  The expected-risk-gap bounds and the proof's
per-step inequalities are checked by Monte Carlo with explicit margins
and standard errors.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .data import derive_seed, seeded_rng
from .errors import ConfigError

ORACLE_KINDS = ("id", "friendly", "unfriendly")
DIVERGENCE_GAP = 1e12


@dataclass(frozen=True)
class OracleSpec:
    sigma2: float = 1.0
    epsilon: float = 0.05
    nu: float = 1.0e4

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ConfigError("sigma2 must be >= 0")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError("epsilon must be in [0, 1)")
        if self.nu <= 1.0:
            raise ConfigError("nu must exceed 1")

    def deviation_coeff(self, kind):
        """The gradient-proportional deviation coefficient c for a kind."""
        if kind == "id":
            return 0.0
        if kind == "friendly":
            return math.sqrt(self.epsilon / 2.0)
        if kind == "unfriendly":
            return math.sqrt(self.nu / 2.0)
        raise ConfigError(f"unknown oracle kind {kind!r}")

    def second_moment(self, kind, grad_norm):
        """Exact E||g - grad||^2 for a kind at a given gradient norm."""
        c = self.deviation_coeff(kind)
        return c * c * grad_norm * grad_norm + self.sigma2


@dataclass(frozen=True)
class QuadraticObjective:
    """L(theta) = 0.5 (theta - theta*)^T H (theta - theta*) + l_star."""

    h: np.ndarray
    theta_star: np.ndarray
    l_star: float
    mu: float
    l_smooth: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns

    @staticmethod
    def build(dim, mu, l_smooth, seed, l_star=0.0):
        if dim < 1:
            raise ConfigError("dim must be >= 1")
        if not 0 < mu <= l_smooth:
            raise ConfigError(f"need 0 < mu <= l_smooth, got {mu}, {l_smooth}")
        if dim == 1 and mu != l_smooth:
            raise ConfigError("dim 1 cannot hold two distinct eigenvalues")
        rng = seeded_rng(seed)
        evals = np.linspace(mu, l_smooth, dim)
        a = rng.standard_normal((dim, dim))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
        h = (q * evals) @ q.T
        h = 0.5 * (h + h.T)  # exact symmetry
        theta_star = rng.standard_normal(dim)
        return QuadraticObjective(
            h=h, theta_star=theta_star, l_star=float(l_star), mu=float(mu),
            l_smooth=float(l_smooth), eigenvalues=evals, eigenvectors=q,
        )

    @property
    def dim(self):
        return self.h.shape[0]

    def value(self, theta):
        e = np.asarray(theta, dtype=np.float64) - self.theta_star
        if e.ndim == 1:
            return float(0.5 * e @ self.h @ e + self.l_star)
        return 0.5 * ((e @ self.h) * e).sum(axis=-1) + self.l_star

    def gradient(self, theta):
        e = np.asarray(theta, dtype=np.float64) - self.theta_star
        return e @ self.h

    def gap(self, theta):
        return self.value(theta) - self.l_star


def power_iteration(h, iters=3000, seed=0):
    """Largest-eigenvalue estimate via power iteration (Rayleigh quotient)."""
    rng = seeded_rng(seed, 977)
    v = rng.standard_normal(h.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = h @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return float(v @ h @ v)


def measured_extremes(objective, iters=3000, seed=0):
    """(lambda_min, lambda_max) of the Hessian measured by power iteration."""
    lmax = power_iteration(objective.h, iters, seed)
    shift = lmax * (1.0 + 1e-6) + 1e-12
    shifted = shift * np.eye(objective.dim) - objective.h
    lmin = shift - power_iteration(shifted, iters, seed + 1)
    return float(lmin), float(lmax)


def equal_share_theta0(objective, delta0):
    """Start point with gap exactly delta0, spread evenly across modes."""
    if delta0 <= 0:
        raise ConfigError("delta0 must be positive")
    share = 2.0 * (delta0 / objective.dim) / objective.eigenvalues
    e = objective.eigenvectors @ np.sqrt(share)
    return objective.theta_star + e


def _unit_rows(rng, shape):
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def sample_oracle(kind, objective, spec, theta, rng):
    """One stochastic gradient draw of the given kind at theta."""
    if isinstance(rng, (int, np.integer)):
        rng = seeded_rng(rng)
    grad = objective.gradient(theta)
    c = spec.deviation_coeff(kind)
    g = grad.copy()
    if c > 0.0:
        g += c * np.linalg.norm(grad) * _unit_rows(rng, grad.shape)
    if spec.sigma2 > 0.0:
        g += math.sqrt(spec.sigma2) * _unit_rows(rng, grad.shape)
    return g


def _mixture_weights(lam, tau):
    if not 0.0 <= lam <= 1.0 or not 0.0 <= tau <= 1.0:
        raise ConfigError("lambda and tau must lie in [0, 1]")
    return ((lam, "id"), ((1.0 - lam) * tau, "friendly"),
            ((1.0 - lam) * (1.0 - tau), "unfriendly"))


def _mixture_draws(grad_rows, spec, lam, tau, rng):
    """Vectorized mixture draws, one per row of grad_rows.

    Zero-weight components consume no randomness.  Draw order is fixed:
    id, then friendly, then unfriendly; within a component the
    gradient-proportional unit vector precedes the additive one.
    """
    norms = np.linalg.norm(grad_rows, axis=-1, keepdims=True)
    out = np.zeros_like(grad_rows)
    for weight, kind in _mixture_weights(lam, tau):
        if weight == 0.0:
            continue
        g = grad_rows.copy()
        c = spec.deviation_coeff(kind)
        if c > 0.0:
            g = g + c * norms * _unit_rows(rng, grad_rows.shape)
        if spec.sigma2 > 0.0:
            g = g + math.sqrt(spec.sigma2) * _unit_rows(rng, grad_rows.shape)
        out += weight * g
    return out


def mixed_gradient(objective, spec, theta, lam, tau, rng):
    """One mixture gradient draw at theta."""
    if isinstance(rng, (int, np.integer)):
        rng = seeded_rng(rng)
    grad = objective.gradient(np.asarray(theta, dtype=np.float64))
    return _mixture_draws(grad[None, :], spec, lam, tau, rng)[0]


def mixture_variance_bound(spec, lam, tau, grad_norm):
    """The assumed bound sigma^2 + (1-lambda)((tau eps + (1-tau) nu)/2) G^2."""
    coeff = (1.0 - lam) * (tau * spec.epsilon + (1.0 - tau) * spec.nu) / 2.0
    return spec.sigma2 + coeff * grad_norm * grad_norm


# -- scenarios -------------------------------------------------------------


@dataclass(frozen=True)
class TheoryScenario:
    """One SGD-on-mixture experiment: a case, a budget, a step rule."""

    case: str  # "a", "b", or "c"
    dim: int
    mu: float
    l_smooth: float
    spec: OracleSpec
    lam: float
    tau: float
    n: int
    m: int = 0
    m_prime: int = 0
    replications: int = 20
    seed: int = 0
    delta0: float = 1.0
    eta_override: float = None

    def __post_init__(self):
        if self.case not in ("a", "b", "c"):
            raise ConfigError(f"case must be one of a, b, c, got {self.case!r}")
        if self.case == "b" and self.lam != 1.0:
            raise ConfigError("case b uses labeled data only (lambda must be 1)")
        if self.case == "c" and self.tau != 1.0:
            raise ConfigError("case c admits no unfriendly mass (tau must be 1)")
        if self.n < 1 or self.m < 0 or self.m_prime < 0:
            raise ConfigError("sample counts must be n >= 1, m, m' >= 0")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.delta0 <= 0:
            raise ConfigError("delta0 must be positive")

    @property
    def steps(self):
        if self.case == "a":
            return self.n + self.m + self.m_prime
        if self.case == "b":
            return self.n
        return self.n + self.m

    def eta(self):
        if self.eta_override is not None:
            if self.eta_override <= 0:
                raise ConfigError("eta override must be positive")
            return float(self.eta_override)
        if self.case == "a":
            coeff = (1.0 - self.lam) * (
                self.tau * self.spec.epsilon + (1.0 - self.tau) * self.spec.nu
            )
            if coeff <= 0:
                raise ConfigError(
                    "case a step rule requires unlabeled mass with nonzero variance"
                )
            return 1.0 / (coeff * self.l_smooth)
        total = self.steps
        if self.spec.sigma2 <= 0:
            raise ConfigError(
                "the log step rule needs sigma2 > 0; pass eta_override instead"
            )
        log_arg = total * self.mu**2 * self.delta0 / (
            self.spec.sigma2 * self.l_smooth
        )
        if log_arg <= 1.0:
            raise ConfigError(
                f"budget {total} too small for the log step rule (argument "
                f"{log_arg:.3g} <= 1)"
            )
        return (2.0 / (total * self.mu)) * math.log(log_arg)

    def build_objective(self):
        return QuadraticObjective.build(
            self.dim, self.mu, self.l_smooth, seed=derive_seed(self.seed, 11)
        )


def special_case_budget(spec, lam, tau, mu, l_smooth):
    """n+m+m' at which the case-a step equals 2/((n+m+m') mu)."""
    coeff = (1.0 - lam) * (tau * spec.epsilon + (1.0 - tau) * spec.nu)
    if coeff <= 0:
        raise ConfigError("special-case budget requires nonzero mixture variance")
    return 2.0 * coeff * l_smooth / mu


def erb_bound(total, mu, l_smooth, sigma2, delta0):
    """Expected-risk-gap bound for the log step rule over `total` steps."""
    log_arg = total * mu**2 * delta0 / (sigma2 * l_smooth)
    if log_arg <= 1.0:
        raise ConfigError("bound undefined: log argument <= 1")
    return (l_smooth * sigma2 / (total * mu**2)) * (1.0 + 2.0 * math.log(log_arg))


@dataclass
class MixtureRunResult:
    scenario: TheoryScenario
    eta: float
    mean_gap: np.ndarray  # (steps + 1,), averaged over replications
    final_gaps: np.ndarray  # (replications,)
    diverged: np.ndarray  # (replications,) bool

    @property
    def final_gap(self):
        return float(self.final_gaps.mean())


def run_sgd_mixture(scenario):
    """Run the scenario's SGD chain for all replications.

    Replications are vectorized as rows over one seeded stream; the
    replication index keys a fixed row, so results do not depend on
    how the caller schedules scenarios.
    """
    objective = scenario.build_objective()
    eta = scenario.eta()
    theta0 = equal_share_theta0(objective, scenario.delta0)
    r = scenario.replications
    theta = np.tile(theta0, (r, 1))
    rng = seeded_rng(derive_seed(scenario.seed, 13))
    steps = scenario.steps
    mean_gap = np.empty(steps + 1)
    gaps = objective.gap(theta)
    mean_gap[0] = gaps.mean()
    active = np.ones(r, dtype=bool)
    for t in range(steps):
        grad = objective.gradient(theta)
        draws = _mixture_draws(grad, scenario.spec, scenario.lam, scenario.tau,
                               rng)
        theta = np.where(active[:, None], theta - eta * draws, theta)
        gaps = objective.gap(theta)
        active &= gaps <= DIVERGENCE_GAP
        mean_gap[t + 1] = gaps.mean()
    return MixtureRunResult(
        scenario=scenario,
        eta=eta,
        mean_gap=mean_gap,
        final_gaps=gaps,
        diverged=~active,
    )


# -- proof-step checks ----------------------------------------------------


@dataclass
class InequalityReport:
    name: str
    passed: bool
    margin: float
    stderr: float
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "margin": float(self.margin),
            "stderr": float(self.stderr),
            "detail": {k: float(v) for k, v in self.detail.items()},
        }


def check_descent_step(objective, spec, lam, tau, theta, eta, draws=100000,
                       seed=0):
    """Monte-Carlo check of the expected one-step descent inequality.

    E[L(theta') - L(theta)] <= -(eta/2) ||grad||^2
                               + (eta^2 L / 2) E||grad - g||^2
    for eta <= 1/L.  Margin is the per-draw mean of rhs - lhs.
    """
    if eta > 1.0 / objective.l_smooth + 1e-12:
        raise ConfigError("descent step requires eta <= 1/l_smooth")
    theta = np.asarray(theta, dtype=np.float64)
    rng = seeded_rng(derive_seed(seed, 29))
    grad = objective.gradient(theta)
    grad_sq = float(grad @ grad)
    g = _mixture_draws(np.tile(grad, (draws, 1)), spec, lam, tau, rng)
    lhs = objective.value(theta[None, :] - eta * g) - objective.value(theta)
    dev_sq = ((g - grad) ** 2).sum(axis=1)
    rhs = -0.5 * eta * grad_sq + 0.5 * eta**2 * objective.l_smooth * dev_sq
    per_draw = rhs - lhs
    margin = float(per_draw.mean())
    stderr = float(per_draw.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    return InequalityReport(
        name="descent_step",
        passed=margin >= -3.0 * stderr,
        margin=margin,
        stderr=stderr,
        detail={"eta": eta, "grad_norm": math.sqrt(grad_sq),
                "lhs_mean": float(lhs.mean()), "rhs_mean": float(rhs.mean())},
    )


def check_mixture_variance_bound(objective, spec, lam, tau, theta,
                                 draws=100000, seed=0):
    """Monte-Carlo check that the mixture second moment obeys its bound."""
    theta = np.asarray(theta, dtype=np.float64)
    rng = seeded_rng(derive_seed(seed, 31))
    grad = objective.gradient(theta)
    g = _mixture_draws(np.tile(grad, (draws, 1)), spec, lam, tau, rng)
    dev_sq = ((g - grad) ** 2).sum(axis=1)
    bound = mixture_variance_bound(spec, lam, tau, float(np.linalg.norm(grad)))
    per_draw = bound - dev_sq
    margin = float(per_draw.mean())
    stderr = float(per_draw.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    return InequalityReport(
        name="mixture_variance_bound",
        passed=margin >= -3.0 * stderr,
        margin=margin,
        stderr=stderr,
        detail={"bound": bound, "measured": float(dev_sq.mean())},
    )


def record_gd_trajectory(objective, theta0, eta, steps):
    """Exact-gradient descent run; returns (thetas, grads) stacked rows."""
    theta = np.asarray(theta0, dtype=np.float64).copy()
    thetas = [theta.copy()]
    grads = [objective.gradient(theta)]
    for _ in range(steps):
        theta = theta - eta * grads[-1]
        thetas.append(theta.copy())
        grads.append(objective.gradient(theta))
    return np.stack(thetas), np.stack(grads)


def check_drift_bound(grads, eta, l_smooth, window):
    """Check the epoch-drift bound on a recorded trajectory.

    For every start t and lookahead 1 <= m <= window:
        ||g_{t+m} - g_t|| <= eta * L * || sum_{k=0}^{m-1} g_{t+k} ||.
    Returns a report with the worst relative slack (positive = holds).
    """
    grads = np.asarray(grads, dtype=np.float64)
    total = len(grads)
    if window < 1 or total < 2:
        raise ConfigError("need window >= 1 and at least two recorded steps")
    prefix = np.concatenate([np.zeros((1, grads.shape[1])), np.cumsum(grads, axis=0)])
    worst = math.inf
    worst_at = (0, 0)
    checked = 0
    for m in range(1, min(window, total - 1) + 1):
        lhs = np.linalg.norm(grads[m:] - grads[:-m], axis=1)
        sums = prefix[m:-1] - prefix[:-m - 1]
        rhs = eta * l_smooth * np.linalg.norm(sums, axis=1)
        slack = rhs - lhs
        scale = np.maximum(rhs, 1e-300)
        rel = slack / scale
        i = int(np.argmin(rel))
        if rel[i] < worst:
            worst = float(rel[i])
            worst_at = (i, m)
        checked += len(rel)
    passed = worst >= -1e-9
    return InequalityReport(
        name="drift_bound",
        passed=passed,
        margin=worst,
        stderr=0.0,
        detail={"windows_checked": checked, "worst_t": worst_at[0],
                "worst_m": worst_at[1]},
    )


def check_lsm_bound(instance_objectives, theta, rho, g_bar, mu):
    """Check the loss bound implied by selection under the PL condition.

    Instances whose gradient deviation satisfies ||g_x - g_bar||^2 < rho
    must obey L_x(theta) <= (sqrt(rho) + ||g_bar||)^2 / (2 mu) + L_x*.
    """
    theta = np.asarray(theta, dtype=np.float64)
    g_bar = np.asarray(g_bar, dtype=np.float64)
    weakest = min(obj.mu for obj in instance_objectives)
    if mu > weakest + 1e-12:
        raise ConfigError(
            f"PL constant {mu} exceeds weakest instance curvature {weakest}"
        )
    cap = (math.sqrt(rho) + float(np.linalg.norm(g_bar))) ** 2 / (2.0 * mu)
    margins = []
    selected = 0
    for obj in instance_objectives:
        dev = obj.gradient(theta) - g_bar
        if float(dev @ dev) < rho:
            selected += 1
            margins.append(cap + obj.l_star - obj.value(theta))
    margin = float(min(margins)) if margins else math.inf
    return InequalityReport(
        name="lsm_loss_bound",
        passed=margin >= 0.0 or not margins,
        margin=margin if margins else 0.0,
        stderr=0.0,
        detail={"selected": selected, "total": len(instance_objectives),
                "cap": cap},
    )


def random_lsm_event(dim, mu, l_smooth, count, seed):
    """Draw a random selection event over per-instance quadratic losses.

    Each instance gets its own curvature in [mu, l_smooth] (so mu is a
    valid shared PL constant), its own minimizer and its own floor
    value.  Scores are squared deviations from the mean gradient at a
    random iterate; the threshold is the automatic two-class cut on
    those scores.  Returns (objectives, theta, g_bar, rho).
    """
    from .selection import otsu_threshold

    if count < 2:
        raise ConfigError("an event needs at least 2 instances")
    rng = seeded_rng(seed, 41)
    objectives = []
    for i in range(count):
        mu_x = float(rng.uniform(mu, l_smooth))
        l_x = float(rng.uniform(mu_x, l_smooth))
        objectives.append(QuadraticObjective.build(
            dim, mu_x, max(l_x, mu_x), seed=derive_seed(seed, 42, i),
            l_star=float(rng.uniform(0.0, 1.0)),
        ))
    theta = rng.standard_normal(dim)
    grads = np.stack([obj.gradient(theta) for obj in objectives])
    g_bar = grads.mean(axis=0)
    scores = ((grads - g_bar) ** 2).sum(axis=1)
    rho = otsu_threshold(scores)
    return objectives, theta, g_bar, rho


def fit_rate(ns, gaps):
    """Least-squares slope of log(gap) against log(n).

    Needs at least four grid points spanning two decades; nonpositive
    gaps have no log and are a domain error.
    """
    ns = np.asarray(ns, dtype=np.float64)
    gaps = np.asarray(gaps, dtype=np.float64)
    if len(ns) < 4:
        raise ConfigError("rate fit needs at least 4 grid points")
    if ns.max() / ns.min() < 100.0:
        raise ConfigError("rate fit needs the grid to span >= 2 decades")
    if np.any(gaps <= 0):
        raise ValueError("gaps must be positive to fit a log-log rate")
    slope, intercept = np.polyfit(np.log(ns), np.log(gaps), 1)
    return float(slope), float(intercept)
