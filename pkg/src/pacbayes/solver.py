"""Surrogate descent on the Catoni PAC-Bayes objective.

The reduced objective over the posterior parameter theta is

    Obj(theta) = pi_theta[R] + lam * KL(pi_theta || pi_prior),

and the full bound adds the theta-independent constant
C^2 / (8 lam n) - lam log(delta).  Each step projects the reweighted
evaluation ledger onto span(1, T); for the resulting surrogate the penalized
minimizer is the closed form theta_prior - eta / lam, toward which the
iterate moves under a KL trust region.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .families import DomainError, params_from_json
from .risk import eval_risk, record_evals, EvalStack
from .seeding import ROLE_DRAW, ROLE_EVAL, ROLE_REPORT, ROLE_WEIGHTS, child_seed
from .weighting import (
    GRAM_CONDITION_LIMIT,
    exact_voronoi_weights_1d,
    importance_weights,
    project,
    uniform_weights,
    voronoi_weights,
)

_WEIGHTINGS = ("voronoi", "exact1d", "uniform", "importance")


@dataclass
class CatoniConfig:
    """Hyperparameters of the objective and of the surrogate solver.

    Parameters
    ----------
    lam : float
        Inverse temperature multiplying the KL term.
    delta : float
        Confidence level of the bound, in (0, 1).
    n_data : int
        Sample size appearing in the bound constant.
    c_range : float
        Range radius of the risk (|R| <= c_range).
    kl_max : float
        Trust region radius for one update, measured in KL; may be inf.
    alpha_max : float
        Damping cap on the step toward the surrogate minimizer, in (0, 1].
    n_initial_queries : int
        Risk evaluations drawn at the first step.
    n_queries_per_step : int
        Risk evaluations drawn at each later step; 0 reuses the ledger only.
    query_schedule : sequence of int, optional
        Explicit per-step draw counts; the last entry repeats.  Overrides the
        two fields above when given.
    n_mc_weights : int
        Monte Carlo samples for the Voronoi weight estimate.
    max_steps : int
        Hard cap on solver steps.
    convergence_kl_tol : float
        Stop once the realized KL step falls below this.
    weighting : str
        One of "voronoi", "exact1d", "uniform", "importance".
    record_trace : bool
        Disable to skip the per-step reporting pass (the trace stays empty).
    """

    lam: float
    delta: float = 0.05
    n_data: int = 100
    c_range: float = 2.0
    kl_max: float = 1.0
    alpha_max: float = 0.5
    n_initial_queries: int = 160
    n_queries_per_step: int = 32
    query_schedule: tuple = None
    n_mc_weights: int = 40_000
    max_steps: int = 300
    convergence_kl_tol: float = 1e-8
    weighting: str = "voronoi"
    record_trace: bool = True

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.n_data < 1:
            raise ValueError("n_data must be at least 1")
        if not self.c_range > 0:
            raise ValueError("c_range must be positive")
        if not self.kl_max > 0:
            raise ValueError("kl_max must be positive (inf allowed)")
        if not 0 < self.alpha_max <= 1:
            raise ValueError("alpha_max must lie in (0, 1]")
        if self.query_schedule is not None:
            sched = tuple(int(v) for v in self.query_schedule)
            if not sched or any(v < 0 for v in sched):
                raise ValueError("query_schedule entries must be nonnegative")
            self.query_schedule = sched
        if self.n_initial_queries < 0 or self.n_queries_per_step < 0:
            raise ValueError("query counts must be nonnegative")
        if self.n_mc_weights < 1:
            raise ValueError("n_mc_weights must be at least 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.convergence_kl_tol < 0:
            raise ValueError("convergence_kl_tol must be nonnegative")
        if self.weighting not in _WEIGHTINGS:
            raise ValueError(f"weighting must be one of {_WEIGHTINGS}")

    def queries_at(self, step):
        """Draw count for a given solver step."""
        if self.query_schedule is not None:
            idx = min(step, len(self.query_schedule) - 1)
            return self.query_schedule[idx]
        return self.n_initial_queries if step == 0 else self.n_queries_per_step


def bound_offset(config):
    """Constant part of the bound: c_range^2 / (8 lam n) - lam log(delta)."""
    return float(
        config.c_range**2 / (8.0 * config.lam * config.n_data)
        - config.lam * math.log(config.delta)
    )


def catoni_objective(mean_risk, kl, lam):
    """Reduced objective: mean risk plus lam times KL to the prior."""
    return float(mean_risk + lam * kl)


def catoni_bound(mean_risk, kl, config):
    """Full high-probability bound: the objective plus its constant offset."""
    return catoni_objective(mean_risk, kl, config.lam) + bound_offset(config)


def surrogate_argmin(theta_p, eta, lam):
    """Exact minimizer theta_p - eta / lam of the surrogate objective."""
    return np.asarray(theta_p, dtype=float) - np.asarray(eta, dtype=float) / float(lam)


def damped_update(family, theta, theta_cand, kl_max, alpha_max, *, tol=1e-9, max_iter=200):
    """Largest damped step toward ``theta_cand`` within the trust region.

    Finds the largest alpha <= alpha_max such that theta + alpha (theta_cand -
    theta) stays in the domain and within KL ``kl_max`` of ``theta``.  The KL
    along the ray is nondecreasing in alpha, so bisection applies; the lower
    (feasible) endpoint is returned once the bracket is within ``tol``.

    Returns
    -------
    (numpy.ndarray, float)
        The damped iterate and the alpha actually used.
    """
    theta = np.asarray(theta, dtype=float)
    delta = np.asarray(theta_cand, dtype=float) - theta
    if not np.any(delta):
        return theta.copy(), float(alpha_max)

    def feasible(alpha):
        cand = theta + alpha * delta
        if not family.in_domain(cand):
            return False
        return family.kl(cand, theta) <= kl_max

    if feasible(alpha_max):
        return theta + alpha_max * delta, float(alpha_max)
    lo, hi = 0.0, float(alpha_max)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return theta + lo * delta, lo


def estimate_mean_risk(stack, weights):
    """Weighted ledger average; weights are expected to sum to one."""
    if len(stack) == 0:
        raise ValueError("evaluation stack is empty")
    return float(np.dot(np.asarray(weights, dtype=float), stack.values))


@dataclass
class TraceRecord:
    step: int
    queries: int
    obj_cat: float
    pb_cat: float
    kl_to_prior: float
    alpha: float
    theta: np.ndarray


class SolverTrace:
    """Per-step history of a solver run.

    Each record describes a completed step: cumulative ledger queries, the
    objective/bound estimates at the post-update iterate, its KL to the
    prior, the damping factor used, and the iterate itself.
    """

    _COLUMNS = ("step", "queries", "obj_cat", "pb_cat", "kl_to_prior", "alpha", "theta_json")

    def __init__(self):
        self.records = []

    def __len__(self):
        return len(self.records)

    def append(self, record):
        self.records.append(record)

    def column(self, name):
        """Values of one scalar column as an array."""
        if name not in ("step", "queries", "obj_cat", "pb_cat", "kl_to_prior", "alpha"):
            raise KeyError(name)
        return np.asarray([getattr(r, name) for r in self.records])

    @property
    def query_grid(self):
        return np.asarray([r.queries for r in self.records], dtype=int)

    @property
    def thetas(self):
        return [r.theta for r in self.records]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self._COLUMNS)
            for r in self.records:
                writer.writerow(
                    [
                        int(r.step),
                        int(r.queries),
                        repr(float(r.obj_cat)),
                        repr(float(r.pb_cat)),
                        repr(float(r.kl_to_prior)),
                        repr(float(r.alpha)),
                        json.dumps([float(v) for v in r.theta]),
                    ]
                )

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != cls._COLUMNS:
                raise ValueError("unrecognized trace header")
            for row in reader:
                trace.append(
                    TraceRecord(
                        step=int(row[0]),
                        queries=int(row[1]),
                        obj_cat=float(row[2]),
                        pb_cat=float(row[3]),
                        kl_to_prior=float(row[4]),
                        alpha=float(row[5]),
                        theta=params_from_json(row[6]),
                    )
                )
        return trace


def _weights_for(config, stack, family, theta, seed, current_step, generation_params):
    if config.weighting == "voronoi":
        return voronoi_weights(stack, family, theta, n_mc=config.n_mc_weights, seed=seed)
    if config.weighting == "exact1d":
        return exact_voronoi_weights_1d(stack, family, theta)
    if config.weighting == "uniform":
        return uniform_weights(stack, step=current_step)
    return importance_weights(stack, family, theta, generation_params)


def run_supac_ce(risk, family, theta_p, theta0, config, seed, stack=None):
    """Minimize the Catoni objective by damped surrogate projection steps.

    Parameters
    ----------
    risk : callable
        Pure risk to minimize in expectation.
    family : GaussianFamily
    theta_p : array_like
        Prior natural parameter (also the center of the KL penalty).
    theta0 : array_like
        Starting iterate, inside the domain.
    config : CatoniConfig
    seed : int or numpy.random.SeedSequence
        Master seed; all draw/weight streams derive from it.
    stack : EvalStack, optional
        Warm-start ledger; new draws are appended to it and the trace query
        column keeps counting from its current total.

    Returns
    -------
    (theta, trace, stack)
        Final iterate, per-step :class:`SolverTrace`, and the ledger.
    """
    theta_p = np.asarray(theta_p, dtype=float)
    theta = np.asarray(theta0, dtype=float).copy()
    for name, value in (("prior", theta_p), ("initial point", theta)):
        if not family.in_domain(value):
            raise DomainError(f"{name} lies outside the family domain")
    if stack is None:
        stack = EvalStack(family.predictor_dim)
    elif stack.predictor_dim != family.predictor_dim:
        raise ValueError("stack predictor dimension does not match the family")
    step_offset = stack.next_step()
    generation_params = {}
    trace = SolverTrace()

    for step in range(config.max_steps):
        n_draw = config.queries_at(step)
        if n_draw > 0:
            points = family.sample(theta, n_draw, child_seed(seed, step, ROLE_DRAW))
            values = eval_risk(risk, points)
            record_evals(stack, points, values, step_offset + step)
            generation_params[step_offset + step] = theta.copy()
        if len(stack) == 0:
            raise ValueError(
                "no evaluations available; set n_initial_queries > 0 or pass a warm stack"
            )
        weights = _weights_for(
            config,
            stack,
            family,
            theta,
            child_seed(seed, step, ROLE_WEIGHTS),
            step_offset + step,
            generation_params,
        )
        fit = project(stack, weights, family, theta)
        if step == 0 and not (
            np.isfinite(fit.gram_condition) and fit.gram_condition <= GRAM_CONDITION_LIMIT
        ):
            raise ValueError(
                "projection Gram matrix is ill conditioned at the first step; "
                f"need more than {family.dim + 1} distinct evaluations "
                f"(ledger holds {len(stack)}); increase n_initial_queries"
            )
        theta_cand = surrogate_argmin(theta_p, fit.eta, config.lam)
        theta_next, alpha = damped_update(
            family, theta, theta_cand, config.kl_max, config.alpha_max
        )
        step_kl = family.kl(theta_next, theta)
        if config.record_trace:
            report_weights = _weights_for(
                config,
                stack,
                family,
                theta_next,
                child_seed(seed, step, ROLE_REPORT),
                step_offset + step,
                generation_params,
            )
            mean_risk = estimate_mean_risk(stack, report_weights)
            kl_prior = family.kl(theta_next, theta_p)
            trace.append(
                TraceRecord(
                    step=step,
                    queries=stack.query_count,
                    obj_cat=catoni_objective(mean_risk, kl_prior, config.lam),
                    pb_cat=catoni_bound(mean_risk, kl_prior, config),
                    kl_to_prior=kl_prior,
                    alpha=alpha,
                    theta=theta_next.copy(),
                )
            )
        theta = theta_next
        # KL is nonnegative; clamp roundoff so tol = 0 disables the stop.
        if max(step_kl, 0.0) < config.convergence_kl_tol:
            break
    return theta, trace, stack


def evaluate_objective(risk, family, theta, theta_p, config, n_samples=10_000, seed=0):
    """Fresh-sample estimate of the objective and bound at ``theta``.

    Draws ``n_samples`` new predictors from pi_theta (not recorded in any
    ledger) and combines their mean risk with the exact KL term.  This is the
    common test-time protocol for comparing methods.

    Returns
    -------
    (float, float)
        Objective estimate and bound estimate.
    """
    points = family.sample(theta, n_samples, child_seed(seed, 0, ROLE_EVAL))
    mean_risk = float(np.mean(eval_risk(risk, points)))
    kl = family.kl(theta, theta_p)
    return (
        catoni_objective(mean_risk, kl, config.lam),
        catoni_bound(mean_risk, kl, config),
    )
