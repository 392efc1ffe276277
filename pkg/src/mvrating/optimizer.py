"""MAP fitting by block coordinate descent.

Each outer iteration takes one damped Newton step per model on that model's
block ``(base[m], beta[m, :])`` and then solves the shared weights ``alpha``
with L-BFGS. The objective is convex for Bradley-Terry, so the block order
does not change the limit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .core import Dataset, Design, FeatureSpec, PriorSpec, RatingParameters, anchor
from .likelihood import LikelihoodModel, LossBreakdown, Objective, pointwise

log = logging.getLogger(__name__)

MAX_HALVINGS = 30
LEVENBERG = 1e-6


@dataclass(frozen=True)
class FitConfig:
    max_outer_iterations: int = 200
    param_tolerance: float = 1e-6
    loss_tolerance: float = 1e-9
    newton_damping: float = 1.0
    lbfgs_memory: int = 10

    def __post_init__(self):
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be at least 1")
        if not (self.param_tolerance > 0 and self.loss_tolerance > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.newton_damping <= 1:
            raise ValueError("newton_damping must lie in (0, 1]")


@dataclass(frozen=True)
class FitResult:
    params: RatingParameters
    loss: LossBreakdown
    trace: list[tuple[int, float]] = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0
    max_gradient: float = float("nan")


class FitError(ValueError):
    pass


def converged(trace: Sequence[tuple[int, float]], config: FitConfig, param_change: float = float("inf")) -> bool:
    """Relative loss change and the last iteration's parameter movement are both below tolerance."""
    if len(trace) < 2:
        return False
    prev, last = trace[-2][1], trace[-1][1]
    rel = abs(prev - last) / max(abs(prev), abs(last), 1e-300)
    if prev == last:
        rel = 0.0
    return rel < config.loss_tolerance and param_change < config.param_tolerance


class _State:
    """Mutable optimizer state: parameters plus the cached rating differences."""

    def __init__(self, obj: Objective, base, alpha, beta):
        self.obj = obj
        self.base = np.array(base, dtype=float)
        self.alpha = np.array(alpha, dtype=float)
        self.beta = np.array(beta, dtype=float)
        self.refresh()

    def refresh(self):
        self.delta = self.obj.design.diff(self.base, self.alpha, self.beta)

    def total(self) -> LossBreakdown:
        data = self.obj.data_loss(self.delta)
        pen = self.obj.penalty(self.base, self.alpha, self.beta)
        return LossBreakdown(data, pen, data + pen)


def _solve(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Newton direction; adds Levenberg damping until the block is positive definite."""
    lam = 0.0
    eye = np.eye(len(g))
    for _ in range(40):
        try:
            L = np.linalg.cholesky(H + lam * eye)
        except np.linalg.LinAlgError:
            lam = LEVENBERG if lam == 0.0 else lam * 10.0
            continue
        return -np.linalg.solve(L.T, np.linalg.solve(L, g))
    return -g


def _newton_block(state: _State, m: int, blocks, damping: float) -> float:
    """One damped Newton step on model ``m``; returns the largest parameter change."""
    obj = state.obj
    dz = obj.design
    rows, sign, X = blocks[m]
    w, n = dz.w[rows], dz.n[rows]
    theta = np.concatenate([[state.base[m]], state.beta[m]])

    delta_rows = state.delta[rows]
    f0, g, curv = obj.block_prior(m, theta[0], theta[1:])
    H = np.diag(curv)
    if len(rows):
        loss, d1, d2 = pointwise(obj.lik, delta_rows, w, order=2)
        f0 += float(np.dot(n, loss))
        g = g + X.T @ (n * d1 * sign)
        H = H + (X * (n * d2)[:, None]).T @ X
    if not np.any(g):
        return 0.0
    step = damping * _solve(H, g)
    t = 1.0
    for _ in range(MAX_HALVINGS + 1):
        trial = theta + t * step
        trial_delta = delta_rows + sign * (X @ (t * step)) if len(rows) else delta_rows
        pen, _, _ = obj.block_prior(m, trial[0], trial[1:])
        data = 0.0
        if len(rows):
            (loss,) = pointwise(obj.lik, trial_delta, w)
            data = float(np.dot(n, loss))
        if pen + data <= f0:
            state.base[m] = trial[0]
            state.beta[m] = trial[1:]
            if len(rows):
                state.delta[rows] = trial_delta
            return float(np.max(np.abs(t * step)))
        t *= 0.5
    return 0.0


def _common_shift(state: _State) -> float:
    """Newton step along the directions that move every model at once.

    A shift of all base ratings, or of one beta column for all models, is
    invisible to per-model blocks: each block is pinned by its opponents, and
    only the prior (plus, for non-indicator features, the data) curves along
    that direction. Coordinate descent alone crawls along it, so after each
    sweep we take one exact Newton step in this (1 + d')-dimensional space.
    """
    obj = state.obj
    dz = obj.design
    k, d2 = state.beta.shape
    dG = dz.Ga - dz.Gb
    g = np.zeros(1 + d2)
    H = np.zeros((1 + d2, 1 + d2))
    if obj.inv_var_base:
        g[0] = obj.inv_var_base * float(np.sum(state.base - obj.base_center))
        H[0, 0] = k * obj.inv_var_base
    if d2:
        g[1:] = obj.inv_var_beta * state.beta.sum(axis=0)
        H[1:, 1:] = np.diag(k * obj.inv_var_beta)
        if len(dz):
            _, d1, dd = pointwise(obj.lik, state.delta, dz.w, order=2)
            g[1:] += dG.T @ (dz.n * d1)
            H[1:, 1:] += (dG * (dz.n * dd)[:, None]).T @ dG
    live = np.diag(H) > 0
    if not np.any(live & (g != 0)):
        return 0.0
    step = np.zeros_like(g)
    step[live] = _solve(H[np.ix_(live, live)], g[live])
    f0 = state.total().total
    base0, beta0, delta0 = state.base.copy(), state.beta.copy(), state.delta.copy()
    t = 1.0
    for _ in range(MAX_HALVINGS + 1):
        state.base = base0 + t * step[0]
        state.beta = beta0 + t * step[1:]
        state.delta = delta0 + dG @ (t * step[1:]) if d2 else delta0
        if state.total().total < f0:
            return float(np.max(np.abs(t * step)))
        t *= 0.5
    state.base, state.beta, state.delta = base0, beta0, delta0
    return 0.0


def _alpha_solve(state: _State, config: FitConfig) -> float:
    """L-BFGS on the shared weights with everything else held fixed."""
    obj = state.obj
    dz = obj.design
    dF = dz.dF
    offset = state.delta - dF @ state.alpha
    inv_var = obj.inv_var_alpha

    def fun(alpha):
        delta = offset + dF @ alpha
        loss, d1 = pointwise(obj.lik, delta, dz.w, order=1)
        f = float(np.dot(dz.n, loss)) + 0.5 * float(np.sum(inv_var * alpha ** 2))
        g = dF.T @ (dz.n * d1) + inv_var * alpha
        return f, g

    x0 = state.alpha.copy()
    f0, _ = fun(x0)
    res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                   options={"maxcor": config.lbfgs_memory, "ftol": 1e-15, "gtol": 1e-10,
                            "maxiter": 1000})
    if not res.fun <= f0:
        return 0.0
    change = float(np.max(np.abs(res.x - x0)))
    state.alpha = np.asarray(res.x, dtype=float)
    state.delta = offset + dF @ state.alpha
    return change


def _full_lbfgs(state: _State, config: FitConfig) -> float:
    """Joint L-BFGS over every parameter, for the piecewise-linear accuracy model."""
    obj = state.obj
    k, d = len(state.base), len(state.alpha)
    shape = state.beta.shape

    def unpack(x):
        return x[:k], x[k:k + d], x[k + d:].reshape(shape)

    def fun(x):
        base, alpha, beta = unpack(x)
        f = obj.loss(base, alpha, beta).total
        return f, obj.gradient(base, alpha, beta).vector()

    x0 = np.concatenate([state.base, state.alpha, state.beta.ravel()])
    f0, _ = fun(x0)
    res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                   options={"maxcor": config.lbfgs_memory, "ftol": 1e-16, "gtol": 1e-12,
                            "maxiter": 5000, "maxls": 50})
    if not res.fun <= f0:
        return 0.0
    base, alpha, beta = unpack(np.asarray(res.x, dtype=float))
    change = float(np.max(np.abs(res.x - x0)))
    state.base, state.alpha, state.beta = base.copy(), alpha.copy(), beta.copy()
    state.refresh()
    return change


def fit_design(design: Design, models: Sequence[str], features: Sequence[FeatureSpec],
               likelihood: LikelihoodModel, priors: PriorSpec, config: FitConfig = FitConfig(),
               warm_start: RatingParameters | None = None) -> FitResult:
    """Fit against a prebuilt design. ``design`` should already be merged."""
    features = tuple(features)
    models = tuple(models)
    if len(models) < 2:
        raise FitError("need at least two models")
    if len(design) == 0:
        raise FitError("dataset is empty")
    obj = Objective(likelihood, design, priors, features)
    init = warm_start or RatingParameters.initial(models, features, priors.anchor_value)
    if init.models != models or init.features != features:
        raise FitError("warm start does not match the models/features being fitted")
    state = _State(obj, init.base, init.alpha, init.beta)
    blocks = [obj.model_rows(m) for m in range(len(models))]

    trace = [(0, state.total().total)]
    done = False
    it = 0
    for it in range(1, config.max_outer_iterations + 1):
        state.refresh()
        saved = (state.base.copy(), state.alpha.copy(), state.beta.copy())
        if likelihood.smooth:
            change = 0.0
            for m in range(len(models)):
                change = max(change, _newton_block(state, m, blocks, config.newton_damping))
            change = max(change, _common_shift(state))
            if len(state.alpha):
                change = max(change, _alpha_solve(state, config))
        else:
            change = _full_lbfgs(state, config)
        state.refresh()
        total = state.total().total
        if total > trace[-1][1]:
            # block steps accept on locally summed losses; a full re-sum can
            # come out a few ulps higher. Keep the previous iterate instead.
            state.base, state.alpha, state.beta = saved
            state.refresh()
            total, change = trace[-1][1], 0.0
        trace.append((it, total))
        if converged(trace, config, change):
            done = True
            break
    params = RatingParameters(models, features, state.base, state.alpha, state.beta)
    if priors.flat_base:
        params = anchor(params, priors.anchor_value)
    grad = obj.gradient(params.base, params.alpha, params.beta).max_abs()
    if not done:
        log.warning("fit did not converge after %d outer iterations", it)
    return FitResult(params, obj.loss(params.base, params.alpha, params.beta), trace, done, it, grad)


def fit(dataset: Dataset, feature_specs: Sequence[FeatureSpec], likelihood: LikelihoodModel = LikelihoodModel(),
        priors: PriorSpec = PriorSpec(), config: FitConfig = FitConfig(),
        warm_start: RatingParameters | None = None, strict: bool = False) -> FitResult:
    """MAP fit of base ratings, shared weights and model-specific weights."""
    if len(dataset) == 0:
        raise FitError("dataset is empty")
    design = Design.build(dataset, feature_specs, strict=strict).merged()
    return fit_design(design, dataset.models, feature_specs, likelihood, priors, config, warm_start)


def fit_univariate(dataset: Dataset, likelihood: LikelihoodModel = LikelihoodModel(),
                   priors: PriorSpec = PriorSpec(), config: FitConfig = FitConfig(),
                   warm_start: RatingParameters | None = None) -> FitResult:
    """Base ratings only, no features."""
    return fit(dataset, (), likelihood, priors, config, warm_start)

