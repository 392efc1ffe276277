"""Win-probability models and the MAP objective.

All models are evaluated as binary predictors of the first side's score.
Models with an explicit draw outcome (Rao-Kupper, Davidson) are collapsed by
crediting half of the draw probability to each side. Ratings enter through
``gamma = 10 ** (rating / scale)``, so a gap of ``scale`` points means 10:1
odds under Bradley-Terry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import Dataset, Design, Game, PriorSpec, RatingParameters

EPS = 1e-12
LN10 = math.log(10.0)

KINDS = ("bradley_terry", "rao_kupper", "davidson", "accuracy_based")


class LikelihoodError(ValueError):
    pass


@dataclass(frozen=True)
class LikelihoodModel:
    kind: str = "bradley_terry"
    theta: float | None = None
    scale: float = 400.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LikelihoodError(f"unknown likelihood {self.kind!r}; expected one of {KINDS}")
        if not self.scale > 0:
            raise LikelihoodError("scale must be positive")
        theta = self.theta
        if self.kind == "rao_kupper":
            theta = 1.0 if theta is None else float(theta)
            if theta < 1:
                raise LikelihoodError("Rao-Kupper requires theta >= 1")
        elif self.kind == "davidson":
            theta = 0.0 if theta is None else float(theta)
            if theta < 0:
                raise LikelihoodError("Davidson requires theta >= 0")
        object.__setattr__(self, "theta", theta)

    @property
    def c(self) -> float:
        """Log-odds per rating point."""
        return LN10 / self.scale

    @property
    def smooth(self) -> bool:
        return self.kind != "accuracy_based"

    @property
    def is_logistic(self) -> bool:
        # Rao-Kupper at theta=1 and Davidson at theta=0 have no draw mass and
        # coincide with Bradley-Terry; they share its code path exactly.
        return (self.kind == "bradley_terry"
                or (self.kind == "rao_kupper" and self.theta == 1.0)
                or (self.kind == "davidson" and self.theta == 0.0))

    def label(self) -> str:
        if self.theta is None:
            return self.kind
        return f"{self.kind}(theta={self.theta:g})"


class LossBreakdown(NamedTuple):
    data_loss: float
    prior_penalty: float
    total: float


def _check_finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise LikelihoodError("ratings must be finite")


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def _sech(h):
    e = np.exp(-np.abs(h))
    return 2.0 * e / (1.0 + e * e)


def outcome_probabilities(model: LikelihoodModel, r_i, r_j):
    """Return ``(P(i wins), P(j wins), P(draw))``."""
    r_i, r_j = np.asarray(r_i, dtype=float), np.asarray(r_j, dtype=float)
    _check_finite(r_i, r_j)
    delta = r_i - r_j
    if model.kind == "accuracy_based":
        win = np.clip(0.5 * (1.0 + delta), 0.0, 1.0)
        return win, 1.0 - win, np.zeros_like(win)
    x = model.c * delta
    if model.is_logistic:
        win = _sigmoid(x)
        return win, _sigmoid(-x), np.zeros_like(win)
    theta = model.theta
    if model.kind == "rao_kupper":
        a = math.log(theta)
        win, loss = _sigmoid(x - a), _sigmoid(-x - a)
        return win, loss, 1.0 - win - loss
    # Davidson, divided through by cosh(x/2) for overflow safety.
    h = 0.5 * x
    u = _sech(h)
    denom = 2.0 + theta * u
    t = np.tanh(h)
    win = (1.0 + t) / denom
    loss = (1.0 - t) / denom
    return win, loss, theta * u / denom


def win_probability(model: LikelihoodModel, r_i, r_j):
    """Draw-collapsed probability that the side rated ``r_i`` scores."""
    win, loss, draw = outcome_probabilities(model, r_i, r_j)
    if model.kind == "accuracy_based" or model.is_logistic:
        return win if np.ndim(win) else float(win)
    p = 0.5 + 0.5 * (win - loss)
    return p if np.ndim(p) else float(p)


def _prob_derivatives(model: LikelihoodModel, delta: np.ndarray):
    """p, dp/d(delta), d2p/d(delta)^2 for the non-logistic kinds."""
    if model.kind == "accuracy_based":
        raw = 0.5 * (1.0 + delta)
        inside = (raw > 0.0) & (raw < 1.0)
        return np.clip(raw, 0.0, 1.0), np.where(inside, 0.5, 0.0), np.zeros_like(delta)
    c, theta = model.c, model.theta
    x = c * delta
    if model.kind == "rao_kupper":
        a = math.log(theta)
        s1, s2 = _sigmoid(x - a), _sigmoid(-x - a)
        v1, v2 = s1 * (1 - s1), s2 * (1 - s2)
        p = 0.5 + 0.5 * (s1 - s2)
        dp = 0.5 * (v1 + v2)
        d2p = 0.5 * (v1 * (1 - 2 * s1) - v2 * (1 - 2 * s2))
        return p, c * dp, c * c * d2p
    h = 0.5 * x
    u, t = _sech(h), np.tanh(h)
    q = 2.0 + theta * u
    p = 0.5 + t / q
    dp_dh = u * (2.0 * u + theta) / q ** 2
    d2p_dh2 = t * ((theta ** 2 - 8.0) * u ** 2 - 2.0 * theta * u) / q ** 3
    return p, 0.5 * c * dp_dh, 0.25 * c * c * d2p_dh2


def pointwise(model: LikelihoodModel, delta: np.ndarray, w: np.ndarray, order: int = 0):
    """Per-row loss and its first/second derivatives in the rating difference.

    Probabilities are kept inside ``[EPS, 1 - EPS]`` before taking logs; the
    derivatives are those of the clamped function (zero where a clamp binds).
    Returns a tuple of ``order + 1`` arrays.
    """
    delta = np.asarray(delta, dtype=float)
    log_eps = math.log(EPS)
    if model.is_logistic:
        c = model.c
        x = c * delta
        lp = -np.logaddexp(0.0, -x)
        lq = -np.logaddexp(0.0, x)
        on_p, on_q = lp > log_eps, lq > log_eps
        loss = -w * np.where(on_p, lp, log_eps) - (1 - w) * np.where(on_q, lq, log_eps)
        if order == 0:
            return (loss,)
        p, q = np.exp(lp), np.exp(lq)
        d1 = c * (-w * on_p * q + (1 - w) * on_q * p)
        if order == 1:
            return loss, d1
        d2 = c * c * p * q * (w * on_p + (1 - w) * on_q)
        return loss, d1, d2
    p, dp, d2p = _prob_derivatives(model, delta)
    inside = (p > EPS) & (p < 1 - EPS)
    pc = np.clip(p, EPS, 1 - EPS)
    loss = -w * np.log(pc) - (1 - w) * np.log1p(-pc)
    if order == 0:
        return (loss,)
    r1 = w / pc - (1 - w) / (1 - pc)
    d1 = np.where(inside, -r1 * dp, 0.0)
    if order == 1:
        return loss, d1
    r2 = w / pc ** 2 + (1 - w) / (1 - pc) ** 2
    d2 = np.where(inside, r2 * dp * dp - r1 * d2p, 0.0)
    return loss, d1, d2


class Gradient(NamedTuple):
    base: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.base, self.alpha, self.beta.ravel()])

    def max_abs(self) -> float:
        v = self.vector()
        return float(np.max(np.abs(v))) if v.size else 0.0


class Objective:
    """MAP objective bound to one design, likelihood and prior.

    Works on raw arrays so the optimizer can call it in tight loops. The
    public functions below wrap it for ``Dataset``/``RatingParameters`` use.
    """

    def __init__(self, likelihood: LikelihoodModel, design: Design, priors: PriorSpec, features):
        self.lik = likelihood
        self.design = design
        self.priors = priors
        self.features = tuple(features)
        k = design.k
        self.inv_var_alpha = 1.0 / priors.shared_sigmas(self.features) ** 2
        self.inv_var_beta = 1.0 / priors.specific_sigmas(self.features) ** 2
        if priors.flat_base:
            self.inv_var_base = 0.0
        else:
            self.inv_var_base = 1.0 / float(priors.sigma_base) ** 2
        self.base_center = priors.base_centers(k)

    def penalty(self, base, alpha, beta) -> float:
        pen = 0.5 * float(np.sum(self.inv_var_alpha * alpha ** 2))
        if beta.size:
            pen += 0.5 * float(np.sum(self.inv_var_beta * beta ** 2))
        if self.inv_var_base:
            pen += 0.5 * self.inv_var_base * float(np.sum((base - self.base_center) ** 2))
        return pen

    def data_loss(self, delta) -> float:
        if len(self.design) == 0:
            return 0.0
        (loss,) = pointwise(self.lik, delta, self.design.w)
        return float(np.dot(self.design.n, loss))

    def loss(self, base, alpha, beta) -> LossBreakdown:
        data = self.data_loss(self.design.diff(base, alpha, beta))
        pen = self.penalty(base, alpha, beta)
        return LossBreakdown(data, pen, data + pen)

    def gradient(self, base, alpha, beta) -> Gradient:
        dz = self.design
        k = dz.k
        if len(dz):
            _, d1 = pointwise(self.lik, dz.diff(base, alpha, beta), dz.w, order=1)
            s = dz.n * d1
            g_base = np.bincount(dz.a, s, minlength=k) - np.bincount(dz.b, s, minlength=k)
            g_alpha = dz.dF.T @ s
            g_beta = np.zeros_like(beta)
            for j in range(beta.shape[1]):
                g_beta[:, j] = (np.bincount(dz.a, s * dz.Ga[:, j], minlength=k)
                                - np.bincount(dz.b, s * dz.Gb[:, j], minlength=k))
        else:
            g_base, g_alpha, g_beta = np.zeros(k), np.zeros_like(alpha), np.zeros_like(beta)
        g_alpha = g_alpha + self.inv_var_alpha * alpha
        g_beta = g_beta + self.inv_var_beta * beta
        if self.inv_var_base:
            g_base = g_base + self.inv_var_base * (base - self.base_center)
        return Gradient(g_base, g_alpha, g_beta)

    def model_rows(self, m: int):
        """Rows involving model ``m``, the sign of its rating in the
        difference, and its block regressors ``[1, g_1, ..., g_d']``."""
        dz = self.design
        ra = np.flatnonzero(dz.a == m)
        rb = np.flatnonzero(dz.b == m)
        rows = np.concatenate([ra, rb])
        sign = np.concatenate([np.ones(len(ra)), -np.ones(len(rb))])
        X = np.column_stack([np.ones(len(rows)), np.vstack([dz.Ga[ra], dz.Gb[rb]])])
        return rows, sign, X

    def block_prior(self, m: int, base_m: float, beta_m: np.ndarray):
        """Prior penalty, gradient and curvature for model ``m``'s block."""
        d2 = len(beta_m)
        grad = np.zeros(1 + d2)
        curv = np.zeros(1 + d2)
        pen = 0.0
        if self.inv_var_base:
            off = base_m - self.base_center[m]
            pen += 0.5 * self.inv_var_base * off * off
            grad[0] = self.inv_var_base * off
            curv[0] = self.inv_var_base
        if d2:
            pen += 0.5 * float(np.sum(self.inv_var_beta * beta_m ** 2))
            grad[1:] = self.inv_var_beta * beta_m
            curv[1:] = self.inv_var_beta
        return pen, grad, curv

    def hessian_block(self, base, alpha, beta, m: int) -> np.ndarray:
        if not self.lik.smooth:
            raise LikelihoodError("accuracy_based likelihood has no Hessian; use the L-BFGS path")
        rows, _, X = self.model_rows(m)
        _, _, curv = self.block_prior(m, base[m], beta[m])
        H = np.diag(curv)
        if len(rows):
            dz = self.design
            delta = dz.diff(base, alpha, beta)[rows]
            _, _, d2 = pointwise(self.lik, delta, dz.w[rows], order=2)
            H = H + (X * (dz.n[rows] * d2)[:, None]).T @ X
        return H


def _objective(likelihood, params: RatingParameters, dataset: Dataset, priors: PriorSpec) -> Objective:
    design = Design.build(dataset, params.features, models=params.models)
    return Objective(likelihood, design, priors, params.features)


def game_loss(likelihood: LikelihoodModel, params: RatingParameters, game: Game) -> float:
    """Negative log-likelihood of one game, times its multiplicity."""
    ds = Dataset.from_games([game], models=params.models)
    design = Design.build(ds, params.features, models=params.models)
    delta = design.diff(params.base, params.alpha, params.beta)
    (loss,) = pointwise(likelihood, delta, design.w)
    return float(loss[0] * game.multiplicity)


def total_loss(likelihood: LikelihoodModel, params: RatingParameters, dataset: Dataset,
               priors: PriorSpec) -> LossBreakdown:
    obj = _objective(likelihood, params, dataset, priors)
    return obj.loss(params.base, params.alpha, params.beta)


def gradient(likelihood: LikelihoodModel, params: RatingParameters, dataset: Dataset,
             priors: PriorSpec) -> Gradient:
    obj = _objective(likelihood, params, dataset, priors)
    return obj.gradient(params.base, params.alpha, params.beta)


def hessian_block(likelihood: LikelihoodModel, params: RatingParameters, dataset: Dataset,
                  priors: PriorSpec, model: str) -> np.ndarray:
    """Exact Hessian over ``(base[model], beta[model, :])`` with everything else fixed."""
    obj = _objective(likelihood, params, dataset, priors)
    return obj.hessian_block(params.base, params.alpha, params.beta, params.model_index(model))
