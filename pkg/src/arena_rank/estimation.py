"""Maximum-likelihood fitting of paired-comparison models.

The objective is the negative log-likelihood per comparison,

    nll = -(1/n) * sum_{pairs} w_ij log P(i>j) + w_ji log P(i<j) + t_ij log P(i~j),

with an exact analytic gradient in the internal parameterization
``(mu, eta | G, delta, Lambda)``, where ``d_ii = exp(delta_i)``.

Three exact symmetries of the likelihood (a common shift of the scores, a
joint rescaling of scores and covariance, and a common translation of the
rows of ``Lambda``) are removed by :func:`normalize`, which the optimizer
applies after every accepted step.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import optimize
from .data import ComparisonDataset
from .models import Array, Family, ModelConfig, ParameterSet, dct_basis, family_view, log_probabilities, tie_thresholds

log = logging.getLogger(__name__)

DENSE_LIMIT = 1000
LBFGS_MEMORY = 20


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")


@dataclass
class FitReport:
    config: ModelConfig
    competitors: tuple[str, ...]
    params: ParameterSet
    nll: float
    converged: bool
    iterations: int
    gradient_norm: float
    stop_reason: str = "gradient"
    seed: int = 0
    tol: float = 1e-8
    diagnostics: list[str] = field(default_factory=list)


def param_count(config: ModelConfig, m: int) -> int:
    """Number of free parameters, as listed per configuration."""
    count = m
    if config.k_cov is not None:
        count += m + m * config.k_cov
    if config.k_tie == 0:
        count += 1
    elif config.k_tie is not None:
        count += m * config.k_tie
    return count


def _tie_start(config: ModelConfig, m: int) -> tuple[float | None, Array | None]:
    if config.k_tie is None:
        return None, None
    if config.family is Family.DAVIDSON:
        return (0.0, None) if config.k_tie == 0 else (None, np.zeros((m, config.k_tie)))
    # Rao-Kupper needs eta > 0 for a finite likelihood; ln 2 gives a one-third
    # tie chance between equal scores
    eta0 = math.log(2.0)
    if config.k_tie == 0:
        return eta0, None
    phi = dct_basis(m, config.k_tie)
    G = np.zeros((m, config.k_tie))
    # first DCT-IV column is strictly positive, so every eta_ij starts positive
    G[:, 0] = eta0 / (2.0 * phi[:, 0].mean())
    return None, G


def init_params(config: ModelConfig, m: int, seed: int = 0) -> ParameterSet:
    """Random zero-sum scores, ``d_ii = 1/m`` and zero factors.

    Rao-Kupper tie parameters start at a small positive threshold instead of
    zero, where the tie probability would vanish.
    """
    config.check(m)
    rng = np.random.default_rng(seed)
    mu = rng.normal(scale=0.1, size=m)
    mu -= mu.mean()
    eta, G = _tie_start(config, m)
    delta = lam = None
    if config.k_cov is not None:
        delta = np.full(m, -math.log(m))
        if config.k_cov >= 1:
            lam = np.zeros((m, config.k_cov))
    return ParameterSet(mu=mu, eta=eta, G=G, delta=delta, Lambda=lam)


def pack(params: ParameterSet) -> Array:
    parts = [params.mu]
    if params.eta is not None:
        parts.append(np.array([params.eta]))
    if params.G is not None:
        parts.append(params.G.ravel())
    if params.delta is not None:
        parts.append(params.delta)
    if params.Lambda is not None:
        parts.append(params.Lambda.ravel())
    return np.concatenate(parts)


def unpack(theta: Array, config: ModelConfig, m: int) -> ParameterSet:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (param_count(config, m),):
        raise ValueError(f"expected {param_count(config, m)} parameters, got {theta.shape}")
    pos = m
    mu = theta[:m].copy()
    eta = G = delta = lam = None
    if config.k_tie == 0:
        eta = float(theta[pos])
        pos += 1
    elif config.k_tie is not None:
        G = theta[pos:pos + m * config.k_tie].reshape(m, config.k_tie).copy()
        pos += m * config.k_tie
    if config.k_cov is not None:
        delta = theta[pos:pos + m].copy()
        pos += m
        if config.k_cov >= 1:
            lam = theta[pos:pos + m * config.k_cov].reshape(m, config.k_cov).copy()
    return ParameterSet(mu=mu, eta=eta, G=G, delta=delta, Lambda=lam)


def _weighted(count: Array, value: Array) -> Array:
    """``count * value`` with empty categories contributing exactly zero."""
    with np.errstate(invalid="ignore"):
        return np.where(count > 0, count * value, 0.0)


def _objective(view: ComparisonDataset, config: ModelConfig, params: ParameterSet, want_grad: bool):
    """Objective (and gradient pack) on data already reduced by :func:`family_view`."""
    m = params.m
    n = view.total
    if not n > 0:
        raise ValueError("dataset holds no comparisons")
    i, j = view.i, view.j
    w, l, t = view.wins_i, view.wins_j, view.ties

    diff = params.mu[i] - params.mu[j]
    if params.delta is None:
        s = None
        z = diff
    else:
        lam = params.factors()
        d = np.exp(params.delta)
        dl = lam[i] - lam[j]
        s = d[i] + d[j] + np.sum(dl * dl, axis=1)
        z = diff / np.sqrt(s)

    eta = None
    if config.has_ties:
        if config.k_tie == 0:
            eta = np.full(z.shape, float(params.eta))
        else:
            eta = tie_thresholds(config, params)[i, j]

    lp = log_probabilities(config.family, z, eta, derivatives=want_grad)
    total = _weighted(w, lp.win) + _weighted(l, lp.loss)
    if lp.tie is not None:
        total = total + _weighted(t, lp.tie)
    f = -float(np.sum(total)) / n
    if not math.isfinite(f):
        f = math.inf
    if not want_grad:
        return f, None
    if not math.isfinite(f):
        return f, None

    gz = _weighted(w, lp.dwin_dz) + _weighted(l, lp.dloss_dz)
    if lp.tie is not None:
        gz = gz + _weighted(t, lp.dtie_dz)
        geta = -(_weighted(w, lp.dwin_deta) + _weighted(l, lp.dloss_deta) + _weighted(t, lp.dtie_deta)) / n
    gz = -gz / n

    parts = []
    if s is None:
        gpair = gz
    else:
        gpair = gz / np.sqrt(s)
    parts.append(np.bincount(i, gpair, m) - np.bincount(j, gpair, m))

    if config.k_tie == 0:
        parts.append(np.array([np.sum(geta)]))
    elif config.k_tie is not None:
        A = np.zeros((m, m))
        A[i, j] = geta
        A[j, i] = geta
        parts.append((A @ dct_basis(m, config.k_tie)).ravel())

    if s is not None:
        gs = gz * (-0.5 * z / s)
        parts.append((np.bincount(i, gs, m) + np.bincount(j, gs, m)) * d)
        if config.k_cov >= 1:
            B = np.zeros((m, m))
            B[i, j] = gs
            B[j, i] = gs
            parts.append((2.0 * (B.sum(axis=1)[:, None] * lam - B @ lam)).ravel())

    return f, np.concatenate(parts)


def nll(data: ComparisonDataset, config: ModelConfig, params: ParameterSet) -> float:
    """Negative log-likelihood per comparison; ``inf`` where infeasible.

    BT families are scored on tie-collapsed or tie-free data (see
    :func:`arena_rank.models.family_view`).
    """
    params.check(config)
    return _objective(family_view(data, config), config, params, want_grad=False)[0]


def nll_gradient(data: ComparisonDataset, config: ModelConfig, params: ParameterSet) -> Array:
    """Gradient of :func:`nll`, packed in the order of :func:`pack`."""
    params.check(config)
    f, g = _objective(family_view(data, config), config, params, want_grad=True)
    if g is None:
        raise ValueError("gradient is undefined where the objective is infinite")
    return g


def constraint_value(params: ParameterSet) -> float:
    """Scale constraint ``C = (1 - 1/m) tr(D) + |Lambda|_F^2 - |Lambda^T 1|^2 / m``.

    Equals the mean pairwise variance ``(1/2m) sum_ij s_ij`` and the trace of
    the doubly-centered covariance.
    """
    if params.delta is None:
        raise ValueError("constraint is only defined with covariance")
    m = params.m
    lam = params.factors()
    col = lam.sum(axis=0)
    return float((1.0 - 1.0 / m) * np.exp(params.delta).sum() + np.sum(lam * lam) - (col @ col) / m)


def constraint_gradients(params: ParameterSet) -> tuple[Array, Array]:
    """``(dC/dd, dC/dLambda)``: derivative along the diagonal of ``D`` and ``2 P Lambda``."""
    if params.delta is None:
        raise ValueError("constraint is only defined with covariance")
    m = params.m
    lam = params.factors()
    return np.full(m, 1.0 - 1.0 / m), 2.0 * (lam - lam.mean(axis=0))


def normalize(params: ParameterSet, config: ModelConfig | None = None) -> ParameterSet:
    """Fix the likelihood symmetries.

    Centers the scores, centers the columns of ``Lambda`` and, with
    covariance, rescales so that ``trace(P Sigma P) = 1``.
    """
    mu = params.mu - params.mu.mean()
    lam = params.Lambda
    if lam is not None:
        lam = lam - lam.mean(axis=0)
    delta = params.delta
    if delta is not None:
        c = constraint_value(replace(params, Lambda=lam))
        if not c > 0 or not math.isfinite(c):
            raise FitError(f"covariance scale constraint is not positive: {c}")
        root = math.sqrt(c)
        mu = mu / root
        delta = delta - math.log(c)
        if lam is not None:
            lam = lam / root
    return replace(params, mu=mu, Lambda=lam, delta=delta)


def _diagnostics(config: ModelConfig, params: ParameterSet, view: ComparisonDataset) -> list[str]:
    notes = []
    if config.family is Family.RAO_KUPPER:
        H = tie_thresholds(config, params)
        upper = np.triu_indices(params.m, 1)
        bad = int(np.sum(H[upper] < 0))
        if bad:
            observed = int(np.sum(H[view.i, view.j] < 0))
            notes.append(
                f"{bad} Rao-Kupper tie thresholds are negative ({observed} on compared pairs); "
                "their tie probabilities are invalid"
            )
    return notes


def fit(data: ComparisonDataset, config: ModelConfig, options: FitOptions | None = None) -> FitReport:
    """Fit ``config`` to ``data`` by quasi-Newton maximum likelihood."""
    options = options or FitOptions()
    m = data.m
    config.check(m)
    view = family_view(data, config)
    if not view.total > 0:
        raise FitError("dataset holds no usable comparisons for this family")

    def fun_grad(theta):
        p = unpack(theta, config, m)
        f, g = _objective(view, config, p, want_grad=True)
        if g is None:
            g = np.full(theta.shape, np.nan)
        return f, g

    def project(theta):
        return pack(normalize(unpack(theta, config, m), config))

    n_params = param_count(config, m)
    memory = None if n_params <= DENSE_LIMIT else LBFGS_MEMORY
    theta0 = pack(init_params(config, m, options.seed))
    try:
        res = optimize.minimize(fun_grad, theta0, tol=options.tol, max_iter=options.max_iter, memory=memory, project=project)
    except optimize.LineSearchError as exc:
        raise FitError(str(exc)) from None

    params = unpack(res.x, config, m)
    gnorm = float(np.max(np.abs(res.grad))) if res.grad.size else 0.0
    log.info("fit %s: nll=%.10g iterations=%d reason=%s", config.label(), res.fun, res.iterations, res.stop_reason)
    notes = _diagnostics(config, params, view)
    if not res.converged:
        notes.append(f"optimizer stopped without converging ({res.stop_reason})")
    return FitReport(
        config=config,
        competitors=data.competitors,
        params=params,
        nll=res.fun,
        converged=res.converged,
        iterations=res.iterations,
        gradient_norm=gnorm,
        stop_reason=res.stop_reason,
        seed=options.seed,
        tol=options.tol,
        diagnostics=notes,
    )


def report_to_dict(report: FitReport) -> dict:
    cfg = report.config
    p = report.params
    out: dict = {"family": cfg.family.value}
    if cfg.k_cov is not None:
        out["k_cov"] = cfg.k_cov
    if cfg.k_tie is not None:
        out["k_tie"] = cfg.k_tie
    out["competitors"] = list(report.competitors)
    out["mu"] = p.mu.tolist()
    if p.eta is not None:
        out["eta"] = float(p.eta)
    if p.G is not None:
        out["G"] = p.G.tolist()
    if p.delta is not None:
        out["delta"] = p.delta.tolist()
    if p.Lambda is not None:
        out["lambda"] = p.Lambda.tolist()
    out.update({
        "param_count": param_count(cfg, len(report.competitors)),
        "nll": report.nll,
        "converged": report.converged,
        "stop_reason": report.stop_reason,
        "iterations": report.iterations,
        "gradient_norm": report.gradient_norm,
        "seed": report.seed,
        "tol": report.tol,
        "diagnostics": list(report.diagnostics),
    })
    return out


def report_from_dict(obj: dict) -> FitReport:
    try:
        config = ModelConfig(Family.parse(obj["family"]), obj.get("k_cov"), obj.get("k_tie"))
        competitors = tuple(obj["competitors"])
        m = len(competitors)
        arr = lambda key, shape: None if key not in obj else np.asarray(obj[key], dtype=np.float64).reshape(shape)  # noqa: E731
        params = ParameterSet(
            mu=arr("mu", (m,)),
            eta=None if "eta" not in obj else float(obj["eta"]),
            G=arr("G", (m, config.k_tie or 0)),
            delta=arr("delta", (m,)),
            Lambda=arr("lambda", (m, config.k_cov or 0)),
        )
        params.check(config)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed model file: {exc}") from None
    return FitReport(
        config=config,
        competitors=competitors,
        params=params,
        nll=float(obj.get("nll", math.nan)),
        converged=bool(obj.get("converged", False)),
        iterations=int(obj.get("iterations", 0)),
        gradient_norm=float(obj.get("gradient_norm", math.nan)),
        stop_reason=str(obj.get("stop_reason", "")),
        seed=int(obj.get("seed", 0)),
        tol=float(obj.get("tol", 1e-8)),
        diagnostics=list(obj.get("diagnostics", [])),
    )


def save_model(report: FitReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> FitReport:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"model file {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ValueError(f"model file {path} must hold a JSON object")
    return report_from_dict(obj)
