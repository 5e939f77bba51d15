"""Outcome probabilities for Bradley-Terry, Rao-Kupper and Davidson models.

All three families are evaluated on the standardized margin ``z_ij``: the
plain score difference, or with a Thurstonian covariance
``Sigma = D + Lambda Lambda^T`` the difference divided by the standard
deviation of ``x_i - x_j``. Tie families use pairwise thresholds ``eta_ij``
taken from a single scalar or from the factored form ``G Phi^T + Phi G^T``.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy.special import expit, log_expit

from .data import ComparisonDataset, collapse_ties, drop_ties, from_arrays

Array = npt.NDArray[np.float64]


class Family(str, enum.Enum):
    BT_COLLAPSED = "bt-collapsed"
    BT = "bt"
    RAO_KUPPER = "rao-kupper"
    DAVIDSON = "davidson"

    @property
    def has_ties(self) -> bool:
        return self in (Family.RAO_KUPPER, Family.DAVIDSON)

    @classmethod
    def parse(cls, value: str | Family) -> Family:
        if isinstance(value, Family):
            return value
        key = value.strip().lower().replace("_", "-")
        aliases = {
            "bt-collapsed-ties": cls.BT_COLLAPSED,
            "bradley-terry": cls.BT,
            "raokupper": cls.RAO_KUPPER,
            "rk": cls.RAO_KUPPER,
            "dv": cls.DAVIDSON,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown family {value!r} (choose from {choices})") from None


class InvalidProbabilityError(ValueError):
    """A parameter setting produced a negative outcome probability."""


@dataclass(frozen=True)
class ModelConfig:
    """Model family and structural ranks.

    ``k_cov=None`` means no Thurstonian covariance; ``k_cov=0`` a diagonal
    one. ``k_tie=None`` means no tie model (required for the BT families),
    ``k_tie=0`` a single scalar threshold.
    """

    family: Family
    k_cov: int | None = None
    k_tie: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        for name in ("k_cov", "k_tie"):
            k = getattr(self, name)
            if k is not None and (isinstance(k, bool) or int(k) != k or k < 0):
                raise ValueError(f"{name} must be a non-negative integer, got {k!r}")
        if self.family.has_ties and self.k_tie is None:
            raise ValueError(f"family {self.family.value} requires k_tie")
        if not self.family.has_ties and self.k_tie is not None:
            raise ValueError(f"family {self.family.value} does not take k_tie")

    @property
    def has_cov(self) -> bool:
        return self.k_cov is not None

    @property
    def has_ties(self) -> bool:
        return self.family.has_ties

    def check(self, m: int) -> None:
        for name in ("k_cov", "k_tie"):
            k = getattr(self, name)
            if k is not None and k > m:
                raise ValueError(f"{name}={k} exceeds the number of competitors m={m}")

    def label(self) -> str:
        cov = "-" if self.k_cov is None else str(self.k_cov)
        tie = "-" if self.k_tie is None else str(self.k_tie)
        return f"{self.family.value}:{cov}:{tie}"


@dataclass(frozen=True)
class ParameterSet:
    """Model parameters in the unconstrained internal parameterization.

    ``delta`` holds the log of the covariance diagonal, ``d_ii = exp(delta_i)``.
    """

    mu: Array
    eta: float | None = None
    G: Array | None = None
    delta: Array | None = None
    Lambda: Array | None = None

    @property
    def m(self) -> int:
        return int(self.mu.shape[0])

    @property
    def d(self) -> Array | None:
        return None if self.delta is None else np.exp(self.delta)

    def factors(self) -> Array:
        """``Lambda`` as an ``m x k`` array, with ``k = 0`` when absent."""
        if self.Lambda is None:
            return np.zeros((self.m, 0))
        return self.Lambda

    def covariance(self) -> Array:
        if self.delta is None:
            raise ValueError("parameters carry no covariance")
        lam = self.factors()
        return np.diag(np.exp(self.delta)) + lam @ lam.T

    def check(self, config: ModelConfig) -> None:
        """Raise if the present components do not match ``config``."""
        m = self.m
        config.check(m)
        problems = []
        if self.mu.shape != (m,):
            problems.append("mu must be a vector")
        want_eta = config.k_tie == 0
        want_g = config.k_tie is not None and config.k_tie >= 1
        if want_eta != (self.eta is not None):
            problems.append("scalar eta presence does not match k_tie")
        if want_g != (self.G is not None):
            problems.append("tie factors G presence does not match k_tie")
        elif want_g and self.G.shape != (m, config.k_tie):
            problems.append(f"G must have shape {(m, config.k_tie)}")
        if config.has_cov != (self.delta is not None):
            problems.append("covariance diagonal presence does not match k_cov")
        elif config.has_cov and self.delta.shape != (m,):
            problems.append("delta must have length m")
        want_lam = config.k_cov is not None and config.k_cov >= 1
        if want_lam != (self.Lambda is not None):
            problems.append("covariance factors presence does not match k_cov")
        elif want_lam and self.Lambda.shape != (m, config.k_cov):
            problems.append(f"Lambda must have shape {(m, config.k_cov)}")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass(frozen=True)
class ProbabilityTriple:
    p_win: float
    p_loss: float
    p_tie: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_win, self.p_loss, self.p_tie)


@functools.lru_cache(maxsize=64)
def _dct_basis(m: int, k: int) -> Array:
    rows = 2 * np.arange(1, m + 1) - 1
    cols = 2 * np.arange(1, k + 1) - 1
    phi = np.sqrt(2.0 / m) * np.cos(np.pi / (4 * m) * np.outer(rows, cols))
    phi.setflags(write=False)
    return phi


def dct_basis(m: int, k: int) -> Array:
    """First ``k`` columns of the orthonormal ``m x m`` DCT-IV matrix."""
    if m < 1 or not 1 <= k <= m:
        raise ValueError(f"need 1 <= k <= m, got m={m}, k={k}")
    return _dct_basis(int(m), int(k))


def tie_thresholds(config: ModelConfig, params: ParameterSet) -> Array:
    """Symmetric matrix of pairwise tie thresholds ``eta_ij``."""
    if config.k_tie is None:
        raise ValueError(f"family {config.family.value} has no tie thresholds")
    m = params.m
    if config.k_tie == 0:
        return np.full((m, m), float(params.eta))
    gp = params.G @ dct_basis(m, config.k_tie).T
    return gp + gp.T


def pair_variances(params: ParameterSet, i, j) -> Array:
    """``s_ij = d_ii + d_jj + |lambda_i - lambda_j|^2`` for index arrays ``i``, ``j``."""
    if params.delta is None:
        raise ValueError("parameters carry no covariance")
    i = np.asarray(i)
    j = np.asarray(j)
    d = np.exp(params.delta)
    diff = params.factors()[i] - params.factors()[j]
    return d[i] + d[j] + np.sum(diff * diff, axis=-1)


def pair_variance(params: ParameterSet, i: int, j: int) -> float:
    if i == j:
        raise ValueError("pair variance is only defined for distinct competitors")
    return float(pair_variances(params, i, j))


def standardized_margins(params: ParameterSet, i, j) -> Array:
    """Vectorized ``z_ij``; the plain score difference without covariance."""
    diff = params.mu[np.asarray(i)] - params.mu[np.asarray(j)]
    if params.delta is None:
        return diff
    return diff / np.sqrt(pair_variances(params, i, j))


def standardized_margin(params: ParameterSet, i: int, j: int) -> float:
    if i == j:
        raise ValueError("margin is only defined for distinct competitors")
    return float(standardized_margins(params, i, j))


def _log_expm1_2x(eta: Array) -> Array:
    """``log(exp(2 eta) - 1)``, ``-inf`` where ``eta <= 0``."""
    eta = np.asarray(eta, dtype=np.float64)
    pos = eta > 0
    safe = np.where(pos, eta, 1.0)
    out = 2.0 * safe + np.log(-np.expm1(-2.0 * safe))
    return np.where(pos, out, -np.inf)


@dataclass
class LogProbs:
    """Per-pair log probabilities and their partial derivatives.

    ``d*_dz`` and ``d*_deta`` are derivatives of the corresponding log
    probability with respect to the margin and the tie threshold; they are
    only filled when requested.
    """

    win: Array
    loss: Array
    tie: Array | None
    dwin_dz: Array | None = None
    dloss_dz: Array | None = None
    dtie_dz: Array | None = None
    dwin_deta: Array | None = None
    dloss_deta: Array | None = None
    dtie_deta: Array | None = field(default=None)


def log_probabilities(family: Family, z, eta=None, derivatives: bool = False) -> LogProbs:
    """Log outcome probabilities for margins ``z`` and thresholds ``eta``.

    Rao-Kupper tie log-probabilities are ``-inf`` wherever ``eta <= 0``.
    """
    family = Family.parse(family)
    z = np.asarray(z, dtype=np.float64)

    if not family.has_ties:
        out = LogProbs(win=log_expit(z), loss=log_expit(-z), tie=None)
        if derivatives:
            out.dwin_dz = expit(-z)
            out.dloss_dz = -expit(z)
        return out

    eta = np.broadcast_to(np.asarray(eta, dtype=np.float64), z.shape)

    if family is Family.RAO_KUPPER:
        a = z - eta
        b = -z - eta
        lw = log_expit(a)
        ll = log_expit(b)
        out = LogProbs(win=lw, loss=ll, tie=_log_expm1_2x(eta) + lw + ll)
        if derivatives:
            sa = expit(-a)
            sb = expit(-b)
            with np.errstate(divide="ignore", invalid="ignore"):
                dnu = np.where(eta > 0, 2.0 / -np.expm1(-2.0 * np.where(eta > 0, eta, 1.0)), np.inf)
            out.dwin_dz, out.dwin_deta = sa, -sa
            out.dloss_dz, out.dloss_deta = -sb, -sb
            out.dtie_dz, out.dtie_deta = sa - sb, dnu - sa - sb
        return out

    half = 0.5 * z
    norm = np.logaddexp(np.logaddexp(half, -half), eta)
    out = LogProbs(win=half - norm, loss=-half - norm, tie=eta - norm)
    if derivatives:
        pw = np.exp(out.win)
        pl = np.exp(out.loss)
        pt = np.exp(out.tie)
        d = 0.5 * (pw - pl)
        out.dwin_dz, out.dwin_deta = 0.5 - d, -pt
        out.dloss_dz, out.dloss_deta = -0.5 - d, -pt
        out.dtie_dz, out.dtie_deta = -d, 1.0 - pt
    return out


def pair_log_probabilities(config: ModelConfig, params: ParameterSet, i, j) -> LogProbs:
    i = np.asarray(i)
    j = np.asarray(j)
    z = standardized_margins(params, i, j)
    eta = tie_thresholds(config, params)[i, j] if config.has_ties else None
    return log_probabilities(config.family, z, eta)


def pair_probabilities(config: ModelConfig, params: ParameterSet, i, j) -> Array:
    """``(..., 3)`` array of win/loss/tie probabilities for index arrays ``i``, ``j``."""
    lp = pair_log_probabilities(config, params, i, j)
    tie = np.zeros_like(lp.win) if lp.tie is None else np.exp(lp.tie)
    if config.family is Family.RAO_KUPPER:
        eta = tie_thresholds(config, params)[np.asarray(i), np.asarray(j)]
        # negative thresholds give a negative tie mass; keep it visible
        tie = np.where(eta < 0, 1.0 - np.exp(lp.win) - np.exp(lp.loss), tie)
    return np.stack([np.exp(lp.win), np.exp(lp.loss), tie], axis=-1)


def outcome_probabilities(config: ModelConfig, params: ParameterSet, i: int, j: int) -> ProbabilityTriple:
    """Win/loss/tie probabilities of ``i`` against ``j``."""
    if i == j:
        raise ValueError("outcome probabilities need two distinct competitors")
    p = pair_probabilities(config, params, i, j)
    if p[2] < 0:
        eta = tie_thresholds(config, params)[i, j]
        raise InvalidProbabilityError(
            f"Rao-Kupper threshold eta[{i},{j}]={eta:.6g} < 0 gives tie probability {p[2]:.6g}"
        )
    return ProbabilityTriple(float(p[0]), float(p[1]), float(p[2]))


def family_view(data: ComparisonDataset, config: ModelConfig) -> ComparisonDataset:
    """The data a family is fit and scored on.

    The collapsed BT family counts ties as half wins; plain BT ignores ties
    entirely; tie families use the counts unchanged. Collapsing is
    idempotent, so pre-collapsed input is accepted.
    """
    if config.family is Family.BT_COLLAPSED:
        return collapse_ties(data)
    if config.family is Family.BT:
        return drop_ties(data)
    return data


def predicted_counts(config: ModelConfig, params: ParameterSet, data: ComparisonDataset) -> Array:
    """``(n_pairs, 3)`` expected counts ``n_ij * (p_win, p_loss, p_tie)``."""
    return data.n_ij[:, None] * pair_probabilities(config, params, data.i, data.j)


def simulate(
    config: ModelConfig,
    params: ParameterSet,
    pairs: list[tuple[int, int]],
    n_per_pair,
    seed: int,
    competitors: list[str] | None = None,
) -> ComparisonDataset:
    """Draw multinomial win/loss/tie counts for each listed pair."""
    rng = np.random.default_rng(seed)
    ii = np.array([min(p) for p in pairs])
    jj = np.array([max(p) for p in pairs])
    n = np.broadcast_to(np.asarray(n_per_pair, dtype=np.int64), ii.shape)
    probs = pair_probabilities(config, params, ii, jj)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=1, keepdims=True)
    counts = np.array([rng.multinomial(nk, pk) for nk, pk in zip(n, probs)], dtype=np.float64)
    names = competitors or [f"c{k}" for k in range(params.m)]
    return from_arrays(names, ii, jj, counts[:, 0], counts[:, 1], counts[:, 2])
