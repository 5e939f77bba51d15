"""Goodness-of-fit metrics for fitted paired-comparison models.

Every metric is computed on the data the family is fit on (ties collapsed
for the collapsed BT family and dropped for plain BT), so that the
cross-entropies add up to the training objective.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import ComparisonDataset
from .models import Array, ModelConfig, ParameterSet, ProbabilityTriple, family_view, pair_probabilities


@dataclass(frozen=True)
class EvaluationReport:
    nll: float
    h_win: float
    h_loss: float
    h_tie: float | None
    rmse_win: float
    rmse_loss: float
    rmse_tie: float | None
    rmse_all: float
    kld: float
    jsd: float

    def to_dict(self) -> dict:
        return asdict(self)


def empirical_triples(data: ComparisonDataset) -> Array:
    """``(n_pairs, 3)`` observed frequencies ``(w_ij, w_ji, t_ij) / n_ij``."""
    n = data.n_ij
    if np.any(n <= 0):
        raise ValueError("every stored pair needs a positive comparison count")
    return np.stack([data.wins_i, data.wins_j, data.ties], axis=1) / n[:, None]


def _xlogy(x: Array, y: Array) -> Array:
    """``x * ln(y)`` with ``0 * ln(anything) = 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, y, 1.0)), 0.0)


def _prepared(data: ComparisonDataset, config: ModelConfig, params: ParameterSet):
    params.check(config)
    if params.m != data.m:
        raise ValueError(f"model has {params.m} competitors but data has {data.m}")
    view = family_view(data, config)
    if not view.total > 0:
        raise ValueError("dataset holds no usable comparisons for this family")
    return view, empirical_triples(view), pair_probabilities(config, params, view.i, view.j)


def cross_entropies(data: ComparisonDataset, config: ModelConfig, params: ParameterSet):
    """``(h_win, h_loss, h_tie)``; ``h_tie`` is ``None`` for BT families."""
    view, emp, prob = _prepared(data, config, params)
    weight = view.n_ij / view.total
    h = -np.sum(_xlogy(emp, prob) * weight[:, None], axis=0)
    h = [float(v) for v in h]
    return h[0], h[1], (h[2] if config.has_ties else None)


def rmse(data: ComparisonDataset, config: ModelConfig, params: ParameterSet):
    """Count-scale errors ``(e_win, e_loss, e_tie, e_all)``, weighted by ``n_ij / n``."""
    view, _, prob = _prepared(data, config, params)
    observed = np.stack([view.wins_i, view.wins_j, view.ties], axis=1)
    predicted = view.n_ij[:, None] * prob
    weight = view.n_ij / view.total
    sq = np.sum(weight[:, None] * (observed - predicted) ** 2, axis=0)
    present = sq if config.has_ties else sq[:2]
    e = np.sqrt(sq)
    return float(e[0]), float(e[1]), (float(e[2]) if config.has_ties else None), math.sqrt(float(np.mean(present)))


def _kl_rows(p: Array, q: Array) -> Array:
    return np.sum(_xlogy(p, p) - _xlogy(p, q), axis=1)


def divergences(data: ComparisonDataset, config: ModelConfig, params: ParameterSet):
    """Pair-averaged ``(KL(P_e || P), JS(P_e, P))`` in nats."""
    _, emp, prob = _prepared(data, config, params)
    with np.errstate(invalid="ignore"):
        kl = _kl_rows(emp, prob)
    # a model zero against observed mass gives +inf rather than nan
    kl = np.where(np.isnan(kl), np.inf, kl)
    mix = 0.5 * (emp + prob)
    js = 0.5 * (_kl_rows(emp, mix) + _kl_rows(prob, mix))
    return float(np.mean(kl)), float(np.mean(js))


def marginals(data: ComparisonDataset, config: ModelConfig, params: ParameterSet, i: int) -> ProbabilityTriple:
    """Match-frequency-weighted outcome probabilities of competitor ``i`` against its opponents."""
    view, _, prob = _prepared(data, config, params)
    return _marginal(view, prob, i)


def empirical_marginals(data: ComparisonDataset, i: int, config: ModelConfig | None = None) -> ProbabilityTriple:
    """Observed counterpart of :func:`marginals`."""
    view = data if config is None else family_view(data, config)
    return _marginal(view, empirical_triples(view), i)


def _marginal(view: ComparisonDataset, prob: Array, i: int) -> ProbabilityTriple:
    if not 0 <= i < view.m:
        raise IndexError(f"competitor index {i} out of range")
    as_i = view.i == i
    as_j = view.j == i
    if not (np.any(as_i) or np.any(as_j)):
        raise ValueError(f"competitor {view.competitors[i]!r} has no comparisons")
    weight = view.n_ij / view.total
    # seen from the j side, a win of i is the stored loss
    own = prob[as_i] * weight[as_i, None]
    other = prob[as_j][:, [1, 0, 2]] * weight[as_j, None]
    total = own.sum(axis=0) + other.sum(axis=0)
    return ProbabilityTriple(float(total[0]), float(total[1]), float(total[2]))


def evaluate(data: ComparisonDataset, config: ModelConfig, params: ParameterSet) -> EvaluationReport:
    h_win, h_loss, h_tie = cross_entropies(data, config, params)
    e_win, e_loss, e_tie, e_all = rmse(data, config, params)
    kld, jsd = divergences(data, config, params)
    return EvaluationReport(
        nll=h_win + h_loss + (h_tie or 0.0),
        h_win=h_win,
        h_loss=h_loss,
        h_tie=h_tie,
        rmse_win=e_win,
        rmse_loss=e_loss,
        rmse_tie=e_tie,
        rmse_all=e_all,
        kld=kld,
        jsd=jsd,
    )


COLUMNS = ("nll", "h_win", "h_loss", "h_tie", "rmse_win", "rmse_loss", "rmse_tie", "rmse_all", "kld", "jsd")


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.4f}"
    return str(value)


def format_table(rows: list[tuple[str, EvaluationReport]], columns=COLUMNS) -> str:
    """Aligned text table with one labeled row per report."""
    header = ["model", *columns]
    body = [[label, *(_cell(getattr(rep, c)) for c in columns)] for label, rep in rows]
    widths = [max(len(r[k]) for r in [header, *body]) for k in range(len(header))]
    lines = []
    for r in [header, *body]:
        first = r[0].ljust(widths[0])
        rest = (cell.rjust(w) for cell, w in zip(r[1:], widths[1:]))
        lines.append("  ".join([first, *rest]))
    return "\n".join(lines)


def report_json(report: EvaluationReport) -> str:
    def clean(v):
        return "inf" if isinstance(v, float) and math.isinf(v) else v

    return json.dumps({k: clean(v) for k, v in report.to_dict().items()}, indent=1, sort_keys=True)
