"""Causal validation of syntax-grounded confidence scores.

For a treatment (a node kind, a syntax category or the intrinsic
performance) every snippet contributes one sample: the snippet's confidence
for the treatment, its cross-entropy loss as outcome and four structural
confounders (cyclomatic complexity, AST levels, node count and sequence
size). The effect of the treatment on the loss is estimated by linear
backdoor adjustment, ``Y ~ 1 + T + Z``, and checked with placebo
treatments obtained by permuting ``T``.
"""
import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .cluster import (
    CATEGORIES, UNMAPPED, Aggregator, CategoryMapping,
    snippet_category_scores)
from .errors import (
    AstInLayError, DegenerateVariance, InsufficientSamples, LengthMismatch,
    RankDeficient)
from .report import CorpusReport

logger = logging.getLogger(__name__)

BASELINE = 'baseline'
"""Treatment name of the intrinsic performance (mean token probability)."""

DEFAULT_TREATMENTS = (
    'for_statement', 'while_statement', 'identifier', 'string',
    'return_statement', ']', ')', 'if_statement', 'comparison_operator',
    'boolean_operator', 'for_in_clause', 'if_clause', 'lambda',
    'list_comprehension', BASELINE,
)

MIN_SAMPLES = 10
MIN_PEARSON_SAMPLES = 3

CSV_COLUMNS = ('category', 'subcategory', 'model_id', 'rho', 'ate', 'stderr',
               'placebo_ate', 'placebo_pass', 'n')


@dataclass(frozen=True)
class CausalConfig:
    seed: int = 0
    permutations: int = 20
    standardize: bool = False
    placebo_bound: float = 0.05


@dataclass(frozen=True)
class CausalSample:
    """One snippet: treatment `T`, outcome `Y` and confounders `Z`.

    `treatment` is ``None`` if the snippet does not exercise the treatment;
    such samples are dropped before estimation.
    """
    snippet_id: str
    treatment: Optional[float]
    outcome: float
    confounders: Tuple[float, ...]


@dataclass
class CausalEstimate:
    treatment_name: str
    model_id: str = ''
    category: str = ''
    subcategory: str = ''
    n: int = 0
    rho: Optional[float] = None
    ate: Optional[float] = None
    ate_stderr: Optional[float] = None
    placebo_ate: Optional[float] = None
    placebo_pass: Optional[bool] = None
    error: Optional[str] = None

    def to_json(self) -> dict:
        return asdict(self)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient of `x` and `y`."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LengthMismatch(f'{x.size} values against {y.size}')
    if x.size < MIN_PEARSON_SAMPLES:
        raise InsufficientSamples(
            f'pearson needs {MIN_PEARSON_SAMPLES} samples, got {x.size}')
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateVariance('pearson of a constant series')
    rho = stats.pearsonr(x, y)[0]
    return float(np.clip(rho, -1.0, 1.0))


def _usable(samples: Sequence[CausalSample]) -> List[CausalSample]:
    return [s for s in samples if s.treatment is not None]


def _zscore(column: np.ndarray) -> np.ndarray:
    std = column.std()
    if std == 0:
        return column - column.mean()
    return (column - column.mean()) / std


def _design(treatment: np.ndarray, confounders: np.ndarray,
            standardize: bool) -> np.ndarray:
    if standardize:
        treatment = _zscore(treatment)
        confounders = np.column_stack(
            [_zscore(c) for c in confounders.T]) if confounders.size \
            else confounders
    intercept = np.ones((treatment.size, 1))
    return np.concatenate(
        (intercept, treatment[:, None], confounders.reshape(treatment.size, -1)),
        axis=1)


def _ols_effect(design: np.ndarray, outcome: np.ndarray) -> Tuple[float, float]:
    n, p = design.shape
    if np.linalg.matrix_rank(design) < p:
        raise RankDeficient(
            f'design matrix of {n} samples and {p} columns is rank deficient')
    beta, _, _, _ = np.linalg.lstsq(design, outcome, rcond=None)
    residuals = outcome - design @ beta
    dof = n - p
    sigma2 = float(residuals @ residuals) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return float(beta[1]), float(np.sqrt(max(cov[1, 1], 0.0)))


def _arrays(samples: Sequence[CausalSample]):
    usable = _usable(samples)
    if len(usable) < MIN_SAMPLES:
        raise InsufficientSamples(
            f'need at least {MIN_SAMPLES} samples with a treatment, '
            f'got {len(usable)}')
    treatment = np.array([s.treatment for s in usable], dtype=float)
    outcome = np.array([s.outcome for s in usable], dtype=float)
    confounders = np.array([s.confounders for s in usable], dtype=float)
    return treatment, outcome, confounders


def ate_linear(samples: Sequence[CausalSample],
               standardize: bool = False) -> Tuple[float, float]:
    """Average treatment effect by ordinary least squares adjustment.

    Parameters
    ==========
    samples:
        The :class:`CausalSample` objects; samples without treatment value
        are ignored.
    standardize:
        Z-score treatment and confounders before fitting.

    Returns
    =======
    tuple:
        ``(ate, stderr)``, the coefficient of the treatment in
        ``Y ~ 1 + T + Z`` and its standard error.
    """
    treatment, outcome, confounders = _arrays(samples)
    return _ols_effect(
        _design(treatment, confounders, standardize), outcome)


def placebo_effects(samples: Sequence[CausalSample], seed: int = 0,
                    permutations: int = 20,
                    standardize: bool = False) -> np.ndarray:
    """Signed effects of `permutations` randomly permuted treatments."""
    if permutations < 1:
        raise ValueError(f'permutations must be >= 1, got {permutations}')
    treatment, outcome, confounders = _arrays(samples)
    rng = np.random.default_rng(seed)
    effects = np.empty(permutations)
    for i in range(permutations):
        design = _design(rng.permutation(treatment), confounders, standardize)
        effects[i] = _ols_effect(design, outcome)[0]
    return effects


def placebo_refute(samples: Sequence[CausalSample], seed: int = 0,
                   permutations: int = 20, ate: Optional[float] = None,
                   bound: float = 0.05,
                   standardize: bool = False) -> Tuple[float, bool]:
    """Re-estimate the effect on permuted treatments.

    Returns
    =======
    tuple:
        ``(placebo_ate, placebo_pass)`` with `placebo_ate` the mean absolute
        placebo effect. The refutation passes if it lies below
        ``max(bound, 0.1 * |ate|)``.
    """
    if ate is None:
        ate, _ = ate_linear(samples, standardize)
    effects = placebo_effects(samples, seed, permutations, standardize)
    placebo_ate = float(np.mean(np.abs(effects)))
    return placebo_ate, placebo_ate < max(bound, 0.1 * abs(ate))


def _treatment_values(corpus: CorpusReport, name: str,
                      mapping: CategoryMapping, agg: Aggregator):
    for analysis in corpus.snippet_analyses:
        if name == BASELINE:
            yield analysis.intrinsic
        elif name in CATEGORIES:
            yield snippet_category_scores(
                analysis.kind_scores, mapping, agg).get(name)
        else:
            yield analysis.kind_scores.get(name)


def causal_samples(corpus: CorpusReport, treatment: str,
                   mapping: Optional[CategoryMapping] = None
                   ) -> List[CausalSample]:
    """One sample per snippet with a cross-entropy loss."""
    mapping = mapping or corpus.mapping or CategoryMapping.default()
    values = _treatment_values(corpus, treatment, mapping, corpus.aggregator)
    return [
        CausalSample(
            snippet_id=a.snippet_id, treatment=value,
            outcome=a.cross_entropy,
            confounders=tuple(float(z) for z in a.metrics.confounders()))
        for a, value in zip(corpus.snippet_analyses, values)
        if a.cross_entropy is not None
    ]


def _labels(name: str, mapping: CategoryMapping) -> Tuple[str, str]:
    if name == BASELINE:
        return 'Baseline', ''
    if name in CATEGORIES:
        return name, ''
    category = mapping.category_of(name)
    return ('' if category == UNMAPPED else category), name


def estimate_treatment(corpus: CorpusReport, treatment: str,
                       cfg: CausalConfig = CausalConfig(),
                       mapping: Optional[CategoryMapping] = None
                       ) -> CausalEstimate:
    """Correlation, effect and placebo check for a single treatment.

    Failures are recorded in the `error` field of the estimate.
    """
    mapping = mapping or corpus.mapping or CategoryMapping.default()
    category, subcategory = _labels(treatment, mapping)
    samples = _usable(causal_samples(corpus, treatment, mapping))
    estimate = CausalEstimate(
        treatment_name=treatment, model_id=corpus.model_id,
        category=category, subcategory=subcategory, n=len(samples))
    if not samples:
        logger.info('treatment %r occurs in no snippet', treatment)
        return estimate
    errors = []
    try:
        estimate.rho = pearson([s.treatment for s in samples],
                               [s.outcome for s in samples])
    except AstInLayError as e:
        errors.append(f'rho: {e}')
    try:
        estimate.ate, estimate.ate_stderr = ate_linear(
            samples, cfg.standardize)
        estimate.placebo_ate, estimate.placebo_pass = placebo_refute(
            samples, cfg.seed, cfg.permutations, estimate.ate,
            cfg.placebo_bound, cfg.standardize)
    except AstInLayError as e:
        errors.append(f'ate: {e}')
    if errors:
        estimate.error = '; '.join(errors)
        logger.warning('treatment %r: %s', treatment, estimate.error)
    return estimate


def causal_report(corpus: CorpusReport,
                  treatments: Sequence[str] = DEFAULT_TREATMENTS,
                  cfg: CausalConfig = CausalConfig(),
                  jobs: int = 1) -> List[CausalEstimate]:
    """Estimate every treatment of `treatments` on `corpus`.

    Treatments are node kinds, category names or :data:`BASELINE`. Each is
    estimated independently on the snippets exercising it; one row per
    treatment is returned, in the given order.
    """
    mapping = corpus.mapping or CategoryMapping.default()

    def work(name):
        return estimate_treatment(corpus, name, cfg, mapping)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, treatments))
    return [work(name) for name in treatments]


def _fmt(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return str(value).lower()
    return repr(value)


def causal_csv(estimates: Sequence[CausalEstimate]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(CSV_COLUMNS)
    for e in estimates:
        writer.writerow((e.category, e.subcategory, e.model_id, _fmt(e.rho),
                         _fmt(e.ate), _fmt(e.ate_stderr),
                         _fmt(e.placebo_ate), _fmt(e.placebo_pass), e.n))
    return buffer.getvalue()
