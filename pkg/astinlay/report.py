"""Global explanations: corpus reports, threshold flags and model comparison.

A corpus is analyzed snippet by snippet (parse, align, annotate, collect
subcategory values) and the per-snippet values are then bootstrapped into a
:class:`~astinlay.cluster.CategoryReport` for the model that produced the
token-level predictions.
"""
import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import (
    Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union)

import numpy as np

from .align import align
from .cluster import (
    CATEGORIES, DEFAULT_REPS, Aggregator, CategoryMapping, CategoryReport,
    annotate, category_report, overall_snippet_score, snippet_kind_scores)
from .errors import (
    AstInLayError, ConfigMismatch, EmptySequence, InputFormatError,
    MissingTlp, SourceMismatch, ZeroProbability)
from .files import PathLike, read_jsonl
from .syntax import StructuralMetrics, parse, structural_metrics
from .tlp import TlpSequence, cross_entropy

logger = logging.getLogger(__name__)

MAX_TOKENS = 1024
DEFAULT_TAU = 0.6
DEFAULT_TOP_K = 32

PASS, FAIL, NULL = 'pass', 'fail', 'null'

CSV_COLUMNS = ('model_id', 'level', 'name', 'point', 'ci_low', 'ci_high', 'n')


@dataclass(frozen=True)
class BootstrapConfig:
    reps: int = DEFAULT_REPS
    seed: int = 0
    max_tokens: int = MAX_TOKENS


@dataclass(frozen=True)
class DatasetRecord:
    """One snippet of a dataset; metrics left as ``None`` are recomputed.
    """
    snippet_id: str
    source: str
    cyclomatic_complexity: Optional[int] = None
    ast_levels: Optional[int] = None
    node_count: Optional[int] = None
    token_count: Optional[int] = None

    @classmethod
    def from_json(cls, obj: dict) -> 'DatasetRecord':
        try:
            return cls(
                snippet_id=str(obj['snippet_id']),
                source=obj['source'],
                **{k: (None if obj.get(k) is None else int(obj[k]))
                   for k in ('cyclomatic_complexity', 'ast_levels',
                             'node_count', 'token_count')})
        except (KeyError, TypeError, ValueError) as e:
            raise InputFormatError(
                f'malformed dataset record {obj.get("snippet_id")!r}: '
                f'{e!r}') from e


def read_dataset(path: PathLike) -> List[DatasetRecord]:
    return [DatasetRecord.from_json(obj) for obj in read_jsonl(path)]


@dataclass
class SnippetAnalysis:
    snippet_id: str
    metrics: StructuralMetrics
    cross_entropy: Optional[float]
    kind_scores: Dict[str, float]
    overall: Optional[float]
    intrinsic: Optional[float]
    token_count: int
    truncated: bool = False
    has_errors: bool = False

    def to_json(self) -> dict:
        return {
            'snippet_id': self.snippet_id,
            'metrics': asdict(self.metrics),
            'cross_entropy': self.cross_entropy,
            'intrinsic': self.intrinsic,
            'overall': self.overall,
            'token_count': self.token_count,
            'truncated': self.truncated,
            'has_errors': self.has_errors,
            'scores': dict(sorted(self.kind_scores.items())),
        }


@dataclass
class CorpusReport:
    """Everything computed for one model over one corpus.

    `intrinsic` is the mean token probability over all tokens of all
    analyzed snippets.
    """
    model_id: str
    category_report: CategoryReport
    snippet_analyses: List[SnippetAnalysis] = field(default_factory=list)
    intrinsic: Optional[float] = None
    aggregator: Aggregator = Aggregator.median
    mapping: Optional[CategoryMapping] = None
    skipped: List[str] = field(default_factory=list)

    @property
    def truncated(self) -> List[str]:
        return [a.snippet_id for a in self.snippet_analyses if a.truncated]

    def to_json(self) -> dict:
        return {
            'model_id': self.model_id,
            'aggregator': self.aggregator.name,
            'intrinsic': self.intrinsic,
            'snippet_count': len(self.snippet_analyses),
            'skipped': list(self.skipped),
            'truncated': self.truncated,
            'category_report': self.category_report.to_json(),
            'snippets': [a.to_json() for a in self.snippet_analyses],
        }


def _metrics(record: DatasetRecord, computed: StructuralMetrics,
             seq: TlpSequence) -> StructuralMetrics:
    return StructuralMetrics(
        ast_levels=_given(record.ast_levels, computed.ast_levels),
        node_count=_given(record.node_count, computed.node_count),
        loc=computed.loc,
        whitespace_count=computed.whitespace_count,
        cyclomatic_complexity=_given(
            record.cyclomatic_complexity, computed.cyclomatic_complexity),
        sequence_size=_given(record.token_count, len(seq)),
    )


def _given(value, fallback):
    return fallback if value is None else value


def analyze_snippet(
        record: DatasetRecord,
        seq: TlpSequence,
        mapping: CategoryMapping,
        agg: Aggregator = Aggregator.median,
        max_tokens: int = MAX_TOKENS) -> SnippetAnalysis:
    """Run parse, align and annotate on a single snippet."""
    if seq.source != record.source:
        raise SourceMismatch(
            f'TLP source of {record.snippet_id!r} differs from the dataset')
    if len(seq) > max_tokens:
        logger.warning('snippet %r has %d tokens, truncating to %d',
                       record.snippet_id, len(seq), max_tokens)
        seq = seq.truncate(max_tokens)
    tree = parse(record.source)
    annotated = annotate(tree, align(seq, tree), seq, agg)
    kind_scores = snippet_kind_scores(annotated, agg)
    try:
        loss = cross_entropy(seq)
    except (EmptySequence, ZeroProbability) as e:
        logger.warning('no cross-entropy for snippet %r: %s',
                       record.snippet_id, e)
        loss = None
    probabilities = seq.probabilities
    return SnippetAnalysis(
        snippet_id=record.snippet_id,
        metrics=_metrics(record, structural_metrics(tree), seq),
        cross_entropy=loss,
        kind_scores=kind_scores,
        overall=overall_snippet_score(kind_scores, mapping),
        intrinsic=float(np.mean(probabilities)) if len(seq) else None,
        token_count=len(seq),
        truncated=seq.truncated,
        has_errors=tree.has_errors,
    )


def analyze_corpus(
        dataset: Iterable[DatasetRecord],
        tlp_source: Mapping[str, TlpSequence],
        mapping: CategoryMapping,
        agg: Aggregator = Aggregator.median,
        cfg: BootstrapConfig = BootstrapConfig(),
        jobs: int = 1) -> CorpusReport:
    """Explain a model globally over a corpus.

    Parameters
    ==========
    dataset:
        The snippets to analyze.
    tlp_source:
        Token-level predictions by snippet id; every snippet needs one.
    mapping:
        The :class:`~astinlay.cluster.CategoryMapping` to categorize with.
    agg:
        Aggregator for node, snippet and category values.
    cfg:
        Bootstrap repetitions, seed and the token cap per snippet.
    jobs:
        Number of worker threads for the per-snippet stages.

    Returns
    =======
    CorpusReport:
        Snippets that fail to analyze are logged and listed in `skipped`.
    """
    records = list(dataset)
    pairs = []
    for record in records:
        if record.snippet_id not in tlp_source:
            raise MissingTlp(f'no TLP record for snippet {record.snippet_id!r}')
        pairs.append((record, tlp_source[record.snippet_id]))
    model_ids = sorted({seq.model_id for _, seq in pairs})
    if len(model_ids) > 1:
        logger.warning('TLP records of several models %s, reporting as %r',
                       model_ids, model_ids[0])
    model_id = model_ids[0] if model_ids else ''

    def work(pair):
        record, seq = pair
        try:
            return analyze_snippet(record, seq, mapping, agg, cfg.max_tokens)
        except AstInLayError as e:
            logger.warning('skipping snippet %r: %s', record.snippet_id, e)
            return record.snippet_id

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            # map keeps input order, the report stays deterministic
            results = list(pool.map(work, pairs))
    else:
        results = [work(p) for p in pairs]
    analyses = [r for r in results if isinstance(r, SnippetAnalysis)]
    skipped = [r for r in results if isinstance(r, str)]
    if skipped:
        logger.warning('%d of %d snippets skipped', len(skipped), len(pairs))
    if not analyses:
        raise InputFormatError('no snippet of the corpus could be analyzed')

    sub: Dict[str, List[float]] = {}
    for analysis in analyses:
        for kind, value in analysis.kind_scores.items():
            sub.setdefault(kind, []).append(value)
    # token-weighted mean of the per-snippet means
    counted = [a for a in analyses if a.token_count]
    intrinsic = None
    if counted:
        intrinsic = float(np.average(
            [a.intrinsic for a in counted],
            weights=[a.token_count for a in counted]))
    report = category_report(
        sub, mapping, agg, model_id=model_id, reps=cfg.reps, seed=cfg.seed,
        overall_values=[a.overall for a in analyses if a.overall is not None])
    logger.info('analyzed %d snippets for model %r', len(analyses), model_id)
    return CorpusReport(
        model_id=model_id, category_report=report,
        snippet_analyses=analyses, intrinsic=intrinsic, aggregator=agg,
        mapping=mapping, skipped=skipped)


ReportLike = Union[CorpusReport, CategoryReport]


def _categories_of(report: ReportLike) -> CategoryReport:
    if isinstance(report, CorpusReport):
        return report.category_report
    return report


def threshold_flags(report: ReportLike,
                    tau: float = DEFAULT_TAU) -> Dict[str, str]:
    """Flag every category as ``pass`` (point >= `tau`), ``fail`` or
    ``null`` (no snippet exercised the category).
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f'tau must lie within [0, 1], got {tau}')
    flags = {}
    for name, est in _categories_of(report).per_category.items():
        if est.is_null:
            flags[name] = NULL
        else:
            flags[name] = PASS if est.point >= tau else FAIL
    return flags


@dataclass
class ComparisonMatrix:
    """Point estimates per row (category or subcategory) and model.

    `deltas` maps a ``(model_a, model_b)`` pair to the per-row differences
    ``cell(a) - cell(b)``, ``None`` where either cell is null.
    """
    rows: List[str]
    columns: List[str]
    cells: Dict[str, Dict[str, Optional[float]]]
    deltas: Dict[Tuple[str, str], Dict[str, Optional[float]]]

    def cell(self, row: str, model_id: str) -> Optional[float]:
        return self.cells[row][model_id]

    def to_json(self) -> dict:
        return {
            'rows': self.rows,
            'columns': self.columns,
            'cells': [[self.cells[r][c] for c in self.columns]
                      for r in self.rows],
            'deltas': [
                {'a': a, 'b': b,
                 'values': {r: d[r] for r in self.rows}}
                for (a, b), d in self.deltas.items()
            ],
        }


def compare_models(
        reports: Sequence[ReportLike],
        pairs: Sequence[Tuple[str, str]] = (),
        subcategories: Optional[Iterable[str]] = None) -> ComparisonMatrix:
    """Tabulate several model reports side by side.

    Parameters
    ==========
    reports:
        At least two reports built with the same aggregator and mapping.
    pairs:
        ``(model_a, model_b)`` pairs for which differences are computed.
    subcategories:
        Subcategory rows to add below the ten categories; by default all
        subcategories any report contains.
    """
    cat_reports = [_categories_of(r) for r in reports]
    if len(cat_reports) < 2:
        raise ValueError('comparing models needs at least two reports')
    first = cat_reports[0]
    for other in cat_reports[1:]:
        if other.aggregator != first.aggregator:
            raise ConfigMismatch(
                f'{other.model_id!r} aggregated with {other.aggregator.name}, '
                f'{first.model_id!r} with {first.aggregator.name}')
        if other.mapping_digest != first.mapping_digest:
            raise ConfigMismatch(
                f'{other.model_id!r} and {first.model_id!r} use different '
                'category mappings')
    columns = [r.model_id for r in cat_reports]
    if len(set(columns)) != len(columns):
        raise ConfigMismatch(f'duplicate model ids in {columns}')
    if subcategories is None:
        subcategories = sorted(
            {k for r in cat_reports for k in r.per_subcategory})
    rows = list(CATEGORIES) + [s for s in subcategories if s not in CATEGORIES]
    cells = {}
    for row in rows:
        cells[row] = {}
        for r in cat_reports:
            est = r.per_category.get(row) if row in CATEGORIES \
                else r.per_subcategory.get(row)
            cells[row][r.model_id] = None if est is None else est.point
    deltas = {}
    for a, b in pairs:
        if a not in columns or b not in columns:
            raise ConfigMismatch(f'unknown model in pair ({a!r}, {b!r})')
        deltas[(a, b)] = {
            row: (None if cells[row][a] is None or cells[row][b] is None
                  else cells[row][a] - cells[row][b])
            for row in rows
        }
    return ComparisonMatrix(rows=rows, columns=columns, cells=cells,
                            deltas=deltas)


def largest_deltas(matrix: ComparisonMatrix, pair: Tuple[str, str],
                   n: int = 5) -> List[Tuple[str, float]]:
    """The `n` rows with the largest absolute difference for `pair`."""
    values = [(row, d) for row, d in matrix.deltas[pair].items()
              if d is not None]
    values.sort(key=lambda item: (-abs(item[1]), item[0]))
    return values[:n]


def top_subcategories(report: ReportLike,
                      k: int = DEFAULT_TOP_K) -> List[str]:
    """The `k` most frequent subcategories (ties broken by name)."""
    per_sub = _categories_of(report).per_subcategory
    ranked = sorted(per_sub, key=lambda s: (-per_sub[s].n_samples, s))
    return sorted(ranked[:k])


def heatmap_data(reports: Sequence[ReportLike],
                 subcategories: Optional[Iterable[str]] = None) -> dict:
    """Category (and subcategory) by model matrix for heatmap rendering."""
    cat_reports = [_categories_of(r) for r in reports]
    subs = list(subcategories or [])
    rows = list(CATEGORIES) + subs
    cells = []
    for row in rows:
        line = []
        for r in cat_reports:
            est = r.per_category.get(row) if row in CATEGORIES \
                else r.per_subcategory.get(row)
            line.append(None if est is None else est.point)
        cells.append(line)
    return {'rows': rows, 'columns': [r.model_id for r in cat_reports],
            'cells': cells}


def _fmt(value) -> str:
    return '' if value is None else repr(value)


def reports_csv(reports: Sequence[ReportLike],
                top_k: Optional[int] = DEFAULT_TOP_K) -> str:
    """Flat CSV over all reports: one row per category and subcategory.

    Only the `top_k` most frequent subcategories of each report are
    exported (all of them for ``None``).
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        subs = None if top_k is None else top_subcategories(report, top_k)
        for model_id, level, name, est in \
                _categories_of(report).rows(subs):
            writer.writerow((model_id, level, name, _fmt(est.point),
                             _fmt(est.ci_low), _fmt(est.ci_high),
                             est.n_samples))
    return buffer.getvalue()
