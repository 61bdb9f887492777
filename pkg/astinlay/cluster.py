"""Hierarchical aggregation of token-level predictions.

Token probabilities are pooled bottom-up along the syntax tree: a node's
confidence is the aggregate over the probabilities of every token aligned to
a terminal below it. Node confidences are then collected per node kind
(subcategory) and per syntax category, and summarized over a corpus with a
bootstrapped median.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources
from types import MappingProxyType
from typing import (
    Dict, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Sequence,
    Tuple)

import numpy as np

from ._doc import _agg_doc, _seq_doc, _tree_doc
from .align import AlignmentMap
from .errors import (
    AggregationMismatch, DuplicateKind, MappingParseError,
    UnknownCategoryName)
from .files import PathLike
from .syntax import Span, SyntaxTree
from .tlp import TlpSequence

logger = logging.getLogger(__name__)

CATEGORIES = (
    'Data Structures', 'Decisions', 'Exceptions', 'Functional Programming',
    'Iterations', 'Natural Language', 'Operators', 'Scope', 'Testing',
    'Data Types',
)
"""The ten syntax categories, in report order."""

UNMAPPED = 'UNMAPPED'

DEFAULT_REPS = 500


class Aggregator(IntEnum):
    """How a collection of probabilities is reduced to a confidence.
    """
    median = 1
    """The middle value (mean of the two middle values for even counts).
    """
    mean = 2
    """The arithmetic mean.
    """
    max = 3
    """The largest value.
    """


def aggregate(values: Sequence[float], agg: Aggregator) -> float:
    """Reduce `values` with `agg`; `values` must not be empty."""
    arr = np.asarray(values, dtype=float)
    if agg == Aggregator.median:
        return float(np.median(arr))
    elif agg == Aggregator.mean:
        return float(np.mean(arr))
    elif agg == Aggregator.max:
        return float(np.max(arr))
    raise ValueError(f'unknown aggregator {agg!r}')


@dataclass(frozen=True)
class AnnotatedNode:
    """A syntax tree node together with its confidence performance.

    `confidence` is ``None`` exactly when no token is aligned below the node.
    """
    node_id: int
    kind: str
    span: Span
    confidence: Optional[float]
    token_count: int
    children: Tuple['AnnotatedNode', ...]

    @property
    def is_terminal(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class AnnotatedTree:
    root: AnnotatedNode
    tree: SyntaxTree
    seq: TlpSequence
    aggregator: Aggregator

    @property
    def snippet_id(self) -> str:
        return self.seq.snippet_id

    def nodes(self) -> Iterator[AnnotatedNode]:
        """Pre-order iteration, parents before children."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


def _check_identity(tree: SyntaxTree, amap: AlignmentMap, seq: TlpSequence):
    if tree.source != seq.source:
        raise AggregationMismatch('tree and token sequence differ in source')
    if len(amap.entries) != len(seq.records):
        raise AggregationMismatch(
            f'alignment covers {len(amap.entries)} tokens, the sequence '
            f'holds {len(seq.records)}')
    if amap.snippet_id != seq.snippet_id:
        raise AggregationMismatch(
            f'alignment of {amap.snippet_id!r} used with sequence '
            f'{seq.snippet_id!r}')
    for node_id in amap.per_terminal:
        try:
            node = tree.node(node_id)
        except KeyError:
            raise AggregationMismatch(
                f'alignment refers to unknown node {node_id}') from None
        if not node.is_terminal:
            raise AggregationMismatch(
                f'alignment maps tokens to non-terminal node {node_id}')


def annotate(
        tree: SyntaxTree,
        amap: AlignmentMap,
        seq: TlpSequence,
        agg: Aggregator = Aggregator.median) -> AnnotatedTree:
    """Attach a confidence to every node of `tree`.

    Parameters
    ==========
    {tree}
    amap:
        The alignment of `seq` onto `tree`.
    {seq}
    {agg}

    Returns
    =======
    AnnotatedTree:
        Terminals aggregate their own tokens, non-terminals all tokens of
        their descendants. Nodes without aligned tokens have a ``None``
        confidence.
    """
    _check_identity(tree, amap, seq)
    probabilities = seq.probabilities
    # post-order over the tree, children lists keep token order
    tokens: Dict[int, List[int]] = {}
    built: Dict[int, AnnotatedNode] = {}
    stack = [(tree.root, False)]
    while stack:
        node, expanded = stack.pop()
        if not expanded:
            stack.append((node, True))
            stack.extend((child, False) for child in reversed(node.children))
            continue
        if node.is_terminal:
            indices = list(amap.per_terminal.get(node.node_id, ()))
        else:
            indices = []
            for child in node.children:
                indices.extend(tokens.pop(child.node_id))
        tokens[node.node_id] = indices
        confidence = None
        if indices:
            confidence = aggregate(probabilities[indices], agg)
        built[node.node_id] = AnnotatedNode(
            node_id=node.node_id, kind=node.kind, span=node.span,
            confidence=confidence, token_count=len(indices),
            children=tuple(built.pop(c.node_id) for c in node.children))
    return AnnotatedTree(
        root=built[tree.root.node_id], tree=tree, seq=seq, aggregator=agg)


if annotate.__doc__:
    annotate.__doc__ = annotate.__doc__.format(
        tree=_tree_doc, seq=_seq_doc, agg=_agg_doc)


def snippet_kind_scores(
        annotated: AnnotatedTree,
        agg: Aggregator = Aggregator.median) -> Dict[str, float]:
    """Per node kind, the aggregate over all non-null occurrences in one
    snippet. Kinds without any non-null occurrence are absent.
    """
    occurrences: Dict[str, List[float]] = {}
    for node in annotated.nodes():
        if node.confidence is not None:
            occurrences.setdefault(node.kind, []).append(node.confidence)
    return {kind: aggregate(values, agg)
            for kind, values in sorted(occurrences.items())}


def subcategory_scores(
        annotated_trees: Iterable[AnnotatedTree],
        agg: Aggregator = Aggregator.median) -> Dict[str, List[float]]:
    """Collect one value per snippet and node kind over a corpus.

    Returns
    =======
    dict:
        Maps each node kind to the list of per-snippet values, in corpus
        order, for the snippets that contain the kind.
    """
    scores: Dict[str, List[float]] = {}
    for annotated in annotated_trees:
        for kind, value in snippet_kind_scores(annotated, agg).items():
            scores.setdefault(kind, []).append(value)
    return scores


def category_scores(
        sub: Mapping[str, Sequence[float]],
        mapping: 'CategoryMapping') -> Dict[str, Optional[List[float]]]:
    """Pool per-snippet subcategory values into their syntax category.

    Every category appears in the result, ``None`` if no value was pooled
    into it. Values of unmapped kinds are pooled under :data:`UNMAPPED`.
    """
    pooled: Dict[str, List[float]] = {}
    for kind in sorted(sub):
        pooled.setdefault(mapping.category_of(kind), []).extend(sub[kind])
    return {
        name: (pooled.get(name) or None)
        for name in CATEGORIES + (UNMAPPED,)
    }


def snippet_category_scores(
        kind_scores: Mapping[str, float],
        mapping: 'CategoryMapping',
        agg: Aggregator = Aggregator.median) -> Dict[str, float]:
    """Per category, the aggregate over one snippet's subcategory values."""
    values: Dict[str, List[float]] = {}
    for kind in sorted(kind_scores):
        category = mapping.category_of(kind)
        if category != UNMAPPED:
            values.setdefault(category, []).append(kind_scores[kind])
    return {c: aggregate(v, agg) for c, v in values.items()}


@dataclass(frozen=True)
class CategoryMapping:
    """Total map from node kinds to syntax categories.

    Kinds not listed map to :data:`UNMAPPED`.
    """
    kinds: Mapping[str, str]

    def __post_init__(self):
        object.__setattr__(
            self, 'kinds', MappingProxyType(dict(sorted(self.kinds.items()))))

    def category_of(self, kind: str) -> str:
        return self.kinds.get(kind, UNMAPPED)

    def kinds_of(self, category: str) -> List[str]:
        return [k for k, c in self.kinds.items() if c == category]

    @property
    def digest(self) -> str:
        """sha256 over the canonical JSON form, identifies the mapping."""
        canonical = json.dumps(dict(self.kinds), sort_keys=True)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    @classmethod
    def default(cls) -> 'CategoryMapping':
        """The mapping shipped with the package for the Python grammar."""
        text = resources.files('astinlay').joinpath(
            'data', 'category_mapping.json').read_text(encoding='utf-8')
        return parse_category_mapping(text, source='<default mapping>')


def _no_duplicates(pairs):
    obj = {}
    for key, value in pairs:
        if key in obj:
            raise DuplicateKind(f'kind {key!r} is mapped more than once')
        obj[key] = value
    return obj


def parse_category_mapping(text: str, source: str = '') -> CategoryMapping:
    try:
        obj = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as e:
        raise MappingParseError(f'{source}: {e}') from e
    if not isinstance(obj, dict):
        raise MappingParseError(f'{source}: expected a JSON object')
    valid = set(CATEGORIES) | {UNMAPPED}
    for kind, category in obj.items():
        if not isinstance(category, str):
            raise MappingParseError(
                f'{source}: category of {kind!r} is not a string')
        if category not in valid:
            raise UnknownCategoryName(
                f'{source}: unknown category {category!r} for kind {kind!r}')
    return CategoryMapping(obj)


def load_category_mapping(path: PathLike) -> CategoryMapping:
    """Load and validate a ``{kind: category}`` JSON mapping file.

    Raises :class:`UnknownCategoryName` for categories outside the ten
    syntax categories (and ``UNMAPPED``), :class:`DuplicateKind` if a kind
    is listed twice and :class:`MappingParseError` for malformed files.
    """
    try:
        with open(path, 'r', encoding='utf-8') as fobj:
            text = fobj.read()
    except UnicodeDecodeError as e:
        raise MappingParseError(f'{path}: {e}') from e
    return parse_category_mapping(text, source=str(path))


class Interval(NamedTuple):
    point: Optional[float]
    ci_low: Optional[float]
    ci_high: Optional[float]


def bootstrap_estimate(
        values: Sequence[float],
        reps: int = DEFAULT_REPS,
        seed: int = 0) -> Interval:
    """Bootstrapped median of `values`.

    `reps` resamples of the size of `values` are drawn with replacement.
    The point estimate is the mean of the resample medians, the interval
    spans their 2.5 and 97.5 percentiles.

    Returns
    =======
    Interval:
        ``(None, None, None)`` for empty `values`.
    """
    if reps < 1:
        raise ValueError(f'reps must be >= 1, got {reps}')
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        return Interval(None, None, None)
    rng = np.random.default_rng(seed)
    resamples = data[rng.integers(0, data.size, size=(reps, data.size))]
    medians = np.median(resamples, axis=1)
    if np.all(medians == medians[0]):
        # exact for degenerate resampling, a sum of copies may round
        point = float(medians[0])
    else:
        point = float(np.mean(medians))
    low, high = np.percentile(medians, [2.5, 97.5])
    return Interval(point, min(float(low), point), max(float(high), point))


@dataclass(frozen=True)
class Estimate:
    point: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    n_samples: int = 0

    @property
    def is_null(self) -> bool:
        return self.point is None

    @classmethod
    def from_values(cls, values: Optional[Sequence[float]], reps: int,
                    seed: int) -> 'Estimate':
        if not values:
            return cls()
        point, low, high = bootstrap_estimate(values, reps, seed)
        return cls(point, low, high, len(values))

    def to_json(self) -> dict:
        return {'point': self.point, 'ci_low': self.ci_low,
                'ci_high': self.ci_high, 'n': self.n_samples}


@dataclass
class CategoryReport:
    """Bootstrapped confidence per category and per subcategory of a model.

    `overall` is the bootstrapped per-snippet mean over all mapped
    subcategories; `unmapped` pools the kinds the mapping does not cover.
    """
    model_id: str
    aggregator: Aggregator
    bootstrap_seed: int
    bootstrap_reps: int
    per_category: Dict[str, Estimate] = field(default_factory=dict)
    per_subcategory: Dict[str, Estimate] = field(default_factory=dict)
    unmapped: Estimate = field(default_factory=Estimate)
    overall: Estimate = field(default_factory=Estimate)
    mapping_digest: str = ''

    def to_json(self) -> dict:
        return {
            'model_id': self.model_id,
            'aggregator': self.aggregator.name,
            'bootstrap_seed': self.bootstrap_seed,
            'bootstrap_reps': self.bootstrap_reps,
            'mapping_digest': self.mapping_digest,
            'overall': self.overall.to_json(),
            'unmapped': self.unmapped.to_json(),
            'per_category': {
                name: est.to_json() for name, est in self.per_category.items()
            },
            'per_subcategory': {
                name: est.to_json()
                for name, est in sorted(self.per_subcategory.items())
            },
        }

    def rows(self, subcategories: Optional[Iterable[str]] = None
             ) -> List[Tuple[str, str, str, Estimate]]:
        """Flat ``(model_id, level, name, estimate)`` rows."""
        rows = [(self.model_id, 'category', name, est)
                for name, est in self.per_category.items()]
        rows.append((self.model_id, 'category', UNMAPPED, self.unmapped))
        names = sorted(self.per_subcategory) if subcategories is None \
            else subcategories
        rows.extend(
            (self.model_id, 'subcategory', name, self.per_subcategory[name])
            for name in names if name in self.per_subcategory)
        return rows


def category_report(
        sub: Mapping[str, Sequence[float]],
        mapping: CategoryMapping,
        agg: Aggregator = Aggregator.median,
        model_id: str = '',
        reps: int = DEFAULT_REPS,
        seed: int = 0,
        overall_values: Optional[Sequence[float]] = None) -> CategoryReport:
    """Bootstrap every subcategory and category of a corpus.

    Parameters
    ==========
    sub:
        Per-snippet values per node kind, see :func:`subcategory_scores`.
    mapping:
        The :class:`CategoryMapping` from kinds to categories.
    overall_values:
        Per-snippet overall confidence values, if any.
    """
    pooled = category_scores(sub, mapping)
    return CategoryReport(
        model_id=model_id, aggregator=agg, bootstrap_seed=seed,
        bootstrap_reps=reps,
        per_category={
            name: Estimate.from_values(pooled[name], reps, seed)
            for name in CATEGORIES
        },
        per_subcategory={
            kind: Estimate.from_values(values, reps, seed)
            for kind, values in sorted(sub.items())
        },
        unmapped=Estimate.from_values(pooled[UNMAPPED], reps, seed),
        overall=Estimate.from_values(overall_values, reps, seed),
        mapping_digest=mapping.digest,
    )


def overall_snippet_score(
        kind_scores: Mapping[str, float],
        mapping: CategoryMapping) -> Optional[float]:
    """Mean over one snippet's mapped subcategory values."""
    values = [v for k, v in sorted(kind_scores.items())
              if mapping.category_of(k) != UNMAPPED]
    if not values:
        return None
    return float(np.mean(values))
