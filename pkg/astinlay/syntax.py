"""Concrete syntax trees for Python source and the structural metrics derived
from them.

Parsing is delegated to `tree-sitter <https://tree-sitter.github.io>`_ with
the Python grammar shipped in ``tree_sitter_python``. The tree-sitter nodes
are copied into immutable :class:`AstNode` objects so that trees can be
shared freely between workers and outlive the parser.
"""
import logging
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterator, List, Tuple

import tree_sitter_python
from tree_sitter import Language, Parser

from .errors import InputFormatError, InvalidSpan

logger = logging.getLogger(__name__)

DECISION_KINDS = frozenset((
    'if_statement', 'elif_clause', 'while_statement', 'for_statement',
    'except_clause', 'with_statement', 'assert_statement',
    'boolean_operator', 'conditional_expression', 'if_clause', 'case_clause',
))
"""Node kinds that count as a decision point in the cyclomatic complexity."""

ERROR_KIND = 'ERROR'
WHITESPACE_BYTES = frozenset(b' \t\n\r\f\v')


@dataclass(frozen=True, order=True)
class Span:
    """Half open byte range ``[start, end)`` into an UTF-8 encoded source.
    """
    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise InvalidSpan(f'invalid span [{self.start}, {self.end})')

    def __len__(self):
        return self.end - self.start

    def overlap(self, other: 'Span') -> int:
        """Number of bytes shared with `other`."""
        return max(0, min(self.end, other.end) - max(self.start, other.start))

    def intersects(self, other: 'Span') -> bool:
        return self.overlap(other) > 0

    def contains(self, other: 'Span') -> bool:
        return self.start <= other.start and other.end <= self.end

    def check(self, length: int):
        """Raise :class:`InvalidSpan` if the span reaches past `length`."""
        if self.end > length:
            raise InvalidSpan(
                f'span [{self.start}, {self.end}) exceeds source length '
                f'{length}')


@dataclass(frozen=True)
class AstNode:
    kind: str
    span: Span
    children: Tuple['AstNode', ...]
    node_id: int

    @property
    def is_terminal(self) -> bool:
        return not self.children

    @property
    def is_error(self) -> bool:
        return self.kind == ERROR_KIND


@dataclass(frozen=True)
class SyntaxTree:
    """Immutable concrete syntax tree of a single snippet.

    The root span always covers the complete source, including leading and
    trailing whitespace the grammar does not attribute to any node.
    """
    root: AstNode
    source: str
    has_errors: bool
    _index: Dict[int, AstNode] = field(
        init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(
            self, '_index', {n.node_id: n for n in self.nodes()})

    @property
    def source_bytes(self) -> bytes:
        return self.source.encode('utf-8')

    def nodes(self) -> Iterator[AstNode]:
        """Pre-order iteration over all nodes (parents before children)."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def node(self, node_id: int) -> AstNode:
        return self._index[node_id]

    def __len__(self):
        return len(self._index)

    def text(self, span: Span) -> str:
        return self.source_bytes[span.start:span.end].decode(
            'utf-8', errors='replace')


@dataclass
class StructuralMetrics:
    """Structural description of a snippet, used as confounders.

    `sequence_size` is not a property of the tree and stays 0 until a
    token sequence is attached (see :meth:`with_sequence_size`).
    """
    ast_levels: int = 0
    node_count: int = 0
    loc: int = 0
    whitespace_count: int = 0
    cyclomatic_complexity: int = 1
    sequence_size: int = 0

    def with_sequence_size(self, size: int) -> 'StructuralMetrics':
        return StructuralMetrics(
            ast_levels=self.ast_levels, node_count=self.node_count,
            loc=self.loc, whitespace_count=self.whitespace_count,
            cyclomatic_complexity=self.cyclomatic_complexity,
            sequence_size=size)

    def confounders(self) -> Tuple[int, int, int, int]:
        """The four confounders in fixed order: cyclomatic complexity, AST
        levels, node count and sequence size.
        """
        return (self.cyclomatic_complexity, self.ast_levels,
                self.node_count, self.sequence_size)


@lru_cache(maxsize=None)
def python_language() -> Language:
    return Language(tree_sitter_python.language())


LEXEME_KINDS = frozenset(('string_content',))
"""Node kinds kept as a single terminal.

The grammar nests escape sequences inside string content, which would leave
the literal text around them without a terminal.
"""

_local = threading.local()


def _parser() -> Parser:
    # tree-sitter parsers must not be shared between threads
    parser = getattr(_local, 'parser', None)
    if parser is None:
        parser = Parser(python_language())
        _local.parser = parser
    return parser


def _ts_children(ts_node):
    if ts_node.type in LEXEME_KINDS:
        return ()
    return ts_node.children


def _convert(ts_root, length: int) -> AstNode:
    """Copy a tree-sitter tree into :class:`AstNode` objects.

    Node ids are assigned in pre-order, starting with 0 for the root.
    """
    # iterative, deeply nested expressions exceed the recursion limit
    ids = {}
    order = []
    stack = [ts_root]
    while stack:
        ts_node = stack.pop()
        ids[ts_node.id] = len(order)
        order.append(ts_node)
        stack.extend(reversed(_ts_children(ts_node)))
    built = {}
    for ts_node in reversed(order):
        node_id = ids[ts_node.id]
        if node_id == 0:
            span = Span(0, length)
        else:
            span = Span(ts_node.start_byte, ts_node.end_byte)
        built[node_id] = AstNode(
            kind=ts_node.type, span=span,
            children=tuple(built.pop(ids[c.id])
                           for c in _ts_children(ts_node)),
            node_id=node_id)
    return built[0]


def parse(source: str) -> SyntaxTree:
    """Parse Python `source` into a :class:`SyntaxTree`.

    Parsing never fails on syntactically invalid code, the grammar's
    ``ERROR`` nodes are kept in the tree and `has_errors` is set.

    Parameters
    ==========
    source:
        The snippet text.

    Returns
    =======
    SyntaxTree:
        A full coverage tree of `source`.
    """
    try:
        data = source.encode('utf-8')
    except UnicodeEncodeError as e:
        raise InputFormatError(f'source is not valid UTF-8: {e}') from e
    ts_tree = _parser().parse(data)
    root = _convert(ts_tree.root_node, len(data))
    has_errors = bool(ts_tree.root_node.has_error)
    if has_errors:
        logger.debug('syntax errors in snippet of %d bytes', len(data))
    return SyntaxTree(root=root, source=source, has_errors=has_errors)


def terminals_in_order(tree: SyntaxTree) -> List[AstNode]:
    """All terminal nodes of `tree` ordered by their start byte.

    Zero width leaves (nodes the grammar inserted as ``MISSING`` and the root
    of an empty module) carry no lexeme and are left out.
    """
    terminals = [
        n for n in tree.nodes()
        if n.is_terminal and len(n.span) and n is not tree.root
    ]
    terminals.sort(key=lambda n: (n.span.start, n.span.end))
    return terminals


def count_loc(source: str) -> int:
    if not source:
        return 0
    return source.count('\n') + (0 if source.endswith('\n') else 1)


def structural_metrics(tree: SyntaxTree) -> StructuralMetrics:
    """Compute the structural metrics of `tree`.

    The cyclomatic complexity is ``1 +`` the number of nodes whose kind is
    listed in :data:`DECISION_KINDS`.
    """
    node_count = 0
    levels = 0
    decisions = 0
    stack = [(tree.root, 1)]
    while stack:
        node, depth = stack.pop()
        node_count += 1
        levels = max(levels, depth)
        if node.kind in DECISION_KINDS:
            decisions += 1
        stack.extend((child, depth + 1) for child in node.children)
    data = tree.source_bytes
    return StructuralMetrics(
        ast_levels=levels,
        node_count=node_count,
        loc=count_loc(tree.source),
        whitespace_count=sum(1 for b in data if b in WHITESPACE_BYTES),
        cyclomatic_complexity=1 + decisions,
    )
