"""Alignment of model tokens to terminal nodes of the syntax tree.

Every token is assigned to at most one terminal node (many tokens may share
a terminal, a token is never split across terminals). Alignment works on the
byte spans of tokens and terminals: a token goes to the terminal it overlaps
most, the earliest terminal winning ties. Tokens overlapping no terminal
(whitespace between nodes) stay unaligned and take no part in any
aggregation.
"""
import bisect
import logging
from dataclasses import dataclass
from typing import Dict, NamedTuple, Tuple

from ._doc import _seq_doc, _tree_doc
from .errors import SourceMismatch
from .syntax import SyntaxTree, terminals_in_order
from .tlp import TlpSequence

logger = logging.getLogger(__name__)

UNALIGNED = -1
"""Node id recorded for tokens that overlap no terminal."""

SUBWORD_MARKERS = ('Ġ', '▁', '##', '_')


def normalize_token(text: str) -> str:
    """Strip subword markers from both ends of a token text.

    The markers are the BPE ``Ġ``, the SentencePiece ``▁``, the WordPiece
    ``##`` and ``_``; a single leading space is dropped as well. Characters
    in the interior of the token are left untouched.
    """
    if text.startswith(' '):
        text = text[1:]
    stripped = True
    while stripped and text:
        stripped = False
        for marker in SUBWORD_MARKERS:
            if text.startswith(marker):
                text = text[len(marker):]
                stripped = True
            if text.endswith(marker):
                text = text[:-len(marker)]
                stripped = True
    return text


@dataclass(frozen=True)
class AlignmentMap:
    """Many-to-one map from token indices to terminal node ids.

    `entries` holds one ``(token_index, node_id)`` pair per token, in token
    order, with :data:`UNALIGNED` as node id for unaligned tokens.
    `per_terminal` is its inverse restricted to aligned tokens.
    """
    entries: Tuple[Tuple[int, int], ...]
    per_terminal: Dict[int, Tuple[int, ...]]
    snippet_id: str = ''

    def node_of(self, token_index: int) -> int:
        return self.entries[token_index][1]

    @property
    def aligned_count(self) -> int:
        return sum(1 for _, node_id in self.entries if node_id != UNALIGNED)

    def to_json(self, seq: TlpSequence = None) -> dict:
        tokens = []
        for index, node_id in self.entries:
            entry = {'token_index': index,
                     'node_id': None if node_id == UNALIGNED else node_id}
            if seq is not None:
                entry['text'] = seq.records[index].token_text
                entry['label'] = normalize_token(entry['text'])
            tokens.append(entry)
        return {
            'snippet_id': self.snippet_id,
            'tokens': tokens,
            'per_terminal': {
                str(k): list(v) for k, v in sorted(self.per_terminal.items())
            },
        }


def align(seq: TlpSequence, tree: SyntaxTree) -> AlignmentMap:
    """Align the tokens of `seq` to the terminal nodes of `tree`.

    Parameters
    ==========
    {seq}
    {tree}

    Returns
    =======
    AlignmentMap:
        One entry per token; terminals hit by several tokens list them in
        token order.
    """
    if seq.source != tree.source:
        raise SourceMismatch(
            f'token sequence {seq.snippet_id!r} was produced for another '
            'source than the syntax tree')
    terminals = terminals_in_order(tree)
    # terminals are disjoint and sorted, so their ends are sorted as well
    ends = [t.span.end for t in terminals]
    entries = []
    per_terminal = {}
    for index, record in enumerate(seq.records):
        span = record.span
        best, best_overlap = UNALIGNED, 0
        i = bisect.bisect_right(ends, span.start)
        while i < len(terminals) and terminals[i].span.start < span.end:
            overlap = terminals[i].span.overlap(span)
            if overlap > best_overlap:
                best, best_overlap = terminals[i].node_id, overlap
            i += 1
        entries.append((index, best))
        if best != UNALIGNED:
            per_terminal.setdefault(best, []).append(index)
    unaligned = len(entries) - sum(len(v) for v in per_terminal.values())
    if unaligned:
        logger.debug('%d of %d tokens of %r are unaligned', unaligned,
                     len(entries), seq.snippet_id)
    return AlignmentMap(
        entries=tuple(entries),
        per_terminal={k: tuple(v) for k, v in per_terminal.items()},
        snippet_id=seq.snippet_id)


if align.__doc__:
    align.__doc__ = align.__doc__.format(seq=_seq_doc, tree=_tree_doc)


class CoverageReport(NamedTuple):
    unaligned_token_count: int
    uncovered_terminal_count: int
    coverage_ratio: float


def coverage_report(amap: AlignmentMap, tree: SyntaxTree) -> CoverageReport:
    """Diagnostics on how well a tokenization matches the grammar.

    Returns
    =======
    CoverageReport:
        unaligned_token_count:
            Tokens that overlap no terminal.
        uncovered_terminal_count:
            Terminals no token was aligned to.
        coverage_ratio:
            Aligned tokens over all tokens (1.0 for an empty sequence).
    """
    total = len(amap.entries)
    aligned = amap.aligned_count
    uncovered = sum(
        1 for t in terminals_in_order(tree)
        if t.node_id not in amap.per_terminal)
    ratio = aligned / total if total else 1.0
    return CoverageReport(total - aligned, uncovered, ratio)
