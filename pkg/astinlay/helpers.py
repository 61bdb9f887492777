"""This module contains non-essential functions for the exploration and
verification of the provided functionalities.

The oracles recompute results of the main modules in the most direct (and
slowest) way; the generators produce random snippets and tokenizations.
"""
from typing import Dict, List, Optional, Sequence

import numpy as np

from .align import UNALIGNED
from .cluster import (
    CATEGORIES, UNMAPPED, Aggregator, CategoryMapping, aggregate)
from .syntax import (
    DECISION_KINDS, AstNode, SyntaxTree, parse, terminals_in_order)
from .tlp import TlpSequence, tlp_from_pairs


def overlap_matrix(seq: TlpSequence, tree: SyntaxTree) -> np.ndarray:
    """Bytes shared by every token (rows) and terminal (columns).

    Parameters
    ==========
    seq:
        Token sequence over the source of `tree`.
    tree:
        The syntax tree; columns follow
        :func:`~astinlay.syntax.terminals_in_order`.

    Returns
    =======
    numpy.ndarray:
        Integer matrix of shape ``(len(seq), #terminals)``.
    """
    terminals = terminals_in_order(tree)
    matrix = np.zeros((len(seq.records), len(terminals)), dtype=int)
    for i, record in enumerate(seq.records):
        for j, terminal in enumerate(terminals):
            matrix[i, j] = record.span.overlap(terminal.span)
    return matrix


def brute_force_alignment(seq: TlpSequence, tree: SyntaxTree) -> List[int]:
    """Terminal node id per token from the full overlap matrix."""
    terminals = terminals_in_order(tree)
    matrix = overlap_matrix(seq, tree)
    node_ids = []
    for row in matrix:
        if row.size == 0 or row.max() == 0:
            node_ids.append(UNALIGNED)
        else:
            # argmax returns the first maximum, i.e. the earliest terminal
            node_ids.append(terminals[int(np.argmax(row))].node_id)
    return node_ids


def _subtree_ids(node: AstNode) -> set:
    ids = {node.node_id}
    for child in node.children:
        ids |= _subtree_ids(child)
    return ids


def flat_node_confidences(
        seq: TlpSequence, tree: SyntaxTree,
        agg: Aggregator = Aggregator.median) -> Dict[int, Optional[float]]:
    """Confidence of every node, each computed from scratch over the tokens
    aligned anywhere in its subtree.
    """
    token_nodes = brute_force_alignment(seq, tree)
    confidences = {}
    for node in tree.nodes():
        inside = _subtree_ids(node)
        values = [seq.records[i].probability
                  for i, node_id in enumerate(token_nodes)
                  if node_id in inside]
        confidences[node.node_id] = aggregate(values, agg) if values else None
    return confidences


def flat_category_values(
        corpus: Sequence[TlpSequence],
        mapping: CategoryMapping,
        agg: Aggregator = Aggregator.median) -> Dict[str, List[float]]:
    """Per category (and :data:`~astinlay.cluster.UNMAPPED`) the sorted
    per-snippet subcategory values of a corpus, recomputed without the
    alignment map or the annotated tree.
    """
    values: Dict[str, List[float]] = {c: [] for c in CATEGORIES + (UNMAPPED,)}
    for seq in corpus:
        tree = parse(seq.source)
        confidences = flat_node_confidences(seq, tree, agg)
        per_kind: Dict[str, List[float]] = {}
        for node in tree.nodes():
            if confidences[node.node_id] is not None:
                per_kind.setdefault(node.kind, []).append(
                    confidences[node.node_id])
        for kind, occurrences in per_kind.items():
            values[mapping.category_of(kind)].append(
                aggregate(occurrences, agg))
    return {c: sorted(v) for c, v in values.items()}


def dfs_metrics(node: AstNode, depth: int = 1) -> tuple:
    """``(levels, node_count, decisions)`` by plain recursion."""
    levels, count = depth, 1
    decisions = int(node.kind in DECISION_KINDS)
    for child in node.children:
        c_levels, c_count, c_decisions = dfs_metrics(child, depth + 1)
        levels = max(levels, c_levels)
        count += c_count
        decisions += c_decisions
    return levels, count, decisions


_NAMES = ('x', 'y', 'total', 'items', 'value', 'count', 'é', 'data')

_STATEMENTS = (
    '{a} = {n}\n',
    '{a} = [{n}, {m}]\n',
    '{a} = {{"{b}": {n}}}\n',
    'if {a} > {n}:\n    {b} = {a}\nelse:\n    {b} = {m}\n',
    'for {a} in range({n}):\n    {b} += {a}\n',
    'while {a} < {n}:\n    {a} = {a} + 1\n',
    'try:\n    {a} = {b} / {n}\nexcept ZeroDivisionError:\n    {a} = None\n',
    'def {a}({b}, c={n}):\n    return {b} * c\n',
    '{a} = [{b} for {b} in {a} if {b}]\n',
    '{a} = lambda {b}: {b} or {n}\n',
    'assert {a} == {n}, "{b}"\n',
    '# {a} {b}\n',
    'print("{a}", {b})\n',
    '{a} = "{b}\\n{b}\\t"\n',
)


def random_snippet(rng: np.random.Generator, statements: int = 4) -> str:
    """Random, syntactically valid Python built from statement templates."""
    lines = []
    for _ in range(statements):
        template = _STATEMENTS[rng.integers(len(_STATEMENTS))]
        lines.append(template.format(
            a=_NAMES[rng.integers(len(_NAMES))],
            b=_NAMES[rng.integers(len(_NAMES))],
            n=int(rng.integers(0, 100)), m=int(rng.integers(0, 100))))
    return ''.join(lines)


def random_tokenization(
        source: str, rng: np.random.Generator, max_len: int = 6,
        drop: float = 0.1, snippet_id: str = '',
        model_id: str = 'random', generated_from: Optional[int] = None
        ) -> TlpSequence:
    """Cut `source` into random contiguous chunks of at most `max_len`
    characters with random probabilities.

    Chunks never split a character. A share `drop` of the chunks is left out
    so that sequences need not cover the whole source.
    """
    rows = []
    offset = char = 0
    while char < len(source):
        size = int(rng.integers(1, max_len + 1))
        text = source[char:char + size]
        width = len(text.encode('utf-8'))
        if rng.random() >= drop:
            logprob = float(np.log(rng.uniform(0.01, 1.0)))
            rows.append((text, (offset, offset + width), logprob))
        char += size
        offset += width
    generated = None
    if generated_from is not None:
        generated = (generated_from, len(source.encode('utf-8')))
    return tlp_from_pairs(source, rows, model_id=model_id,
                          generated_span=generated, snippet_id=snippet_id)


def random_corpus(rng: np.random.Generator, snippets: int = 5,
                  max_tokens: int = 50,
                  model_id: str = 'random') -> List[TlpSequence]:
    """Up to `snippets` random snippets with at most `max_tokens` tokens."""
    corpus = []
    for i in range(int(rng.integers(1, snippets + 1))):
        source = random_snippet(rng, int(rng.integers(1, 4)))
        seq = random_tokenization(source, rng, snippet_id=f's{i}',
                                  model_id=model_id)
        corpus.append(seq.truncate(max_tokens))
    return corpus
