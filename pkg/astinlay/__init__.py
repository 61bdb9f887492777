"""Syntax-grounded explanations of the confidence of code language models.

Token-level predictions of a model are aligned onto the concrete syntax tree
of the snippet, aggregated bottom-up into node, subcategory and category
confidences and reported per snippet (local) or per corpus (global).
"""

from ._version import __version__  # noqa: F401

from .syntax import parse, structural_metrics, terminals_in_order
from .tlp import (
    cross_entropy, read_tlp_jsonl, tlp_from_distributions, tlp_from_pairs)
from .align import align, coverage_report
from .cluster import (
    Aggregator, CategoryMapping, annotate, bootstrap_estimate,
    category_report, category_scores, subcategory_scores)
from .render import RenderConfig, RenderMode, render_ast, render_sequence
from .report import analyze_corpus, compare_models, threshold_flags
from .causal import ate_linear, causal_report, pearson, placebo_refute
from .client import EndpointConfig, fetch_tlp


__all__ = [
    'parse', 'structural_metrics', 'terminals_in_order',
    'cross_entropy', 'read_tlp_jsonl', 'tlp_from_distributions',
    'tlp_from_pairs',
    'align', 'coverage_report',
    'Aggregator', 'CategoryMapping', 'annotate', 'bootstrap_estimate',
    'category_report', 'category_scores', 'subcategory_scores',
    'RenderConfig', 'RenderMode', 'render_ast', 'render_sequence',
    'analyze_corpus', 'compare_models', 'threshold_flags',
    'ate_linear', 'causal_report', 'pearson', 'placebo_refute',
    'EndpointConfig', 'fetch_tlp',
]
