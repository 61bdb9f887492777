"""Local explanations: token sequence heatmaps and annotated syntax trees.

Three views are produced:

- :attr:`RenderMode.sequence`, the tokens in reading order colored by their
  probability,
- :attr:`RenderMode.ast_complete`, the whole syntax tree with the confidence
  of every node,
- :attr:`RenderMode.ast_partial`, only the nodes that intersect the region
  the model generated.

DOT sources are emitted through :mod:`graphviz` (no Graphviz binary is
needed for that); SVG uses its own layered tree layout so the output does
not depend on an external layout engine, and HTML embeds the SVG.
"""
import html
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, List, Optional, Sequence, Tuple

import graphviz

from .align import normalize_token
from .cluster import AnnotatedNode, AnnotatedTree
from .errors import MissingGeneratedSpan
from .syntax import Span
from .tlp import TlpSequence

logger = logging.getLogger(__name__)

NULL_LABEL = '—'
NULL_COLOR = '#bdbdbd'

DEFAULT_PALETTE = (
    (0.0, 'low', '#d73027'),
    (0.3, 'mid', '#fdae61'),
    (0.6, 'high', '#4575b4'),
)
"""Color stops ``(threshold, class name, color)``; a probability takes the
last stop whose threshold it reaches. Blue marks the confident predictions
at and above 0.6.
"""

# svg geometry
NODE_WIDTH = 110
NODE_HEIGHT = 36
H_GAP = 12
V_GAP = 40
MARGIN = 10
CELL_HEIGHT = 40
CELL_CHAR_WIDTH = 8
ROW_WIDTH = 960


class RenderMode(IntEnum):
    """The local explanation views.
    """
    sequence = 1
    """Tokens in a linear layout with their probabilities.
    """
    ast_complete = 2
    """The complete annotated syntax tree.
    """
    ast_partial = 3
    """Only the nodes intersecting the generated region.
    """


class OutputFormat(IntEnum):
    dot = 1
    svg = 2
    html = 3


@dataclass(frozen=True)
class RenderConfig:
    mode: RenderMode = RenderMode.ast_complete
    palette: Tuple[Tuple[float, str, str], ...] = DEFAULT_PALETTE
    highlight_generated: bool = True
    output_format: OutputFormat = OutputFormat.svg

    def __post_init__(self):
        thresholds = [stop[0] for stop in self.palette]
        if not thresholds:
            raise ValueError('palette needs at least one color stop')
        if any(not 0.0 <= t <= 1.0 for t in thresholds):
            raise ValueError('palette thresholds must lie within [0, 1]')
        if any(a >= b for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError('palette thresholds must strictly increase')


def color_stop(probability: Optional[float],
               palette=DEFAULT_PALETTE) -> Tuple[str, str]:
    """``(class name, color)`` for `probability`; ``None`` maps to null.

    The assignment is monotone: a higher probability never gets a lower
    color stop.
    """
    if probability is None:
        return 'null', NULL_COLOR
    chosen = palette[0]
    for stop in palette:
        if probability >= stop[0]:
            chosen = stop
    return chosen[1], chosen[2]


def format_confidence(value: Optional[float]) -> str:
    return NULL_LABEL if value is None else f'{value:.2f}'


def _in_generated(seq: TlpSequence, span: Span) -> bool:
    gen = seq.generated_span
    return gen is not None and gen.intersects(span)


def _token_label(seq: TlpSequence, index: int) -> str:
    record = seq.records[index]
    data = seq.source.encode('utf-8')[record.span.start:record.span.end]
    text = data.decode('utf-8', errors='replace')
    if not text.strip():
        text = normalize_token(record.token_text) or text
    return text


def _xml_safe(text: str) -> str:
    # control characters are not allowed in XML 1.0
    return ''.join(
        ch if ch in '\t\n\r' or ord(ch) >= 0x20 else '\ufffd'
        for ch in text)


def _html_page(title: str, body: str) -> str:
    return (
        '<!DOCTYPE html>\n<html>\n<head>\n<meta charset="utf-8"/>\n'
        f'<title>{html.escape(title)}</title>\n'
        '<style>\n'
        '.tlp-sequence { font-family: monospace; white-space: pre-wrap; }\n'
        '.tok { display: inline-block; margin: 1px; padding: 2px; '
        'border-radius: 3px; }\n'
        '.tok sub { font-size: 60%; }\n'
        '.generated { outline: 2px solid #000; }\n'
        '</style>\n</head>\n<body>\n'
        f'{body}\n</body>\n</html>\n'
    )


def _svg_root(width: int, height: int, title: str) -> ET.Element:
    svg = ET.Element('svg', {
        'xmlns': 'http://www.w3.org/2000/svg',
        'width': str(width), 'height': str(height),
        'viewBox': f'0 0 {width} {height}',
        'font-family': 'monospace', 'font-size': '11',
    })
    ET.SubElement(svg, 'title').text = _xml_safe(title)
    return svg


def _svg_text(svg: ET.Element) -> str:
    return ET.tostring(svg, encoding='unicode') + '\n'


def render_sequence(seq: TlpSequence, cfg: RenderConfig) -> str:
    """Render the tokens of `seq` as a heatmap.

    One cell per token in token order, colored by its probability and
    showing the probability with two decimals. Tokens inside the generated
    region are outlined when `cfg.highlight_generated` is set.

    Returns
    =======
    str:
        The document in `cfg.output_format`.
    """
    cells = []
    for index, record in enumerate(seq.records):
        css, color = color_stop(record.probability, cfg.palette)
        generated = cfg.highlight_generated and _in_generated(seq, record.span)
        cells.append((_token_label(seq, index), record.probability, css,
                      color, generated))
    title = seq.snippet_id or 'sequence'
    fmt = cfg.output_format
    if fmt == OutputFormat.dot:
        graph = graphviz.Digraph(
            name=title, graph_attr={'rankdir': 'LR'},
            node_attr={'shape': 'box', 'style': 'filled'})
        for i, (label, prob, _, color, generated) in enumerate(cells):
            graph.node(
                f't{i}', label=f'{graphviz.escape(label)}\\n{prob:.2f}',
                fillcolor=color, penwidth='3' if generated else '1')
        for i in range(1, len(cells)):
            graph.edge(f't{i - 1}', f't{i}')
        return graph.source
    svg = _sequence_svg(cells, title)
    if fmt == OutputFormat.svg:
        return _svg_text(svg)
    spans = ''.join(
        f'<span class="tok c-{css}{" generated" if generated else ""}" '
        f'style="background-color: {color}" title="{prob!r}">'
        f'{html.escape(label)}<sub>{prob:.2f}</sub></span>'
        for label, prob, css, color, generated in cells)
    return _html_page(
        title, f'<div class="tlp-sequence">{spans}</div>')


def _sequence_svg(cells, title) -> ET.Element:
    # cells flow left to right and wrap into rows
    placed = []
    x = y = MARGIN
    for cell in cells:
        width = max(4, len(cell[0]) + 1) * CELL_CHAR_WIDTH
        if x + width > ROW_WIDTH - MARGIN and x > MARGIN:
            x, y = MARGIN, y + CELL_HEIGHT + 4
        placed.append((x, y, width, cell))
        x += width + 2
    height = (y + CELL_HEIGHT + MARGIN) if cells else 2 * MARGIN
    svg = _svg_root(ROW_WIDTH, height, title)
    for x, y, width, (label, prob, css, color, generated) in placed:
        group = ET.SubElement(svg, 'g', {
            'class': f'tok c-{css}' + (' generated' if generated else '')})
        ET.SubElement(group, 'rect', {
            'x': str(x), 'y': str(y), 'width': str(width),
            'height': str(CELL_HEIGHT), 'fill': color,
            'stroke': '#000' if generated else 'none',
        })
        ET.SubElement(group, 'text', {
            'x': str(x + 3), 'y': str(y + 15)}).text = _xml_safe(label)
        ET.SubElement(group, 'text', {
            'x': str(x + 3), 'y': str(y + 32)}).text = f'{prob:.2f}'
    return svg


def select_nodes(annotated: AnnotatedTree,
                 mode: RenderMode) -> List[AnnotatedNode]:
    """Nodes shown in `mode`, in pre-order.

    The partial view keeps the nodes whose span intersects the generated
    region; raises :class:`MissingGeneratedSpan` if there is none.
    """
    if mode == RenderMode.ast_complete:
        return list(annotated.nodes())
    if mode != RenderMode.ast_partial:
        raise ValueError(f'{mode!r} does not render a syntax tree')
    gen = annotated.seq.generated_span
    if gen is None:
        raise MissingGeneratedSpan(
            f'snippet {annotated.snippet_id!r} has no generated region')
    return [n for n in annotated.nodes() if n.span.intersects(gen)]


def _layout(nodes: Sequence[AnnotatedNode]) -> Dict[int, Tuple[int, int]]:
    """Layered tree layout: leaves take consecutive slots from left to
    right, parents are centered above their first and last child.
    """
    keep = {n.node_id for n in nodes}
    position: Dict[int, Tuple[float, int]] = {}
    next_slot = 0
    if not nodes:
        return {}
    stack = [(nodes[0], 0, False)]
    while stack:
        node, depth, expanded = stack.pop()
        children = [c for c in node.children if c.node_id in keep]
        if not children:
            position[node.node_id] = (next_slot, depth)
            next_slot += 1
        elif not expanded:
            stack.append((node, depth, True))
            stack.extend((c, depth + 1, False) for c in reversed(children))
        else:
            first = position[children[0].node_id][0]
            last = position[children[-1].node_id][0]
            position[node.node_id] = ((first + last) / 2, depth)
    return {
        node_id: (int(MARGIN + slot * (NODE_WIDTH + H_GAP)),
                  MARGIN + depth * (NODE_HEIGHT + V_GAP))
        for node_id, (slot, depth) in position.items()
    }


def _tree_edges(nodes: Sequence[AnnotatedNode]) -> List[Tuple[int, int]]:
    keep = {n.node_id for n in nodes}
    return [(n.node_id, c.node_id)
            for n in nodes for c in n.children if c.node_id in keep]


def render_ast(annotated: AnnotatedTree, cfg: RenderConfig) -> str:
    """Render the annotated syntax tree.

    Every shown node is labeled with its kind and its confidence (two
    decimals, a dash for null); edges run from parent to child.

    Returns
    =======
    str:
        The document in `cfg.output_format`.
    """
    nodes = select_nodes(annotated, cfg.mode)
    edges = _tree_edges(nodes)
    seq = annotated.seq
    title = annotated.snippet_id or 'tree'
    if cfg.output_format == OutputFormat.dot:
        graph = graphviz.Digraph(
            name=title, node_attr={'shape': 'box', 'style': 'filled'})
        for node in nodes:
            _, color = color_stop(node.confidence, cfg.palette)
            generated = cfg.highlight_generated and \
                _in_generated(seq, node.span)
            graph.node(
                str(node.node_id),
                label=(f'{graphviz.escape(node.kind)}\\n'
                       f'{format_confidence(node.confidence)}'),
                fillcolor=color, penwidth='3' if generated else '1')
        for parent, child in edges:
            graph.edge(str(parent), str(child))
        return graph.source
    svg = _tree_svg(annotated, nodes, edges, cfg, title)
    if cfg.output_format == OutputFormat.svg:
        return _svg_text(svg)
    return _html_page(title, _svg_text(svg))


def _tree_svg(annotated, nodes, edges, cfg, title) -> ET.Element:
    coords = _layout(nodes)
    width = max((x for x, _ in coords.values()), default=0) + \
        NODE_WIDTH + MARGIN
    height = max((y for _, y in coords.values()), default=0) + \
        NODE_HEIGHT + MARGIN
    svg = _svg_root(width, height, title)
    edge_group = ET.SubElement(svg, 'g', {'class': 'edges'})
    for parent, child in edges:
        px, py = coords[parent]
        cx, cy = coords[child]
        ET.SubElement(edge_group, 'line', {
            'class': 'edge',
            'x1': str(px + NODE_WIDTH // 2), 'y1': str(py + NODE_HEIGHT),
            'x2': str(cx + NODE_WIDTH // 2), 'y2': str(cy),
            'stroke': '#555',
        })
    for node in nodes:
        x, y = coords[node.node_id]
        css, color = color_stop(node.confidence, cfg.palette)
        generated = cfg.highlight_generated and \
            _in_generated(annotated.seq, node.span)
        group = ET.SubElement(svg, 'g', {
            'class': f'node c-{css}' + (' generated' if generated else ''),
            'id': f'node-{node.node_id}'})
        ET.SubElement(group, 'rect', {
            'x': str(x), 'y': str(y), 'width': str(NODE_WIDTH),
            'height': str(NODE_HEIGHT), 'rx': '4', 'fill': color,
            'stroke': '#000', 'stroke-width': '2.5' if generated else '0.5',
        })
        ET.SubElement(group, 'text', {
            'x': str(x + 4), 'y': str(y + 14)}).text = node.kind
        ET.SubElement(group, 'text', {
            'x': str(x + 4), 'y': str(y + 30)}).text = \
            format_confidence(node.confidence)
    return svg


def annotations_json(annotated: AnnotatedTree) -> dict:
    """Full precision sidecar of an annotated tree."""
    return {
        'snippet_id': annotated.snippet_id,
        'model_id': annotated.seq.model_id,
        'aggregator': annotated.aggregator.name,
        'nodes': [
            {'node_id': n.node_id, 'kind': n.kind,
             'span': [n.span.start, n.span.end],
             'confidence': n.confidence, 'token_count': n.token_count}
            for n in annotated.nodes()
        ],
    }


def render_heatmap(data: dict, palette=DEFAULT_PALETTE) -> str:
    """SVG heatmap of a ``{rows, columns, cells}`` matrix as produced by
    :func:`astinlay.report.heatmap_data`.
    """
    rows, columns, cells = data['rows'], data['columns'], data['cells']
    label_width = 14 * CELL_CHAR_WIDTH
    cell_width = max(10, max((len(c) for c in columns), default=0) + 2) * \
        CELL_CHAR_WIDTH
    width = 2 * MARGIN + label_width + cell_width * len(columns)
    height = 2 * MARGIN + CELL_HEIGHT * (len(rows) + 1)
    svg = _svg_root(width, height, 'category heatmap')
    for j, column in enumerate(columns):
        ET.SubElement(svg, 'text', {
            'x': str(MARGIN + label_width + j * cell_width + 4),
            'y': str(MARGIN + CELL_HEIGHT // 2)}).text = column
    for i, row in enumerate(rows):
        y = MARGIN + (i + 1) * CELL_HEIGHT
        ET.SubElement(svg, 'text', {
            'x': str(MARGIN), 'y': str(y + CELL_HEIGHT // 2)}).text = row
        for j, value in enumerate(cells[i]):
            x = MARGIN + label_width + j * cell_width
            css, color = color_stop(value, palette)
            group = ET.SubElement(svg, 'g', {'class': f'cell c-{css}'})
            ET.SubElement(group, 'rect', {
                'x': str(x), 'y': str(y), 'width': str(cell_width),
                'height': str(CELL_HEIGHT), 'fill': color,
                'stroke': '#fff'})
            ET.SubElement(group, 'text', {
                'x': str(x + 4), 'y': str(y + CELL_HEIGHT // 2)}).text = \
                format_confidence(value)
    return _svg_text(svg)
