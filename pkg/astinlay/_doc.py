_tree_doc = """tree:
        A :class:`~astinlay.syntax.SyntaxTree` as returned by
        :func:`~astinlay.syntax.parse`.
"""

_seq_doc = """seq:
        A :class:`~astinlay.tlp.TlpSequence` holding the token-level
        predictions for the very same source text as `tree`.
"""

_agg_doc = """agg:
        The :class:`~astinlay.cluster.Aggregator` used to reduce a collection
        of probabilities to a single confidence value.
"""
