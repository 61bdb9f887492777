"""Command line interface of astinlay.

Logs go to standard error, data goes to files (or standard output where a
subcommand prints a summary). Exit codes: 0 on success, 1 for invalid input
or usage, 2 for internal errors.
"""
import argparse
import itertools
import logging
import os
import re
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .align import align, coverage_report
from .causal import (
    DEFAULT_TREATMENTS, CausalConfig, causal_csv, causal_report)
from .client import (
    DEFAULT_JOBS, DEFAULT_PROMPT_FRACTION, EndpointConfig, fetch_corpus)
from .cluster import (
    CATEGORIES, DEFAULT_REPS, Aggregator, CategoryMapping, annotate,
    load_category_mapping)
from .errors import AstInLayError, InputFormatError, MissingTlp
from .files import atomic_write_text, dumps_json, dumps_jsonl
from .render import (
    OutputFormat, RenderConfig, RenderMode, annotations_json, render_ast,
    render_heatmap, render_sequence)
from .report import (
    DEFAULT_TAU, MAX_TOKENS, BootstrapConfig, analyze_corpus, compare_models,
    heatmap_data, largest_deltas, read_dataset, reports_csv, threshold_flags,
    top_subcategories)
from .syntax import parse
from .tlp import load_tlp_index, write_tlp_jsonl

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2

_UNSAFE = re.compile(r'[^A-Za-z0-9._-]+')


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f'{self.prog}: error: {message}')


def _enum_arg(enum):
    def convert(name):
        try:
            return enum[name]
        except KeyError:
            raise argparse.ArgumentTypeError(
                f'choose from {", ".join(m.name for m in enum)}') from None
    convert.__name__ = enum.__name__
    return convert


def _list_arg(text: str) -> List[str]:
    return [item.strip() for item in text.split(',') if item.strip()]


def _jobs_default() -> int:
    return os.cpu_count() or 1


def _add_aggregator(p):
    p.add_argument(
        '--aggregator', type=_enum_arg(Aggregator), default=Aggregator.median,
        metavar='{median,mean,max}',
        help='how probabilities are pooled into node, subcategory and '
             'category values (default: median)')


def _add_corpus(p):
    p.add_argument('--dataset', required=True,
                   help='dataset JSON lines file with snippet_id and source')
    p.add_argument('--tlp', required=True, action='append',
                   help='TLP JSON lines file; repeat to compare models')
    p.add_argument('--mapping',
                   help='kind to category JSON mapping (default: the '
                        'shipped Python grammar mapping)')
    _add_aggregator(p)
    p.add_argument('--seed', type=int, default=0,
                   help='bootstrap seed (default: %(default)s)')
    p.add_argument('--reps', type=int, default=DEFAULT_REPS,
                   help='bootstrap repetitions (default: %(default)s)')
    p.add_argument('--max-tokens', type=int, default=MAX_TOKENS,
                   help='tokens kept per snippet (default: %(default)s)')
    p.add_argument('--jobs', type=int, default=_jobs_default(),
                   help='worker threads (default: %(default)s)')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog='astinlay',
        description='Syntax-grounded explanations of code completion '
                    'confidence.')
    parser.add_argument('--version', action='version',
                        version=f'%(prog)s {__version__}')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true',
                           help='log debug messages')
    verbosity.add_argument('-q', '--quiet', action='store_true',
                           help='log warnings and errors only')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    p = sub.add_parser('explain-local',
                       help='render per-snippet explanations')
    p.add_argument('--tlp', required=True, help='TLP JSON lines file')
    p.add_argument('--snippet-id',
                   help='render only this snippet (default: all)')
    p.add_argument('--mode', required=True, type=_enum_arg(RenderMode),
                   metavar='{sequence,ast_complete,ast_partial}',
                   help='view to render')
    p.add_argument('--format', dest='output_format',
                   type=_enum_arg(OutputFormat), default=OutputFormat.svg,
                   metavar='{dot,svg,html}',
                   help='output format (default: svg)')
    _add_aggregator(p)
    p.add_argument('--out', required=True, help='output directory')
    p.set_defaults(handler=cmd_explain_local)

    p = sub.add_parser('explain-global',
                       help='bootstrapped category reports over a corpus')
    _add_corpus(p)
    p.add_argument('--tau', type=float, default=DEFAULT_TAU,
                   help='confidence threshold for pass/fail flags '
                        '(default: %(default)s)')
    p.add_argument('--pair', action='append', type=_list_arg, default=[],
                   metavar='A,B',
                   help='model pair to compute deltas for; repeatable '
                        '(default: every pair)')
    p.add_argument('--top-k', type=int, default=32,
                   help='subcategory rows exported per model '
                        '(default: %(default)s)')
    p.add_argument('--out', required=True, help='output directory')
    p.add_argument('--format', dest='summary', choices=('json', 'text'),
                   default='text',
                   help='summary printed to standard output '
                        '(default: %(default)s)')
    p.set_defaults(handler=cmd_explain_global)

    p = sub.add_parser('align', help='token to terminal alignment')
    p.add_argument('--tlp', required=True, help='TLP JSON lines file')
    p.add_argument('--snippet-id', help='align only this snippet')
    p.add_argument('--out', help='output file (default: standard output)')
    p.set_defaults(handler=cmd_align)

    p = sub.add_parser('causal',
                       help='correlation and treatment effects on the loss')
    _add_corpus(p)
    p.add_argument('--treatments', type=_list_arg,
                   default=list(DEFAULT_TREATMENTS), metavar='a,b,...',
                   help='node kinds, category names or "baseline" '
                        '(default: %(default)s)')
    p.add_argument('--permutations', type=int, default=20,
                   help='placebo permutations (default: %(default)s)')
    p.add_argument('--standardize', action='store_true',
                   help='z-score treatment and confounders')
    p.add_argument('--placebo-bound', type=float, default=0.05,
                   help='lower bound of the placebo acceptance threshold '
                        '(default: %(default)s)')
    p.add_argument('--out', required=True,
                   help='output file, JSON for a .json suffix, CSV else')
    p.add_argument('--format', dest='summary', choices=('json', 'text'),
                   default='text',
                   help='summary printed to standard output '
                        '(default: %(default)s)')
    p.set_defaults(handler=cmd_causal)

    p = sub.add_parser('fetch-logprobs',
                       help='request token log-probabilities from an '
                            'OpenAI-compatible endpoint')
    p.add_argument('--dataset', required=True,
                   help='dataset JSON lines file')
    p.add_argument('--base-url', required=True,
                   help='endpoint base url, /completions is appended')
    p.add_argument('--model', required=True, help='model name')
    p.add_argument('--prompt-fraction', type=float,
                   default=DEFAULT_PROMPT_FRACTION,
                   help='share of each snippet used as prompt '
                        '(default: %(default)s)')
    p.add_argument('--api-key-env', default='ASTINLAY_API_KEY',
                   help='environment variable holding the api key '
                        '(default: %(default)s)')
    p.add_argument('--timeout', type=float, default=60,
                   help='request timeout in seconds (default: %(default)s)')
    p.add_argument('--no-echo', dest='echo', action='store_false',
                   help='score the completion only, not the prompt')
    p.add_argument('--cache-dir', help='directory for cached responses')
    p.add_argument('--jobs', type=int, default=DEFAULT_JOBS,
                   help='requests in flight (default: %(default)s)')
    p.add_argument('--out', required=True, help='TLP JSON lines output')
    p.set_defaults(handler=cmd_fetch_logprobs)

    p = sub.add_parser('validate',
                       help='check input files without computing')
    p.add_argument('--tlp', help='TLP JSON lines file')
    p.add_argument('--dataset', help='dataset JSON lines file')
    p.add_argument('--mapping', help='kind to category JSON mapping')
    p.set_defaults(handler=cmd_validate)
    return parser


def _file_stems(snippet_ids: Sequence[str]) -> List[str]:
    """File name stems for `snippet_ids`, unique in order of appearance.

    Ids that sanitize to a stem already taken get a ``-2``, ``-3``, ...
    suffix.
    """
    stems = []
    used = set()
    for index, snippet_id in enumerate(snippet_ids):
        base = _UNSAFE.sub('_', snippet_id).strip('.')
        base = base or f'snippet-{index}'
        stem, n = base, 1
        while stem in used:
            n += 1
            stem = f'{base}-{n}'
        if stem != base:
            logger.warning('snippet %r is written as %r, %r is taken',
                           snippet_id, stem, base)
        used.add(stem)
        stems.append(stem)
    return stems


def _select(index: dict, snippet_id: Optional[str]):
    if snippet_id is None:
        return list(index.values())
    if snippet_id not in index:
        raise MissingTlp(f'no TLP record for snippet {snippet_id!r}')
    return [index[snippet_id]]


def _mapping(path: Optional[str]) -> CategoryMapping:
    return load_category_mapping(path) if path else CategoryMapping.default()


def cmd_explain_local(args) -> int:
    out = Path(args.out)
    cfg = RenderConfig(mode=args.mode, output_format=args.output_format)
    sequences = _select(load_tlp_index(args.tlp), args.snippet_id)
    stems = _file_stems([seq.snippet_id for seq in sequences])
    for stem, seq in zip(stems, sequences):
        if len(seq) > MAX_TOKENS:
            logger.warning('snippet %r has %d tokens, truncating to %d',
                           seq.snippet_id, len(seq), MAX_TOKENS)
            seq = seq.truncate(MAX_TOKENS)
        tree = parse(seq.source)
        annotated = annotate(tree, align(seq, tree), seq, args.aggregator)
        if args.mode == RenderMode.sequence:
            document = render_sequence(seq, cfg)
        else:
            document = render_ast(annotated, cfg)
        atomic_write_text(
            out / f'{stem}.{args.mode.name}.{args.output_format.name}',
            document)
        atomic_write_text(out / f'{stem}.annotations.json',
                          dumps_json(annotations_json(annotated)))
    logger.info('rendered %d snippets into %s', len(sequences), out)
    return EXIT_OK


def _corpus_reports(args):
    dataset = read_dataset(args.dataset)
    mapping = _mapping(args.mapping)
    cfg = BootstrapConfig(reps=args.reps, seed=args.seed,
                          max_tokens=args.max_tokens)
    return [
        analyze_corpus(dataset, load_tlp_index(path), mapping,
                       args.aggregator, cfg, args.jobs)
        for path in args.tlp
    ]


def _text_summary(reports, flags) -> str:
    lines = []
    for report, flag in zip(reports, flags):
        lines.append(f'model {report.model_id or "<unnamed>"}: '
                     f'{len(report.snippet_analyses)} snippets, '
                     f'{len(report.skipped)} skipped')
        for name in CATEGORIES:
            est = report.category_report.per_category[name]
            if est.is_null:
                value = 'null'
            else:
                value = (f'{est.point:.2f} '
                         f'[{est.ci_low:.2f}, {est.ci_high:.2f}]')
            lines.append(f'  {name:<24} {value:<20} {flag[name]}')
    return '\n'.join(lines) + '\n'


def cmd_explain_global(args) -> int:
    reports = _corpus_reports(args)
    flags = [threshold_flags(r, args.tau) for r in reports]
    comparison = None
    if len(reports) > 1:
        models = [r.model_id for r in reports]
        pairs = [tuple(p) for p in args.pair] or \
            list(itertools.combinations(models, 2))
        for pair in pairs:
            if len(pair) != 2:
                raise UsageError(f'--pair expects A,B, got {",".join(pair)}')
        comparison = compare_models(reports, pairs)
        for pair in pairs:
            for row, delta in largest_deltas(comparison, pair, 3):
                logger.info('%s vs %s: %s differs by %.2f', pair[0],
                            pair[1], row, delta)
    out = Path(args.out)
    document = {
        'tau': args.tau,
        'reports': [dict(r.to_json(), flags=f)
                    for r, f in zip(reports, flags)],
        'comparison': comparison.to_json() if comparison else None,
    }
    atomic_write_text(out / 'report.json', dumps_json(document))
    atomic_write_text(out / 'report.csv', reports_csv(reports, args.top_k))
    subs = sorted({s for r in reports for s in top_subcategories(r, args.top_k)})
    heatmap = heatmap_data(reports, subs)
    atomic_write_text(out / 'heatmap.json', dumps_json(heatmap))
    atomic_write_text(out / 'heatmap.svg', render_heatmap(heatmap))
    if args.summary == 'json':
        sys.stdout.write(dumps_json(
            {r.model_id: f for r, f in zip(reports, flags)}))
    else:
        sys.stdout.write(_text_summary(reports, flags))
    return EXIT_OK


def cmd_align(args) -> int:
    lines = []
    for seq in _select(load_tlp_index(args.tlp), args.snippet_id):
        tree = parse(seq.source)
        amap = align(seq, tree)
        obj = amap.to_json(seq)
        obj['coverage'] = coverage_report(amap, tree)._asdict()
        lines.append(obj)
    text = dumps_jsonl(lines)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_causal(args) -> int:
    cfg = CausalConfig(seed=args.seed, permutations=args.permutations,
                       standardize=args.standardize,
                       placebo_bound=args.placebo_bound)
    estimates = []
    for report in _corpus_reports(args):
        estimates.extend(
            causal_report(report, args.treatments, cfg, args.jobs))
    if str(args.out).endswith('.json'):
        atomic_write_text(args.out,
                          dumps_json([e.to_json() for e in estimates]))
    else:
        atomic_write_text(args.out, causal_csv(estimates))
    if args.summary == 'json':
        sys.stdout.write(dumps_json([e.to_json() for e in estimates]))
    else:
        for e in estimates:
            rho = 'n/a' if e.rho is None else f'{e.rho:+.2f}'
            ate = 'n/a' if e.ate is None else f'{e.ate:+.2f}'
            sys.stdout.write(
                f'{e.model_id:<16} {e.treatment_name:<22} n={e.n:<5} '
                f'rho={rho:<6} ate={ate}\n')
    return EXIT_OK


def cmd_fetch_logprobs(args) -> int:
    cfg = EndpointConfig(
        base_url=args.base_url, model=args.model,
        api_key_env=args.api_key_env, timeout=args.timeout, echo=args.echo,
        cache_dir=args.cache_dir)
    dataset = read_dataset(args.dataset)
    sequences, failed = fetch_corpus(
        cfg, [(r.snippet_id, r.source) for r in dataset],
        args.prompt_fraction, args.jobs)
    write_tlp_jsonl(args.out, sequences)
    if failed:
        logger.warning('no TLP for %d snippets: %s', len(failed),
                       ', '.join(failed))
    if dataset and not sequences:
        return EXIT_INPUT
    return EXIT_OK


def cmd_validate(args) -> int:
    if not (args.tlp or args.dataset or args.mapping):
        raise UsageError('validate needs --tlp, --dataset or --mapping')
    if args.mapping:
        mapping = load_category_mapping(args.mapping)
        print(f'{args.mapping}: {len(mapping.kinds)} kinds, '
              f'digest {mapping.digest[:12]}')
    index = None
    if args.tlp:
        index = load_tlp_index(args.tlp)
        print(f'{args.tlp}: {len(index)} sequences')
    if args.dataset:
        dataset = read_dataset(args.dataset)
        print(f'{args.dataset}: {len(dataset)} snippets')
        if index is not None:
            for record in dataset:
                seq = index.get(record.snippet_id)
                if seq is None:
                    raise MissingTlp(
                        f'no TLP record for snippet {record.snippet_id!r}')
                if seq.source != record.source:
                    raise InputFormatError(
                        f'TLP source of {record.snippet_id!r} differs from '
                        'the dataset')
    return EXIT_OK


def _configure_logging(args):
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Execute the command line `argv`, returning the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else EXIT_OK
    _configure_logging(args)
    try:
        return args.handler(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(e, file=sys.stderr)
        return EXIT_INPUT
    except (AstInLayError, OSError, ValueError) as e:
        logger.error('%s: %s', type(e).__name__, e)
        return EXIT_INPUT
    except Exception as e:
        logger.error('internal error: %r', e)
        logger.debug('traceback', exc_info=True)
        return EXIT_INTERNAL


def main():
    sys.exit(run())
