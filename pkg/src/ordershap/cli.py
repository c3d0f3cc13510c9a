"""Command-line front end.

Exit codes: 0 success, 2 report written but not converged, 64 usage error,
65 bad input data, 69 endpoint failure. The OSV_SEED environment variable
overrides --seed when set.
"""
from __future__ import annotations

import argparse
import os
import sys

from .bridge import resolve_endpoint
from .core import ValueFunction, osv_exact, sv_exact
from .errors import (
    BridgeError,
    ConfigurationError,
    ContractViolation,
    DataError,
    EvaluationError,
    OrderShapError,
)
from .estimators import (
    EstimatorConfig,
    GlobalExplanationJob,
    global_explain,
    osv_sampled,
    sv_sampled,
)
from .interventions import InterventionSpec, OccurrenceIntervention, OrderIntervention
from .pipeline import SynthRunConfig, run_synth
from .report import render_heatmap, render_tsv
from .synth import (
    APPEND_POSITIONS,
    NEGATION_PHRASES,
    transform_append_phrase,
    transform_hans_star,
    transform_prepend_symbol,
)

EX_OK = 0
EX_NONCONVERGED = 2
EX_USAGE = 64
EX_DATA = 65
EX_ENDPOINT = 69


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(sub):
    sub.add_argument("--model", required=True,
                     help="rule:task1|rule:<name>|stub|subprocess:CMD|tcp:HOST:PORT")
    sub.add_argument("--value-fn", default=None,
                     help="target,contrast class pair (default: class1 - class0)")
    sub.add_argument("--order-mode", choices=["absolute", "relative", "none"],
                     default="absolute")
    sub.add_argument("--q-samples", type=int, default=4)
    sub.add_argument("--g-samples", type=int, default=5)
    sub.add_argument("--tolerance", type=float, default=0.005)
    sub.add_argument("--max-permutations", type=int, default=10000)
    sub.add_argument("--batch-size", type=int, default=64)
    sub.add_argument("--workers", type=int, default=1)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--exact", action="store_true")
    sub.add_argument("--vocab", default=None, help="comma-separated replacement tokens")
    sub.add_argument("--vocab-size", type=int, default=None,
                     help="use integer tokens 0..N-1 as the replacement vocabulary")
    sub.add_argument("--mask-token", default=None,
                     help="single fixed replacement token (marginal intervention)")
    sub.add_argument("--timeout", type=float, default=5.0)
    sub.add_argument("--merge-slots", default=None,
                     help="slot groups merged by summation, e.g. '0-1,4'")
    sub.add_argument("--out", default=None, help="output path prefix")


def build_parser() -> _Parser:
    parser = _Parser(prog="ordershap",
                     description="Occurrence- and order-feature attributions "
                                 "for black-box sequence classifiers")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_explain = subs.add_parser("explain", help="explain one sequence")
    _add_common(p_explain)
    p_explain.add_argument("--input", required=True,
                           help="text file; the first non-empty line is explained")

    p_global = subs.add_parser("global", help="slot-level explanation of aligned instances")
    _add_common(p_global)
    p_global.add_argument("--input", required=True,
                          help="text file, one template-aligned instance per line")

    p_synth = subs.add_parser("synth", help="synthetic generate/explain/correlate pipeline")
    p_synth.add_argument("--task", choices=["1", "2", "3"], default="1")
    p_synth.add_argument("--k", type=int, default=8)
    p_synth.add_argument("--vocab-size", type=int, default=200)
    p_synth.add_argument("--count", type=int, default=10000)
    p_synth.add_argument("--w1-count", type=int, default=40)
    p_synth.add_argument("--exact", action="store_true")
    p_synth.add_argument("--q-samples", type=int, default=4)
    p_synth.add_argument("--g-samples", type=int, default=5)
    p_synth.add_argument("--tolerance", type=float, default=0.005)
    p_synth.add_argument("--max-permutations", type=int, default=10000)
    p_synth.add_argument("--batch-size", type=int, default=64)
    p_synth.add_argument("--workers", type=int, default=1)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out-dir", required=True)

    p_transform = subs.add_parser("transform", help="adversarial text transforms")
    p_transform.add_argument("--transform", required=True,
                             choices=["hans_star", "append_phrase", "prepend_symbol"])
    p_transform.add_argument("--input", required=True)
    p_transform.add_argument("--output", required=True)
    p_transform.add_argument("--phrase-id", type=int, default=2,
                             help=f"0..{len(NEGATION_PHRASES) - 1}")
    p_transform.add_argument("--position", choices=list(APPEND_POSITIONS), default="end")
    p_transform.add_argument("--symbol", default=".",
                             help="one of the fixed symbol list, or <unk>")
    return parser


def _read_lines(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as handle:
            return [line.rstrip("\n") for line in handle]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _effective_seed(args) -> int:
    env = os.environ.get("OSV_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DataError(f"OSV_SEED must be an integer, got {env!r}") from None
    return args.seed


def _occurrence_from_flags(args, instances) -> OccurrenceIntervention:
    if args.mask_token is not None:
        return OccurrenceIntervention.fixed(args.mask_token)
    if args.vocab is not None:
        return OccurrenceIntervention.uniform([t for t in args.vocab.split(",") if t])
    if args.vocab_size is not None:
        return OccurrenceIntervention.uniform([str(i) for i in range(args.vocab_size)])
    seen = []
    for row in instances:
        for tok in row:
            if tok not in seen:
                seen.append(tok)
    return OccurrenceIntervention.uniform(seen)


def _value_fn_from_flags(args, class_labels):
    if args.value_fn is None:
        return ValueFunction.default_for(class_labels)
    parts = [p for p in args.value_fn.split(",") if p]
    if len(parts) == 1:
        return ValueFunction.prob(parts[0], class_labels)
    if len(parts) == 2:
        return ValueFunction.prob_diff(parts[0], parts[1], class_labels)
    raise ConfigurationError("--value-fn takes 'target' or 'target,contrast'")


def _config_from_flags(args, seed) -> EstimatorConfig:
    return EstimatorConfig(
        q_samples=args.q_samples,
        g_samples=args.g_samples,
        tolerance=args.tolerance,
        max_permutations=args.max_permutations,
        batch_size=args.batch_size,
        workers=args.workers,
        seed=seed,
    )


def _write_report(tokens, report, out_prefix, title, merge_spec):
    tsv_path = out_prefix + ".tsv"
    html_path = out_prefix + ".html"
    with open(tsv_path, "w", encoding="utf-8") as handle:
        handle.write(render_tsv(tokens, report, merge_spec))
    with open(html_path, "w", encoding="utf-8") as handle:
        handle.write(render_heatmap(tokens, report, title, merge_spec))
    print(f"wrote {tsv_path} and {html_path}")


def cmd_explain(args) -> int:
    lines = [line for line in _read_lines(args.input) if line.strip()]
    if not lines:
        raise DataError(f"{args.input} holds no instances")
    tokens = tuple(lines[0].split())
    seed = _effective_seed(args)
    endpoint = resolve_endpoint(args.model, timeout=args.timeout)
    labels, _ = endpoint.handshake()
    value_fn = _value_fn_from_flags(args, labels)
    g = _occurrence_from_flags(args, [tokens])
    out = args.out or "explanation"
    if args.exact:
        if args.order_mode == "none":
            report = sv_exact(tokens, value_fn, endpoint, g=g)
        else:
            report = osv_exact(tokens, value_fn, endpoint,
                               InterventionSpec(g, OrderIntervention(args.order_mode)))
    else:
        config = _config_from_flags(args, seed)
        if args.order_mode == "none":
            report = sv_sampled(endpoint, value_fn, tokens, g, config)
        else:
            report = osv_sampled(endpoint, value_fn, tokens,
                                 InterventionSpec(g, OrderIntervention(args.order_mode)),
                                 config)
    _write_report(tokens, report, out, f"explanation of {' '.join(tokens)}", args.merge_slots)
    return EX_OK if report.converged else EX_NONCONVERGED


def cmd_global(args) -> int:
    rows = [tuple(line.split()) for line in _read_lines(args.input) if line.strip()]
    if not rows:
        raise DataError(f"{args.input} holds no instances")
    n = len(rows[0])
    for idx, row in enumerate(rows):
        if len(row) != n:
            raise DataError(
                f"ragged template: line 0 has {n} slots, line {idx} has {len(row)}"
            )
    seed = _effective_seed(args)
    endpoint = resolve_endpoint(args.model, timeout=args.timeout)
    labels, _ = endpoint.handshake()
    value_fn = _value_fn_from_flags(args, labels)
    g = _occurrence_from_flags(args, rows)
    config = _config_from_flags(args, seed)
    mode = "identity" if args.order_mode == "none" else args.order_mode
    job = GlobalExplanationJob(
        instances=tuple(rows), model=endpoint, value_fn=value_fn,
        intervention=InterventionSpec(g, OrderIntervention(mode)), config=config,
    )
    report = global_explain(job, walk="occurrence" if args.order_mode == "none" else "all")
    slot_labels = [f"s{i}" for i in range(n)]
    out = args.out or "global"
    _write_report(slot_labels, report, out,
                  f"global explanation over {len(rows)} instances", args.merge_slots)
    return EX_OK if report.converged else EX_NONCONVERGED


def cmd_synth(args) -> int:
    seed = _effective_seed(args)
    cfg = SynthRunConfig(
        task=f"task{args.task}",
        length=args.k,
        vocab_size=args.vocab_size,
        count=args.count,
        w1_count=args.w1_count,
        exact=args.exact,
        estimator=_config_from_flags(args, seed),
        seed=seed,
    )
    result = run_synth(cfg, args.out_dir)
    for name, p_a, p, evals, perms, converged in result["rows"]:
        print(f"{name}: p_a={p_a:.4f} p={p:.4f} evaluations={evals} converged={converged}")
    print(f"wrote {os.path.join(args.out_dir, 'metrics.tsv')}")
    if not all(row[5] for row in result["rows"]):
        return EX_NONCONVERGED
    return EX_OK


def cmd_transform(args) -> int:
    lines = _read_lines(args.input)
    out_lines = []
    for line in lines:
        if args.transform == "hans_star":
            premise, _, hypothesis = line.partition("\t")
            new_premise, new_hypothesis = transform_hans_star(premise, hypothesis)
            out_lines.append(f"{new_premise}\t{new_hypothesis}")
        elif args.transform == "append_phrase":
            out_lines.append(transform_append_phrase(line, args.phrase_id, args.position))
        else:
            out_lines.append(transform_prepend_symbol(line, args.symbol))
    with open(args.output, "w", encoding="utf-8") as handle:
        handle.write("\n".join(out_lines) + ("\n" if out_lines else ""))
    print(f"wrote {args.output} ({len(out_lines)} lines)")
    return EX_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "explain": cmd_explain,
        "global": cmd_global,
        "synth": cmd_synth,
        "transform": cmd_transform,
    }
    try:
        return handlers[args.command](args)
    except BridgeError as exc:
        print(f"ordershap: endpoint failure: {exc}", file=sys.stderr)
        return EX_ENDPOINT
    except EvaluationError as exc:
        # evaluation failures triggered by a broken endpoint count as such
        code = EX_ENDPOINT if isinstance(exc.__cause__, BridgeError) else EX_DATA
        print(f"ordershap: {exc}", file=sys.stderr)
        return code
    except DataError as exc:
        print(f"ordershap: bad input: {exc}", file=sys.stderr)
        return EX_DATA
    except (ConfigurationError, ContractViolation) as exc:
        print(f"ordershap: {exc}", file=sys.stderr)
        return EX_USAGE
    except OrderShapError as exc:
        print(f"ordershap: {exc}", file=sys.stderr)
        return EX_DATA


if __name__ == "__main__":
    sys.exit(main())
