"""Command-line interface.

Subcommands cover the full pipeline: decoding (optionally under corpus
constraints), constraint compilation from typology data, ratio estimation
from gold treebanks, evaluation, synthetic corpus generation, and the
ratio-gap statistic.  Output files are written atomically (temp + rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from typing import Callable, Sequence

from . import constraints as cns
from . import core, decoder, lagrangian, posterior, synthetic, typology
from .config import InferenceConfig


def _atomic_write(path: str, render: Callable) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            render(handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, payload: object) -> None:
    _atomic_write(path, lambda h: (json.dump(payload, h, indent=2), h.write("\n")))


def _load_corpus(conllu_path: str, scores_path: str) -> core.Corpus:
    with open(conllu_path, encoding="utf-8") as handle:
        sentences = core.read_conllu(handle)
    with open(scores_path, encoding="utf-8") as handle:
        matrices = core.read_scores(handle)
    return core.pair_corpus(sentences, matrices)


def _load_config(path: str | None) -> InferenceConfig:
    if path is None:
        return InferenceConfig()
    with open(path, encoding="utf-8") as handle:
        return InferenceConfig.from_stream(handle)


def _load_constraints(path: str) -> list[cns.Constraint]:
    with open(path, encoding="utf-8") as handle:
        return cns.load_constraints(handle)


def _constraint_report(
    constraint_list: Sequence[cns.Constraint],
    corpus: core.Corpus,
    baseline: Sequence[core.ParseTree],
    final: Sequence[core.ParseTree],
    root_counts_left: bool,
) -> list[dict]:
    rows = []
    for constraint in constraint_list:
        before = cns.ratio(constraint, corpus, baseline, root_counts_left=root_counts_left)
        after = cns.ratio(constraint, corpus, final, root_counts_left=root_counts_left)
        rows.append(
            {
                "id": constraint.id,
                "r": constraint.r,
                "theta": constraint.theta,
                "ratio_baseline": before,
                "ratio_final": after,
                "satisfied": cns.is_satisfied(constraint, after),
            }
        )
    return rows


def cmd_decode(args: argparse.Namespace) -> int:
    corpus = _load_corpus(args.conllu, args.scores)
    config = _load_config(args.config)
    constraint_list = _load_constraints(args.constraints) if args.constraints else []
    if args.method in ("lr", "pr") and not constraint_list:
        print("decode: --method lr/pr requires --constraints", file=sys.stderr)
        return 2

    baseline = decoder.decode_corpus(
        corpus, projective=args.projective, single_root=config.single_root
    )
    iterations = 0
    converged = True
    if args.method == "baseline":
        trees = baseline
    elif args.method == "lr":
        trees, state, converged = lagrangian.lr_infer(
            corpus,
            constraint_list,
            config.lr,
            projective=args.projective,
            single_root=config.single_root,
            root_counts_left=config.root_counts_left,
        )
        iterations = len(state.trace)
        if args.trace:
            _atomic_write(
                args.trace, lambda h: lagrangian.write_lr_trace(state, constraint_list, h)
            )
    else:
        dists = [core.to_distribution(matrix) for _, matrix in corpus]
        fi = posterior.build_feature_index(
            corpus, constraint_list, root_counts_left=config.root_counts_left
        )
        lambdas, trace = posterior.solve_dual(corpus, dists, fi, config.pr)
        posteriors = posterior.posterior_arc_probs(corpus, dists, fi, lambdas)
        decode_one = decoder.projective_decode if args.projective else decoder.mst_decode
        trees = [
            decode_one(
                core.ScoreMatrix(posterior.log_probs(dist)),
                single_root=config.single_root,
            )
            for dist in posteriors
        ]
        iterations = len(trace)
        converged = bool(trace) and trace[-1].grad_norm < config.pr.grad_tol
        if args.trace:
            _atomic_write(
                args.trace, lambda h: posterior.write_pr_trace(trace, fi.labels, h)
            )

    _atomic_write(args.out, lambda h: core.write_conllu(corpus.sentences, h, trees))

    if args.report:
        objective = sum(
            matrix.tree_score(tree.heads) for (_, matrix), tree in zip(corpus, trees)
        )
        has_gold = all(s.gold_heads is not None for s in corpus.sentences)
        report = {
            "constraints": _constraint_report(
                constraint_list, corpus, baseline, trees, config.root_counts_left
            ),
            "uas": core.uas(trees, corpus.sentences) if has_gold else None,
            "objective": objective,
            "iterations": iterations,
            "converged": converged,
        }
        _write_json(args.report, report)

    unsatisfied = [
        c.id
        for c in constraint_list
        if not cns.is_satisfied(
            c, cns.ratio(c, corpus, trees, root_counts_left=config.root_counts_left)
        )
    ]
    if unsatisfied:
        print(
            f"warning: constraints not satisfied: {', '.join(unsatisfied)}",
            file=sys.stderr,
        )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    with open(args.pred, encoding="utf-8") as handle:
        predicted = core.read_conllu(handle)
    with open(args.gold, encoding="utf-8") as handle:
        gold = core.read_conllu(handle)
    trees = []
    for k, sentence in enumerate(predicted):
        if sentence.gold_heads is None:
            print(f"evaluate: sentence {k} in {args.pred} has no heads", file=sys.stderr)
            return 2
        trees.append(core.ParseTree(sentence.gold_heads))
    score = core.uas(trees, gold)
    payload = {"uas": score}
    print(json.dumps(payload))
    if args.report:
        _write_json(args.report, payload)
    return 0


def cmd_estimate_ratios(args: argparse.Namespace) -> int:
    with open(args.conllu, encoding="utf-8") as handle:
        sentences = core.read_conllu(handle)
    constraint_list = _load_constraints(args.constraints)
    total_arcs = sum(len(s) for s in sentences)
    rows = []
    oracle = []
    for constraint in constraint_list:
        measured, count = typology.estimate_ratio(
            sentences, constraint, sample_size=args.sample, seed=args.seed
        )
        rows.append(
            {
                "id": constraint.id,
                "ratio": measured,
                "count": count,
                "coverage": count / total_arcs if total_arcs else 0.0,
            }
        )
        if measured is not None:
            oracle.append(
                cns.Constraint(
                    id=constraint.id,
                    kind=constraint.kind,
                    pos=constraint.pos,
                    r=measured,
                    theta=args.oracle_theta,
                    pos2=constraint.pos2,
                )
            )
    payload = {"ratios": rows}
    print(json.dumps(payload))
    if args.out:
        _write_json(args.out, payload)
    if args.oracle_out:
        _atomic_write(args.oracle_out, lambda h: cns.save_constraints(oracle, h))
    return 0


def cmd_compile_constraints(args: argparse.Namespace) -> int:
    with open(args.wals, encoding="utf-8") as handle:
        table = typology.TypologyTable.from_csv(handle)
    with open(args.templates, encoding="utf-8") as handle:
        templates = json.load(handle)
    unary_ratios = {}
    if args.unary_ratios:
        with open(args.unary_ratios, encoding="utf-8") as handle:
            unary_ratios = {str(k): float(v) for k, v in json.load(handle).items()}

    compiled = []
    for template in templates:
        kind = template["kind"]
        if kind == "binary":
            value = table.value(args.target, template["feature"])
            r, theta = typology.compile_binary(value, template["orientations"])
            compiled.append(
                cns.Constraint(
                    id=template["id"],
                    kind="binary",
                    pos=template["pos"],
                    pos2=template["pos2"],
                    r=r,
                    theta=theta,
                )
            )
        elif kind == "unary":
            if not unary_ratios:
                print(
                    "compile-constraints: unary templates require --unary-ratios",
                    file=sys.stderr,
                )
                return 2
            features = template.get("features", list(typology.NOUN_ORDER_FEATURES))
            vocab = typology.build_feature_vocab(table, features)
            train = [
                (typology.feature_vector(table, lang, vocab), ratio_value)
                for lang, ratio_value in sorted(unary_ratios.items())
                if lang != args.target
            ]
            predicted = typology.fit_unary_ratio(
                train, typology.feature_vector(table, args.target, vocab)
            )
            compiled.append(
                cns.Constraint(
                    id=template["id"],
                    kind="unary",
                    pos=template["pos"],
                    r=predicted,
                    theta=float(template.get("theta", 0.125)),
                )
            )
        else:
            print(f"compile-constraints: unknown template kind {kind!r}", file=sys.stderr)
            return 2
    _atomic_write(args.out, lambda h: cns.save_constraints(compiled, h))
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    with open(args.spec, encoding="utf-8") as handle:
        spec = synthetic.SyntheticSpec.from_dict(json.load(handle))
    corpus, true_ratios = synthetic.generate_synthetic(spec)
    _atomic_write(args.out_conllu, lambda h: core.write_conllu(corpus.sentences, h))
    _atomic_write(args.out_scores, lambda h: core.write_scores(corpus.matrices, h))
    if args.out_constraints:
        oracle = [
            cns.Constraint(
                id=c.id, kind=c.kind, pos=c.pos, pos2=c.pos2,
                r=true_ratios[c.id], theta=args.oracle_theta,
            )
            for c in spec.planted
            if true_ratios[c.id] is not None
        ]
        _atomic_write(args.out_constraints, lambda h: cns.save_constraints(oracle, h))
    if args.report:
        _write_json(args.report, {"true_ratios": true_ratios})
    return 0


def cmd_ratio_gap(args: argparse.Namespace) -> int:
    with open(args.source, encoding="utf-8") as handle:
        source = {row["id"]: row for row in json.load(handle)["ratios"]}
    with open(args.target, encoding="utf-8") as handle:
        target = {row["id"]: row for row in json.load(handle)["ratios"]}
    constraint_list = _load_constraints(args.constraints)
    kept, src, tgt, cov = [], [], [], []
    for constraint in constraint_list:
        s = source.get(constraint.id)
        t = target.get(constraint.id)
        if not s or not t or s["ratio"] is None or t["ratio"] is None:
            print(f"warning: skipping {constraint.id} (undefined ratio)", file=sys.stderr)
            continue
        kept.append(constraint)
        src.append(float(s["ratio"]))
        tgt.append(float(t["ratio"]))
        cov.append(float(t["coverage"]))
    gap = cns.ratio_gap(kept, src, tgt, cov)
    payload = {"ratio_gap": gap}
    print(json.dumps(payload))
    if args.report:
        _write_json(args.report, payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cip",
        description="Corpus-level constrained inference for dependency parsing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode trees, optionally under constraints")
    p.add_argument("--conllu", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--constraints")
    p.add_argument("--method", choices=("baseline", "lr", "pr"), default="baseline")
    p.add_argument("--projective", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.add_argument("--report")
    p.add_argument("--config")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="UAS of a predicted CoNLL-U file")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("estimate-ratios", help="constraint ratios from gold trees")
    p.add_argument("--conllu", required=True)
    p.add_argument("--constraints", required=True)
    p.add_argument("--sample", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--oracle-out", help="write constraints with measured ratios")
    p.add_argument("--oracle-theta", type=float, default=0.01)
    p.set_defaults(func=cmd_estimate_ratios)

    p = sub.add_parser("compile-constraints", help="constraints from typology data")
    p.add_argument("--wals", required=True, help="CSV with header lang,feature,value")
    p.add_argument("--templates", required=True, help="JSON template list")
    p.add_argument("--target", required=True, help="target language code")
    p.add_argument("--unary-ratios", help="JSON object mapping language to ratio")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compile_constraints)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-conllu", required=True)
    p.add_argument("--out-scores", required=True)
    p.add_argument("--out-constraints")
    p.add_argument("--oracle-theta", type=float, default=0.01)
    p.add_argument("--report")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ratio-gap", help="coverage-weighted ratio difference")
    p.add_argument("--constraints", required=True)
    p.add_argument("--source", required=True, help="estimate-ratios report JSON")
    p.add_argument("--target", required=True, help="estimate-ratios report JSON")
    p.add_argument("--report")
    p.set_defaults(func=cmd_ratio_gap)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, core.FormatError) as exc:
        print(f"cip: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
