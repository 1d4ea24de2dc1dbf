"""Command-line interface.

Every subcommand prints one JSON document on stdout; diagnostics go to
stderr. Exit codes: 0 success, 1 generic failure, 2 parse error,
3 evaluation error, 4 oracle enumeration cap exceeded.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

from .checker import INTERVAL, SUFFIX, align
from .errors import EvaluationError, InvalidConfig, LaserError, ParseError, TooManyFacts
from .fact_db import FactDatabase
from .spec_lang import parse_spec

logger = logging.getLogger("laser")

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_EVAL, EXIT_CAP = 0, 1, 2, 3, 4
GRADCHECK_TOLERANCE = 1e-4


def _k(value):
    """``--k 0`` (or ``inf``) disables the top-k bound."""
    if value in ("0", "inf", "none"):
        return None
    k = int(value)
    if k < 0:
        raise argparse.ArgumentTypeError("k must be >= 0")
    return k


def _global_options(parser, suppress=False):
    """Options accepted both before and after the subcommand."""
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--k", type=_k, default=d(5),
                        help="proofs kept per intermediate result (0 = unbounded)")
    parser.add_argument("--mode", choices=(SUFFIX, INTERVAL), default=d(SUFFIX))
    parser.add_argument("--seed", type=int, default=d(None), help="overrides config seeds")
    parser.add_argument("--threads", type=int, default=d(1),
                        help="worker cap (evaluation is single-threaded)")
    parser.add_argument("--output", default=d(None), help="output file or directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="laser", description=__doc__.splitlines()[0])
    _global_options(parser)
    shared = argparse.ArgumentParser(add_help=False)
    _global_options(shared, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (("check", "alignment score, witnesses and top proofs"),
                       ("oracle", "exact score by world enumeration"),
                       ("gradcheck", "analytic vs finite-difference gradients")):
        p = sub.add_parser(name, help=text, parents=[shared])
        p.add_argument("db", help="fact database JSON")
        p.add_argument("spec", help="file holding one specification")

    p = sub.add_parser("gen", help="generate a synthetic dataset", parents=[shared])
    p.add_argument("config", help="JSON object of generator settings")

    p = sub.add_parser("train", help="train a predictor on a dataset", parents=[shared])
    p.add_argument("dataset")
    p.add_argument("--config", default=None, help="JSON object of training settings")
    p.add_argument("--constraints", default=None,
                   help="constraint file (default: the regime's built-in constraints)")

    p = sub.add_parser("eval", help="evaluate a checkpoint (or ground truth) on a dataset",
                       parents=[shared])
    p.add_argument("dataset")
    p.add_argument("--checkpoint", default=None, help="omit to score ground-truth databases")
    p.add_argument("--task", choices=("f1", "retrieval", "violation"), default="f1")
    p.add_argument("--group-size", type=int, default=3)
    return parser


# ---------------------------------------------------------------------------
# helpers

def _read(path):
    with open(path) as fh:
        return fh.read()


def _load_json(path):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: invalid JSON: {exc}") from None


def _load_pair(args):
    db = FactDatabase.from_json(_load_json(args.db))
    spec = parse_spec(_read(args.spec).strip(), db.schema)
    return db, spec


def _wit_key(v):
    return f"{v[0]}-{v[1]}" if isinstance(v, tuple) else str(v)


def _emit(obj, args):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if args.output and args.command in ("check", "oracle", "gradcheck", "eval"):
        with open(args.output, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# subcommands

def cmd_check(args):
    db, spec = _load_pair(args)
    res = align(db, spec, k=args.k, mode=args.mode)
    witnesses = {lab: {_wit_key(v): s for v, s in sorted(scores.items())}
                 for lab, scores in res.witness_scores.items()}
    _emit({"score": res.score, "witness_scores": witnesses,
           "proofs": res.proofs.dump().splitlines()}, args)
    return EXIT_OK


def cmd_oracle(args):
    from .oracle import exact_align

    db, spec = _load_pair(args)
    exact = exact_align(db, spec, args.mode)
    engine = align(db, spec, k=args.k, mode=args.mode).score
    _emit({"score": exact, "engine_score": engine, "delta": abs(engine - exact)}, args)
    return EXIT_OK


def relative_error(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def cmd_gradcheck(args):
    from .oracle import MAX_FACTS, exact_align, fd_grad

    db, spec = _load_pair(args)
    if len(db.facts) > MAX_FACTS:
        raise TooManyFacts(f"{len(db.facts)} facts exceed the oracle cap of {MAX_FACTS}")
    res = align(db, spec, k=None, mode=args.mode)
    worst, rows = 0.0, []
    for f in db.facts:
        analytic = res.grad.get(f.id, 0.0)
        numeric = fd_grad(db, spec, f.id, mode=args.mode)
        err = relative_error(analytic, numeric)
        worst = max(worst, err)
        rows.append({"fact": f.id, "analytic": float(analytic), "numeric": float(numeric),
                     "rel_error": float(err)})
    delta = abs(res.score - exact_align(db, spec, args.mode))
    ok = bool(worst <= GRADCHECK_TOLERANCE)
    _emit({"max_rel_error": worst, "score_delta": delta, "gradients": rows,
           "tolerance": GRADCHECK_TOLERANCE, "ok": ok}, args)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_gen(args):
    from .synthgen import GenConfig, generate, save_dataset

    obj = _load_json(args.config)
    if args.seed is not None:
        obj["seed"] = args.seed
    if not args.output:
        raise InvalidConfig("gen needs --output <directory>")
    known = {f.name for f in fields(GenConfig)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise InvalidConfig(f"unknown generator settings: {', '.join(unknown)}")
    cfg = GenConfig(**obj)
    episodes = generate(cfg)
    save_dataset(args.output, cfg, episodes)
    _emit({"path": args.output, "episodes": len(episodes), "regime": cfg.regime}, args)
    return EXIT_OK


def _train_settings(path, args):
    from .predictor import TrainConfig

    obj = _load_json(path) if path else {}
    known = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise InvalidConfig(f"unknown training settings: {', '.join(unknown)}")
    obj.setdefault("k", args.k)
    obj.setdefault("mode", args.mode)
    if args.seed is not None:
        obj["seed"] = args.seed
    return TrainConfig(**obj)


def cmd_train(args):
    from .losses import parse_constraints
    from .synthgen import constraints_for, load_dataset

    if not args.output:
        raise InvalidConfig("train needs --output <directory>")
    gen_cfg, episodes = load_dataset(args.dataset)
    cfg = _train_settings(args.config, args)
    layout = episodes[0].layout if episodes else None
    if args.constraints:
        constraints = parse_constraints(_read(args.constraints), layout.schema)
    else:
        constraints = constraints_for(gen_cfg)
    est = cfg.estimator(layout, constraints).fit(episodes)
    os.makedirs(args.output, exist_ok=True)
    with open(os.path.join(args.output, "checkpoint.json"), "w") as fh:
        json.dump(est.checkpoint(), fh, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.output, "log.csv"), "w") as fh:
        fh.write(est.log_csv())
    log = est.log_
    _emit({"path": args.output, "epochs": len(log),
           "initial_loss": log[0]["loss_total"] if log else None,
           "final_loss": log[-1]["loss_total"] if log else None}, args)
    return EXIT_OK


def cmd_eval(args):
    from .evaluation import eval_f1, eval_retrieval, mean_violation
    from .predictor import AlignmentPredictor
    from .synthgen import constraints_for, load_dataset

    gen_cfg, episodes = load_dataset(args.dataset)
    model = None
    if args.checkpoint:
        model = AlignmentPredictor.from_checkpoint(
            _load_json(args.checkpoint), episodes[0].layout, k=args.k, mode=args.mode)
    seed = 0 if args.seed is None else args.seed
    if args.task == "f1":
        res = eval_f1(model, episodes)
        out = {"mean_f1": res["mean_f1"],
               "f1": {p: v["f1"] for p, v in res["predicates"].items()},
               "predicates": res["predicates"]}
    elif args.task == "retrieval":
        out = eval_retrieval(model, episodes, args.group_size, seed, k=args.k, mode=args.mode)
    else:
        out = {"mean_violation": mean_violation(model, episodes, constraints_for(gen_cfg),
                                                k=args.k, mode=args.mode)}
    _emit(out, args)
    return EXIT_OK


COMMANDS = {"check": cmd_check, "oracle": cmd_oracle, "gradcheck": cmd_gradcheck,
            "gen": cmd_gen, "train": cmd_train, "eval": cmd_eval}


def _configure_logging():
    level = os.environ.get("LASER_LOG", "error").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except TooManyFacts as exc:
        print(f"oracle cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (LaserError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
