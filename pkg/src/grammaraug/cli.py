"""Command-line entry point: ``grammaraug <subcommand>``."""
import argparse
import json
import logging
import os
import sys

from .candgen import CandidateSet, CommandSet, generate_candidates
from .evaluation import Evaluator, ScoreMatrix, mask_to_bits, parse_mask, precompute_scores
from .pipeline import PipelineConfig, StageError, manifest_utterances, run_pipeline, write_search_outputs
from .prondict import PronDictionary, build_dictionary_from_manifest
from .search import ALGORITHMS, SearchConfig, run_search
from .sim import DEFAULT_COMMANDS, DEFAULT_CONFUSIONS, DEFAULT_OOD_TEXTS, ConfusionTable, SimConfig, make_benchmark

log = logging.getLogger("grammaraug")


def _sizes(text):
    parts = [int(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected train,validation,test counts")
    return parts


def _mask(text, m):
    if text == "originals":
        return m.originals_mask()
    if text == "all":
        return m.all_mask()
    return parse_mask(text, len(m.candidates))


def cmd_simulate(args):
    commands = CommandSet.from_file(args.commands) if args.commands else CommandSet(DEFAULT_COMMANDS)
    table = ConfusionTable.load(args.confusions) if args.confusions else ConfusionTable(DEFAULT_CONFUSIONS)
    if args.ood:
        with open(args.ood) as fh:
            ood_texts = [ln.strip() for ln in fh if ln.strip()]
    else:
        ood_texts = DEFAULT_OOD_TEXTS
    cfg = SimConfig(args.frames_per_char, args.blank_insert_prob, args.peak_prob, args.noise_temperature, args.seed)
    manifests = make_benchmark(commands, table, cfg, args.sizes, ood_texts, args.out_dir,
                               n_ood=args.n_ood, general_size=args.general_size)
    print(json.dumps(manifests, indent=1))


def cmd_build_dict(args):
    d = build_dictionary_from_manifest(args.manifest, args.min_count)
    d.to_tsv(args.out)
    log.info("wrote %d words to %s (%d utterances skipped)", len(d.entries), args.out, len(d.skipped))


def cmd_gen_candidates(args):
    commands = CommandSet.from_file(args.commands)
    d = PronDictionary.from_tsv(args.dict)
    if args.coverage is not None:
        cands = generate_candidates(commands, d, coverage=args.coverage, cap=args.cap)
    else:
        cands = generate_candidates(commands, d, k=args.k, cap=args.cap)
    text = json.dumps(cands.to_json(), indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)


def cmd_score(args):
    cands = CandidateSet.load(args.candidates)
    utts = []
    for path in args.manifest:
        utts += manifest_utterances(path, cands.commands, True)
    for path in args.ood:
        utts += manifest_utterances(path, cands.commands, False)
    m = precompute_scores(cands, utts, workers=args.workers)
    m.save(args.out)
    log.info("wrote %d x %d score matrix to %s", *m.shape, args.out)


def cmd_evaluate(args):
    m = ScoreMatrix.load(args.scores)
    res = Evaluator(m, args.split, args.alpha, args.beta).evaluate(_mask(args.mask, m))
    out = res.to_json()
    print(json.dumps(out, sort_keys=True))
    keys = ["tau", "far", "mdr", "mcr", "objective", "success"]
    print(",".join(keys))
    print(",".join(str(out[k]) for k in keys))


def cmd_search(args):
    m = ScoreMatrix.load(args.scores)
    cfg = SearchConfig(
        alpha=args.alpha, beta=args.beta, beam_width=args.beam_width, cem_population=args.cem_pop,
        cem_elite_fraction=args.cem_elite, cem_iterations=args.cem_iters, cem_smoothing=args.cem_smoothing,
        rng_seed=args.seed, eval_budget=args.budget, split=args.split,
    )
    trace = run_search(args.algo, m, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, f"{args.algo}.json")
    write_search_outputs(trace, out)
    print(json.dumps({"mask": mask_to_bits(trace.mask), "evaluations": trace.evaluations,
                      "result": trace.result.to_json()}, sort_keys=True))


def cmd_run(args):
    cfg = PipelineConfig.from_file(args.config)
    report, ran = run_pipeline(cfg)
    log.info("stages run: %s", ", ".join(ran) or "none")
    print(os.path.join(cfg.work_dir, "report.json"))


def build_parser():
    p = argparse.ArgumentParser(prog="grammaraug", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic benchmark")
    s.add_argument("--commands", help="one command per line (default: five media-player commands)")
    s.add_argument("--confusions", help="JSON word -> {rendering: probability}")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--sizes", type=_sizes, default=[200, 100, 100], help="per-command train,validation,test")
    s.add_argument("--ood", help="text file of out-of-domain sentences")
    s.add_argument("--n-ood", type=int, default=1000)
    s.add_argument("--general-size", type=int, default=2000)
    s.add_argument("--frames-per-char", type=int, default=3)
    s.add_argument("--blank-insert-prob", type=float, default=0.2)
    s.add_argument("--peak-prob", type=float, default=0.85)
    s.add_argument("--noise-temperature", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate, stage="simulate")

    s = sub.add_parser("build-dict", help="statistical pronunciation dictionary from a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--min-count", type=int, default=1)
    s.set_defaults(func=cmd_build_dict, stage="build-dict")

    s = sub.add_parser("gen-candidates", help="candidate grammar set")
    s.add_argument("--commands", required=True)
    s.add_argument("--dict", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--coverage", type=float)
    g.add_argument("--k", type=int)
    s.add_argument("--cap", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gen_candidates, stage="gen-candidates")

    s = sub.add_parser("score", help="precompute the CTC score matrix")
    s.add_argument("--candidates", required=True)
    s.add_argument("--manifest", required=True, action="append", help="in-domain manifest (repeatable)")
    s.add_argument("--ood", required=True, action="append", help="out-of-domain manifest (repeatable)")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_score, stage="score")

    s = sub.add_parser("evaluate", help="evaluate one grammar mask")
    s.add_argument("--scores", required=True)
    s.add_argument("--mask", required=True, help="bitstring, 0x-hex, 'originals' or 'all'")
    s.add_argument("--alpha", type=float, default=0.001)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--split", help="in-domain split to score (default: all)")
    s.set_defaults(func=cmd_evaluate, stage="evaluate")

    s = sub.add_parser("search", help="search for an augmented grammar")
    s.add_argument("--scores", required=True)
    s.add_argument("--algo", required=True, choices=sorted(ALGORITHMS))
    s.add_argument("--alpha", type=float, default=0.001)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--beam-width", type=int, default=5)
    s.add_argument("--cem-pop", type=int, default=100)
    s.add_argument("--cem-elite", type=float, default=0.1)
    s.add_argument("--cem-iters", type=int, default=50)
    s.add_argument("--cem-smoothing", type=float, default=0.7)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--budget", type=int)
    s.add_argument("--split", default="train")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_search, stage="search")

    s = sub.add_parser("run", help="full pipeline from a config file")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_run, stage="run")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error [{args.stage}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
