"""End-to-end run: simulate or ingest, build dictionary, candidates, scores, search, report.

Each stage persists its outputs under ``work_dir`` with a stamp holding a
hash of its inputs and parameters. A stage is skipped when its stamp matches
and its outputs are intact, unless an upstream stage ran in the same call.
"""
import csv
import hashlib
import io
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields

from . import __version__
from ._backend import BACKEND
from .candgen import CandidateSet, CommandSet, generate_candidates
from .evaluation import Evaluator, ScoreMatrix, Utterance, mask_to_bits, parse_mask, precompute_scores
from .prondict import PronDictionary, build_dictionary_from_manifest, read_manifest
from .search import SearchConfig, run_search
from .sim import DEFAULT_COMMANDS, DEFAULT_CONFUSIONS, DEFAULT_OOD_TEXTS, ConfusionTable, SimConfig, make_benchmark

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

DATA_SPLITS = ("general", "train", "validation", "test", "ood")


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    work_dir: str = "grammaraug_run"
    seed: int = 0
    alpha: float = 0.001
    beta: float = 1.0
    # data: simulate unless manifests are given
    simulate: bool = True
    commands: str = ""
    confusions: str = ""
    ood_texts: str = ""
    sizes: list = field(default_factory=lambda: [200, 100, 100])
    n_ood: int = 1000
    general_size: int = 2000
    frames_per_char: int = 3
    blank_insert_prob: float = 0.2
    peak_prob: float = 0.85
    noise_temperature: float = 1.0
    general_manifest: str = ""
    train_manifest: str = ""
    validation_manifest: str = ""
    test_manifest: str = ""
    ood_manifest: str = ""
    # dictionary and candidates
    min_count: int = 1
    candidate_k: int = 8
    coverage: float = 0.0
    candidate_sizes: list = field(default_factory=lambda: [25, 50, 75, 100, 150])
    # search
    algorithms: list = field(default_factory=lambda: ["greedy", "refined", "beam", "cem"])
    beam_width: int = 5
    cem_population: int = 100
    cem_elite_fraction: float = 0.1
    cem_iterations: int = 50
    cem_initial_mean: float = 0.0
    cem_initial_stddev: float = 1.0
    cem_smoothing: float = 0.7
    eval_budget: int = 0
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if isinstance(self.sizes, str):
            self.sizes = [int(x) for x in self.sizes.split(",")]
        if not self.simulate:
            missing = [s for s in DATA_SPLITS if not getattr(self, f"{s}_manifest")]
            if missing:
                raise ValueError(f"simulate = false needs manifests for {', '.join(missing)}")
            if not self.commands:
                raise ValueError("simulate = false needs a commands file")

    @classmethod
    def from_file(cls, path):
        with open(path, "rb") as fh:
            raw = json.load(fh) if str(path).endswith(".json") else tomllib.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        base = os.path.dirname(os.path.abspath(path))
        for key in ("commands", "confusions", "ood_texts", "work_dir") + tuple(f"{s}_manifest" for s in DATA_SPLITS):
            if raw.get(key):
                raw[key] = os.path.normpath(os.path.join(base, raw[key]))
        return cls(**raw)

    def sim_config(self):
        return SimConfig(self.frames_per_char, self.blank_insert_prob, self.peak_prob, self.noise_temperature, self.seed)

    def search_config(self):
        return SearchConfig(
            alpha=self.alpha, beta=self.beta, beam_width=self.beam_width,
            cem_population=self.cem_population, cem_elite_fraction=self.cem_elite_fraction,
            cem_iterations=self.cem_iterations, cem_initial_mean=self.cem_initial_mean,
            cem_initial_stddev=self.cem_initial_stddev, cem_smoothing=self.cem_smoothing,
            rng_seed=self.seed, eval_budget=self.eval_budget or None, split="train",
        )


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


class _Stages:
    def __init__(self, work_dir):
        self.work_dir = work_dir
        self.ran = []
        self._fresh = set()  # outputs (re)written in this call

    def run(self, name, inputs, params, outputs, fn):
        """Run ``fn()`` unless the stamp shows identical inputs and intact outputs."""
        stamp_path = os.path.join(self.work_dir, "stamps", f"{name}.json")
        try:
            key = _digest({"params": params, "inputs": {p: file_hash(p) for p in inputs}})
        except OSError as exc:
            raise StageError(name, f"missing input: {exc}") from exc
        if not any(p in self._fresh for p in inputs) and os.path.exists(stamp_path):
            with open(stamp_path) as fh:
                stamp = json.load(fh)
            if stamp.get("key") == key and all(
                os.path.exists(p) and file_hash(p) == stamp["outputs"].get(p) for p in outputs
            ):
                log.info("stage %s: up to date", name)
                return
        log.info("stage %s: running", name)
        try:
            fn()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        os.makedirs(os.path.dirname(stamp_path), exist_ok=True)
        with open(stamp_path, "w") as fh:
            json.dump({"key": key, "outputs": {p: file_hash(p) for p in outputs}}, fh, indent=1)
        self._fresh.update(outputs)
        self.ran.append(name)


def _load_lines(path, default):
    if not path:
        return list(default)
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


def manifest_utterances(path, commands, in_domain):
    out = []
    for rec in read_manifest(path):
        target = -1
        if in_domain:
            target = rec.get("command_id")
            if target is None:
                target = commands.id_of(rec["transcript"])
        out.append(Utterance(rec["utterance_id"], rec["posteriorgram_path"], in_domain, int(target),
                             rec.get("split", "train") if in_domain else "ood"))
    return out


def select_by_validation(masks, val_ev):
    """Pick the mask with the lowest validation objective; later masks win ties."""
    best_mask, best_res = None, None
    for mask in masks:
        res = val_ev.evaluate(mask)
        if best_res is None or res.objective <= best_res.objective:
            best_mask, best_res = mask, res
    return best_mask, best_res


def run_pipeline(cfg):
    """Execute all stages; return ``(report, stages_run)``."""
    wd = cfg.work_dir
    os.makedirs(wd, exist_ok=True)
    stages = _Stages(wd)
    data_dir = os.path.join(wd, "data")

    command_texts = _load_lines(cfg.commands, DEFAULT_COMMANDS)
    commands = CommandSet(command_texts)

    if cfg.simulate:
        manifests = {s: os.path.join(data_dir, f"{s}.jsonl") for s in DATA_SPLITS}
        confusions = DEFAULT_CONFUSIONS
        if cfg.confusions:
            with open(cfg.confusions) as fh:
                confusions = json.load(fh)
        ood_texts = _load_lines(cfg.ood_texts, DEFAULT_OOD_TEXTS)
        sim_params = {
            "commands": command_texts, "confusions": confusions, "ood": ood_texts, "sizes": cfg.sizes,
            "n_ood": cfg.n_ood, "general_size": cfg.general_size, "sim": asdict(cfg.sim_config()),
        }
        stages.run("simulate", [], sim_params, list(manifests.values()), lambda: make_benchmark(
            commands, ConfusionTable(confusions), cfg.sim_config(), cfg.sizes, ood_texts, data_dir,
            n_ood=cfg.n_ood, general_size=cfg.general_size))
    else:
        manifests = {s: getattr(cfg, f"{s}_manifest") for s in DATA_SPLITS}

    dict_path = os.path.join(wd, "dict.tsv")
    stages.run("build-dict", [manifests["general"]], {"min_count": cfg.min_count}, [dict_path],
               lambda: build_dictionary_from_manifest(manifests["general"], cfg.min_count).to_tsv(dict_path))

    policy = {"coverage": cfg.coverage} if cfg.coverage else {"k": cfg.candidate_k}
    scfg = cfg.search_config()
    sizes_report = []
    score_inputs = [manifests[s] for s in ("train", "validation", "test", "ood")]
    for size in cfg.candidate_sizes:
        cand_path = os.path.join(wd, f"candidates_{size}.json")
        stages.run(f"gen-candidates[{size}]", [dict_path], {"commands": command_texts, "cap": size, **policy},
                   [cand_path], lambda: generate_candidates(
                       commands, PronDictionary.from_tsv(dict_path), cap=size, **policy).save(cand_path))

        score_path = os.path.join(wd, f"scores_{size}.scmx")

        def score(cand_path=cand_path, score_path=score_path):
            cands = CandidateSet.load(cand_path)
            utts = []
            for s in ("train", "validation", "test"):
                utts += manifest_utterances(manifests[s], cands.commands, True)
            utts += manifest_utterances(manifests["ood"], cands.commands, False)
            precompute_scores(cands, utts, workers=cfg.workers).save(score_path)

        stages.run(f"score[{size}]", [cand_path] + score_inputs, {}, [score_path, score_path + ".json"], score)

        search_paths = {}
        for algo in cfg.algorithms:
            out = os.path.join(wd, "search", f"{algo}_{size}.json")
            search_paths[algo] = out

            def search(algo=algo, out=out, score_path=score_path):
                m = ScoreMatrix.load(score_path)
                trace = run_search(algo, Evaluator(m, "train", cfg.alpha, cfg.beta), scfg)
                write_search_outputs(trace, out)

            stages.run(f"search[{algo},{size}]", [score_path, score_path + ".json"], asdict(scfg),
                       [out, out[:-5] + "_trace.csv"], search)

        sizes_report.append(_evaluate_size(size, score_path, search_paths, cfg))

    report = {
        "version": __version__,
        "backend": BACKEND,
        "config": asdict(cfg),
        "sizes": sizes_report,
    }
    report_path = os.path.join(wd, "report.json")
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    emit_plots_csv(report, wd)
    return report, stages.ran


def write_search_outputs(trace, out):
    os.makedirs(os.path.dirname(out), exist_ok=True)
    with open(out, "w") as fh:
        json.dump({
            "algorithm": trace.algorithm,
            "mask": mask_to_bits(trace.mask),
            "result": trace.result.to_json(),
            "baseline": trace.baseline.to_json() if trace.baseline else None,
            "evaluations": trace.evaluations,
            "stop_reason": trace.stop_reason,
            "improving_masks": [mask_to_bits(m) for m in trace.improving_masks()],
        }, fh, indent=1)
    with open(out[:-5] + "_trace.csv", "w") as fh:
        fh.write(trace.to_csv())


def _evaluate_size(size, score_path, search_paths, cfg):
    m = ScoreMatrix.load(score_path)
    ev = {s: Evaluator(m, s, cfg.alpha, cfg.beta) for s in ("train", "validation", "test")}

    def metrics(mask):
        return {s: ev[s].evaluate(mask).to_json() for s in ev}

    entry = {
        "size": size,
        "n_candidates": len(m.candidates),
        "baseline": metrics(m.originals_mask()),
        "all_candidates": metrics(m.all_mask()),
        "algorithms": {},
    }
    for algo, path in search_paths.items():
        with open(path) as fh:
            saved = json.load(fh)
        masks = [parse_mask(b, len(m.candidates)) for b in saved["improving_masks"] + [saved["mask"]]]
        chosen, _ = select_by_validation(masks, ev["validation"])
        entry["algorithms"][algo] = {
            "evaluations": saved["evaluations"],
            "search_mask": saved["mask"],
            "selected_mask": mask_to_bits(chosen),
            "n_selected": int(chosen.sum()),
            **metrics(chosen),
        }
    if entry["algorithms"]:
        entry["selected_algorithm"] = min(
            entry["algorithms"], key=lambda a: (entry["algorithms"][a]["validation"]["objective"], a))
    return entry


def _csv(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit_plots_csv(report, out_dir):
    """Write table.csv (success % per size x algorithm), fig3.csv (error split) and fig4.csv (traces)."""
    sizes = report["sizes"]
    algos = list(report["config"]["algorithms"])
    paths = {}

    rows = []
    for entry in sizes:
        row = [entry["size"], round(100 * entry["baseline"]["test"]["success"], 2)]
        row += [round(100 * entry["algorithms"][a]["test"]["success"], 2) for a in algos]
        rows.append(row)
    paths["table"] = os.path.join(out_dir, "table.csv")
    with open(paths["table"], "w") as fh:
        fh.write(_csv(rows, ["candidate_set_size", "baseline"] + algos))

    largest = max(sizes, key=lambda e: e["size"])
    rows = []
    named = [("baseline", largest["baseline"]), ("all_candidates", largest["all_candidates"])]
    named += [(a, largest["algorithms"][a]) for a in algos]
    for name, res in named:
        t = res["test"]
        rows.append([name, t["mdr"], t["mcr"], t["success"]])
    paths["fig3"] = os.path.join(out_dir, "fig3.csv")
    with open(paths["fig3"], "w") as fh:
        fh.write(_csv(rows, ["algorithm", "mdr", "mcr", "success"]))

    rows = []
    for a in algos:
        trace_csv = os.path.join(out_dir, "search", f"{a}_{largest['size']}_trace.csv")
        if not os.path.exists(trace_csv):
            continue
        with open(trace_csv) as fh:
            steps = list(csv.DictReader(fh))
        last = None
        for i, s in enumerate(steps):
            if s["best_objective"] != last or i == len(steps) - 1:
                rows.append([a, int(s["evaluations"]), float(s["best_objective"])])
                last = s["best_objective"]
    paths["fig4"] = os.path.join(out_dir, "fig4.csv")
    with open(paths["fig4"], "w") as fh:
        fh.write(_csv(rows, ["algorithm", "evaluations", "best_objective"]))
    return paths
