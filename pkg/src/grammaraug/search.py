"""Subset search over the candidate grammar set.

All algorithms see the problem only through :class:`~.evaluation.Evaluator`;
none of them touches a posteriorgram.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .evaluation import Evaluator, ScoreMatrix


@dataclass(frozen=True)
class SearchConfig:
    alpha: float = 0.001
    beta: float = 1.0
    beam_width: int = 5
    cem_population: int = 100
    cem_elite_fraction: float = 0.1
    cem_iterations: int = 50
    cem_initial_mean: float = 0.0
    cem_initial_stddev: float = 1.0
    cem_smoothing: float = 0.7
    rng_seed: int = 0
    eval_budget: int | None = None
    split: str | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.cem_population < 2:
            raise ValueError("cem_population must be >= 2")
        if not 0 < self.cem_elite_fraction < 1:
            raise ValueError("cem_elite_fraction must lie in (0, 1)")
        if self.cem_elite_fraction * self.cem_population < 1:
            raise ValueError("elite set would be empty")
        if not 0 <= self.cem_smoothing <= 1:
            raise ValueError("cem_smoothing must lie in [0, 1]")
        if self.cem_initial_stddev < 0:
            raise ValueError("cem_initial_stddev must be >= 0")

    @property
    def n_elite(self):
        return max(1, math.ceil(self.cem_elite_fraction * self.cem_population - 1e-9))


@dataclass(frozen=True)
class TraceStep:
    evaluations: int
    best_objective: float
    best_mask: np.ndarray


@dataclass
class SearchTrace:
    algorithm: str
    steps: list = field(default_factory=list)
    mask: np.ndarray = None
    result: object = None
    baseline: object = None
    stop_reason: str = ""

    @property
    def evaluations(self):
        return len(self.steps)

    def improving_masks(self):
        """Distinct best-so-far masks in order of discovery."""
        out, last = [], None
        for s in self.steps:
            if s.best_mask is not last:
                out.append(s.best_mask)
                last = s.best_mask
        return out

    def to_csv(self):
        lines = ["evaluations,best_objective"]
        lines += [f"{s.evaluations},{s.best_objective!r}" for s in self.steps]
        return "\n".join(lines) + "\n"


class BudgetExhausted(Exception):
    pass


class _Tracker:
    """Caches results per mask and records one trace step per fresh evaluation."""

    def __init__(self, ev, name, budget):
        self.ev = ev
        self.budget = budget
        self.cache = {}
        self.trace = SearchTrace(name)
        self.best = None  # (objective, mask, result)

    def reference(self, mask):
        """Evaluate the starting grammar without charging the budget."""
        res = self.ev.evaluate(mask, count=False)
        self.cache[mask.tobytes()] = res
        self.best = (res.objective, mask, res)
        self.trace.baseline = res
        return res

    def __call__(self, mask):
        key = mask.tobytes()
        res = self.cache.get(key)
        if res is not None:
            return res
        if self.budget is not None and len(self.trace.steps) >= self.budget:
            raise BudgetExhausted
        res = self.ev.evaluate(mask)
        self.cache[key] = res
        if self.best is None or res.objective < self.best[0]:
            self.best = (res.objective, mask.copy(), res)
        self.trace.steps.append(TraceStep(len(self.trace.steps) + 1, self.best[0], self.best[1]))
        return res

    def finish(self, mask, result, reason):
        self.trace.mask = mask
        self.trace.result = result
        self.trace.stop_reason = reason
        return self.trace


def _evaluator(m, cfg):
    if isinstance(m, Evaluator):
        return m
    if isinstance(m, ScoreMatrix):
        return Evaluator(m, cfg.split, cfg.alpha, cfg.beta)
    raise TypeError(f"expected a ScoreMatrix or Evaluator, got {type(m).__name__}")


def _free_indices(ev):
    free = np.ones(ev.size, dtype=bool)
    free[ev.originals] = False
    return np.flatnonzero(free)


def is_subsequence(needle, haystack):
    it = iter(haystack)
    return all(ch in it for ch in needle)


def _greedy(m, cfg, refine):
    ev = _evaluator(m, cfg)
    name = "refined" if refine else "greedy"
    track = _Tracker(ev, name, cfg.eval_budget)
    texts = ev.matrix.candidates.texts
    cur = ev.originals_mask()
    cur_res = track.reference(cur)
    pool = list(_free_indices(ev))
    reason = "pool exhausted"
    try:
        while pool:
            best_i, best_res = None, None
            for i in pool:
                trial = cur.copy()
                trial[i] = True
                res = track(trial)
                if best_res is None or res.objective < best_res.objective:
                    best_i, best_res = i, res
            if not best_res.objective < cur_res.objective:
                reason = "no improving candidate"
                break
            cur = cur.copy()
            cur[best_i] = True
            cur_res = best_res
            pool.remove(best_i)
            if refine:
                added = texts[best_i]
                pool = [j for j in pool if not is_subsequence(added, texts[j])]
    except BudgetExhausted:
        reason = "evaluation budget"
    return track.finish(cur, cur_res, reason)


def greedy_search(m, cfg=SearchConfig()):
    """Add the single best candidate per round until nothing strictly improves."""
    return _greedy(m, cfg, refine=False)


def greedy_search_refined(m, cfg=SearchConfig()):
    """Greedy search that also drops pool entries containing the added text as a subsequence."""
    return _greedy(m, cfg, refine=True)


def beam_search(m, cfg=SearchConfig()):
    """Keep the ``beam_width`` best masks; expand each by one candidate per iteration.

    Incumbents win ties against new masks, so with width 1 this reduces to
    :func:`greedy_search`.
    """
    ev = _evaluator(m, cfg)
    track = _Tracker(ev, "beam", cfg.eval_budget)
    start = ev.originals_mask()
    beam = [(track.reference(start), start)]
    free = _free_indices(ev)
    reason = "search space exhausted"
    try:
        while True:
            pool = [(res.objective, rank, res, mask) for rank, (res, mask) in enumerate(beam)]
            seen = {mask.tobytes() for _, mask in beam}
            order = len(beam)
            for _, mask in beam:
                for i in free:
                    if mask[i]:
                        continue
                    trial = mask.copy()
                    trial[i] = True
                    key = trial.tobytes()
                    if key in seen:
                        continue
                    seen.add(key)
                    res = track(trial)
                    pool.append((res.objective, order, res, trial))
                    order += 1
            pool.sort(key=lambda p: (p[0], p[1]))
            new_beam = [(res, mask) for _, _, res, mask in pool[: cfg.beam_width]]
            if [mk.tobytes() for _, mk in new_beam] == [mk.tobytes() for _, mk in beam]:
                reason = "no beam member improved"
                break
            beam = new_beam
    except BudgetExhausted:
        reason = "evaluation budget"
    best_res, best_mask = min(beam, key=lambda b: b[0].objective)
    return track.finish(best_mask, best_res, reason)


def _cem_rng(seed, iteration):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(iteration,)))


def cem_search(m, cfg=SearchConfig()):
    """Cross-entropy method over sign patterns of independent Gaussians.

    Candidate i is included when its Gaussian sample is positive; originals
    are always included. Each iteration refits per-dimension mean and
    variance to the elite samples, blended with the previous parameters.
    """
    ev = _evaluator(m, cfg)
    track = _Tracker(ev, "cem", cfg.eval_budget)
    free = _free_indices(ev)
    base = ev.originals_mask()
    if free.size == 0:
        res = track(base)
        return track.finish(base, res, "no free candidates")

    mean = np.full(free.size, float(cfg.cem_initial_mean))
    var = np.full(free.size, float(cfg.cem_initial_stddev) ** 2)
    lam = cfg.cem_smoothing
    reason = "iteration limit"
    try:
        for it in range(cfg.cem_iterations):
            z = _cem_rng(cfg.rng_seed, it).standard_normal((cfg.cem_population, free.size))
            x = mean + np.sqrt(var) * z
            objectives = np.empty(cfg.cem_population)
            for k in range(cfg.cem_population):
                mask = base.copy()
                mask[free] = x[k] > 0
                objectives[k] = track(mask).objective
            elite = np.argsort(objectives, kind="stable")[: cfg.n_elite]
            mean = (1 - lam) * mean + lam * x[elite].mean(axis=0)
            var = (1 - lam) * var + lam * x[elite].var(axis=0)
            if var.max() < 1e-12:
                reason = f"variance collapse after iteration {it + 1}"
                break
    except BudgetExhausted:
        reason = "evaluation budget"
    _, best_mask, best_res = track.best
    return track.finish(best_mask, best_res, reason)


EXHAUSTIVE_LIMIT = 20


def exhaustive_search(m, cfg=SearchConfig()):
    """Evaluate every superset of the originals; ties go to the lowest mask integer."""
    ev = _evaluator(m, cfg)
    free = _free_indices(ev)
    if free.size > EXHAUSTIVE_LIMIT:
        raise ValueError(f"{free.size} free candidates exceeds the exhaustive limit of {EXHAUSTIVE_LIMIT}")
    track = _Tracker(ev, "exhaustive", None)
    base = ev.originals_mask()
    bits = (np.arange(2 ** free.size)[:, None] >> np.arange(free.size)) & 1
    for row in bits:
        mask = base.copy()
        mask[free] = row.astype(bool)
        track(mask)
    _, best_mask, best_res = track.best
    return track.finish(best_mask, best_res, "enumerated")


ALGORITHMS = {
    "greedy": greedy_search,
    "refined": greedy_search_refined,
    "beam": beam_search,
    "cem": cem_search,
    "exhaustive": exhaustive_search,
}


def run_search(name, m, cfg=SearchConfig()):
    try:
        fn = ALGORITHMS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}") from None
    return fn(m, cfg)
