"""Attack campaigns over a dataset: candidate providers, metrics, sweeps."""

from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..attack import AttackParams, Candidate, attack_with_exploration
from ..constraints import L0, PerturbationConstraint
from ..dictionary import HierarchicalDictionary, random_pool
from ..oracle import Oracle, OracleError
from ..rpca import ImageDecomposition, RpcaConfig, decompose_image
from .dataset import DatasetManifest, filter_correct

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    constraint: PerturbationConstraint
    alpha: float = 0.05
    max_iter: int = 20
    explore: int = 100
    mode: str = "R"
    dict_path: str | None = None
    seed: int = 0
    parallelism: int = 1
    clip_pixels: bool = True
    verify_clean: bool = False
    strict: bool = False
    oracle: str = ""
    rpca: RpcaConfig = field(default_factory=RpcaConfig)

    def __post_init__(self):
        if self.mode not in ("R", "D"):
            raise ConfigError(f"mode must be R or D, got {self.mode!r}")
        if self.explore < 1:
            raise ConfigError("explore budget must be >= 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        try:
            self.attack_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def attack_params(self) -> AttackParams:
        return AttackParams(self.constraint, self.alpha, self.max_iter, self.clip_pixels)

    def describe(self) -> dict:
        c = self.constraint
        return {
            "oracle": self.oracle,
            "norm": c.norm,
            "budget": c.budget,
            "alpha": self.alpha,
            "max_iter": self.max_iter,
            "explore": self.explore,
            "mode": self.mode,
            "seed": self.seed,
            "clip_pixels": self.clip_pixels,
            "verify_clean": self.verify_clean,
            "rpca": asdict(self.rpca),
        }


@dataclass
class ReportRow:
    sample_id: str
    label: int
    success: bool
    queries: int
    j: int
    l0: float | None = None
    l2: float | None = None
    linf: float | None = None
    initial_sample_id: str | None = None
    l2_vs_input: float | None = None
    linf_vs_input: float | None = None
    within_budget: bool | None = None
    lsd_converged: bool = True
    errored: bool = False
    error: str | None = None


@dataclass
class DictionarySummaryEntry:
    sample_id: str
    label: int
    score: int
    mean_queries: float | None


@dataclass
class CampaignReport:
    config: dict
    rows: list[ReportRow]
    dataset_size: int
    fr: float
    aq: float | None
    oracle_queries: int
    clean_check_queries: int = 0
    excluded_misclassified: int = 0
    errored: int = 0
    norm_stats: dict = field(default_factory=dict)
    dictionary_top: list[DictionarySummaryEntry] = field(default_factory=list)

    @property
    def mode(self) -> str:
        return self.config.get("mode", "R")

    @property
    def successes(self) -> int:
        return sum(r.success for r in self.rows)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignReport":
        names = {f.name for f in fields(cls)}
        missing = names - set(data) - {"clean_check_queries", "excluded_misclassified", "errored",
                                       "norm_stats", "dictionary_top"}
        if missing:
            raise ValueError(f"report is missing fields {sorted(missing)}")
        kw = {k: v for k, v in data.items() if k in names}
        kw["rows"] = [ReportRow(**r) for r in data["rows"]]
        kw["dictionary_top"] = [DictionarySummaryEntry(**e) for e in data.get("dictionary_top", [])]
        return cls(**kw)


def fooling_rate(successes: int, dataset_size: int) -> float:
    return successes / dataset_size if dataset_size else 0.0


def average_queries(rows: list[ReportRow]) -> float | None:
    """Mean queries over successful attacks; ``None`` when there are none."""
    q = [r.queries for r in rows if r.success]
    return float(np.mean(q)) if q else None


def _norm_stats(rows: list[ReportRow]) -> dict:
    out = {}
    wins = [r for r in rows if r.success]
    for name in ("l0", "l2", "linf"):
        vals = [getattr(r, name) for r in wins]
        out[name] = {"mean": float(np.mean(vals)), "median": float(np.median(vals)),
                     "max": float(np.max(vals))} if vals else None
    return out


class DecompositionCache:
    """Thread-safe ``sample_id -> ImageDecomposition`` memo; reusable across campaigns."""

    def __init__(self, rpca: RpcaConfig | None = None):
        self.rpca = rpca
        self._store: dict[str, ImageDecomposition] = {}
        self._lock = threading.Lock()
        self.computed = 0

    def __call__(self, sample_id, image) -> ImageDecomposition:
        with self._lock:
            hit = self._store.get(sample_id)
        if hit is not None:
            return hit
        lsd = decompose_image(image, self.rpca)
        with self._lock:
            self._store.setdefault(sample_id, lsd)
            self.computed += 1
            return self._store[sample_id]


def _image_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def run_campaign(cfg: CampaignConfig, data: DatasetManifest, oracle: Oracle,
                 dictionary: HierarchicalDictionary | None = None,
                 cache: DecompositionCache | None = None) -> CampaignReport:
    """Attack every image of ``data`` and aggregate fooling rate and query statistics.

    Mode ``D`` uses ``dictionary`` when given, otherwise loads (or creates)
    ``cfg.dict_path`` and saves it back afterwards. Mode ``R`` never touches
    a dictionary. The candidate order for image ``n`` depends only on
    ``(cfg.seed, n)`` and, in mode ``D``, the dictionary state.
    """
    params = cfg.attack_params()
    clean_queries = 0
    excluded = 0
    if cfg.verify_clean:
        before = len(data)
        data, clean_queries = filter_correct(data, oracle)
        excluded = before - len(data)

    own_dict_file = False
    if cfg.mode == "D" and dictionary is None:
        if not cfg.dict_path:
            raise ConfigError("mode D requires a dictionary path")
        path = Path(cfg.dict_path)
        dictionary = HierarchicalDictionary.load(path) if path.exists() else HierarchicalDictionary(cfg.seed)
        own_dict_file = True
    if cfg.mode == "R":
        dictionary = None

    cache = cache or DecompositionCache(cfg.rpca)
    samples = data.samples
    by_id = data.by_id()
    allowed = set(by_id)
    dict_lock = threading.Lock()
    start_total = oracle.read_counter().total

    def attack_one(index: int) -> ReportRow:
        target = samples[index]
        pool = [(s.sample_id, s.label) for s in samples if s.label != target.label]
        pool_iter = random_pool(pool, _image_rng(cfg.seed, index))
        if dictionary is None:
            chosen = []
            for item in pool_iter:
                if len(chosen) >= cfg.explore:
                    break
                chosen.append(item)
        else:
            chosen = dictionary.next_candidates(target.label, cfg.explore, pool_iter, allowed=allowed)
        candidates = [Candidate(sid, by_id[sid].image, label) for sid, label in chosen]

        scoped = oracle.scoped()
        try:
            out = attack_with_exploration(target.image, target.label, candidates, cfg.explore, scoped,
                                          params, decomposer=cache, target_id=target.sample_id)
        except OracleError as exc:
            if cfg.strict:
                raise
            logger.error("oracle failure on %s: %s", target.sample_id, exc)
            used = scoped.read_counter().per_attack
            return ReportRow(target.sample_id, target.label, False, used, used // params.max_iter,
                             errored=True, error=str(exc))

        if out.queries_used != scoped.read_counter().per_attack:
            raise AssertionError(f"query accounting mismatch on {target.sample_id}")
        if out.success and dictionary is not None:
            sid = out.initial_sample_id
            with dict_lock:
                dictionary.record_success(sid, by_id[sid].label, target.label)
        row = ReportRow(target.sample_id, target.label, out.success, out.queries_used,
                        out.unsuccessful_attempts, initial_sample_id=out.initial_sample_id,
                        lsd_converged=out.lsd_converged)
        if out.success:
            row.l0, row.l2, row.linf = out.norms.l0, out.norms.l2, out.norms.linf
            row.l2_vs_input, row.linf_vs_input = out.norms_vs_input.l2, out.norms_vs_input.linf
            row.within_budget = out.within_budget
        return row

    if cfg.parallelism == 1:
        rows = [attack_one(n) for n in range(len(samples))]
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            rows = list(pool.map(attack_one, range(len(samples))))

    used = oracle.read_counter().total - start_total
    if own_dict_file:
        dictionary.save(cfg.dict_path)

    successes = sum(r.success for r in rows)
    report = CampaignReport(
        config=cfg.describe(),
        rows=rows,
        dataset_size=len(samples),
        fr=fooling_rate(successes, len(samples)),
        aq=average_queries(rows),
        oracle_queries=used,
        clean_check_queries=clean_queries,
        excluded_misclassified=excluded,
        errored=sum(r.errored for r in rows),
        norm_stats=_norm_stats(rows),
    )
    if dictionary is not None:
        report.dictionary_top = _dictionary_top(dictionary, rows, 10)
    return report


def _dictionary_top(dictionary: HierarchicalDictionary, rows: list[ReportRow], n: int) -> list[DictionarySummaryEntry]:
    out = []
    for e in dictionary.top(n):
        q = [r.queries for r in rows if r.success and r.initial_sample_id == e.sample_id]
        out.append(DictionarySummaryEntry(e.sample_id, e.label, e.score, float(np.mean(q)) if q else None))
    return out


@dataclass
class DictionaryStats:
    entries: list[dict]
    total_successes: int
    top1_share: float | None
    top5_share: float | None
    note: str | None = None


def dictionary_stats(report: CampaignReport) -> DictionaryStats:
    """Per initial-sample success counts and mean queries, most successful first."""
    if report.mode != "D":
        return DictionaryStats([], 0, None, None, note="campaign ran in mode R; no dictionary statistics")
    groups: dict[str, list[int]] = {}
    for r in report.rows:
        if r.success and r.initial_sample_id is not None:
            groups.setdefault(r.initial_sample_id, []).append(r.queries)
    entries = [{"sample_id": sid, "successes": len(q), "mean_queries": float(np.mean(q))}
               for sid, q in groups.items()]
    entries.sort(key=lambda e: (-e["successes"], e["mean_queries"], e["sample_id"]))
    total = sum(e["successes"] for e in entries)
    if not total:
        return DictionaryStats([], 0, None, None, note="no successful attacks")
    for e in entries:
        e["share"] = e["successes"] / total
    top5 = sum(e["successes"] for e in entries[:5]) / total
    return DictionaryStats(entries, total, entries[0]["share"], top5)


def l0_budget_for_rate(rate: float, coordinates: int) -> int:
    """``round(rate% * coordinates)`` rounding half up, at least one coordinate."""
    if not 0 < rate <= 100:
        raise ConfigError(f"perturbation rate must lie in (0, 100], got {rate}")
    return max(1, min(coordinates, math.floor(rate / 100.0 * coordinates + 0.5)))


@dataclass
class SweepResult:
    rates: list[float]
    budgets: list[int]
    reports: list[CampaignReport]

    @property
    def fooling_rates(self) -> list[float]:
        return [r.fr for r in self.reports]

    @property
    def fr_non_decreasing(self) -> bool:
        fr = self.fooling_rates
        return all(b >= a for a, b in zip(fr, fr[1:]))


def sweep_l0(cfg: CampaignConfig, data: DatasetManifest, oracle: Oracle, rates,
             cache: DecompositionCache | None = None) -> SweepResult:
    """One campaign per perturbation rate with ``k`` derived from the image size.

    Each rate starts from an empty in-memory dictionary in mode ``D`` so the
    rates stay comparable.
    """
    if not len(data):
        raise ConfigError("cannot sweep an empty dataset")
    coords = data.samples[0].image.size
    cache = cache or DecompositionCache(cfg.rpca)
    rates = [float(r) for r in rates]
    budgets, reports = [], []
    for rate in rates:
        k = l0_budget_for_rate(rate, coords)
        sub = CampaignConfig(**{**_shallow(cfg), "constraint": L0(k), "dict_path": None})
        d = HierarchicalDictionary(cfg.seed) if cfg.mode == "D" else None
        reports.append(run_campaign(sub, data, oracle, dictionary=d, cache=cache))
        budgets.append(k)
    return SweepResult(rates, budgets, reports)


def _shallow(cfg: CampaignConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}
