import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from csi_id.config import get_threads  # noqa: E402
from csi_id.csi import identify_csi  # noqa: E402
from csi_id.errors import ConfigError  # noqa: E402
from csi_id.estimand import is_identified  # noqa: E402
from csi_id.graph import CausalGraph, Context, VariableId, merge_vertices  # noqa: E402
from csi_id.identification import identify, latent_project  # noqa: E402
from csi_id.labels import ControlSpec, LabelSet  # noqa: E402

logger = logging.getLogger(__name__)

CONTROL_NAME = "C"
REPORT_COLUMNS = ['n', 'algorithm', 'mean_runtime_s', 'ci_low', 'ci_high', 'pct_identifiable']


def default_edge_probability(n: int) -> float:
    return math.log(n) / n


@dataclass(frozen=True)
class BenchConfig:
    """Parameters of the random-graph benchmark."""

    ns: Tuple[int, ...] = (30, 50, 100)
    repetitions: int = 200
    seed: int = 0
    p_observed: float = 0.7
    p_control: float = 0.8
    p_no_label: float = 0.2
    edge_probability: Callable[[int], float] = default_edge_probability
    timing: bool = True
    threads: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.ns:
            raise ConfigError("benchmark needs at least one graph size")
        for n in self.ns:
            if n < 3:
                raise ConfigError(f"graph size must be at least 3, got {n}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be at least 1, got {self.repetitions}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        for name in ('p_observed', 'p_control', 'p_no_label'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")


class BenchInstance(NamedTuple):
    graph: CausalGraph
    labels: LabelSet
    c_spec: ControlSpec
    treatment: Tuple[str, ...]
    outcome: Tuple[str, ...]


class InstanceResult(NamedTuple):
    n: int
    csi_identified: bool
    plain_identified: bool
    csi_runtime: float
    plain_runtime: float


@dataclass
class BenchReport:
    rows: pd.DataFrame
    results: List[InstanceResult]
    monotonicity_violations: int


def _random_dag(cfg: BenchConfig, n: int, rng: np.random.Generator) -> CausalGraph:
    p = min(1.0, max(0.0, cfg.edge_probability(n)))
    skeleton = np.triu(rng.random((n, n)) < p, k=1)
    rank = np.empty(n, dtype=int)
    rank[rng.permutation(n)] = np.arange(n)
    observed = rng.random(n) < cfg.p_observed

    names = [f"V{i}" for i in range(n)]
    edges = []
    for i, j in zip(*np.nonzero(skeleton)):
        a, b = (i, j) if rank[i] < rank[j] else (j, i)
        edges.append((names[a], names[b]))
    return CausalGraph([VariableId(name, 2, bool(observed[i])) for i, name in enumerate(names)], edges)


def random_instance(cfg: BenchConfig, n: int, seed: int) -> BenchInstance:
    """
    Draw one benchmark instance.

    An Erdős–Rényi skeleton is oriented by a random vertex order; observed
    roots become controls and are merged into one binary control C; edges
    into children of C get a label in one random context unless dropped;
    the remaining observed vertices are split into treatment and outcome.
    """
    rng = np.random.default_rng(seed)
    while True:
        g = _random_dag(cfg, n, rng)
        roots = g.observed_roots()
        picks = rng.random(len(roots)) < cfg.p_control
        controls = [r for r, picked in zip(roots, picks) if picked]

        if controls:
            g = merge_vertices(g, controls, CONTROL_NAME)
            c_spec = ControlSpec([CONTROL_NAME])
        else:
            c_spec = ControlSpec()

        labels = {c: [] for c in c_spec.contexts(g)}
        if controls:
            contexts = c_spec.contexts(g)
            for child in g.children(CONTROL_NAME):
                for parent in g.parents(child):
                    if parent == CONTROL_NAME:
                        continue
                    if rng.random() < cfg.p_no_label:
                        continue
                    labels[contexts[int(rng.integers(0, len(contexts)))]].append((parent, child))

        pool = [v for v in g.observed if v not in c_spec]
        if len(pool) < 2:
            continue
        while True:
            side = rng.random(len(pool)) < 0.5
            if side.any() and not side.all():
                break
        treatment = tuple(v for v, t in zip(pool, side) if t)
        outcome = tuple(v for v, t in zip(pool, side) if not t)
        return BenchInstance(g, LabelSet(labels), c_spec, treatment, outcome)


def _run_instance(cfg: BenchConfig, n: int, seed: int) -> InstanceResult:
    instance = random_instance(cfg, n, seed)

    start = time.perf_counter()
    labelled = identify_csi(instance.graph, instance.labels, instance.c_spec, instance.treatment, instance.outcome, threads=1)
    middle = time.perf_counter()
    plain = identify(latent_project(instance.graph), instance.treatment, instance.outcome)
    end = time.perf_counter()

    csi_time, plain_time = (middle - start, end - middle) if cfg.timing else (0.0, 0.0)
    logger.debug(f"n={n} seed={seed}: labelled {is_identified(labelled)} in {csi_time:.4f}s, plain {is_identified(plain)} in {plain_time:.4f}s")
    return InstanceResult(n, is_identified(labelled), is_identified(plain), csi_time, plain_time)


def _summarise(n: int, algorithm: str, runtimes: List[float], identified: List[bool]) -> dict:
    values = np.asarray(runtimes, dtype=float)
    return {
        'n': n,
        'algorithm': algorithm,
        'mean_runtime_s': round(float(values.mean()), 6),
        'ci_low': round(float(np.percentile(values, 10)), 6),
        'ci_high': round(float(np.percentile(values, 90)), 6),
        'pct_identifiable': round(100.0 * sum(identified) / len(identified), 4),
    }


def run_benchmark(cfg: BenchConfig) -> BenchReport:
    """
    Run both algorithms on `cfg.repetitions` random instances per size.

    Instance k (counted across all sizes) uses seed `cfg.seed ^ k`, so the
    worker count never changes the results.

    Args:
        cfg: Benchmark configuration

    Returns:
        Report with one row per (n, algorithm)
    """
    tasks = [(n, cfg.seed ^ index) for index, n in enumerate(n for n in cfg.ns for _ in range(cfg.repetitions))]
    workers = get_threads(cfg.threads)
    logger.info(f"Running {len(tasks)} benchmark instance(s) on {workers} worker(s)")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(lambda task: _run_instance(cfg, *task), tasks))
    else:
        results = [_run_instance(cfg, n, seed) for n, seed in tasks]

    rows = []
    for n in cfg.ns:
        batch = [r for r in results if r.n == n]
        rows.append(_summarise(n, 'csi', [r.csi_runtime for r in batch], [r.csi_identified for r in batch]))
        rows.append(_summarise(n, 'plain', [r.plain_runtime for r in batch], [r.plain_identified for r in batch]))

    violations = sum(1 for r in results if r.plain_identified and not r.csi_identified)
    if violations:
        logger.warning(f"{violations} instance(s) identifiable without labels but not with them")
    else:
        logger.info("Labelled identification succeeded wherever plain identification did")

    return BenchReport(pd.DataFrame(rows, columns=REPORT_COLUMNS), results, violations)


def plot_report(report: BenchReport, out_dir: str) -> List[str]:
    """
    Write runtime and identifiability panels as PNG files.

    Returns:
        Paths of the written images
    """
    os.makedirs(out_dir, exist_ok=True)
    df = report.rows
    written = []

    panels = [
        ('mean_runtime_s', 'mean runtime (s)', 'Runtime vs graph size', 'bench_runtime.png'),
        ('pct_identifiable', '% identifiable', 'Identifiable effects vs graph size', 'bench_identifiable.png'),
    ]
    for column, ylabel, title, filename in panels:
        plt.figure(figsize=(8, 5))
        for algorithm, marker, label in (('csi', 'o', 'with labels'), ('plain', 's', 'without labels')):
            part = df[df['algorithm'] == algorithm]
            plt.plot(part['n'], part[column], marker=marker, label=label)
            if column == 'mean_runtime_s':
                plt.fill_between(part['n'], part['ci_low'], part['ci_high'], alpha=0.2)
        plt.xlabel("number of vertices")
        plt.ylabel(ylabel)
        plt.title(title)
        plt.legend()
        plt.tight_layout()
        path = os.path.join(out_dir, filename)
        plt.savefig(path)
        plt.close()
        written.append(path)
        logger.info(f"Plot written to {path}")
    return written
