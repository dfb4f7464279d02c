"""Parameter-count and runtime scaling of NGNN, GGNN and EGNN on complete
graphs of growing size."""

from __future__ import annotations

import os
import statistics
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Tape, reduce_sum
from .corpus import Item, Outfit
from .errors import FitError
from .features import FeatureStore
from .graph import complete_graph
from .model import VARIANTS, CompatibilityModel, GraphBatch, ModelConfig, count_params
from .seeding import stream

DEFAULT_N_RANGE = range(2, 31)
DEFAULT_D = 12
DEFAULT_F = 32
WARMUP = 2


@dataclass(frozen=True)
class BenchRecord:
    variant: str
    n: int
    param_count: int         # closed form
    instantiated_params: int  # counted on a built model
    updated_params: int      # entries with a nonzero gradient after one step
    median_time: float       # seconds per forward+backward
    mean_time: float
    repetitions: int
    timer_resolution: float

    FIELDS = ("variant", "n", "param_count", "instantiated_params", "updated_params",
              "median_time", "mean_time", "repetitions", "timer_resolution")


@contextmanager
def _pinned():
    """Restrict the process to one CPU while timing, where the OS allows it."""
    if not hasattr(os, "sched_getaffinity"):
        yield
        return
    before = os.sched_getaffinity(0)
    try:
        os.sched_setaffinity(0, {min(before)})
    except OSError:
        yield
        return
    try:
        yield
    finally:
        os.sched_setaffinity(0, before)


def _toy_outfit(n: int) -> Outfit:
    return Outfit(f"bench{n}", tuple(Item(f"item{i}", f"c{i:03d}") for i in range(n)), "train")


def run_bench(n_range: Iterable[int] = DEFAULT_N_RANGE, d: int = DEFAULT_D, F: int = DEFAULT_F,
              repetitions: int = 5, seed: int = 0, variants: Sequence[str] = VARIANTS) -> list[BenchRecord]:
    if repetitions < 5:
        raise ValueError("repetitions must be at least 5")
    rng = stream(seed, "bench")
    resolution = time.get_clock_info("perf_counter").resolution
    records = []
    with _pinned():
        for n in n_range:
            graph = complete_graph(n)
            outfit = _toy_outfit(n)
            store = FeatureStore("visual", F, [it.item_id for it in outfit.items], rng.normal(size=(n, F)))
            feats = {"visual": store}
            for variant in variants:
                cfg = ModelConfig(d=d, T=3, variant=variant, modality="visual")
                model = CompatibilityModel.init(cfg, graph, {"visual": F}, rng)
                batch = GraphBatch.build([outfit], graph)
                params = [t for _, t in model.parameters()]

                def step():
                    with Tape() as tape:
                        loss = reduce_sum(model.forward(batch, feats).scores)
                    return tape.backward(loss)

                times = []
                for k in range(WARMUP + repetitions):
                    t0 = time.perf_counter()
                    grads = step()
                    dt = time.perf_counter() - t0
                    if k >= WARMUP:
                        times.append(dt)
                updated = sum(int(np.count_nonzero(grads[p])) for p in params)
                records.append(BenchRecord(
                    variant, n, count_params(cfg, n, graph.num_edges, F), model.num_parameters(), updated,
                    statistics.median(times), statistics.fmean(times), repetitions, resolution,
                ))
    return records


@dataclass(frozen=True)
class ScalingFit:
    linear: tuple[float, ...]     # highest power first, as numpy.polyfit
    quadratic: tuple[float, ...]
    r2_linear: float
    r2_quadratic: float
    verdict: str                  # "linear" or "quadratic"


def _r2(y: np.ndarray, pred: np.ndarray) -> float:
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ss_res / ss_tot


def fit_series(x: Sequence[float], y: Sequence[float], margin: float = 1e-3) -> ScalingFit:
    """Least-squares linear and quadratic fits of ``y`` against ``x``.

    The quadratic model wins only if its adjusted R^2 beats the linear one by
    more than ``margin``; exactly linear data therefore stays linear.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(np.unique(x)) < 5:
        raise FitError("need at least 5 distinct sizes to fit a scaling law")
    if np.allclose(y, y[0]):
        raise FitError("series is constant; nothing to fit")
    lin = np.polyfit(x, y, 1)
    quad = np.polyfit(x, y, 2)
    r2l = _r2(y, np.polyval(lin, x))
    r2q = _r2(y, np.polyval(quad, x))
    m = len(x)
    adj_l = 1 - (1 - r2l) * (m - 1) / (m - 2)
    adj_q = 1 - (1 - r2q) * (m - 1) / (m - 3)
    verdict = "quadratic" if adj_q - adj_l > margin else "linear"
    return ScalingFit(tuple(lin.tolist()), tuple(quad.tolist()), r2l, r2q, verdict)


def fit_scaling(records: Sequence[BenchRecord], field: str = "param_count") -> dict[str, ScalingFit]:
    """Fit ``field`` against n separately for each variant."""
    out = {}
    for variant in sorted({r.variant for r in records}):
        rows = sorted((r for r in records if r.variant == variant), key=lambda r: r.n)
        out[variant] = fit_series([r.n for r in rows], [getattr(r, field) for r in rows])
    return out


def edge_term(n: int, d: int = DEFAULT_D) -> int:
    """EGNN's per-edge matrix parameters on the complete graph with n nodes."""
    return n * (n - 1) * d * d


def write_records(records: Sequence[BenchRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(BenchRecord.FIELDS) + "\n")
        for r in records:
            row = asdict(r)
            fh.write("\t".join(f"{row[k]:.9g}" if isinstance(row[k], float) else str(row[k])
                               for k in BenchRecord.FIELDS) + "\n")


def write_gnuplot(records: Sequence[BenchRecord], path) -> None:
    """One data block per variant (select with ``index``): n, parameters, median seconds."""
    with open(path, "w", encoding="utf-8") as fh:
        for variant in sorted({r.variant for r in records}):
            fh.write(f"# {variant}\n# n\tparam_count\tmedian_time\n")
            for r in sorted((r for r in records if r.variant == variant), key=lambda r: r.n):
                fh.write(f"{r.n}\t{r.param_count}\t{r.median_time:.9g}\n")
            fh.write("\n\n")
