"""Deterministic simulator of tiered task decomposition and load balancing.

Models the distributed execution of an occluded multiply: the convolution
space down to chunk granularity lives in per-tier 3-D task arrays whose
records are enabled or disabled tier by tier (disabled records persist
and keep receiving tier broadcasts, which makes the cubic notification
prefactor measurable).  Enabled chunk tasks carry costs derived from a
census of their subtree, matrix chares carry stored-byte sizes, and a
bulk-synchronous three-phase model (occlude, multiply, store) turns an
assignment into per-PE busy times, message counts, and a makespan.

Balancers: deterministic static placement (block or round robin) and a
persistence-based greedy pass that replays measured task costs from a
prior simulated iteration, placing heavy tasks first on the PE with the
best busy-minus-colocation score, then migrating matrix chares toward
their consumers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .kernel import ProductStats, _gemm_batch, _make_stats, _sweep
from .quadtree import QuadTreeMatrix

__all__ = ["CostModel", "ChareGraph", "Assignment", "SimReport", "AmdahlFit",
           "build_chare_graph", "assign_static", "greedy_comm_balance",
           "simulate_iteration", "parallel_efficiency", "amdahl_fit",
           "calibrate_cost_model", "DEFAULT_COMM_WEIGHT"]

DEFAULT_COMM_WEIGHT = 1e-9  # seconds credited per colocated byte


@dataclass
class CostModel:
    """Linear cost coefficients for the bulk-synchronous phase model."""

    per_flop_seconds: float = 2.5e-10
    per_message_seconds: float = 1e-6
    per_byte_seconds: float = 1e-9
    phase_overhead_seconds: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "per_flop_seconds": self.per_flop_seconds,
            "per_message_seconds": self.per_message_seconds,
            "per_byte_seconds": self.per_byte_seconds,
            "phase_overhead_seconds": self.phase_overhead_seconds,
        }


@dataclass
class ChareGraph:
    """Tiered task records plus matrix-chare byte sizes for one multiply."""

    tau: float
    block_size: int
    chunk_size: int
    t_c: int                     # chunk tier; leaf tasks live here
    depth: int                   # full quadtree depth of the operands
    enabled: list                # per tier t: bool array (2^t, 2^t, 2^t)
    cost_flops: np.ndarray       # float array (2^t_c,)*3, 0 where disabled
    bytes_a: list                # per tier t: int array (2^t, 2^t)
    bytes_b: list
    bytes_c: list
    census: ProductStats = None

    def side(self, t: int) -> int:
        return 1 << t

    @property
    def enabled_leaf_count(self) -> int:
        return int(self.enabled[self.t_c].sum())

    def enabled_leaf_tasks(self):
        """(i, k, j) index arrays of enabled chunk-tier tasks."""
        return np.nonzero(self.enabled[self.t_c])

    def enabled_task_ids(self) -> list:
        """All enabled task ids, tier-major then linear order."""
        ids = []
        for t in range(self.t_c + 1):
            ii, kk, jj = np.nonzero(self.enabled[t])
            ids.extend(("conv", t, int(i), int(k), int(j))
                       for i, k, j in zip(ii, kk, jj))
        return ids

    def chare_ids(self) -> list:
        ids = []
        for name in ("A", "B", "C"):
            for t in range(self.t_c + 1):
                s = self.side(t)
                ids.extend((name, t, i, j) for i in range(s) for j in range(s))
        return ids

    def comm_edges(self):
        """(task_id, chare_id, bytes) for every enabled leaf task."""
        ii, kk, jj = self.enabled_leaf_tasks()
        t = self.t_c
        edges = []
        for i, k, j in zip(ii, kk, jj):
            task = ("conv", t, int(i), int(k), int(j))
            edges.append((task, ("A", t, int(i), int(k)),
                          int(self.bytes_a[t][i, k])))
            edges.append((task, ("B", t, int(k), int(j)),
                          int(self.bytes_b[t][k, j])))
            edges.append((task, ("C", t, int(i), int(j)),
                          int(self.bytes_c[t][i, j])))
        return edges


@dataclass
class Assignment:
    """PE placement for enabled tasks and matrix chares.

    Disabled records never migrate; their (deterministic) placement comes
    from the static strategy recorded here.
    """

    P: int
    pe_of: dict
    strategy: str = "block"

    def record_pe(self, linear: np.ndarray, tier_records: int) -> np.ndarray:
        """Static placement of raw records by linear index within a tier."""
        if self.strategy == "round_robin":
            return linear % self.P
        return (linear * self.P) // tier_records


@dataclass
class SimReport:
    """Outcome of one simulated iteration under a fixed assignment."""

    per_pe_busy: list            # multiply-phase compute seconds per PE
    makespan: float
    total_messages: int
    cross_pe_messages: int
    phase_breakdown: dict
    task_costs: dict = field(default_factory=dict, repr=False)
    assignment: Assignment = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        return {
            "per_pe_busy": [float(b) for b in self.per_pe_busy],
            "makespan": self.makespan,
            "total_messages": int(self.total_messages),
            "cross_pe_messages": int(self.cross_pe_messages),
            "phase_breakdown": dict(self.phase_breakdown),
        }


@dataclass
class AmdahlFit:
    """Serial/parallel split T(P) = t_s + t_p / P with break-even count."""

    t_s: float
    t_p: float
    p_even: float
    clamped: bool = False

    def to_json_dict(self) -> dict:
        return {"t_s": self.t_s, "t_p": self.t_p, "p_even": self.p_even,
                "clamped": self.clamped}


def _pool_counts(leaf_counts: np.ndarray) -> list:
    """Sum a leaf-grid count array up the tiers; returns [tier 0, ..., leaf]."""
    tiers = [leaf_counts]
    while tiers[0].shape[0] > 1:
        g = tiers[0]
        half = g.shape[0] // 2
        tiers.insert(0, g.reshape(half, 2, half, 2).sum(axis=(1, 3)))
    return tiers


def build_chare_graph(a: QuadTreeMatrix, b: QuadTreeMatrix, tau: float,
                      chunk_size: int | None = None) -> ChareGraph:
    """Tier-by-tier occlusion over dense task arrays down to chunk level.

    Records for occluded tasks are kept (enabled=False) rather than
    dropped.  Each enabled chunk task gets the flop count of the leaf
    products retained inside its subtree, from the same census the
    multiply kernel would report.
    """
    if (a.n_native, a.n_padded, a.block_size) != (b.n_native, b.n_padded, b.block_size):
        raise ValueError("operand shape/blocking mismatch")
    nc = a.chunk_size if chunk_size is None else int(chunk_size)
    t_c = a.chunk_tier(nc)

    enabled = []
    for t in range(t_c + 1):
        na = a._tier_norms[t]
        nb_ = b._tier_norms[t]
        passing = na[:, :, None] * nb_[None, :, :] > tau
        if t == 0:
            enabled.append(passing)
        else:
            parent = enabled[t - 1].repeat(2, 0).repeat(2, 1).repeat(2, 2)
            enabled.append(parent & passing)

    visited, culled, ti, tk, tj = _sweep(a._tier_norms, b._tier_norms, tau)
    census = _make_stats(tau, visited, culled, len(ti), a.block_size, 0.0)

    side = 1 << t_c
    shift = a.depth - t_c
    anc = ((ti >> shift) * side + (tk >> shift)) * side + (tj >> shift)
    counts = np.bincount(anc, minlength=side ** 3).reshape(side, side, side)
    cost_flops = counts.astype(np.float64) * (2 * a.block_size ** 3)

    block_bytes = 8 * a.block_size ** 2
    nb = a.n_blocks
    leaf_a = np.zeros((nb, nb), dtype=np.int64)
    leaf_a.reshape(-1)[a._block_keys] = 1
    leaf_b = np.zeros((nb, nb), dtype=np.int64)
    leaf_b.reshape(-1)[b._block_keys] = 1
    leaf_c = np.zeros((nb, nb), dtype=np.int64)
    if len(ti):
        leaf_c.reshape(-1)[np.unique(ti * nb + tj)] = 1
    bytes_a = [g * block_bytes for g in _pool_counts(leaf_a)[:t_c + 1]]
    bytes_b = [g * block_bytes for g in _pool_counts(leaf_b)[:t_c + 1]]
    bytes_c = [g * block_bytes for g in _pool_counts(leaf_c)[:t_c + 1]]

    return ChareGraph(tau=float(tau), block_size=a.block_size, chunk_size=nc,
                      t_c=t_c, depth=a.depth, enabled=enabled,
                      cost_flops=cost_flops, bytes_a=bytes_a, bytes_b=bytes_b,
                      bytes_c=bytes_c, census=census)


def assign_static(graph: ChareGraph, P: int, strategy: str = "block") -> Assignment:
    """Deterministic placement of all enabled tasks and matrix chares."""
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    if strategy not in ("block", "round_robin"):
        raise ValueError(f"strategy must be 'block' or 'round_robin', got {strategy!r}")
    pe_of = {}
    tasks = graph.enabled_task_ids()
    for idx, task in enumerate(tasks):
        pe_of[task] = idx % P if strategy == "round_robin" else (idx * P) // len(tasks)
    chares = graph.chare_ids()
    for idx, chare in enumerate(chares):
        pe_of[chare] = idx % P if strategy == "round_robin" else (idx * P) // len(chares)
    return Assignment(P=P, pe_of=pe_of, strategy=strategy)


def greedy_comm_balance(graph: ChareGraph, prior_report: SimReport, P: int,
                        comm_weight: float = DEFAULT_COMM_WEIGHT) -> Assignment:
    """Persistence-based rebalance from a prior iteration's measured costs.

    Leaf tasks are placed in descending measured-cost order, each on the
    PE minimizing projected busy time minus ``comm_weight`` times the
    bytes of its chares already resident there (ties to the lowest PE).
    Leaf matrix chares then migrate to the PE holding the most consumer
    bytes.  Coarser-tier records keep their prior placement.
    """
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    prior = prior_report.assignment
    pe_of = dict(prior.pe_of) if prior is not None else {}
    if prior is not None and prior.P != P:
        # Fold stale PE indices into range; deterministic.
        pe_of = {key: pe % P for key, pe in pe_of.items()}

    t = graph.t_c
    ii, kk, jj = graph.enabled_leaf_tasks()
    tasks = []
    for i, k, j in zip(ii, kk, jj):
        task = ("conv", t, int(i), int(k), int(j))
        cost = prior_report.task_costs.get(task, 0.0)
        tasks.append((task, cost))
    tasks.sort(key=lambda item: (-item[1], item[0]))

    chare_pe = {}
    for name, grid in (("A", graph.bytes_a[t]), ("B", graph.bytes_b[t]),
                       ("C", graph.bytes_c[t])):
        s = grid.shape[0]
        for i in range(s):
            for j in range(s):
                cid = (name, t, i, j)
                chare_pe[cid] = pe_of.get(cid, 0)

    busy = np.zeros(P)
    for (task, cost) in tasks:
        _, _, i, k, j = task
        reads = ((("A", t, i, k), int(graph.bytes_a[t][i, k])),
                 (("B", t, k, j), int(graph.bytes_b[t][k, j])),
                 (("C", t, i, j), int(graph.bytes_c[t][i, j])))
        best_pe, best_score = 0, None
        for pe in range(P):
            colocated = sum(nbytes for cid, nbytes in reads if chare_pe[cid] == pe)
            score = busy[pe] - comm_weight * colocated
            if best_score is None or score < best_score:
                best_pe, best_score = pe, score
        pe_of[task] = best_pe
        busy[best_pe] += cost

    # Migrate leaf matrix chares toward their consumers.  A and B chares go
    # to the PE reading the most bytes (fetches are charged to readers); C
    # chares, whose incoming stores serialize on their host, are spread over
    # their consumer PEs in descending-load order to avoid reduction
    # hotspots.
    consumer_load = {}
    c_load = {}
    for i, k, j in zip(ii, kk, jj):
        pe = pe_of[("conv", t, int(i), int(k), int(j))]
        for cid, nbytes in ((("A", t, int(i), int(k)), graph.bytes_a[t][i, k]),
                            (("B", t, int(k), int(j)), graph.bytes_b[t][k, j]),
                            (("C", t, int(i), int(j)), graph.bytes_c[t][i, j])):
            load = float(nbytes) + 1.0  # one message per edge, even if empty
            tally = consumer_load.setdefault(cid, np.zeros(P))
            tally[pe] += load
            if cid[0] == "C":
                c_load[cid] = c_load.get(cid, 0.0) + load
    for cid, tally in consumer_load.items():
        if cid[0] != "C":
            pe_of[cid] = int(np.argmax(tally))
    store_busy = np.zeros(P)
    for cid in sorted(c_load, key=lambda c: (-c_load[c], c)):
        candidates = np.flatnonzero(consumer_load[cid] > 0)
        pe = int(candidates[np.argmin(store_busy[candidates])])
        pe_of[cid] = pe
        store_busy[pe] += c_load[cid]

    strategy = prior.strategy if prior is not None else "block"
    return Assignment(P=P, pe_of=pe_of, strategy=strategy)


def _tier_record_pes(graph: ChareGraph, assignment: Assignment, t: int) -> np.ndarray:
    """PE of every record (enabled or not) at tier t, as a flat array."""
    s = graph.side(t)
    n = s ** 3
    pes = assignment.record_pe(np.arange(n, dtype=np.int64), n)
    ii, kk, jj = np.nonzero(graph.enabled[t])
    for i, k, j in zip(ii, kk, jj):
        pe = assignment.pe_of.get(("conv", t, int(i), int(k), int(j)))
        if pe is not None:
            pes[(i * s + k) * s + j] = pe
    return pes


def simulate_iteration(graph: ChareGraph, assignment: Assignment,
                       cost_model: CostModel | None = None) -> SimReport:
    """Run the three bulk-synchronous phases under a fixed assignment.

    Within a phase each PE drains its queue independently; the phase ends
    at the slowest PE.  Phases: ``occlude`` delivers tier broadcasts (to
    disabled records too) and parent-to-child enable/disable notes;
    ``multiply`` is pure task compute, so its time is exactly linear in
    task costs; ``store`` is the bulk data exchange, covering remote A/B
    chunk fetches and C contributions shipped to their chares.

    ``total_messages`` counts every logical delivery; only cross-PE
    messages cost time, charged to the receiving PE.  ``per_pe_busy``
    holds multiply-phase compute alone, which is conserved across
    assignments.
    """
    cm = cost_model or CostModel()
    P = assignment.P
    busy_occlude = np.zeros(P)
    busy_multiply = np.zeros(P)
    data_comm = np.zeros(P)
    total_messages = 0
    cross_pe = 0

    # Occlude: one controller (PE 0) broadcast per record per tier, then
    # enable/disable notes from enabled parents to all eight children.
    tier_pes = [_tier_record_pes(graph, assignment, t) for t in range(graph.t_c + 1)]
    for t in range(graph.t_c + 1):
        pes = tier_pes[t]
        remote = pes != 0
        busy_occlude += (np.bincount(pes[remote], minlength=P)
                         * cm.per_message_seconds)
        total_messages += len(pes)
        cross_pe += int(np.count_nonzero(remote))
    for t in range(graph.t_c):
        s = graph.side(t)
        ii, kk, jj = np.nonzero(graph.enabled[t])
        if len(ii) == 0:
            continue
        parent_pe = tier_pes[t][(ii * s + kk) * s + jj]
        s2 = 2 * s
        child_lin = []
        for di in (0, 1):
            for dk in (0, 1):
                for dj in (0, 1):
                    child_lin.append(((2 * ii + di) * s2 + (2 * kk + dk)) * s2
                                     + (2 * jj + dj))
        child_lin = np.concatenate(child_lin)
        child_pe = tier_pes[t + 1][child_lin]
        crossing = child_pe != np.tile(parent_pe, 8)
        busy_occlude += (np.bincount(child_pe[crossing], minlength=P)
                         * cm.per_message_seconds)
        total_messages += len(child_pe)
        cross_pe += int(np.count_nonzero(crossing))

    # Multiply: compute on the task's PE.  Store: remote input fetches
    # (charged to the reading task's PE) plus C contributions shipped to
    # the C chare's PE.
    t = graph.t_c
    ii, kk, jj = graph.enabled_leaf_tasks()
    task_costs = {}
    for i, k, j in zip(ii, kk, jj):
        task = ("conv", t, int(i), int(k), int(j))
        pe = assignment.pe_of[task]
        cost = float(graph.cost_flops[i, k, j]) * cm.per_flop_seconds
        busy_multiply[pe] += cost
        task_costs[task] = cost
        for cid, nbytes in ((("A", t, int(i), int(k)), graph.bytes_a[t][i, k]),
                            (("B", t, int(k), int(j)), graph.bytes_b[t][k, j])):
            total_messages += 1
            if assignment.pe_of[cid] != pe:
                cross_pe += 1
                data_comm[pe] += (cm.per_message_seconds
                                  + float(nbytes) * cm.per_byte_seconds)
        c_pe = assignment.pe_of[("C", t, int(i), int(j))]
        total_messages += 1
        if c_pe != pe:
            cross_pe += 1
            data_comm[c_pe] += (cm.per_message_seconds
                                + float(graph.bytes_c[t][i, j]) * cm.per_byte_seconds)

    occlude_time = float(busy_occlude.max()) + cm.phase_overhead_seconds
    multiply_time = float(busy_multiply.max()) + cm.phase_overhead_seconds
    store_time = float(data_comm.max()) + cm.phase_overhead_seconds
    return SimReport(
        per_pe_busy=[float(x) for x in busy_multiply],
        makespan=occlude_time + multiply_time + store_time,
        total_messages=total_messages,
        cross_pe_messages=cross_pe,
        phase_breakdown={"occlude": occlude_time, "multiply": multiply_time,
                         "store": store_time},
        task_costs=task_costs,
        assignment=assignment,
    )


def parallel_efficiency(t1: float, tp: float, P: int) -> float:
    """E(P) = T(1) / (P * T(P))."""
    if t1 <= 0 or tp <= 0:
        raise ValueError(f"times must be positive, got T(1)={t1}, T(P)={tp}")
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    return t1 / (P * tp)


def amdahl_fit(points) -> AmdahlFit:
    """Least-squares fit of T(P) = t_s + t_p / P.

    ``points`` is a sequence of (P, T) pairs with at least two distinct P
    values.  A negative unconstrained serial term is clamped to zero (and
    flagged) by refitting the parallel term alone.  ``p_even = t_p / t_s``
    is the break-even core count.
    """
    pts = [(float(p), float(t)) for p, t in points]
    if len({p for p, _ in pts}) < 2:
        raise ValueError("need at least two distinct P values to fit")
    if any(p < 1 or t <= 0 for p, t in pts):
        raise ValueError("P must be >= 1 and T > 0 for every point")
    p_arr = np.array([p for p, _ in pts])
    t_arr = np.array([t for _, t in pts])
    design = np.stack([np.ones_like(p_arr), 1.0 / p_arr], axis=1)
    (t_s, t_p), *_ = np.linalg.lstsq(design, t_arr, rcond=None)
    clamped = False
    if t_s < 0:
        clamped = True
        t_s = 0.0
        t_p = float((t_arr / p_arr).sum() / (1.0 / p_arr ** 2).sum())
    if t_s == 0:
        p_even = float("inf") if t_p > 0 else 0.0
    else:
        p_even = float(t_p) / float(t_s)
    return AmdahlFit(t_s=float(t_s), t_p=float(t_p), p_even=p_even, clamped=clamped)


def calibrate_cost_model(block_size: int = 16, n_products: int = 20000,
                         seed: int = 0) -> CostModel:
    """Derive per-flop cost from a micro-run of the leaf product kernel."""
    rng = np.random.default_rng(seed)
    pool = 64
    a = rng.standard_normal((pool, block_size, block_size))
    b = rng.standard_normal((pool, block_size, block_size))
    c = np.zeros((pool, block_size, block_size))
    idx = rng.integers(0, pool, size=n_products).astype(np.int64)
    _gemm_batch(idx[:16], idx[:16], idx[:16], a, b, c)  # warm the JIT
    t0 = time.perf_counter()
    _gemm_batch(idx, idx, idx, a, b, c)
    elapsed = time.perf_counter() - t0
    per_flop = elapsed / (n_products * 2 * block_size ** 3)
    return CostModel(per_flop_seconds=per_flop)
