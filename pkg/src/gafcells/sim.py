"""Fixed-step simulation of GAF-family duty cycling over a cell partition."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .bounds import Protocol
from .geometry import unit_metrics
from .partition import (
    Field,
    Partition,
    PartitionScheme,
    audit_req1,
    audit_req2,
    center_subcell,
    rotation_position,
    sliding_offset_for,
)
from .protocol import NodeRuntime, NodeState, ProtocolParams, step as protocol_step

SLEEPING, DISCOVERY, ACTIVE = int(NodeState.SLEEPING), int(NodeState.DISCOVERY), int(NodeState.ACTIVE)


@dataclass(frozen=True)
class SimConfig:
    field: Field
    scheme: PartitionScheme
    params: ProtocolParams = ProtocolParams()
    R: float = 1.0
    n_nodes: int = 100
    seed: int = 0
    step: float | None = None
    max_time: float = 1e5
    audit_interval: float = 10.0
    strict: bool = False
    stop_at_first_death: bool = True

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("need at least one node")
        if not self.R > 0:
            raise ValueError("communication range must be positive")
        if self.field.dimension != self.scheme.dimension:
            raise ValueError("field and cell shape dimensions differ")
        if not self.max_time > 0 or not self.audit_interval > 0:
            raise ValueError("max_time and audit_interval must be positive")
        limit = min(self.params.t_discovery, self.params.t_active, self.params.t_sleep) / 10
        if not 0 < self.dt <= limit * (1 + 1e-9):
            raise ValueError(f"time step {self.dt} must be in (0, {limit:g}]")
        if self.strict:
            self.scheme.check_range(self.R)

    @property
    def dt(self) -> float:
        return self.params.t_discovery / 10 if self.step is None else float(self.step)


@dataclass(frozen=True)
class SimReport:
    seed: int
    lifetime_first_cell_death: float
    censored: bool
    lifetime_model_estimate: float
    cells: int
    nonempty_cells: int
    cell_measure: float
    total_energy_consumed: float
    energy_integral: float
    audits: int
    transient_audits: int
    req1_pass_rate: float
    req2_pass_rate: float
    coverage_rate: float
    one_active_fraction: float
    at_most_one_fraction: float
    fallback_active_fraction: float
    audit_times: list[float]
    active_counts: list[int]
    live_counts: list[int]
    req1_worst: list[float]
    req2_worst: list[float]
    per_cell_death_times: list[tuple[tuple[int, ...], float]]


def deploy(config: SimConfig) -> np.ndarray:
    """``n_nodes`` i.i.d. uniform positions over the field."""
    rng = np.random.default_rng(config.seed)
    f = config.field
    return f.low + rng.random((config.n_nodes, f.dimension)) * np.asarray(f.extent)


# ---------------------------------------------------------------------------
# engines


class _VectorEngine:
    def __init__(self, pos, params: ProtocolParams):
        n = len(pos)
        self.params = params
        self.draw = np.array([params.draw_sleeping, params.draw_discovery, params.draw_active])
        self.timeout = np.array([params.t_sleep, params.t_discovery, params.t_active]) * (1 - 1e-9)
        self.ids = np.arange(n)
        self.state = np.full(n, DISCOVERY, dtype=np.int64)
        self.battery = np.full(n, float(params.battery))
        self.timer = np.zeros(n)
        self.cell = np.full(n, -1, dtype=np.int64)
        self.eligible = np.ones(n, dtype=bool)
        self.state_time = np.zeros((n, 3))
        self.death_time = np.full(n, np.nan)
        self.alive = np.ones(n, dtype=bool)
        self._clear_messages()

    def _clear_messages(self):
        n = len(self.ids)
        self.sent = np.zeros(n, dtype=bool)
        self.msg_cell = np.full(n, -1, dtype=np.int64)
        self.msg_time = np.zeros(n)
        self.msg_state = np.zeros(n, dtype=np.int64)
        self.msg_elig = np.zeros(n, dtype=bool)

    # --- hooks shared with the reference engine
    def relocate(self, cells, eligible):
        self.cell = np.asarray(cells, dtype=np.int64).copy()
        self.eligible = np.asarray(eligible, dtype=bool).copy()

    def wake_all(self):
        wake = self.alive & (self.state == SLEEPING)
        self.state[wake] = DISCOVERY
        self.timer[wake] = 0.0
        self._clear_messages()

    # --- one step
    @staticmethod
    def _gt(a, b):
        e1, p1, t1, i1 = a
        e2, p2, t2, i2 = b
        return (e1 > e2) | (
            (e1 == e2) & ((p1 > p2) | ((p1 == p2) & ((t1 > t2) | ((t1 == t2) & (i1 < i2)))))
        )

    def _best_two(self, mask, n_cells):
        idx = np.flatnonzero(mask)
        best = np.full(n_cells, -1, dtype=np.int64)
        second = np.full(n_cells, -1, dtype=np.int64)
        if idx.size == 0:
            return best, second
        pref = (self.msg_state[idx] == ACTIVE).astype(np.int64)
        order = np.lexsort(
            (idx, -self.msg_time[idx], -pref, -self.msg_elig[idx].astype(np.int64), self.msg_cell[idx])
        )
        idx = idx[order]
        cells = self.msg_cell[idx]
        first = np.ones(len(idx), dtype=bool)
        first[1:] = cells[1:] != cells[:-1]
        best[cells[first]] = idx[first]
        sec = np.zeros(len(idx), dtype=bool)
        sec[1:] = (~first[1:]) & first[:-1]
        second[cells[sec]] = idx[sec]
        return best, second

    def step(self, dt: float, now: float, n_cells: int) -> np.ndarray:
        """Advance every live node; returns ids of nodes that died."""
        p = self.params
        live = np.flatnonzero(self.alive)
        st = self.state[live]
        own = (
            self.eligible[live],
            (st == ACTIVE).astype(np.int64),
            self.battery[live] / p.draw_active,
            live,
        )

        cost = self.draw[st] * dt
        dies = cost >= self.battery[live]
        dead = live[dies]
        if dead.size:
            ds = self.state[dead]
            spent = self.battery[dead] / self.draw[ds]
            self.state_time[dead, ds] += spent
            self.battery[dead] = 0.0
            self.death_time[dead] = now + spent
            self.alive[dead] = False
        surv = ~dies
        keep = live[surv]
        self.battery[keep] -= cost[surv]
        self.state_time[keep, self.state[keep]] += dt
        self.timer[keep] += dt

        # strongest other same-cell sender, all senders and active senders only
        emitted = self.sent & (self.msg_cell >= 0)
        b_all, s_all = self._best_two(emitted, n_cells)
        b_act, s_act = self._best_two(emitted & (self.msg_state == ACTIVE), n_cells)
        c = self.cell[keep]
        st_k = st[surv]
        cand = np.where(st_k == ACTIVE, b_act[c], b_all[c])
        alt = np.where(st_k == ACTIVE, s_act[c], s_all[c])
        cand = np.where(cand == keep, alt, cand)
        has = cand >= 0
        ci = np.where(has, cand, 0)
        other = (
            self.msg_elig[ci],
            (self.msg_state[ci] == ACTIVE).astype(np.int64),
            self.msg_time[ci],
            ci,
        )
        mine = tuple(x[surv] for x in own)
        better = has & self._gt(other, mine) & (st_k != SLEEPING)

        expired = self.timer[keep] >= self.timeout[st_k]
        new = st_k.copy()
        disc = st_k == DISCOVERY
        act = st_k == ACTIVE
        slp = st_k == SLEEPING
        new[disc & better] = SLEEPING
        new[disc & ~better & expired] = ACTIVE
        new[act & better] = SLEEPING
        new[act & ~better & expired] = DISCOVERY
        new[slp & expired] = DISCOVERY
        changed = new != st_k
        self.state[keep] = new
        self.timer[keep[changed]] = 0.0

        self.sent[:] = False
        talk = keep[new != SLEEPING]
        self.sent[talk] = True
        self.msg_cell[talk] = self.cell[talk]
        self.msg_time[talk] = self.battery[talk] / p.draw_active
        self.msg_state[talk] = self.state[talk]
        self.msg_elig[talk] = self.eligible[talk]
        return dead


class _ReferenceEngine:
    """Per-node engine driving :func:`protocol.step`; slow, used to cross-check."""

    def __init__(self, pos, params: ProtocolParams):
        self.params = params
        self.nodes = [NodeRuntime(i, tuple(map(float, p)), float(params.battery)) for i, p in enumerate(pos)]
        self.outbox = []

    def relocate(self, cells, eligible):
        for node, c, e in zip(self.nodes, cells, eligible):
            node.cell = int(c)
            node.eligible = bool(e)

    def wake_all(self):
        for node in self.nodes:
            if node.alive and node.state is NodeState.SLEEPING:
                node.state = NodeState.DISCOVERY
                node.timer = 0.0
        self.outbox = []

    def step(self, dt: float, now: float, n_cells: int) -> np.ndarray:
        inbox, outbox, dead = self.outbox, [], []
        for i, node in enumerate(self.nodes):
            if not node.alive:
                continue
            node, out = protocol_step(node, dt, inbox, self.params, now)
            self.nodes[i] = node
            outbox.extend(out)
            if not node.alive:
                dead.append(i)
        self.outbox = outbox
        return np.array(dead, dtype=np.int64)

    # array views matching _VectorEngine
    @property
    def alive(self):
        return np.array([n.alive for n in self.nodes])

    @property
    def state(self):
        return np.array([int(n.state) for n in self.nodes])

    @property
    def cell(self):
        return np.array([n.cell for n in self.nodes])

    @property
    def eligible(self):
        return np.array([n.eligible for n in self.nodes])

    @property
    def battery(self):
        return np.array([n.battery for n in self.nodes])

    @property
    def state_time(self):
        return np.array([n.state_time for n in self.nodes])

    @property
    def death_time(self):
        return np.array([np.nan if n.death_time is None else n.death_time for n in self.nodes])


ENGINES = {"vectorized": _VectorEngine, "reference": _ReferenceEngine}


# ---------------------------------------------------------------------------


def _apply_epoch(partition: Partition, scheme: PartitionScheme, phase: int, pos):
    """Rotate/slide for ``phase``; returns (cells, eligible) for every node."""
    partition.phase = phase
    if scheme.protocol is Protocol.GAF:
        return partition.locate(pos), np.ones(len(pos), dtype=bool)
    chosen = rotation_position(scheme, phase)
    if scheme.protocol is Protocol.EHGAF:
        partition.set_offset(sliding_offset_for(scheme, chosen))
        target = center_subcell(scheme)
    else:
        target = chosen
    cells = partition.locate(pos)
    sub = partition.subcell_of(pos, cells)
    return cells, np.all(sub == np.asarray(target), axis=1)


def run(config: SimConfig, engine: str = "vectorized", trace: list | None = None) -> SimReport:
    """Run one simulation; ``trace`` (if given) receives per-step state snapshots."""
    scheme, params = config.scheme, config.params
    partition = Partition(config.field, scheme)
    pos = deploy(config)
    eng = ENGINES[engine](pos, params)
    dt = config.dt
    n_steps = int(math.ceil(config.max_time / dt - 1e-9))
    audit_every = max(1, int(round(config.audit_interval / dt)))
    epoch_steps = None if scheme.protocol is Protocol.GAF else max(1, int(round(scheme.epoch / dt)))

    phase = 0
    cells, elig = _apply_epoch(partition, scheme, phase, pos)
    eng.relocate(cells, elig)
    nonempty_start = int(np.count_nonzero(np.bincount(cells, minlength=partition.n_cells)))
    config_start = 0.0

    times, actives, lives, r1w, r2w = [], [], [], [], []
    r1_ok = r2_ok = covered_ok = one_active = at_most_one = fallback = transient = 0
    # after a rotation/slide the old incumbents hold on until the new subcell's
    # winner is Active and its message arrives
    settle = params.t_discovery + 2 * dt
    settled_at = 0.0
    warmup = 2 * params.t_discovery
    post_warmup = 0
    deaths: list[tuple[tuple[int, ...], float]] = []
    dead_cells: set[tuple[int, ...]] = set()
    lifetime = None
    t = 0.0

    for k in range(n_steps + 1):
        t = k * dt
        if epoch_steps and k > 0 and k % epoch_steps == 0:
            phase += 1
            cells, elig = _apply_epoch(partition, scheme, phase, pos)
            eng.relocate(cells, elig)
            # sleepers wake so the new subcell's nodes can claim the role;
            # incumbents keep it until outranked
            eng.wake_all()
            config_start = t
            settled_at = t + settle
            relocated = True
        else:
            relocated = False

        if k % audit_every == 0:
            alive = eng.alive
            state = eng.state
            act = np.flatnonzero(alive & (state == ACTIVE))
            act_cells = eng.cell[act]
            first, checked = {}, {}
            elig = eng.eligible
            for i, c in zip(act, act_cells):
                first.setdefault(int(c), pos[i])
                if elig[i]:
                    checked.setdefault(int(c), pos[i])
            # distance guarantees cover actives inside the designated subcell only
            a1 = audit_req1(partition, checked, config.R)
            live_idx = np.flatnonzero(alive)
            a2 = audit_req2(partition, checked, pos[live_idx], config.R, node_cells=eng.cell[live_idx])
            occupied = np.unique(eng.cell[live_idx])
            live_cells = occupied.size
            times.append(t)
            actives.append(int(act.size))
            lives.append(int(live_idx.size))
            r1w.append(a1.worst)
            r2w.append(a2.worst)
            if t + 1e-9 >= settled_at:
                r1_ok += a1.passed
                r2_ok += a2.distance_ok
                if act.size:
                    fallback += int(np.count_nonzero(~elig[act])) / act.size
            else:
                transient += 1
            covered_ok += all(int(c) in first for c in occupied)
            if t >= warmup:
                post_warmup += 1
                one_active += act.size == live_cells and len(first) == act.size
                at_most_one += len(first) == act.size

        if k == n_steps:
            break
        died = eng.step(dt, t, partition.n_cells)

        if died.size or relocated:
            alive = eng.alive
            total = np.bincount(eng.cell, minlength=partition.n_cells)
            live = np.bincount(eng.cell[alive], minlength=partition.n_cells)
            for c in np.flatnonzero((total > 0) & (live == 0)):
                idx = partition.cells[c]
                if idx in dead_cells:
                    continue
                dead_cells.add(idx)
                members = eng.cell == c
                when = max(float(np.nanmax(eng.death_time[members])), config_start)
                deaths.append((idx, when))
            if deaths and lifetime is None:
                lifetime = min(w for _, w in deaths)
                if config.stop_at_first_death:
                    break
            if not alive.any():
                break

    censored = lifetime is None
    if censored:
        lifetime = float(config.max_time)
    consumed = float(np.sum(params.battery - eng.battery))
    integral = math.fsum((eng.state_time * np.array([params.draw(s) for s in NodeState])).ravel())
    n_audits = len(times)
    settled = n_audits - transient
    shape_measure = unit_metrics(scheme.kind).measure * scheme.size ** scheme.dimension
    return SimReport(
        seed=config.seed,
        lifetime_first_cell_death=float(lifetime),
        censored=censored,
        lifetime_model_estimate=config.n_nodes * params.battery / (nonempty_start * params.draw_active),
        cells=partition.n_cells,
        nonempty_cells=nonempty_start,
        cell_measure=shape_measure,
        total_energy_consumed=consumed,
        energy_integral=integral,
        audits=n_audits,
        transient_audits=transient,
        req1_pass_rate=r1_ok / settled if settled else 1.0,
        req2_pass_rate=r2_ok / settled if settled else 1.0,
        coverage_rate=covered_ok / n_audits,
        one_active_fraction=one_active / post_warmup if post_warmup else 0.0,
        at_most_one_fraction=at_most_one / post_warmup if post_warmup else 0.0,
        fallback_active_fraction=fallback / settled if settled else 0.0,
        audit_times=times,
        active_counts=actives,
        live_counts=lives,
        req1_worst=r1w,
        req2_worst=r2w,
        per_cell_death_times=sorted(deaths, key=lambda d: (d[1], d[0])),
    )


def timeseries_csv(report: SimReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "active_count", "live_count", "req1_worst", "req2_worst"])
    for row in zip(report.audit_times, report.active_counts, report.live_counts, report.req1_worst, report.req2_worst):
        w.writerow([repr(float(row[0])), row[1], row[2], repr(float(row[3])), repr(float(row[4]))])
    return buf.getvalue()


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RatioEntry:
    numerator: int
    denominator: int
    measured: float
    ci_low: float
    ci_high: float
    predicted: float


@dataclass(frozen=True)
class LifetimeComparison:
    labels: list[str]
    seeds: list[int]
    measures: list[float]
    lifetimes: list[list[float]]
    mean_lifetimes: list[float]
    model_estimates: list[float]
    ratios: list[RatioEntry] = field(default_factory=list)

    def ratio(self, i: int, j: int) -> RatioEntry:
        for r in self.ratios:
            if r.numerator == i and r.denominator == j:
                return r
        raise KeyError((i, j))


def _shared_key(c: SimConfig):
    return (c.field, c.n_nodes, c.R, c.params)


def _run_seeded(args):
    config, seed = args
    return run(replace(config, seed=seed))


def compare_lifetimes(
    configs: list[SimConfig],
    seeds: list[int],
    labels: list[str] | None = None,
    workers: int | None = None,
    confidence: float = 0.95,
) -> LifetimeComparison:
    """Mean first-cell-death lifetimes and pairwise ratios with t intervals."""
    if len(seeds) < 3:
        raise ValueError("need at least three seeds")
    if not configs:
        raise ValueError("no configurations to compare")
    key = _shared_key(configs[0])
    for c in configs[1:]:
        if _shared_key(c) != key:
            raise ValueError("configurations must share field, node count, range and protocol parameters")
    labels = labels or [f"{c.scheme.protocol.value}-{c.scheme.kind.value}-{c.scheme.size:.4g}" for c in configs]
    jobs = [(c, s) for c in configs for s in seeds]
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            reports = list(pool.map(_run_seeded, jobs))
    else:
        reports = [_run_seeded(j) for j in jobs]
    n = len(seeds)
    lifetimes = [[reports[i * n + s].lifetime_first_cell_death for s in range(n)] for i in range(len(configs))]
    models = [reports[i * n].lifetime_model_estimate for i in range(len(configs))]
    measures = [reports[i * n].cell_measure for i in range(len(configs))]
    tq = stats.t.ppf(0.5 + confidence / 2, n - 1)
    ratios = []
    for i in range(len(configs)):
        for j in range(len(configs)):
            if i == j:
                continue
            per_seed = np.array(lifetimes[i]) / np.array(lifetimes[j])
            mean = float(np.mean(lifetimes[i]) / np.mean(lifetimes[j]))
            half = float(tq * per_seed.std(ddof=1) / math.sqrt(n))
            ratios.append(RatioEntry(i, j, mean, mean - half, mean + half, measures[i] / measures[j]))
    return LifetimeComparison(
        labels=list(labels),
        seeds=list(seeds),
        measures=measures,
        lifetimes=lifetimes,
        mean_lifetimes=[float(np.mean(x)) for x in lifetimes],
        model_estimates=models,
        ratios=ratios,
    )
