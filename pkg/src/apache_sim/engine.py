"""Event-driven replay of a scheduled task graph.

Events are node-ready, node-done and transfer-arrival instants processed in
time order. Dispatching a node reserves its DIMM resources (near-memory
channel, per-FU pipelines, in-memory accumulators) from the dispatch time
onward, so every FU holds a list of non-overlapping busy segments. A pass
through an FU chain occupies each unit for the streaming time and delivers
its result after the chain fill.

Setup (input upload over the host channel, preloading buffer-sized keys)
happens before the first operator and is part of the makespan.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from collections import Counter, OrderedDict, defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from apache_sim import serialize
from apache_sim.arch import (
    CONFIGURABLE,
    IM,
    LABEL_NON,
    LABEL_NTT,
    R1,
    R2,
    NmcModule,
    TimingSegment,
    check_no_overlap,
    stream_cycles,
    union_length,
)
from apache_sim.config import SimConfig
from apache_sim.errors import (
    DeadlockError,
    InvalidParameterError,
    InvariantViolation,
    UndefinedUtilizationError,
)
from apache_sim.memory import (
    IN_MEMORY,
    IO,
    NEAR_MEMORY,
    ROW_MISS,
    BitLedger,
    InMemoryUnit,
    bandwidth_reduction_factor,
    dram_access_latency,
)
from apache_sim.opmodel import LWE, OUTPUT_TYPE, RLWE, OpCost, ct_bytes, input_bytes, operator_cost
from apache_sim.scheduler import PACK, Schedule, TaskGraph, TransferCost, aggregation_plan, assign_dimms, build_task_graph

# -- utilization --------------------------------------------------------------------------


def utilization_terms(segments: Sequence[TimingSegment]) -> Tuple[int, int, int]:
    """(R1.T_ALL, R1.T_nonNTT, |R1 u R2|) as union measures of busy intervals."""
    r1 = [(s.start, s.end) for s in segments if s.routine == R1]
    r1_non = [(s.start, s.end) for s in segments if s.routine == R1 and s.label == LABEL_NON]
    both = [(s.start, s.end) for s in segments if s.routine in (R1, R2)]
    return union_length(r1), union_length(r1_non), union_length(both)


def utilization_metrics(segments: Sequence[TimingSegment]) -> Tuple[float, float]:
    """(Utl_NTT, Utl'_NTT) of one set of labeled segments.

    Utl_NTT treats R1 as the fixed pipeline: (T_ALL - T_nonNTT) / T_ALL.
    Utl'_NTT divides the same numerator by the union of R1 and R2 busy time.
    """
    t_all, t_non, union = utilization_terms(segments)
    return _ratios(t_all, t_non, union)


def _ratios(t_all, t_non, union) -> Tuple[float, float]:
    if t_all <= 0:
        raise UndefinedUtilizationError("R1 was never busy; utilization undefined")
    return (t_all - t_non) / t_all, (t_all - t_non) / union


# -- report -------------------------------------------------------------------------------


@dataclass
class SimReport:
    n_dimms: int = 0
    clock_hz: float = 1e9
    makespan_cycles: int = 0
    setup_cycles: int = 0
    op_counts: Dict[str, int] = field(default_factory=dict)
    latency_cycles: Dict[str, dict] = field(default_factory=dict)
    op_per_s: Dict[str, float] = field(default_factory=dict)
    fu_utilization: Dict[str, float] = field(default_factory=dict)
    routine_busy: Dict[str, int] = field(default_factory=dict)
    utl_ntt: Optional[float] = None
    utl_ntt_prime: Optional[float] = None
    utl_per_dimm: Dict[str, dict] = field(default_factory=dict)
    ledger_totals: Dict[str, dict] = field(default_factory=dict)
    bandwidth: Dict[str, dict] = field(default_factory=dict)
    transfers: Dict[str, object] = field(default_factory=dict)
    keyswitch: Dict[str, object] = field(default_factory=dict)
    mode_switches: int = 0
    functional: Dict[str, object] = field(default_factory=dict)
    nodes: Dict[str, dict] = field(default_factory=dict)
    segments: List[TimingSegment] = field(default_factory=list, repr=False)
    ledger: Optional[BitLedger] = field(default=None, repr=False)

    @property
    def makespan_s(self) -> float:
        return self.makespan_cycles / self.clock_hz

    def to_json(self, include_segments: bool = False) -> dict:
        out = {k: getattr(self, k) for k in (
            "n_dimms", "clock_hz", "makespan_cycles", "setup_cycles", "op_counts", "latency_cycles",
            "op_per_s", "fu_utilization", "routine_busy", "utl_ntt", "utl_ntt_prime", "utl_per_dimm",
            "ledger_totals", "bandwidth", "transfers", "keyswitch", "mode_switches", "functional", "nodes")}
        out["makespan_s"] = self.makespan_s
        if include_segments:
            out["segments"] = [[s.fu, s.start, s.end, s.label, s.routine, s.op_id] for s in self.segments]
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    def to_csv(self) -> str:
        """Flat section,key,value rows (per-op and per-FU tables)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", "key", "value"])
        for k in ("makespan_cycles", "setup_cycles", "utl_ntt", "utl_ntt_prime", "mode_switches"):
            w.writerow(["summary", k, getattr(self, k)])
        for op, n in sorted(self.op_counts.items()):
            w.writerow(["op_count", op, n])
            w.writerow(["op_per_s", op, self.op_per_s.get(op, 0.0)])
            w.writerow(["latency_mean_cycles", op, self.latency_cycles.get(op, {}).get("mean")])
        for fu, u in sorted(self.fu_utilization.items()):
            w.writerow(["fu_utilization", fu, u])
        for lvl, d in sorted(self.bandwidth.items()):
            for k, v in sorted(d.items()):
                w.writerow(["bandwidth", f"{lvl}.{k}", v])
        for lvl, d in sorted(self.ledger_totals.items()):
            for k, v in sorted(d.items()):
                w.writerow(["bits", f"{lvl}.{k}", v])
        for k, v in sorted(self.keyswitch.get("reduction", {}).items()):
            w.writerow(["reduction", k, v])
        return buf.getvalue()


def throughput_report(report: SimReport, clock_hz: Optional[float] = None) -> Dict[str, float]:
    """Steady-state op/s per operator kind: completed count over the makespan
    minus the one-time key/data preload."""
    clock = clock_hz or report.clock_hz
    steady = report.makespan_cycles - report.setup_cycles
    if steady <= 0:
        return {k: 0.0 for k in report.op_counts}
    secs = steady / clock
    return {k: n / secs for k, n in sorted(report.op_counts.items())}


def check_report(report: SimReport) -> None:
    """Raise InvariantViolation unless the report satisfies the run invariants."""
    for k, v in report.fu_utilization.items():
        if not 0.0 <= v <= 1.0 + 1e-12:
            raise InvariantViolation(f"utilization of {k} is {v}")
    u, up = report.utl_ntt, report.utl_ntt_prime
    for name, v in (("Utl_NTT", u), ("Utl'_NTT", up)):
        if v is not None and not 0.0 <= v <= 1.0 + 1e-12:
            raise InvariantViolation(f"{name} = {v} outside [0, 1]")
    if u is not None and up is not None and up < u - 1e-12:
        raise InvariantViolation(f"Utl'_NTT {up:.4f} below Utl_NTT {u:.4f}")
    longest = max((v["done"] - v["start"] for v in report.nodes.values()), default=0)
    if report.makespan_cycles < longest:
        raise InvariantViolation("makespan shorter than a single node latency")


# -- planning ---------------------------------------------------------------------------------


def pass_cycles(cost: OpCost, module: NmcModule) -> int:
    """Latency of an operator's NMC steps run back to back on an idle module."""
    total = 0
    for sw in cost.steps:
        if sw.step.routine == IM:
            continue
        fus = module.fus(sw.step.routine)
        s = stream_cycles(sw.step.chain, fus, sw.work)
        if s:
            total += sw.repeat * (sum(fus[k].pipeline_depth for k in sw.step.chain) + s)
    return total


def transfer_costs(cfg: SimConfig) -> TransferCost:
    """Packing-rule latencies for gate-level LWE traffic on the host channel."""
    r, bw, clock = cfg.ring, cfg.scheduler.io_bandwidth, cfg.fu.clock_hz

    def t_pack(t):
        cost = operator_cost("Pack", cfg, {"t": t})
        return pass_cycles(cost, NmcModule(cfg.fu, cost.mode(cfg.fu.mode))) / clock

    return TransferCost(t_pack, ct_bytes(LWE, "tfhe", r) / bw, ct_bytes(RLWE, "tfhe", r) / bw)


def _param_key(params: dict) -> str:
    return json.dumps(params, sort_keys=True)


class _Costs:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self._cache: Dict[tuple, OpCost] = {}

    def __call__(self, node) -> OpCost:
        key = (node.op, _param_key(node.params))
        if key not in self._cache:
            self._cache[key] = operator_cost(node.op, self.cfg, node.params)
        return self._cache[key]


def ct_sizes(graph: TaskGraph, cfg: SimConfig, costs=None) -> Dict[str, Tuple[str, int]]:
    """Timing-scale (type, bytes) of every ciphertext in the graph."""
    costs = costs or _Costs(cfg)
    out = {}
    for ct, rec in graph.resident.items():
        t = rec.get("params", {}).get("type", "bit")
        out[ct] = ("lwe" if t in ("bit", "bit_big") else "rlwe", input_bytes(rec, cfg.ring))
    for nid in graph.order:
        node = graph.nodes[nid]
        if node.outputs:
            c = costs(node)
            per = c.write_bytes // len(node.outputs)
            for ct in node.outputs:
                out[ct] = (OUTPUT_TYPE[node.op], per)
    return out


def plan(trace, cfg: SimConfig, n_dimms: Optional[int] = None) -> Schedule:
    """Assign DIMMs, pick aggregation points and list the host transfers."""
    graph = trace if isinstance(trace, TaskGraph) else build_task_graph(trace)
    n = n_dimms or cfg.scheduler.dimms
    costs = _Costs(cfg)
    assign = assign_dimms(graph, n, cfg.dimm.capacity_bytes, lambda node: costs(node).write_bytes)
    sizes = ct_sizes(graph, cfg, costs)
    rlwe_bytes = ct_bytes(RLWE, "tfhe", cfg.ring)
    assign, transfers = aggregation_plan(graph, assign, lambda ct: sizes[ct], transfer_costs(cfg),
                                         lambda t: rlwe_bytes, move=cfg.scheduler.aggregate)
    return Schedule(graph, assign, transfers, n)


# -- engine -------------------------------------------------------------------------------------


class _Dimm:
    def __init__(self, idx: int, cfg: SimConfig):
        self.idx = idx
        self.fu_free: Dict[str, int] = defaultdict(int)  # "R1.ntt" -> first free cycle
        self.mem_free = 0
        self.stream: List[Tuple[int, int, float]] = []  # pieces of background key streams
        self.im_free = 0
        self.mode = None
        self.pinned: Dict[str, int] = {}
        self.waves: Dict[str, list] = {}
        self.buffer: "OrderedDict[str, Tuple[int, bool]]" = OrderedDict()
        self.buf_used = 0
        self.buf_cap = cfg.dimm.data_buffer_bytes
        self.uses: Counter = Counter()  # pending local reads of each ciphertext
        self.im = InMemoryUnit(cfg.dimm)
        self.segments: List[TimingSegment] = []
        self.im_busy: List[Tuple[int, int]] = []
        self.mode_switches = 0


class Engine:
    """One simulation run. ``functional`` is True, False or a node budget."""

    def __init__(self, cfg: SimConfig, seed: int = 0, functional: Union[bool, int] = True,
                 replay: bool = True, context=None):
        self.cfg = cfg
        self.seed = seed
        self.functional = functional
        self.replay = replay
        self.context = context
        self.clock = cfg.fu.clock_hz
        self.costs = _Costs(cfg)
        self._modules: Dict[object, NmcModule] = {}

    # -- unit helpers -------------------------------------------------------------------------

    def _cycles_ns(self, ns: float) -> int:
        return math.ceil(ns * self.clock / 1e9 - 1e-9)

    def _cycles_bytes(self, nbytes: float, bw: float) -> int:
        return math.ceil(nbytes / bw * self.clock - 1e-9)

    def _module(self, mode) -> NmcModule:
        if mode not in self._modules:
            self._modules[mode] = NmcModule(self.cfg.fu, mode)
        return self._modules[mode]

    # -- channels -------------------------------------------------------------------------------

    def _mem(self, d: _Dimm, t: int, nbytes: int, op_id: str, write: bool, latency: bool = True) -> Tuple[int, int]:
        """Reserve the near-memory channel; returns (start, data-ready).

        Foreground requests preempt a background key stream: the part of
        the stream after the request start is pushed back by its duration.
        """
        dur = self._cycles_bytes(nbytes, self.cfg.dimm.aggregate_bandwidth)
        s = max(t, d.mem_free)
        d.mem_free = s + dur
        if dur:
            self._preempt(d, s, dur)
        self.activity[NEAR_MEMORY].append((d.idx, s, s + dur, nbytes))
        if write:
            self.ledger.record(op_id, NEAR_MEMORY, bits_out=8 * nbytes)
        else:
            self.ledger.record(op_id, NEAR_MEMORY, bits_in=8 * nbytes)
        lat = self._cycles_ns(dram_access_latency(ROW_MISS, 0, self.cfg.dimm)) if latency else 0
        self.last = max(self.last, s + dur)
        return s, s + dur + lat

    def _preempt(self, d: _Dimm, s: int, dur: int) -> None:
        pieces = []
        for a, b, nb in d.stream:
            if b <= s:
                pieces.append((a, b, nb))
            elif a >= s:
                pieces.append((a + dur, b + dur, nb))
            else:
                head = nb * (s - a) / (b - a)
                pieces += [(a, s, head), (s + dur, b + dur, nb - head)]
        d.stream = pieces

    def _stream(self, d: _Dimm, t: int, nbytes: int, op_id: str) -> int:
        """Start a background key stream; returns its start cycle."""
        dur = self._cycles_bytes(nbytes, self.cfg.dimm.aggregate_bandwidth)
        s = max(t, d.mem_free, d.stream[-1][1] if d.stream else 0)
        if dur:
            d.stream.append((s, s + dur, nbytes))
        self.ledger.record(op_id, NEAR_MEMORY, bits_in=8 * nbytes)
        return s

    def _io(self, t: int, nbytes: int, op_id: str) -> Tuple[int, int]:
        dur = self._cycles_bytes(nbytes, self.cfg.scheduler.io_bandwidth)
        s = max(t, self.io_free)
        self.io_free = s + dur
        self.activity[IO].append((-1, s, s + dur, nbytes))
        self.ledger.record(op_id, IO, bits_in=8 * nbytes)
        return s, s + dur

    # -- data buffer ------------------------------------------------------------------------------

    def _buffer_put(self, d: _Dimm, ct: str, t: int, dirty: bool) -> None:
        nb = self.sizes[ct][1]
        if nb > d.buf_cap:
            if dirty:
                self._mem(d, t, nb, ct, write=True, latency=False)
            return
        if ct in d.buffer:
            d.buffer.move_to_end(ct)
            return
        while d.buf_used + nb > d.buf_cap:
            old, (ob, odirty) = d.buffer.popitem(last=False)
            d.buf_used -= ob
            if odirty:
                self._mem(d, t, ob, old, write=True, latency=False)
        d.buffer[ct] = (nb, dirty)
        d.buf_used += nb

    def _release(self, d: _Dimm, ct: str) -> None:
        """Drop a ciphertext with no pending local reads; it is clean or dead."""
        if d.uses[ct] <= 0 and ct in d.buffer:
            nb, _ = d.buffer.pop(ct)
            d.buf_used -= nb

    # -- compute ------------------------------------------------------------------------------------

    def _chain(self, d: _Dimm, routine: str, chain, fus, work, t: int, label: str, op_id: str) -> Tuple[int, int]:
        stream = stream_cycles(chain, fus, work)
        if stream == 0:
            return t, t
        offs, off = {}, 0
        for k in chain:
            offs[k] = off
            off += fus[k].pipeline_depth
        busy = [k for k in chain if (work.get(k, 0) if isinstance(work, dict) else work) > 0]
        start = max([t] + [d.fu_free[f"{routine}.{k}"] - offs[k] for k in busy])
        for k in busy:
            s = start + offs[k]
            d.fu_free[f"{routine}.{k}"] = s + stream
            d.segments.append(TimingSegment(f"d{d.idx}.{routine}.{k}", s, s + stream, label, routine, op_id))
        return start, start + off + stream

    def _routine_free(self, d: _Dimm, routine: str, chain) -> int:
        return max(d.fu_free[f"{routine}.{k}"] for k in chain)

    def _step(self, d: _Dimm, module: NmcModule, sw, t: int, op_id: str) -> Tuple[int, int]:
        step = sw.step
        if step.splittable and step.routine == R2 and self.cfg.fu.topology == "dual":
            # R2 first; split with R1 only when R2 is busy and R1 idle
            if self._routine_free(d, R2, step.chain) > t and self._routine_free(d, R1, step.chain) <= t:
                share = self.cfg.fu.r1_share
                if share < 0.5:
                    raise InvariantViolation(f"R1 share {share} of a split operator is below 0.5")
                w1 = {k: math.ceil(v * share) for k, v in sw.work.items()}
                w2 = {k: v - w1[k] for k, v in sw.work.items()}
                s1, e1 = self._chain(d, R1, step.chain, module.r1, w1, t, LABEL_NON, op_id)
                s2, e2 = self._chain(d, R2, step.chain, module.r2, w2, t, LABEL_NON, op_id)
                self.splits += 1
                return min(s1, s2), max(e1, e2)
        return self._chain(d, step.routine, step.chain, module.fus(step.routine), sw.work, t, step.label, op_id)

    def _key_ready(self, d: _Dimm, cost: OpCost, t: int, op_id: str) -> int:
        if not cost.key_id or cost.key_id in d.pinned or not any(s.step.routine != IM for s in cost.steps):
            return t
        w = d.waves.get(cost.key_id)
        if w and w[0] > 0:
            w[0] -= 1
            return max(t, w[1])
        # stream the key once for the next wave of same-key operators; work
        # starts when the first half-buffer tile has landed
        tile = min(cost.key_bytes, self.cfg.dimm.data_buffer_bytes // 2)
        s = self._stream(d, t, cost.key_bytes, f"key:{cost.key_id}")
        ready = s + self._cycles_ns(dram_access_latency(ROW_MISS, 0, self.cfg.dimm)) + \
            self._cycles_bytes(tile, self.cfg.dimm.aggregate_bandwidth)
        d.waves[cost.key_id] = [self.cfg.scheduler.wave_size - 1, ready]
        self.key_streams += 1
        return ready

    def _dispatch(self, nid: str, t: int) -> int:
        node = self.graph.nodes[nid]
        d = self.dimms[self.assign[nid]]
        cost = self.costs(node)
        mode = cost.mode(self.cfg.fu.mode)
        module = self._module(mode)
        if d.mode is not None and d.mode != mode:
            prev = self._module(d.mode)
            flush = max(fu.pipeline_depth for fus in (prev.r1, prev.r2) for k, fu in fus.items() if k in CONFIGURABLE)
            base = max([t] + list(d.fu_free.values()))
            for k in list(d.fu_free):
                d.fu_free[k] = base + flush
            d.mode_switches += 1
        d.mode = mode
        ready = t
        for ct in node.inputs:
            if ct in d.buffer:
                d.buffer.move_to_end(ct)
            else:
                _, e = self._mem(d, t, self.sizes[ct][1], nid, write=False)
                ready = max(ready, e)
                self._buffer_put(d, ct, t, dirty=False)
        cur = max(ready, self._key_ready(d, cost, t, nid))
        first = None
        for sw in cost.steps:
            for _ in range(sw.repeat):
                if sw.step.routine == IM:
                    kind, dims, ew, wb = sw.ks
                    bits, dram = d.im.execute(kind, dims, f"{node.op}.{sw.step.name}", ew, wb)
                    dur = self._cycles_ns(dram * self.cfg.dimm.tck_ns)
                    s = max(cur, d.im_free)
                    if dur:
                        d.im_free = s + dur
                        d.im_busy.append((s, s + dur))
                        self.activity[IN_MEMORY].append((d.idx, s, s + dur, bits / 8))
                    self.ledger.record(nid, IN_MEMORY, bits_in=bits)
                    self.ks_calls[kind] += 1
                    self.ks_bits[kind] += bits
                    cur = s + dur
                else:
                    s, cur = self._step(d, module, sw, cur, nid)
                first = s if first is None else first
        for ct in node.inputs:
            d.uses[ct] -= 1
            self._release(d, ct)
        self.node_times[nid] = {"dimm": d.idx, "ready": t, "start": first if first is not None else cur,
                                "done": cur}
        self._execute(node)
        return cur

    def _complete(self, nid: str, t: int) -> None:
        """Results land in the data buffer; graph outputs are written back to DRAM."""
        d = self.dimms[self.assign[nid]]
        for ct in self.graph.nodes[nid].outputs:
            if ct in self.sinks:
                self._mem(d, t, self.sizes[ct][1], nid, write=True, latency=False)
                self._buffer_put(d, ct, t, dirty=False)
                self._release(d, ct)
            else:
                self._buffer_put(d, ct, t, dirty=True)

    # -- functional -----------------------------------------------------------------------------------

    def _execute(self, node) -> None:
        ctx = self.ctx
        if ctx is None:
            return
        if not all(c in ctx.store for c in node.inputs):
            return
        if self.budget is not None and self.executed >= self.budget:
            return
        home = self.assign[node.id]
        inputs = []
        for c in node.inputs:
            ct = ctx.store[c]
            p = self.graph.producer.get(c)
            if p is not None and self.assign[p] != home:
                raw = serialize.dumps(ct)  # crosses DIMMs in the wire format
                ct = serialize.loads(raw)
                self.wire_bytes += len(raw)
            inputs.append(ct)
        ctx.execute(node, inputs)
        self.executed += 1
        self.exec_outputs.extend(node.outputs)

    # -- main loop ------------------------------------------------------------------------------------------

    def run(self, schedule: Schedule) -> SimReport:
        self._reset(schedule)
        g, cfg = self.graph, self.cfg
        self._setup()
        heap: List[tuple] = []
        seq = 0

        def push(t, kind, payload):
            nonlocal seq
            heapq.heappush(heap, (t, seq, kind, payload))
            seq += 1

        for nid in g.order:
            if self.pending[nid] == 0:
                push(self.setup_cycles, "ready", nid)
        done_count = 0
        while heap:
            t, _, kind, payload = heapq.heappop(heap)
            if kind == "ready":
                push(self._dispatch(payload, t), "done", payload)
            elif kind == "done":
                done_count += 1
                self.last = max(self.last, t)
                self._complete(payload, t)
                for s in g.succ[payload]:
                    if self.assign[s] == self.assign[payload]:
                        self.pending[s] -= 1
                        if self.pending[s] == 0:
                            push(t, "ready", s)
                for tr in self.out_transfers[payload]:
                    self._start_transfer(tr, t, push)
            elif kind == "packed":
                for tr in self.groups[payload]:
                    s, e = self._io(t, tr.nbytes, tr.dst_node)
                    self.tr_log.append((tr, s, e))
                for tr in self.groups[payload]:
                    push(self.io_free, "arrive", tr)
            elif kind == "arrive":
                tr = payload
                self.last = max(self.last, t)
                d = self.dimms[tr.dst_dimm]
                d.uses[tr.ct] += 1
                self._buffer_put(d, tr.ct, t, dirty=True)
                self.pending[tr.dst_node] -= 1
                if self.pending[tr.dst_node] == 0:
                    push(t, "ready", tr.dst_node)
        if done_count != len(g.nodes):
            stuck = sorted(n for n in g.order if n not in self.node_times)
            raise DeadlockError(f"{len(stuck)} nodes never became runnable (first: {stuck[:5]})", stuck)
        return self._report()

    def _start_transfer(self, tr, t, push) -> None:
        if tr.format != PACK or tr.group is None:
            s, e = self._io(t, tr.nbytes, tr.dst_node)
            self.tr_log.append((tr, s, e))
            push(e, "arrive", tr)
            return
        self.group_ready[tr.group] += 1
        members = self.groups[tr.group]
        if self.group_ready[tr.group] < len(members):
            return
        # pack on the source DIMM, then ship one RLWE
        d = self.dimms[tr.src_dimm]
        cost = operator_cost("Pack", self.cfg, {"t": len(members)})
        module = self._module(cost.mode(self.cfg.fu.mode))
        cur = t
        for sw in cost.steps:
            _, cur = self._step(d, module, sw, cur, f"pack{tr.group}")
        self.packs += 1
        push(cur, "packed", tr.group)

    def _reset(self, schedule: Schedule) -> None:
        cfg = self.cfg
        g = schedule.graph
        self.graph, self.assign, self.n = g, dict(schedule.assignment), schedule.n_dimms
        for nid in g.order:
            if nid not in self.assign or not 0 <= self.assign[nid] < self.n:
                raise InvalidParameterError(f"node {nid!r} has no valid DIMM assignment")
        self.dimms = [_Dimm(i, cfg) for i in range(self.n)]
        self.ledger = BitLedger()
        self.activity = {IO: [], NEAR_MEMORY: [], IN_MEMORY: []}
        self.io_free = 0
        self.last = 0
        self.sizes = ct_sizes(g, cfg, self.costs)
        self.sinks = {ct for nid in g.order for ct in g.nodes[nid].outputs
                      if not any(ct in g.nodes[s].inputs for s in g.succ[nid])}
        self.node_times: Dict[str, dict] = {}
        self.ks_calls, self.ks_bits = Counter(), Counter()
        self.splits = self.key_streams = self.packs = 0
        self.tr_log = []
        self.out_transfers = defaultdict(list)
        self.groups = defaultdict(list)
        self.group_ready = Counter()
        self.pending = {}
        incoming = Counter()
        for tr in schedule.transfers:
            self.out_transfers[tr.src_node].append(tr)
            incoming[tr.dst_node] += 1
            if tr.group is not None:
                self.groups[tr.group].append(tr)
        for nid in g.order:
            node = g.nodes[nid]
            local = {d for d in node.deps if self.assign[d] == self.assign[nid]}
            self.pending[nid] = len(local) + incoming[nid]
            dimm = self.dimms[self.assign[nid]]
            for ct in node.inputs:
                p = g.producer.get(ct)
                if p is None or self.assign[p] == self.assign[nid]:
                    dimm.uses[ct] += 1
        # functional layer
        self.ctx = None
        self.executed = 0
        self.exec_outputs: List[str] = []
        self.wire_bytes = 0
        self.budget = None if isinstance(self.functional, bool) else int(self.functional)
        if self.functional is not False and self.functional != 0:
            if self.context is None:
                from apache_sim.functional import FunctionalContext

                self.context = FunctionalContext(self.seed)
            self.ctx = self.context
            for rec in g.resident_records():
                self.ctx.make_input(rec)

    def _setup(self) -> None:
        """Upload resident inputs, preload IM keys and buffer-sized NMC keys."""
        g, cfg = self.graph, self.cfg
        upload = 0
        for ct in g.resident:
            readers = sorted({self.assign[n] for n in g.order if ct in g.nodes[n].inputs}) or [0]
            upload += len(readers) * self.sizes[ct][1]
        io_cycles = 0
        if upload:
            _, io_cycles = self._io(0, upload, "setup")
        key_cycles = 0
        for d in self.dimms:
            pinned = 0
            for nid in g.order:
                if self.assign[nid] != d.idx:
                    continue
                node = g.nodes[nid]
                cost = self.costs(node)
                for sw in cost.steps:
                    if sw.step.routine == IM:
                        d.im.preload(f"{node.op}.{sw.step.name}")
                nmc = any(s.step.routine != IM for s in cost.steps)
                if cost.key_id and nmc and cost.key_id not in d.pinned and \
                        pinned + cost.key_bytes <= cfg.dimm.data_buffer_bytes:
                    d.pinned[cost.key_id] = cost.key_bytes
                    pinned += cost.key_bytes
            d.buf_cap = cfg.dimm.data_buffer_bytes - pinned
            if pinned:
                _, e = self._mem(d, 0, pinned, "setup", write=False)
                key_cycles = max(key_cycles, e)
        self.setup_cycles = max(io_cycles, key_cycles)
        self.io_free = max(self.io_free, self.setup_cycles)
        for d in self.dimms:
            d.mem_free = max(d.mem_free, self.setup_cycles)
            d.im_free = self.setup_cycles
        self.last = self.setup_cycles

    # -- reporting ----------------------------------------------------------------------------------------------

    def _report(self) -> SimReport:
        g, cfg = self.graph, self.cfg
        rep = SimReport(n_dimms=self.n, clock_hz=self.clock, setup_cycles=self.setup_cycles)
        segs = [s for d in self.dimms for s in d.segments]
        check_no_overlap(segs)
        for d in self.dimms:
            self.activity[NEAR_MEMORY].extend((d.idx, a, b, nb) for a, b, nb in d.stream)
            if d.stream:
                self.last = max(self.last, d.stream[-1][1])
            d.stream = []
        ends = [self.last] + [v["done"] for v in self.node_times.values()]
        ends += [e for _, e in (iv for d in self.dimms for iv in d.im_busy)]
        rep.makespan_cycles = max(ends) if (g.nodes or g.resident) else 0
        rep.segments = segs
        rep.ledger = self.ledger
        rep.nodes = self.node_times
        rep.op_counts = dict(sorted(Counter(g.nodes[n].op for n in g.order).items()))
        lat = defaultdict(list)
        for nid, v in self.node_times.items():
            lat[g.nodes[nid].op].append(v["done"] - v["ready"])
        rep.latency_cycles = {k: {"mean": sum(v) / len(v), "min": min(v), "max": max(v)} for k, v in sorted(lat.items())}
        rep.op_per_s = throughput_report(rep)
        span = rep.makespan_cycles
        by_fu = defaultdict(int)
        for s in segs:
            by_fu[s.fu] += s.length
        rep.fu_utilization = {k: v / span for k, v in sorted(by_fu.items())} if span else {}
        for d in self.dimms:
            for r in (R1, R2):
                rep.routine_busy[f"d{d.idx}.{r}"] = union_length([(s.start, s.end) for s in d.segments if s.routine == r])
            rep.routine_busy[f"d{d.idx}.{IM}"] = union_length(d.im_busy)
        rep.mode_switches = sum(d.mode_switches for d in self.dimms)
        self._utilization(rep)
        rep.ledger_totals = self.ledger.totals()
        rep.bandwidth = self._bandwidth(span)
        lwe_fw = [(e - s) / self.clock for tr, s, e in self.tr_log if tr.ctype == LWE and tr.format != PACK]
        rep.transfers = {
            "count": len(self.tr_log),
            "bytes": sum(tr.nbytes for tr, _, _ in self.tr_log),
            "packed_groups": self.packs,
            "lwe_forward_s": (sum(lwe_fw) / len(lwe_fw)) if lwe_fw else None,
            "list": [{"ct": tr.ct, "src": tr.src_dimm, "dst": tr.dst_dimm, "bytes": tr.nbytes,
                      "format": tr.format, "start": s, "end": e} for tr, s, e in self.tr_log],
        }
        red = {}
        for nid in g.order:
            node = g.nodes[nid]
            cost = self.costs(node)
            for sw in cost.steps:
                if sw.step.routine == IM and cost.key_bytes and not any(x.step.routine != IM for x in cost.steps):
                    kind, dims, _, _ = sw.ks
                    red[node.op] = bandwidth_reduction_factor(kind, dims, cost.key_bytes)
        rep.keyswitch = {"calls": dict(self.ks_calls), "bits": dict(self.ks_bits), "reduction": red,
                         "key_streams": self.key_streams, "splits": self.splits}
        if self.ctx is not None:
            outs = sorted(set(self.exec_outputs))
            fails = self.ctx.verify(outs)
            rep.functional = {"executed": self.executed, "verified": not fails, "failures": fails,
                              "wire_bytes": self.wire_bytes, "digests": self.ctx.digests(outs)}
        return rep

    def _utilization(self, rep: SimReport) -> None:
        dual = [utilization_terms(d.segments) for d in self.dimms]
        single = dual
        if self.replay and self.cfg.fu.topology == "dual" and self.graph.nodes:
            from dataclasses import replace

            cfg1 = replace(self.cfg, fu=replace(self.cfg.fu, topology="single"))
            eng = Engine(cfg1, self.seed, functional=False, replay=False)
            sched = Schedule(self.graph, self.assign, self._schedule_transfers(), self.n)
            eng.run(sched)
            single = [utilization_terms(d.segments) for d in eng.dimms]
        for i, (dt, st) in enumerate(zip(dual, single)):
            entry = {}
            if st[0] > 0:
                entry["utl_ntt"] = _ratios(*st)[0]
            if dt[0] > 0:
                entry["utl_ntt_prime"] = _ratios(*dt)[1]
            rep.utl_per_dimm[f"d{i}"] = entry
        s_all, s_non = sum(t[0] for t in single), sum(t[1] for t in single)
        d_all, d_non, d_union = (sum(t[k] for t in dual) for k in range(3))
        rep.utl_ntt = (s_all - s_non) / s_all if s_all else None
        rep.utl_ntt_prime = (d_all - d_non) / d_union if d_all else None

    def _schedule_transfers(self):
        seen, out = set(), []
        for trs in self.out_transfers.values():
            for tr in trs:
                if id(tr) not in seen:
                    seen.add(id(tr))
                    out.append(tr)
        return out

    def _bandwidth(self, span: int) -> Dict[str, dict]:
        ceil = {
            IO: self.cfg.scheduler.io_bandwidth,
            NEAR_MEMORY: self.cfg.dimm.aggregate_bandwidth,
            IN_MEMORY: self.cfg.dimm.bus_bits_per_cycle / 8 / (self.cfg.dimm.tck_ns * 1e-9),
        }
        out = {}
        for lvl, acts in self.activity.items():
            peak = _peak_rate(acts, self.clock)
            total = sum(b for *_, b in acts)
            if peak > ceil[lvl] * (1 + 1e-9):
                raise InvariantViolation(f"{lvl} bandwidth {peak:.4g} B/s exceeds the {ceil[lvl]:.4g} B/s ceiling")
            out[lvl] = {"peak": peak, "mean": total / (span / self.clock) if span else 0.0,
                        "ceiling": ceil[lvl], "bytes": total}
        return out


def _peak_rate(acts, clock: float) -> float:
    """Largest summed byte rate of concurrent activities on one channel."""
    by_chan = defaultdict(list)
    for chan, s, e, b in acts:
        if e > s:
            rate = b / ((e - s) / clock)
            by_chan[chan] += [(s, rate), (e, -rate)]
    peak = 0.0
    for evs in by_chan.values():
        cur = 0.0
        for _, r in sorted(evs, key=lambda x: (x[0], x[1])):
            cur += r
            peak = max(peak, cur)
    return peak


def run_simulation(schedule: Schedule, cfg: SimConfig, seed: int = 0,
                   functional: Union[bool, int] = True, replay: bool = True) -> SimReport:
    return Engine(cfg, seed, functional, replay).run(schedule)


def simulate_trace(trace, cfg: SimConfig, n_dimms: Optional[int] = None, seed: int = 0,
                   functional: Union[bool, int] = True) -> SimReport:
    """plan + run_simulation in one call."""
    return run_simulation(plan(trace, cfg, n_dimms), cfg, seed, functional)
