"""Task graphs from operator traces and their placement on DIMMs.

Trace format: JSON lines, one record per operator with fields op, id,
inputs, outputs, params. Records with op "Input" declare resident
ciphertexts (pre-loaded on every DIMM that needs them).
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict, deque
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from apache_sim.errors import (
    CycleError,
    DanglingReferenceError,
    FormatError,
    InfeasibleError,
    InvalidParameterError,
)

INPUT_OP = "Input"
PACK = "pack"
NO_PACK = "no_pack"


@dataclass
class TaskNode:
    id: str
    op: str
    inputs: List[str]
    outputs: List[str]
    params: dict = field(default_factory=dict)
    deps: List[str] = field(default_factory=list)
    dimm: Optional[int] = None
    order_free: bool = False
    index: int = 0


class TaskGraph:
    def __init__(self):
        self.nodes: Dict[str, TaskNode] = {}
        self.resident: Dict[str, dict] = {}  # ct id -> Input record
        self.producer: Dict[str, str] = {}  # ct id -> node id
        self.succ: Dict[str, List[str]] = {}
        self.order: List[str] = []  # topological order (stable w.r.t. trace order)
        self._reach: Optional[Dict[str, int]] = None

    def __len__(self):
        return len(self.nodes)

    @property
    def edges(self) -> List[Tuple[str, str]]:
        return [(d, n.id) for n in self.nodes.values() for d in n.deps]

    def _reachability(self) -> Dict[str, int]:
        """Bitset of descendants for every node."""
        if self._reach is None:
            bit = {nid: 1 << i for i, nid in enumerate(self.order)}
            reach = {}
            for nid in reversed(self.order):
                r = 0
                for s in self.succ[nid]:
                    r |= bit[s] | reach[s]
                reach[nid] = r
            self._reach = reach
            self._bit = bit
        return self._reach

    def depends(self, u: str, v: str) -> bool:
        """True when v (transitively) depends on u."""
        reach = self._reachability()
        return bool(reach[u] & self._bit[v])

    def independent(self, u: str, v: str) -> bool:
        return u != v and not self.depends(u, v) and not self.depends(v, u)

    def order_free_pairs(self) -> int:
        reach = self._reachability()
        ids = self.order
        count = 0
        for i, u in enumerate(ids):
            for v in ids[i + 1:]:
                if not (reach[u] & self._bit[v]) and not (reach[v] & self._bit[u]):
                    count += 1
        return count

    def to_records(self) -> List[dict]:
        recs = list(self.resident_records())
        for nid in self.order:
            n = self.nodes[nid]
            recs.append({"op": n.op, "id": n.id, "inputs": n.inputs, "outputs": n.outputs, "params": n.params})
        return recs

    def resident_records(self):
        seen = set()
        for rec in self.resident.values():
            if rec["id"] not in seen:
                seen.add(rec["id"])
                yield rec


def read_trace(source) -> List[dict]:
    """Records from a path, a file object, or an iterable of lines/dicts."""
    if isinstance(source, str):
        with open(source) as fh:
            return read_trace(fh)
    out = []
    for lineno, line in enumerate(source, 1):
        if isinstance(line, dict):
            out.append(line)
            continue
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise FormatError(f"trace line {lineno}: {exc}") from exc
    return out


def write_trace(records: Iterable[dict], fh) -> None:
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def build_task_graph(trace) -> TaskGraph:
    records = read_trace(trace) if not isinstance(trace, list) else trace
    g = TaskGraph()
    ops = []
    for i, rec in enumerate(records):
        for key in ("op", "id"):
            if key not in rec:
                raise FormatError(f"record {i} lacks field {key!r}")
        outs = list(rec.get("outputs", []))
        if rec["op"] == INPUT_OP:
            for ct in outs or [rec["id"]]:
                if ct in g.resident or ct in g.producer:
                    raise FormatError(f"ciphertext {ct!r} defined twice")
                g.resident[ct] = rec
            continue
        nid = str(rec["id"])
        if nid in g.nodes:
            raise FormatError(f"duplicate node id {nid!r}")
        node = TaskNode(nid, rec["op"], list(rec.get("inputs", [])), outs, dict(rec.get("params", {})))
        for ct in outs:
            if ct in g.resident or ct in g.producer:
                raise FormatError(f"ciphertext {ct!r} defined twice")
            g.producer[ct] = nid
        g.nodes[nid] = node
        ops.append(nid)
    for nid in ops:
        node = g.nodes[nid]
        deps = []
        for ct in node.inputs:
            if ct in g.resident:
                continue
            if ct not in g.producer:
                raise DanglingReferenceError(f"node {nid!r} reads undefined ciphertext {ct!r}")
            p = g.producer[ct]
            if p not in deps:
                deps.append(p)
        node.deps = deps
        g.succ[nid] = []
    for nid in ops:
        for d in g.nodes[nid].deps:
            g.succ[d].append(nid)
    # Kahn, stable in trace order
    indeg = {nid: len(g.nodes[nid].deps) for nid in ops}
    pos = {nid: i for i, nid in enumerate(ops)}
    import heapq

    heap = [(pos[n], n) for n in ops if indeg[n] == 0]
    heapq.heapify(heap)
    while heap:
        _, n = heapq.heappop(heap)
        g.order.append(n)
        for s in g.succ[n]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(heap, (pos[s], s))
    if len(g.order) != len(ops):
        stuck = sorted(n for n in ops if indeg[n] > 0)
        raise CycleError(f"dependency cycle among {stuck[:8]}")
    for i, nid in enumerate(g.order):
        node = g.nodes[nid]
        node.index = i
        node.order_free = not node.deps and not g.succ[nid]
    return g


# -- DIMM assignment ---------------------------------------------------------------------


def assign_dimms(graph: TaskGraph, n_dimms: int, capacity_bytes: Optional[float] = None,
                 working_set: Optional[Callable[[TaskNode], float]] = None) -> Dict[str, int]:
    """Order-free nodes round-robin; ordered chains stay together.

    Each weakly connected component takes the next round-robin DIMM when
    its first node is placed (an order-free node is its own component).

    A dependent node goes to the DIMM holding most of its producers (ties:
    lowest id) unless that DIMM's accumulated working set would overflow,
    in which case it is handed to the next DIMM with room. A node whose
    params carry "dimm" is pinned to that DIMM (modulo n_dimms).
    """
    if n_dimms < 1:
        raise InvalidParameterError("n_dimms must be >= 1")
    ws = working_set or (lambda node: 0)
    cap = float("inf") if capacity_bytes is None else capacity_bytes
    used = [0.0] * n_dimms
    out: Dict[str, int] = {}
    rr = 0
    # weakly connected components: an ordered chain is placed as one unit
    parent = {nid: nid for nid in graph.order}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for nid in graph.order:
        for dep in graph.nodes[nid].deps:
            a, b = find(nid), find(dep)
            if a != b:
                parent[max(a, b)] = min(a, b)
    comp_dimm: Dict[str, int] = {}
    for nid in graph.order:
        node = graph.nodes[nid]
        need = ws(node)
        if need > cap:
            raise InfeasibleError(f"node {nid!r} needs {need} B, more than any DIMM holds")
        if "dimm" in node.params:  # placement hint from the trace
            pref = int(node.params["dimm"]) % n_dimms
        elif node.deps:
            votes = Counter(out[d] for d in node.deps)
            pref = min(votes, key=lambda d: (-votes[d], d))
        elif find(nid) in comp_dimm:
            pref = comp_dimm[find(nid)]
        else:
            pref = rr % n_dimms
            rr += 1
        for k in range(n_dimms):
            d = (pref + k) % n_dimms
            if used[d] + need <= cap:
                break
        else:
            raise InfeasibleError(f"no DIMM has room for node {nid!r}")
        out[nid] = d
        comp_dimm[find(nid)] = d
        used[d] += need
        node.dimm = d
    return out


# -- transfers and packing --------------------------------------------------------------


@dataclass
class TransferCost:
    """Latencies in seconds. ``t_pack`` is a constant or a function of t."""

    t_pack: Union[float, Callable[[int], float]]
    lwe_transfer: float
    rlwe_transfer: float

    def __post_init__(self):
        if self.lwe_transfer < 0 or self.rlwe_transfer < 0:
            raise InvalidParameterError("transfer latencies must be >= 0")

    def pack_time(self, t: int) -> float:
        v = self.t_pack(t) if callable(self.t_pack) else self.t_pack
        if v < 0:
            raise InvalidParameterError("packing latency must be >= 0")
        return v


def packing_decision(t: int, costs: TransferCost) -> str:
    """Pack iff T_Pack(t) + RLWE.T_Transfer <= t * LWE.T_Transfer."""
    if t < 1:
        raise InvalidParameterError("batch size t must be >= 1")
    return PACK if costs.pack_time(t) + costs.rlwe_transfer <= t * costs.lwe_transfer else NO_PACK


@dataclass
class Transfer:
    ct: str
    src_node: str
    dst_node: str
    src_dimm: int
    dst_dimm: int
    nbytes: int
    ctype: str
    format: str = NO_PACK
    group: Optional[int] = None


def aggregation_plan(graph: TaskGraph, assignment: Dict[str, int],
                     ct_info: Callable[[str], Tuple[str, int]],
                     costs: Optional[TransferCost] = None,
                     packed_bytes: Optional[Callable[[int], int]] = None, move: bool = True):
    """Pick the aggregation DIMM of every multi-source node and list the transfers.

    For each node the candidates are the DIMMs of its producers plus its
    current DIMM; the one with the fewest incoming bytes wins (ties: keep the
    current DIMM, then lowest id). LWE inputs crossing the same DIMM pair
    into one node form a group that is packed when packing_decision says so.
    With ``move=False`` every node keeps its DIMM and only the transfers
    are listed. Returns (new assignment, transfers).
    """
    assign = dict(assignment)
    transfers: List[Transfer] = []
    group_id = 0
    for nid in graph.order:
        node = graph.nodes[nid]
        srcs = [(ct, graph.producer[ct]) for ct in node.inputs if ct in graph.producer]
        if not srcs:
            continue
        cands = sorted({assign[p] for _, p in srcs} | {assign[nid]})

        def incoming(d):
            return sum(ct_info(ct)[1] for ct, p in srcs if assign[p] != d)

        pinned = "dimm" in node.params
        best = assign[nid] if (pinned or not move) else min(cands, key=lambda d: (incoming(d), d != assign[nid], d))
        assign[nid] = best
        node.dimm = best
        groups: Dict[int, List[Transfer]] = defaultdict(list)
        for ct, p in srcs:
            if assign[p] == best:
                continue
            ctype, nbytes = ct_info(ct)
            tr = Transfer(ct, p, nid, assign[p], best, nbytes, ctype)
            transfers.append(tr)
            if ctype == "lwe":
                groups[assign[p]].append(tr)
        if costs is not None:
            for members in groups.values():
                t = len(members)
                if t >= 2 and packing_decision(t, costs) == PACK:
                    per = (packed_bytes(t) if packed_bytes else members[0].nbytes) / t
                    for tr in members:
                        tr.format = PACK
                        tr.group = group_id
                        tr.nbytes = int(round(per))
                    group_id += 1
    return assign, transfers


def transferred_bytes(graph: TaskGraph, assignment: Dict[str, int], ct_info) -> int:
    total = 0
    for nid in graph.order:
        for ct in graph.nodes[nid].inputs:
            p = graph.producer.get(ct)
            if p is not None and assignment[p] != assignment[nid]:
                total += ct_info(ct)[1]
    return total


@dataclass
class Schedule:
    graph: TaskGraph
    assignment: Dict[str, int]
    transfers: List[Transfer]
    n_dimms: int

    def to_json(self) -> dict:
        return {
            "n_dimms": self.n_dimms,
            "nodes": [{"id": nid, "op": self.graph.nodes[nid].op, "dimm": self.assignment[nid],
                       "order": self.graph.nodes[nid].index} for nid in self.graph.order],
            "transfers": [asdict(t) for t in self.transfers],
        }
