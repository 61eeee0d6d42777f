"""Near-memory compute core: functional units, the two routines and their timing.

R1 is the (I)NTT -> MMult -> MAdd pipeline, R2 the NTT-free MMult -> MAdd
pipeline. Front-end units (automorphism, decomposition) stream into R1.
Timing is closed form: a pass through a chain of FUs costs the sum of the
stage depths (fill) plus ceil(work / throughput) for the slowest unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Union

from apache_sim.errors import CapacityError, ConfigurationError, InvalidParameterError, RoutingError
from apache_sim.kernels.modmul import MultiplierMode
from apache_sim.memory import MiB

NTT, MMULT, MADD, AUTOMORPH, DECOMP, REGFILE = "ntt", "mmult", "madd", "automorph", "decomp", "regfile"
FU_KINDS = (NTT, MMULT, MADD, AUTOMORPH, DECOMP, REGFILE)
CONFIGURABLE = (NTT, MMULT, MADD)

R1, R2, IM = "R1", "R2", "IM"  # IM: in-memory accumulators (not an NMC routine)
LABEL_NTT, LABEL_NON = "NTT", "nonNTT"


@dataclass(frozen=True)
class FuInstance:
    kind: str
    pipeline_depth: int
    lanes: int
    mode: MultiplierMode = MultiplierMode.ONE64
    clock_hz: float = 1e9
    count: int = 1  # identical units ganged into one wide instance

    def __post_init__(self):
        if self.kind not in FU_KINDS:
            raise ConfigurationError(f"unknown FU kind {self.kind!r}")
        if self.pipeline_depth < 1 or self.lanes < 1 or self.count < 1 or self.clock_hz <= 0:
            raise ConfigurationError("depth, lanes, count and clock must be positive")
        d = self.pipeline_depth
        if self.kind == NTT and not 150 <= d <= 250:
            raise ConfigurationError(f"NTT depth {d} outside [150, 250]")
        if self.kind == MADD and d > 3:
            raise ConfigurationError(f"MAdd depth {d} exceeds 3")
        if self.kind == MMULT and d > 5:
            raise ConfigurationError(f"MMult depth {d} exceeds 5")
        if self.kind == AUTOMORPH and self.lanes >= 128 and d < 63:
            raise ConfigurationError(f"{self.lanes}-lane automorphism needs >= 63 stages")
        if self.mode == MultiplierMode.TWO32 and self.kind not in CONFIGURABLE:
            raise ConfigurationError(f"{self.kind} has no two32 mode")

    @property
    def effective_lanes(self) -> int:
        return self.lanes * self.count * self.mode.lanes

    @property
    def lane_width(self) -> int:
        return self.mode.lane_width if self.kind in CONFIGURABLE else 64

    @property
    def throughput(self) -> int:
        """Elements accepted per cycle."""
        return self.effective_lanes


def configure_fu_bitwidth(fu: FuInstance, mode: Union[MultiplierMode, str]) -> FuInstance:
    mode = MultiplierMode(mode)
    if fu.kind not in CONFIGURABLE:
        raise ConfigurationError(f"FU kind {fu.kind!r} has no configurable bitwidth")
    if fu.mode == mode:
        return fu
    return replace(fu, mode=mode)


def mode_switch_cycles(fu: FuInstance, mode: Union[MultiplierMode, str]) -> int:
    """A mode change flushes the pipeline once."""
    return 0 if fu.mode == MultiplierMode(mode) else fu.pipeline_depth


@dataclass(frozen=True)
class FuConfig:
    clock_hz: float = 1e9
    ntt_count: int = 4
    ntt_lanes: int = 64
    ntt_depth: int = 200
    mmult_count: int = 2
    mmult_lanes: int = 256
    mmult_depth: int = 5
    madd_count: int = 2
    madd_lanes: int = 256
    madd_depth: int = 3
    automorph_count: int = 2
    automorph_lanes: int = 128
    automorph_depth: int = 63
    decomp_count: int = 2
    decomp_lanes: int = 256
    decomp_depth: int = 4
    regfile_mb: int = 8
    aux_regfile_mb: int = 1
    mode: str = "auto"  # auto | one64 | two32
    topology: str = "dual"  # dual | single (single fixed pipeline baseline)
    arbitration: str = "r1_priority"
    r1_share: float = 0.5  # R1 part of a split NTT-independent operator

    def __post_init__(self):
        if self.mode not in ("auto", "one64", "two32"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.topology not in ("dual", "single"):
            raise ConfigurationError(f"unknown topology {self.topology!r}")
        if self.arbitration not in ("r1_priority", "r2_priority"):
            raise ConfigurationError(f"unknown arbitration {self.arbitration!r}")
        if not 0.5 <= self.r1_share <= 1.0:
            raise ConfigurationError("r1_share must lie in [0.5, 1]")
        if self.mmult_count < 2 or self.madd_count < 2:
            raise ConfigurationError("two routines need at least two MMult and two MAdd units")

    @property
    def regfile_bytes(self) -> int:
        return (self.regfile_mb + self.aux_regfile_mb) * MiB


@dataclass(frozen=True)
class PipelineRoutine:
    id: str
    fu_sequence: tuple
    regfile_capacity: int = 9 * MiB

    def __post_init__(self):
        if self.id == R2 and NTT in self.fu_sequence:
            raise ConfigurationError("R2 never contains an NTT stage")


ROUTINE_R1 = PipelineRoutine(R1, (NTT, MMULT, MADD))
ROUTINE_R2 = PipelineRoutine(R2, (MMULT, MADD))


class NmcModule:
    """FU inventory of one NMC module split over the two routines.

    R1 owns every NTT, automorphism and decomposition unit and the first
    MMult/MAdd unit (it is served first under r1_priority); R2 owns the rest.
    """

    def __init__(self, cfg: FuConfig = FuConfig(), mode: Union[MultiplierMode, str] = MultiplierMode.ONE64):
        self.cfg = cfg
        self.mode = MultiplierMode(mode)
        c = cfg
        mk = lambda kind, depth, lanes, count, m=MultiplierMode.ONE64: FuInstance(kind, depth, lanes, m, c.clock_hz, count)
        r1_mm = 1 if c.arbitration == "r1_priority" else c.mmult_count - 1
        r1_ma = 1 if c.arbitration == "r1_priority" else c.madd_count - 1
        self.r1 = {
            NTT: mk(NTT, c.ntt_depth, c.ntt_lanes, c.ntt_count, self.mode),
            MMULT: mk(MMULT, c.mmult_depth, c.mmult_lanes, r1_mm, self.mode),
            MADD: mk(MADD, c.madd_depth, c.madd_lanes, r1_ma, self.mode),
            AUTOMORPH: mk(AUTOMORPH, c.automorph_depth, c.automorph_lanes, c.automorph_count),
            DECOMP: mk(DECOMP, c.decomp_depth, c.decomp_lanes, c.decomp_count),
        }
        self.r2 = {
            MMULT: mk(MMULT, c.mmult_depth, c.mmult_lanes, c.mmult_count - r1_mm, self.mode),
            MADD: mk(MADD, c.madd_depth, c.madd_lanes, c.madd_count - r1_ma, self.mode),
        }

    def fus(self, routine: str) -> Dict[str, FuInstance]:
        if routine == R1:
            return self.r1
        if routine == R2:
            return self.r2
        raise RoutingError(f"routine {routine!r} has no FU set")

    def with_mode(self, mode) -> "NmcModule":
        return NmcModule(self.cfg, mode)

    @property
    def word_bytes(self) -> int:
        return 4 if self.mode == MultiplierMode.TWO32 else 8


# -- routing -----------------------------------------------------------------------------


@dataclass(frozen=True)
class RouteStep:
    name: str
    routine: str
    chain: tuple
    splittable: bool = False  # NTT-independent work that R2 may take over

    @property
    def label(self) -> str:
        return LABEL_NTT if NTT in self.chain else LABEL_NON


BR_CHAIN = (AUTOMORPH, DECOMP, NTT, MMULT, MADD)
KS_CHAIN = (NTT, MMULT, MADD)

ROUTES: Dict[str, tuple] = {
    "HAdd": (RouteStep("hadd", R2, (MADD,), True),),
    "PMult": (RouteStep("pmult", R2, (MMULT, MADD), True),),
    "CMult": (RouteStep("tensor", R1, KS_CHAIN), RouteStep("keyswitch", R1, KS_CHAIN)),
    "HRot": (RouteStep("rotate_keyswitch", R1, (AUTOMORPH,) + KS_CHAIN),),
    "CMUX": (RouteStep("diff", R2, (MADD,), True), RouteStep("extprod", R1, (DECOMP, NTT, MMULT, MADD))),
    "BlindRotate": (RouteStep("blind_rotate", R1, BR_CHAIN),),
    "HomGate": (RouteStep("linear", R2, (MADD,), True), RouteStep("blind_rotate", R1, BR_CHAIN),
                RouteStep("pubks", IM, ())),
    "CBoot": (RouteStep("blind_rotate", R1, BR_CHAIN), RouteStep("privks", IM, ())),
    "PubKS": (RouteStep("pubks", IM, ()),),
    "PrivKS": (RouteStep("privks", IM, ()),),
    "Pack": (RouteStep("pack", R1, (DECOMP, NTT, MMULT, MADD)),),
    "SampleExtract": (RouteStep("extract", R1, (AUTOMORPH,)),),
}


def _op_kind(op) -> str:
    kind = op if isinstance(op, str) else getattr(op, "kind", None) or getattr(op, "op", None)
    if kind is None and isinstance(op, Mapping):
        kind = op.get("op")
    return kind


def route_operation(op, topology: str = "dual"):
    """Route steps for one operator, or a list of step tuples for a list of operators.

    With ``topology="single"`` every step runs on R1 (the fixed-pipeline baseline).
    """
    if isinstance(op, (list, tuple)):
        return [route_operation(o, topology) for o in op]
    kind = _op_kind(op)
    if kind not in ROUTES:
        raise RoutingError(f"unknown operator {kind!r}")
    steps = ROUTES[kind]
    if topology == "single":
        steps = tuple(replace(s, routine=R1) if s.routine == R2 else s for s in steps)
    return steps


# -- timing segments -------------------------------------------------------------------------


@dataclass(frozen=True)
class TimingSegment:
    fu: str
    start: int
    end: int
    label: str
    routine: str
    op_id: Optional[str] = None

    def __post_init__(self):
        if self.end <= self.start:
            raise InvalidParameterError(f"segment end {self.end} must exceed start {self.start}")
        if self.label not in (LABEL_NTT, LABEL_NON):
            raise InvalidParameterError(f"bad label {self.label!r}")

    @property
    def length(self) -> int:
        return self.end - self.start


def stream_cycles(chain: Sequence[str], fus: Mapping[str, FuInstance], work) -> int:
    """Streaming time of the slowest unit; ``work`` is an int or per-kind dict."""
    worst = 0
    for k in chain:
        w = work.get(k, 0) if isinstance(work, Mapping) else work
        if w > 0:
            worst = max(worst, math.ceil(w / fus[k].throughput))
    return worst


def chain_segments(routine: str, chain: Sequence[str], fus: Mapping[str, FuInstance], work,
                   start: int = 0, label: Optional[str] = None, op_id: Optional[str] = None,
                   extra_fill: int = 0) -> List[TimingSegment]:
    """One segment per FU; unit i starts after the fill of units 0..i-1."""
    stream = stream_cycles(chain, fus, work)
    if stream == 0:
        return []
    label = label or (LABEL_NTT if NTT in chain else LABEL_NON)
    segs = []
    offset = extra_fill
    for k in chain:
        d = fus[k].pipeline_depth
        segs.append(TimingSegment(f"{routine}.{k}", start + offset, start + offset + d + stream, label,
                                  routine, op_id))
        offset += d
    return segs


def chain_fill(chain: Sequence[str], fus: Mapping[str, FuInstance]) -> int:
    return sum(fus[k].pipeline_depth for k in chain)


def pipeline_latency(op, fus, size: int, start: int = 0, word_bytes: int = 8,
                     regfile_bytes: int = 9 * MiB) -> List[TimingSegment]:
    """Segments for ``size`` elements pushed through every step of ``op``'s route.

    ``fus`` is an NmcModule or a kind -> FuInstance mapping used for every
    routine. Steps run back to back. In-memory steps are not timed here.
    """
    if size < 0:
        raise InvalidParameterError("size must be >= 0")
    if size == 0:
        return []
    if size * word_bytes > regfile_bytes:
        raise CapacityError(f"{size} elements exceed the {regfile_bytes} B register file; tile the operation")
    segs: List[TimingSegment] = []
    t = start
    for step in route_operation(op):
        if step.routine == IM:
            continue
        units = fus.fus(step.routine) if isinstance(fus, NmcModule) else fus
        s = chain_segments(step.routine, step.chain, units, size, t)
        if s:
            t = max(x.end for x in s)
            segs.extend(s)
    return segs


# -- busy-interval arithmetic ---------------------------------------------------------------


def union_length(intervals) -> int:
    """Measure of the union of half-open [start, end) intervals."""
    total = 0
    cur_s = cur_e = None
    for s, e in sorted(intervals):
        if cur_e is None or s > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = s, e
        else:
            cur_e = max(cur_e, e)
    if cur_e is not None:
        total += cur_e - cur_s
    return total


def check_no_overlap(segments: Sequence[TimingSegment]) -> None:
    from apache_sim.errors import InvariantViolation

    by_fu: Dict[str, list] = {}
    for s in segments:
        by_fu.setdefault(s.fu, []).append((s.start, s.end))
    for fu, iv in by_fu.items():
        iv.sort()
        for (s0, e0), (s1, e1) in zip(iv, iv[1:]):
            if s1 < e0:
                raise InvariantViolation(f"overlapping segments on {fu}: [{s0},{e0}) and [{s1},{e1})")
