"""Three-level memory model: host I/O, near-memory DRAM ranks, in-memory accumulators.

DRAM timing is a closed-form approximation (row hit / row miss plus burst
time), not a command-level simulator. All bit movement is recorded in a
BitLedger so bandwidth claims can be recomputed from a run.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, fields
from typing import Dict, Iterable, Optional, Sequence, Tuple

from apache_sim.errors import (
    InvalidParameterError,
    MissingKeyError,
    RangeError,
    UndefinedRatioError,
)

KiB = 1 << 10
MiB = 1 << 20
GiB = 1 << 30

ROW_HIT = "row-hit"
ROW_MISS = "row-miss"

IO = "io"
NEAR_MEMORY = "near_memory"
IN_MEMORY = "in_memory"
LEVELS = (IO, NEAR_MEMORY, IN_MEMORY)

PUBLIC = "public"
PRIVATE = "private"


@dataclass(frozen=True)
class DimmConfig:
    capacity_bytes: int = 8 * GiB
    ranks: int = 8
    nmc_per_dimm: int = 1
    transfer_rate_mts: int = 3200
    clock_mhz: int = 1600
    tRCD: int = 22
    tCAS: int = 22
    tRP: int = 22
    data_buffer_bytes: int = 24 * MiB
    chips_per_rank: int = 8
    chip_width_bits: int = 8
    banks_per_chip: int = 16
    adder_interval: int = 4  # DRAM cycles per 32-bit accumulation per bank (conservative default)

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v <= 0:
                raise InvalidParameterError(f"DimmConfig.{f.name} must be a positive integer, got {v!r}")

    @property
    def tck_ns(self) -> float:
        return 1000.0 / self.clock_mhz

    @property
    def chip_bandwidth(self) -> float:
        """Bytes/s delivered by one chip."""
        return self.transfer_rate_mts * 1e6 * self.chip_width_bits / 8

    @property
    def rank_bandwidth(self) -> float:
        return self.chips_per_rank * self.chip_bandwidth

    @property
    def aggregate_bandwidth(self) -> float:
        return self.ranks * self.rank_bandwidth

    @property
    def banks(self) -> int:
        return self.ranks * self.chips_per_rank * self.banks_per_chip

    @property
    def bus_bits_per_cycle(self) -> int:
        # double data rate over one rank's data bus
        return 2 * self.chips_per_rank * self.chip_width_bits


def dram_access_latency(access: str, burst_bytes: int, dimm: DimmConfig = DimmConfig()) -> float:
    """Nanoseconds for one access of ``burst_bytes`` from a single x8 chip."""
    if burst_bytes < 0:
        raise RangeError("burst_bytes must be >= 0")
    if access == ROW_HIT:
        cmd = dimm.tCAS
    elif access == ROW_MISS:
        cmd = dimm.tRP + dimm.tRCD + dimm.tCAS
    else:
        raise InvalidParameterError(f"unknown access kind {access!r}")
    return cmd * dimm.tck_ns + burst_bytes / dimm.chip_bandwidth * 1e9


@dataclass(frozen=True)
class MemoryLevelModel:
    level: str
    bandwidth: float  # bytes/s
    latency_ns: float = 0.0
    capacity_bytes: Optional[int] = None

    def __post_init__(self):
        if self.level not in LEVELS:
            raise InvalidParameterError(f"unknown memory level {self.level!r}")
        if self.bandwidth <= 0:
            raise InvalidParameterError("bandwidth must be positive")

    def transfer_ns(self, nbytes: float) -> float:
        if nbytes < 0:
            raise RangeError("byte count must be >= 0")
        if nbytes == 0:
            return 0.0
        return self.latency_ns + nbytes / self.bandwidth * 1e9


def default_levels(dimm: DimmConfig = DimmConfig(), io_bandwidth: float = 32e9) -> Dict[str, MemoryLevelModel]:
    miss = dram_access_latency(ROW_MISS, 0, dimm)
    accum_bw = dimm.banks * 4 / (dimm.adder_interval * dimm.tck_ns * 1e-9)
    return {
        IO: MemoryLevelModel(IO, io_bandwidth),
        NEAR_MEMORY: MemoryLevelModel(NEAR_MEMORY, dimm.aggregate_bandwidth, miss, dimm.capacity_bytes),
        IN_MEMORY: MemoryLevelModel(IN_MEMORY, accum_bw, 0.0, dimm.capacity_bytes),
    }


class BitLedger:
    """Per-level bit counters keyed by operator instance. Counters only grow."""

    def __init__(self):
        self._rows: Dict[Tuple[str, str], list] = {}

    def record(self, op_id: str, level: str, bits_in: int = 0, bits_out: int = 0) -> None:
        if level not in LEVELS:
            raise InvalidParameterError(f"unknown memory level {level!r}")
        if bits_in < 0 or bits_out < 0:
            raise RangeError("ledger counters are monotone; negative increments rejected")
        row = self._rows.setdefault((str(op_id), level), [0, 0])
        row[0] += int(bits_in)
        row[1] += int(bits_out)

    def rows(self):
        for (op_id, level), (bi, bo) in self._rows.items():
            yield op_id, level, bi, bo

    def totals(self) -> Dict[str, Dict[str, int]]:
        out = {lv: {"bits_in": 0, "bits_out": 0} for lv in LEVELS}
        for _, level, bi, bo in self.rows():
            out[level]["bits_in"] += bi
            out[level]["bits_out"] += bo
        return out

    def for_op(self, op_id: str) -> Dict[str, Tuple[int, int]]:
        return {lv: tuple(v) for (oid, lv), v in self._rows.items() if oid == str(op_id)}

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["op_id", "level", "bits_in", "bits_out"])
        for row in self.rows():
            w.writerow(row)
        return buf.getvalue() if fh is None else ""


# -- in-memory key switching --------------------------------------------------------


def transmitted_bits(kind: str, dims: Sequence[int]) -> int:
    n, t, p = _dims(dims)
    if kind == PUBLIC:
        return n * t
    if kind == PRIVATE:
        return p * (n + 1) * t if n > 0 else 0
    raise InvalidParameterError(f"unknown key-switch kind {kind!r}")


def _dims(dims) -> Tuple[int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) == 2:
        dims = dims + (1,)
    if len(dims) != 3 or any(d < 0 for d in dims):
        raise InvalidParameterError(f"dims must be (n, t[, p]) with non-negative entries, got {dims}")
    return dims


class InMemoryUnit:
    """Bank-level accumulators of one DIMM plus the set of preloaded keys."""

    def __init__(self, dimm: DimmConfig = DimmConfig()):
        self.dimm = dimm
        self.preloaded: Dict[str, int] = {}

    def preload(self, key_id: str, rank: int = 0) -> None:
        if not 0 <= rank < self.dimm.ranks:
            raise RangeError(f"rank {rank} out of range")
        self.preloaded[key_id] = rank

    def execute(self, kind: str, dims: Sequence[int], key_id: str,
                entry_words: int = 1, word_bits: int = 32) -> Tuple[int, int]:
        """(transmitted bits, DRAM cycles).

        Each transmitted digit selects one key entry of ``entry_words`` words;
        the selected entries are summed by the bank adders. Cycles are the
        digit broadcast over the rank bus plus the accumulation drain.
        """
        if key_id not in self.preloaded:
            raise MissingKeyError(f"key {key_id!r} is not preloaded")
        bits = transmitted_bits(kind, dims)
        if bits == 0:
            return 0, 0
        d = self.dimm
        broadcast = math.ceil(bits / d.bus_bits_per_cycle)
        accums = bits * entry_words * math.ceil(word_bits / 32)
        drain = math.ceil(accums / d.banks) * d.adder_interval
        return bits, broadcast + drain


def inmem_keyswitch_execute(kind: str, dims: Sequence[int], unit: Optional[InMemoryUnit] = None,
                            key_id: str = "ks", entry_words: int = 1, word_bits: int = 32) -> Tuple[int, int]:
    if unit is None:
        raise MissingKeyError("no in-memory unit with a preloaded key")
    return unit.execute(kind, dims, key_id, entry_words, word_bits)


def bandwidth_reduction_factor(kind: str, dims: Sequence[int], key_bytes: float) -> float:
    """Key-loading bits over in-memory transmitted bits."""
    bits = transmitted_bits(kind, dims)
    if bits == 0:
        raise UndefinedRatioError("no bits transmitted; reduction factor undefined")
    return key_bytes * 8 / bits


def calibrate_dims(kind: str, key_bytes: float, target: float, n_grid: Iterable[int],
                   t_grid: Iterable[int], p_grid: Iterable[int] = (1,)):
    """Exhaustive search for the dims whose reduction factor is closest to
    ``target`` in log distance. Ties go to the lexicographically smallest
    (p, n, t). Returns (dims, ratio)."""
    best = None
    for p in sorted(p_grid):
        for n in sorted(n_grid):
            for t in sorted(t_grid):
                dims = (n, t, p)
                if transmitted_bits(kind, dims) == 0:
                    continue
                r = bandwidth_reduction_factor(kind, dims, key_bytes)
                score = abs(math.log(r / target))
                if best is None or score < best[0] - 1e-15:
                    best = (score, dims, r)
    if best is None:
        raise UndefinedRatioError("empty calibration grid")
    return best[1], best[2]


# -- buffers ---------------------------------------------------------------------------

REGFILE = "regfile"
DATA_BUFFER = "data_buffer"


@dataclass(frozen=True)
class FitResult:
    fits: bool
    tiles: int
    tile_bytes: int
    capacity_bytes: int


def buffer_capacity(level: str, dimm: DimmConfig = DimmConfig(), regfile_bytes: int = 9 * MiB) -> int:
    if level == REGFILE:
        return regfile_bytes
    if level == DATA_BUFFER:
        return dimm.data_buffer_bytes
    raise InvalidParameterError(f"unknown buffer level {level!r}")


def buffer_fit_check(working_set_bytes: int, level: str, dimm: DimmConfig = DimmConfig(),
                     regfile_bytes: int = 9 * MiB) -> FitResult:
    cap = buffer_capacity(level, dimm, regfile_bytes)
    if working_set_bytes < 0:
        raise RangeError("working set must be >= 0")
    if working_set_bytes <= cap:
        return FitResult(True, 1, int(working_set_bytes), cap)
    tiles = -(-int(working_set_bytes) // cap)
    return FitResult(False, tiles, -(-int(working_set_bytes) // tiles), cap)
