"""Benchmark helpers behind the CLI: operator batches, applications,
DIMM scaling, the VSP readout metrics and the key-switch calibration."""

from __future__ import annotations

from dataclasses import replace
from typing import Dict, Optional, Sequence, Union

from apache_sim.config import SimConfig
from apache_sim.engine import SimReport, simulate_trace
from apache_sim.errors import InvariantViolation
from apache_sim.memory import PRIVATE, PUBLIC, bandwidth_reduction_factor, calibrate_dims
from apache_sim.workloads import app_trace, bundled_trace, op_batch, vsp_readout

# key-switch calibration grid and targets (key-loading bits / transmitted bits)
KS_TARGETS = {PUBLIC: 3.05e4, PRIVATE: 3.15e5}
KS_KEY_BYTES = {PUBLIC: 79 * (1 << 20), PRIVATE: 1.8 * (1 << 30)}
KS_GRID = {
    PUBLIC: {"n_grid": (512, 1024, 2048), "t_grid": range(1, 17), "p_grid": (1,)},
    PRIVATE: {"n_grid": (512, 1024, 2048), "t_grid": range(1, 9), "p_grid": range(1, 9)},
}

# batch size for the throughput comparisons
THROUGHPUT_BATCH = 512


def calibrate_keyswitch(key_bytes: Optional[Dict[str, float]] = None) -> Dict[str, dict]:
    """Grid-search the (n, t, p) dims per key-switch kind against the targets."""
    key_bytes = key_bytes or KS_KEY_BYTES
    out = {}
    for kind, target in KS_TARGETS.items():
        dims, ratio = calibrate_dims(kind, key_bytes[kind], target, **KS_GRID[kind])
        out[kind] = {"dims": dims, "ratio": ratio, "target": target, "key_bytes": key_bytes[kind]}
    return out


def reduction_factors(cfg: SimConfig) -> Dict[str, float]:
    """Reduction factors of the configured key-switch dims."""
    r = cfg.ring
    return {
        PUBLIC: bandwidth_reduction_factor(PUBLIC, (r.pubks_n, r.pubks_t, 1), r.pubks_key_bytes),
        PRIVATE: bandwidth_reduction_factor(PRIVATE, (r.privks_n, r.privks_t, r.privks_p), r.privks_key_bytes),
    }


def run_op(op: str, cfg: SimConfig, dimms: Optional[int] = None, count: int = THROUGHPUT_BATCH, seed: int = 0,
           functional: Union[bool, int] = False) -> SimReport:
    """``count`` independent instances of one operator."""
    return simulate_trace(op_batch(op, count, seed), cfg, dimms, seed, functional)


def run_app(name: str, cfg: SimConfig, dimms: Optional[int] = None, seed: int = 0,
            functional: Union[bool, int] = False, bundled: bool = False, **kw) -> SimReport:
    trace = bundled_trace(name) if bundled else app_trace(name, **kw)
    return simulate_trace(trace, cfg, dimms, seed, functional)


def scaling(op: str, cfg: SimConfig, dimms: Sequence[int] = (2, 4), count: int = THROUGHPUT_BATCH,
            seed: int = 0) -> Dict[str, object]:
    """op/s of one operator batch per DIMM count, plus last/first ratio."""
    ops = {}
    for n in dimms:
        rep = run_op(op, cfg, n, count, seed)
        ops[n] = rep.op_per_s.get(op, 0.0)
    first, last = ops[dimms[0]], ops[dimms[-1]]
    return {"op": op, "op_per_s": ops, "ratio": last / first if first else None}


def vsp_metrics(cfg: SimConfig, address_bits: int = 9, io_bandwidth: float = 32e9, seed: int = 0,
                functional: Union[bool, int] = False) -> Dict[str, float]:
    """Local readout time and per-LWE forward time of the VSP-style RAM read.

    The readout runs from the first circuit bootstrap starting on DIMM 0 to
    the extracted LWE; the forward time is the host-channel transfer of that
    LWE to DIMM 1. The transfer must not exceed the local computation span.
    """
    cfg = replace(cfg, scheduler=replace(cfg.scheduler, io_bandwidth=io_bandwidth))
    rep = simulate_trace(vsp_readout(address_bits, seed), cfg, max(2, cfg.scheduler.dimms), seed, functional)
    nodes = rep.nodes
    start = min(v["start"] for k, v in nodes.items() if k.startswith("cb"))
    span = nodes["extract"]["done"] - start
    fw = [tr for tr in rep.transfers["list"] if tr["ct"] == "word"]
    if not fw:
        raise InvariantViolation("the extracted LWE was not forwarded")
    tr_cycles = fw[0]["end"] - fw[0]["start"]
    if tr_cycles > span:
        raise InvariantViolation("host transfer exceeds the local computation span")
    return {
        "readout_s": span / rep.clock_hz,
        "forward_s": tr_cycles / rep.clock_hz,
        "transfer_cycles": tr_cycles,
        "span_cycles": span,
        "report": rep,
    }

