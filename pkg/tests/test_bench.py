import pytest

from apache_sim import bench
from apache_sim.memory import PRIVATE, PUBLIC


def test_calibrate_keyswitch_matches_config(cfg):
    cal = bench.calibrate_keyswitch()
    r = cfg.ring
    assert cal[PUBLIC]["dims"] == (r.pubks_n, r.pubks_t, 1)
    assert cal[PRIVATE]["dims"] == (r.privks_n, r.privks_t, r.privks_p)
    red = bench.reduction_factors(cfg)
    assert red[PUBLIC] == pytest.approx(cal[PUBLIC]["ratio"])
    assert red[PRIVATE] == pytest.approx(cal[PRIVATE]["ratio"])


def test_scaling_small(cfg):
    s = bench.scaling("HomGate", cfg, (1, 2), count=64)
    assert set(s["op_per_s"]) == {1, 2}
    assert s["ratio"] == pytest.approx(s["op_per_s"][2] / s["op_per_s"][1])


def test_run_app_bundled(cfg):
    rep = bench.run_app("mnist", cfg, 1, functional=False, bundled=True)
    assert rep.op_counts
    rep0 = bench.run_app("mnist", cfg, 1, functional=False, layers=0)
    assert rep0.op_counts == {} and rep0.makespan_cycles == rep0.setup_cycles > 0


def test_vsp_metrics_small(cfg):
    m = bench.vsp_metrics(cfg, address_bits=2)
    assert 0 < m["transfer_cycles"] <= m["span_cycles"]
    assert m["forward_s"] == pytest.approx(m["transfer_cycles"] / 1e9)
