import math
from dataclasses import replace

import numpy as np
import pytest

from gafcells.partition import Field, Partition, PartitionScheme
from gafcells.protocol import ProtocolParams
from gafcells.serialize import dumps
from gafcells.sim import SimConfig, compare_lifetimes, deploy, run, timeseries_csv

QUIET = dict(draw_sleeping=0.0, draw_discovery=0.0)


def cfg(protocol="gaf", size=None, sub=None, extent=(3.0, 3.0), n=200, **kw):
    if size is None:
        size = 1 / math.sqrt(5)
    params = kw.pop("params", ProtocolParams(t_discovery=1, t_active=10, t_sleep=2, battery=30))
    scheme = PartitionScheme(protocol, "square", size, sub, epoch=kw.pop("epoch", 20.0))
    return SimConfig(Field(extent), scheme, params, R=1.0, n_nodes=n, audit_interval=kw.pop("audit_interval", 1.0), **kw)


def test_deploy():
    c = cfg(n=1)
    pts = deploy(c)
    assert pts.shape == (1, 2) and c.field.contains(pts).all()
    assert np.array_equal(deploy(replace(c, n_nodes=50, seed=4)), deploy(replace(c, n_nodes=50, seed=4)))


def test_deploy_counts_are_multinomial():
    c = SimConfig(Field((10.0, 10.0)), PartitionScheme("gaf", "square", 2.0), n_nodes=10**4, seed=3)
    counts = np.bincount(Partition(c.field, c.scheme).locate(deploy(c)), minlength=25)
    p = 1 / 25
    sigma = math.sqrt(10**4 * p * (1 - p))
    assert np.all(np.abs(counts - 400) <= 5 * sigma)
    chi2 = float(((counts - 400) ** 2 / 400).sum())
    assert chi2 < 60  # df = 24; p ~ 1e-4


@pytest.mark.parametrize(
    "c",
    [
        cfg(),
        cfg("hgaf", 0.6, 0.2, epoch=7.0),
        cfg("ehgaf", 0.6, 0.2, epoch=7.0),
        cfg("gaf", params=ProtocolParams(t_discovery=1, t_active=4, t_sleep=1, battery=12, **QUIET), n=60),
        SimConfig(Field((2.0, 2.0, 2.0)), PartitionScheme("ehgaf", "cube", 0.9, 0.3, epoch=5.0),
                  ProtocolParams(t_discovery=1, t_active=6, t_sleep=2, battery=20), n_nodes=120, audit_interval=1.0),
    ],
    ids=["gaf", "hgaf", "ehgaf", "gaf-quiet", "cube"],
)
def test_vectorized_engine_matches_reference(c):
    assert run(c) == run(c, engine="reference")


def test_single_node_lifetime_is_battery():
    B = 25.0
    params = ProtocolParams(t_discovery=1, t_active=10 * B, t_sleep=5, draw_sleeping=0.0, battery=B)
    c = SimConfig(Field((1.0, 1.0)), PartitionScheme("gaf", "square", 1.0), params, n_nodes=1, audit_interval=1.0)
    rep = run(c)
    assert rep.lifetime_first_cell_death == pytest.approx(B, rel=1e-9)
    assert not rep.censored


@pytest.mark.parametrize("k", [2, 5, 9])
def test_k_nodes_lifetime(k):
    B = 20.0
    params = ProtocolParams(t_discovery=1, t_active=8, t_sleep=1, battery=B, **QUIET)
    c = SimConfig(Field((1.0, 1.0)), PartitionScheme("gaf", "square", 1.0), params, n_nodes=k, seed=k, audit_interval=1.0)
    rep = run(c)
    # every hand-over leaves the cell without an active node for at most T_s + T_d
    handovers = k * B / params.t_active + k
    slack = handovers * (params.t_sleep + params.t_discovery + c.dt)
    assert k * B <= rep.lifetime_first_cell_death <= k * B + slack
    assert rep.total_energy_consumed == pytest.approx(k * B, rel=1e-9)


def test_gaf_at_bound_passes_distance_audits():
    c = cfg(extent=(2.0, 2.0), n=1500, max_time=300.0, params=ProtocolParams())
    rep = run(c)
    assert rep.req1_pass_rate == 1.0 and rep.req2_pass_rate == 1.0
    assert rep.one_active_fraction >= 0.95


def test_report_invariants_and_ledger():
    c = cfg(max_time=50.0, params=ProtocolParams(t_discovery=1, t_active=10, t_sleep=3, battery=1000))
    rep = run(c)
    assert rep.censored and rep.lifetime_first_cell_death == 50.0
    assert rep.total_energy_consumed <= c.n_nodes * c.params.battery
    assert rep.total_energy_consumed == pytest.approx(rep.energy_integral, rel=1e-9)
    assert rep.at_most_one_fraction == 1.0
    assert rep.lifetime_model_estimate == pytest.approx(c.n_nodes * 1000 / rep.nonempty_cells)


def test_battery_doubling_doubles_gap_free_lifetime():
    params = ProtocolParams(t_discovery=1, t_active=1000, t_sleep=5, draw_sleeping=0.0, battery=15)
    base = SimConfig(Field((1.0, 1.0)), PartitionScheme("gaf", "square", 1.0), params, n_nodes=1, audit_interval=1.0)
    double = replace(base, params=replace(params, battery=30))
    one, two = run(base).lifetime_first_cell_death, run(double).lifetime_first_cell_death
    assert two >= 2 * one * (1 - 1e-9)


@pytest.mark.parametrize("seed", [0, 1])
def test_battery_doubling_with_handover_gaps(seed):
    # lifetime is k B plus hand-over gaps; the gaps do not scale with B
    params = ProtocolParams(t_discovery=1, t_active=10, t_sleep=3, battery=15, **QUIET)
    base = cfg(n=600, seed=seed, params=params)
    double = replace(base, params=replace(params, battery=30))
    one, two = run(base), run(double)
    k = int(np.bincount(Partition(base.field, base.scheme).locate(deploy(base))).max())
    handovers = k * params.battery / params.t_active + k
    slack = handovers * (params.t_sleep + params.t_discovery + base.dt)
    assert two.lifetime_first_cell_death >= 2 * one.lifetime_first_cell_death - 2 * slack
    assert two.lifetime_first_cell_death > one.lifetime_first_cell_death


def test_determinism_byte_identical():
    c = cfg("ehgaf", 0.6, 0.2, epoch=5.0, seed=9)
    assert dumps(run(c)) == dumps(run(c))


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(n=0)
    with pytest.raises(ValueError):
        cfg(step=0.5)
    with pytest.raises(ValueError):
        cfg(size=0.6, strict=True)
    with pytest.raises(ValueError):
        SimConfig(Field((2.0, 2.0)), PartitionScheme("gaf", "cube", 1.0))


def test_timeseries_csv():
    rep = run(cfg(max_time=5.0))
    lines = timeseries_csv(rep).splitlines()
    assert lines[0] == "time,active_count,live_count,req1_worst,req2_worst"
    assert len(lines) == rep.audits + 1
    assert lines[1].split(",")[0] == "0.0"


def test_compare_lifetimes():
    gaf = cfg(extent=(2.0, 2.0), n=100, params=ProtocolParams(t_discovery=1, t_active=5, t_sleep=1, battery=5, **QUIET))
    same = compare_lifetimes([gaf, gaf], [0, 1, 2])
    r = same.ratio(0, 1)
    assert r.measured == 1.0 and r.ci_low <= 1.0 <= r.ci_high and r.predicted == 1.0

    big = replace(gaf, scheme=PartitionScheme("ehgaf", "square", 1.0, 1 / 3, epoch=20.0))
    cmp = compare_lifetimes([gaf, big], [0, 1, 2])
    assert cmp.ratio(0, 1).predicted == pytest.approx(0.2)
    assert len(cmp.lifetimes[0]) == 3

    with pytest.raises(ValueError):
        compare_lifetimes([gaf, gaf], [0, 1])
    with pytest.raises(ValueError):
        compare_lifetimes([gaf, replace(gaf, n_nodes=99)], [0, 1, 2])


def test_compare_lifetimes_with_workers_matches_serial():
    gaf = cfg(extent=(2.0, 2.0), n=80, params=ProtocolParams(t_discovery=1, t_active=5, t_sleep=1, battery=5, **QUIET))
    assert compare_lifetimes([gaf], [0, 1, 2], workers=2) == compare_lifetimes([gaf], [0, 1, 2])


@pytest.mark.parametrize("protocol", ["hgaf", "ehgaf"])
def test_subcell_schemes_at_bound_pass_settled_audits(protocol):
    from gafcells.bounds import max_size_for_quotient

    s = max_size_for_quotient(protocol, "square", 1.0, 3)
    params = ProtocolParams(t_discovery=1, t_active=1, t_sleep=1, battery=1e6)
    c = SimConfig(Field((6 * s, 6 * s)), PartitionScheme(protocol, "square", s, s / 3, epoch=3.0), params,
                  n_nodes=1800, max_time=30.0, audit_interval=0.5)
    rep = run(c)
    assert rep.transient_audits > 0
    assert rep.req1_pass_rate == 1.0 and rep.req2_pass_rate == 1.0
    assert rep.fallback_active_fraction < 0.1
