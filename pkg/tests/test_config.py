import math
from pathlib import Path

import pytest

from gafcells.bounds import Protocol, max_size_for_quotient
from gafcells.config import SCHEMA, ConfigError, describe_keys, load_config, read_raw

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def test_defaults():
    cfg = load_config(env={})
    assert cfg.scheme.protocol is Protocol.GAF
    assert cfg.scheme.size == pytest.approx(1 / math.sqrt(5))
    assert cfg.params.t_active == 60 and cfg.params.battery == 1000
    assert cfg.field.extent == (10.0, 10.0)
    assert cfg.dt == pytest.approx(0.1)


def test_unknown_section_and_key(tmp_path):
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(write(tmp_path, "[radio]\nloss = 0\n"), env={})
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(write(tmp_path, "[sim]\nnode = 5\n"), env={})
    with pytest.raises(ConfigError, match="unknown key"):
        read_raw(overrides={"sim.nodez": "1"}, env={})
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.cfg", env={})


def test_precedence(tmp_path):
    p = write(tmp_path, "[sim]\nnodes = 50\nseed = 1\n")
    assert load_config(p, env={}).n_nodes == 50
    env = {"GAFCELLS_SIM_NODES": "70", "GAFCELLS_SIM_SEED": "3"}
    cfg = load_config(p, env=env)
    assert (cfg.n_nodes, cfg.seed) == (70, 3)
    cfg = load_config(p, env=env, overrides={"sim.nodes": "90"})
    assert (cfg.n_nodes, cfg.seed) == (90, 3)


def test_bad_values(tmp_path):
    with pytest.raises(ConfigError, match="sim.nodes"):
        load_config(overrides={"sim.nodes": "many"}, env={})
    with pytest.raises(ConfigError):
        load_config(overrides={"scheme.shape": "pentagon"}, env={})
    with pytest.raises(ConfigError):
        load_config(overrides={"protocol.t_discovery": "0"}, env={})
    with pytest.raises(ConfigError, match="quotient"):
        load_config(overrides={"scheme.protocol": "hgaf"}, env={})


def test_size_max_uses_quotient():
    cfg = load_config(CONFIGS / "lifetime_ehgaf.cfg", env={})
    assert cfg.scheme.size == pytest.approx(max_size_for_quotient("ehgaf", "square", 1.0, 11))
    assert cfg.scheme.subcell == pytest.approx(cfg.scheme.size / 11)
    hgaf = load_config(CONFIGS / "lifetime_hgaf.cfg", env={})
    assert hgaf.scheme.size == pytest.approx(1 / math.sqrt(2))


def test_units_scale_with_range():
    rel = load_config(overrides={"sim.range": "2", "scheme.size": "0.4"}, env={})
    assert rel.field.extent == (20.0, 20.0) and rel.scheme.size == pytest.approx(0.8)
    absolute = load_config(overrides={"sim.range": "2", "scheme.size": "0.4", "sim.absolute_units": "yes"}, env={})
    assert absolute.field.extent == (10.0, 10.0) and absolute.scheme.size == pytest.approx(0.4)


def test_subcell_consistency():
    with pytest.raises(ConfigError, match="disagrees"):
        load_config(overrides={"scheme.protocol": "hgaf", "scheme.size": "0.6", "scheme.quotient": "3",
                               "scheme.subcell": "0.3"}, env={})
    cfg = load_config(overrides={"scheme.protocol": "hgaf", "scheme.size": "0.6", "scheme.subcell": "0.2"}, env={})
    assert cfg.scheme.subcell == pytest.approx(0.2)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.cfg")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path, env={})
    assert cfg.n_nodes >= 1


def test_describe_keys_lists_everything():
    text = describe_keys()
    for k in SCHEMA:
        assert f"[{k.section}] {k.name} ({k.unit}," in text
    assert len({k.flag for k in SCHEMA}) == len(SCHEMA)
    assert all(k.env.startswith("GAFCELLS_") for k in SCHEMA)
