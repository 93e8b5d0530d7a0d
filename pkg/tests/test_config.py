import pytest
from hypothesis import given, settings, strategies as st

from inls.config import SCHEMA, ConfigError, from_values, load_config, parse_config, schema_doc

MINIMAL = """\
# focusing Gaussian
model.N = 3
model.b = 1.0
grid.points = 32
grid.L = 10.0
data.amplitude = 0.5
evolve.t_end = 0.5
"""


def test_minimal_round_trip():
    cfg = parse_config(MINIMAL)
    assert cfg["grid.points"] == 32 and cfg["data.family"] == "gaussian"
    text = cfg.dumps(full=False)
    assert sorted(text.splitlines()) == sorted(
        l.replace("= 3", "= 3").strip() for l in parse_config(text).dumps(full=False).splitlines())
    again = parse_config(text)
    assert again.dumps(full=False) == text
    assert again.values == cfg.values and again.hash == cfg.hash
    full = parse_config(cfg.dumps())
    assert full.dumps() == cfg.dumps()


def test_key_order_irrelevant():
    lines = [l for l in MINIMAL.splitlines() if l and not l.startswith("#")]
    assert parse_config("\n".join(reversed(lines))).hash == parse_config(MINIMAL).hash


def test_unknown_key():
    with pytest.raises(ConfigError) as ei:
        parse_config(MINIMAL + "gridd = 3\n")
    assert any("unknown key 'gridd'" in e for e in ei.value.errors)


def test_N6_range_error():
    with pytest.raises(ConfigError) as ei:
        parse_config(MINIMAL.replace("model.N = 3", "model.N = 6"))
    assert any(e.startswith("model:") for e in ei.value.errors)


def test_all_errors_reported():
    bad = MINIMAL.replace("model.N = 3", "model.N = 6") + "gridd = 1\nevolve.dt = -1\nnot a line\nmodel.b = 2\n"
    with pytest.raises(ConfigError) as ei:
        parse_config(bad)
    errs = ei.value.errors
    assert any("gridd" in e for e in errs)
    assert any(e.startswith("model:") for e in errs)
    assert any(e.startswith("evolve:") for e in errs)
    assert any("expected 'key = value'" in e for e in errs)
    assert any("duplicate" in e for e in errs)


def test_type_errors():
    with pytest.raises(ConfigError):
        parse_config("grid.points = many\n")
    with pytest.raises(ConfigError):
        parse_config("evolve.sponge = yes\n")
    with pytest.raises(ConfigError):
        parse_config("grid.points = 98\n")


def test_cross_checks():
    with pytest.raises(ConfigError):
        from_values({"data.family": "translated-gaussian"})
    with pytest.raises(ConfigError):
        from_values({"data.x0": (1.0, 2.0)})
    with pytest.raises(ConfigError):
        from_values({"diag.virial_weight": "bump", "diag.virial_R": 5.0, "grid.L": 20.0})
    with pytest.raises(ConfigError):
        from_values({"model.N": 4})
    cfg = from_values({"model.N": 4, "grid.radial": True})
    assert cfg.grid().radial and cfg.model().alpha == 1.0
    with pytest.raises(ConfigError):
        from_values({"model.alpha": 3.0})
    assert from_values({"model.alpha": 3.0, "model.exploratory": True, "model.b": 0.5}).model().alpha == 3.0


def test_replace_and_objects():
    cfg = parse_config(MINIMAL)
    c2 = cfg.replace(**{"data.amplitude": 0.7})
    assert c2["data.amplitude"] == 0.7 and c2.hash != cfg.hash
    with pytest.raises(ConfigError):
        cfg.replace(**{"nope": 1})
    e = cfg.replace(**{"evolve.sponge": True}).evolve_config()
    assert e.sponge is not None and e.checkpoint_stride == 10
    assert cfg.thresholds().proxy_tail == 0.05


def test_load_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(MINIMAL)
    assert load_config(p).hash == parse_config(MINIMAL).hash
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_schema_doc_lists_every_key():
    doc = schema_doc()
    for k in SCHEMA:
        assert doc.count(k + " (") == 1


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.001, 0.1), st.sampled_from([16, 32, 64, 96]), st.booleans())
def test_dump_parse_round_trip(A, dt, n, sponge):
    cfg = from_values({"data.amplitude": A, "evolve.dt": dt, "grid.points": n, "evolve.sponge": sponge})
    assert parse_config(cfg.dumps()).values == cfg.values
