import json

import pytest

from dpagg import config
from dpagg.config import WorldConfig, from_dict, load
from dpagg.errors import ConfigError

BASE = {"W": 800, "q": 0.05, "z": 1.0, "S": 1.0, "rounds": 1, "seed": 3,
        "committees": {"master": {"C": 9, "A": 3}, "dp_noise": {"C": 20, "A": 5},
                       "decryption": {"C": 9, "A": 3}}}


def test_defaults_are_desk_profile():
    cfg = WorldConfig()
    assert (cfg.W, cfg.q, cfg.f, cfg.ahe.degree, cfg.num_trees, cfg.s) == (2000, 0.05, 0.03, 1024, 4, 6)
    assert cfg.W_max == 3000


@pytest.mark.parametrize("field", config.REQUIRED)
def test_missing_field_named(field):
    raw = dict(BASE)
    del raw[field]
    with pytest.raises(ConfigError, match=f"^{field}: missing"):
        from_dict(raw)


@pytest.mark.parametrize("patch, where", [
    ({"W": "ten"}, "W: expected int"),
    ({"q": 0}, "q: must lie"),
    ({"bogus": 1}, "bogus: unknown field"),
    ({"ahe": {"modulus": "Q999"}}, "ahe.modulus"),
    ({"ahe": {"width": 3}}, "ahe.width: unknown"),
    ({"adversary": ["nope"]}, "adversary: unknown behaviour"),
    ({"committees": {"master": {"C": 9}}}, "committees.master.A: missing"),
    ({"committees": {"master": {"C": 9, "A": 9}}}, "committees.master.A"),
    ({"committees": {"jury": {"C": 9, "A": 3}}}, "committees.jury"),
    ({"W": 30}, "committees: need"),
])
def test_bad_values_named(patch, where):
    with pytest.raises(ConfigError, match=where):
        from_dict({**BASE, **patch})


def test_load_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({**BASE, "adversary": "corrupt-root", "ahe": {"modulus": "Q61"}}))
    cfg = load(p)
    assert cfg.adversary == ("corrupt-root",) and cfg.ahe.modulus == config.NAMED_MODULI["Q61"]
    assert cfg.committees["dp_noise"].C == 20
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load(tmp_path / "bad.json")
    with pytest.raises(ConfigError, match="cannot read"):
        load(tmp_path / "absent.json")


def test_overrides():
    cfg = from_dict(BASE).with_overrides(seed=9, pit=None, adversary=["corrupt-root"])
    assert cfg.seed == 9 and cfg.pit and cfg.adversary == ("corrupt-root",)
    assert cfg.to_dict()["adversary"] == ["corrupt-root"]
