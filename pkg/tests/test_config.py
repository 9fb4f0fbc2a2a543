import pytest

from aeroguard.config import DEFAULTS, ConfigError, SimConfig, parse_override, valid_keys


def test_defaults_validate():
    cfg = SimConfig.default()
    assert cfg.substeps == 20
    assert cfg.n_ticks == 5000
    assert cfg.get("observer.omega0") == 10.0


def test_unknown_override_lists_valid_keys():
    with pytest.raises(ConfigError) as exc:
        SimConfig.default(["observer.omega=3"])
    assert "observer.omega0" in str(exc.value)


def test_override_parses_yaml_scalars():
    assert parse_override("sim.seed=7") == ("sim.seed", 7)
    assert parse_override("controller.setpoint=[0, 0, 0.1]") == ("controller.setpoint", [0, 0, 0.1])
    cfg = SimConfig.default(["observer.omega0=20", ("sim.seed", 3)])
    assert cfg.get("observer.omega0") == 20 and cfg.sim["seed"] == 3


def test_override_does_not_mutate_defaults():
    SimConfig.default(["observer.omega0=20"])
    assert DEFAULTS["observer"]["omega0"] == 10.0


@pytest.mark.parametrize("override", [
    "sim.dt_plant=-1", "sim.dt_plant=3e-4", "sim.duration=0.0031", "observer.omega0=0",
    "gait.proximal_amplitude=2.0", "gait.frequency=0", "guard.mass=0", "controller.kd_pos=0",
    "aero.wagner.form=bogus",
])
def test_invalid_values_rejected(override):
    with pytest.raises(ConfigError):
        SimConfig.default([override])


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        SimConfig.load(tmp_path / "nope.yaml")


def test_schema_version_checked(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("schema_version: 99\n")
    with pytest.raises(ConfigError, match="schema_version"):
        SimConfig.load(p)


def test_unknown_section_key_rejected(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("observer:\n  omgea0: 4\n")
    with pytest.raises(ConfigError):
        SimConfig.load(p)


def test_dump_round_trip(tmp_path):
    cfg = SimConfig.default(["sim.seed=11"])
    p = tmp_path / "c.yaml"
    p.write_text(cfg.dump())
    assert SimConfig.load(p).data == cfg.data


@pytest.mark.parametrize("name", ["hover", "passive", "noisy_hover", "pretensioned"])
def test_shipped_configs_load(name):
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1]
    SimConfig.load(root / "configs" / f"{name}.yaml")


def test_every_valid_key_resolves():
    cfg = SimConfig.default()
    for k in valid_keys():
        cfg.get(k)


def test_override_exponent_without_dot_is_numeric():
    assert parse_override("aerobat.band_stiffness=1e12") == ("aerobat.band_stiffness", 1e12)
    assert parse_override("aero.wagner.form=jones")[1] == "jones"
