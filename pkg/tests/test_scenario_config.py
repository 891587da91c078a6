import math

import pytest
from pydantic import ValidationError

from src.ScenarioConfig import (
    ScenarioConfig,
    config_hash,
    db_to_linear,
    load_config,
)
from src.Topology import LinkType, path_gain_dB


def test_defaults_are_valid(default_config):
    assert default_config.M == 6
    assert default_config.N == 4
    assert default_config.direct_users == 10
    assert default_config.total_users == 40
    assert default_config.I_bar == pytest.approx(1.0)


def test_relays_must_fit_in_cluster_zero():
    with pytest.raises(ValidationError):
        ScenarioConfig(M=6, K0=6)


def test_unknown_keys_rejected():
    with pytest.raises(ValidationError):
        ScenarioConfig(not_a_field=1)


def test_power_source_required():
    with pytest.raises(ValidationError):
        ScenarioConfig(receive_snr_dB=None)


@pytest.mark.parametrize("field, value", [("q_act", 1.5), ("epsilon", 0.0), ("N", 0)])
def test_range_constraints(field, value):
    with pytest.raises(ValidationError):
        ScenarioConfig(**{field: value})


def test_explicit_power_budgets():
    config = ScenarioConfig(receive_snr_dB=None, P0_dB=30.0, Pm_dB=20.0)
    P0, Pm = config.power_budgets()
    assert P0 == pytest.approx(1000.0)
    assert Pm == pytest.approx(100.0)


def test_calibrated_power_hits_target_snr_at_cell_edge(default_config):
    P0, Pm = default_config.power_budgets()
    edge_loss = path_gain_dB(default_config.cell_radius_m / 1000.0, LinkType.ACCESS)
    cluster_loss = path_gain_dB(
        default_config.rs_cluster_radius_m / 1000.0, LinkType.ACCESS
    )
    assert P0 * 10 ** (-edge_loss / 10) == pytest.approx(10.0)
    assert Pm * 10 ** (-cluster_loss / 10) == pytest.approx(10.0)


def test_cluster_edge_reference_needs_less_power(default_config):
    cluster_ref = ScenarioConfig(snr_reference="cluster_edge")
    assert cluster_ref.power_budgets()[0] < default_config.power_budgets()[0]


def test_cluster_activity(default_config):
    assert default_config.cluster_activity() == [0.3] * 7
    low = default_config.cluster_activity(low_rs_activity=True)
    assert low[0] == 0.3
    assert low[1:] == pytest.approx([0.05772] * 6, abs=1e-5)


def test_with_value_returns_validated_copy(default_config):
    swept = default_config.with_value("q_act", 0.5)
    assert swept.q_act == 0.5
    assert default_config.q_act == 0.3

    with pytest.raises(ValidationError):
        default_config.with_value("q_act", 1.5)


def test_with_value_unknown_parameter(default_config):
    with pytest.raises(ValueError, match="Unknown sweep parameter"):
        default_config.with_value("Km", 3)


def test_with_value_user_count_keeps_direct_share(default_config):
    swept = default_config.with_value("K", 80)
    assert swept.direct_users == 20
    assert swept.Km == 10
    assert swept.total_users == 80


def test_load_config(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text("M: 2\nK0: 5\nq_act: 0.1\n", encoding="utf-8")
    config = load_config(path)
    assert config.M == 2
    assert config.q_act == 0.1


def test_load_config_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("", encoding="utf-8")
    assert load_config(path) == ScenarioConfig()


def test_load_config_rejects_non_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ValueError, match="mapping"):
        load_config(path)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.yaml")


def test_config_hash_is_stable(default_config):
    digest = config_hash(default_config)
    assert len(digest) == 16
    int(digest, 16)
    assert config_hash(ScenarioConfig()) == digest
    assert config_hash(default_config.with_value("q_act", 0.4)) != digest


def test_db_to_linear():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert db_to_linear(0.0) == 1.0
    assert db_to_linear(-30.0) == pytest.approx(math.pow(10, -3))
