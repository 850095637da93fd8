import numpy as np
import pytest
import yaml

from artifact.errors import ConfigError, DataError
from artifact.model import ActionMapped
from artifact.scenario import CASES, load_scenario, sweep_values

from conftest import COMPARATIVE_MEAN


def small(**over):
    cfg = dict(
        name="small",
        seed=3,
        grid=dict(attributes=[dict(name="a", breakpoints=[0, 0.5, 1]), dict(name="b", breakpoints=[0, 0.5, 1])]),
        sample=dict(dirichlet=dict(concentration=1.0, N=30)),
        ambiguity=dict(kind="ellipsoid", gamma=0.2, K=50, directions=50),
    )
    cfg.update(over)
    return cfg


@pytest.mark.parametrize("name", sorted(CASES))
def test_packaged_cases_load(name):
    sc = load_scenario(name)
    assert sc.samples().I == sc.grid.I
    sc.region()


def test_comparative_mean_is_injected():
    sc = load_scenario("comparative")
    np.testing.assert_allclose(sc.moments().mean, COMPARATIVE_MEAN)
    assert sc.grid.sizes == (4, 6, 5)


def test_ev_mean_is_renormalised():
    sc = load_scenario("ev-planning")
    assert sc.moments().mean.sum() == pytest.approx(1.0, abs=1e-12)
    assert sc.row_names == {} or "budget" in sc.row_names.get("inequalities", [])
    sc.region()
    assert sc.row_names["inequalities"][-1] == "budget"


def test_decreasing_attributes_are_negated():
    sc = load_scenario("project-investment")
    assert sc.signs[0] == -1.0
    assert sc.grid.breakpoints[0][0] == -50.0
    np.testing.assert_allclose(sc.raw_attributes(sc.grid.lower[None])[0, 0], 50.0)


def test_sweep_values():
    assert sweep_values([1, 2]) == [1.0, 2.0]
    assert sweep_values({"linspace": [0, 1, 3]}) == [0.0, 0.5, 1.0]
    assert sweep_values({"geomspace": [1, 100, 3]}) == pytest.approx([1.0, 10.0, 100.0])
    with pytest.raises(ConfigError):
        sweep_values({"range": [1, 2]})
    with pytest.raises(ConfigError):
        sweep_values([])


def test_config_errors_use_exit_code_two(tmp_path):
    bad = [
        dict(small(), grid=dict(attributes=[dict(name="a", breakpoints=[0, 0.5, 0.5])])),
        {k: v for k, v in small().items() if k != "grid"},
        dict(small(), sample=dict()),
        dict(small(), region=dict(type="cube")),
    ]
    for cfg in bad:
        with pytest.raises(ConfigError) as e:
            sc = load_scenario(cfg)
            sc.samples()
            sc.region()
        assert e.value.exit_code == 2
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "none.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "list.yaml")


def test_data_errors_use_exit_code_three(tmp_path):
    sc = load_scenario(dict(small(), sample=dict(file="nowhere.csv")))
    with pytest.raises(DataError) as e:
        sc.samples()
    assert e.value.exit_code == 3
    sc = load_scenario(dict(small(), sample=dict(dirichlet=dict(N=30), mean=[0.5, 0.5, 0.5, -0.5])))
    with pytest.raises(DataError):
        sc.moments()


def test_files_resolve_next_to_the_scenario(tmp_path):
    X = np.random.default_rng(0).dirichlet(np.ones(4), 10)
    np.savetxt(tmp_path / "x.csv", X, delimiter=",", header="v1,v2,v3,v4", comments="")
    cfg = small(sample=dict(file="x.csv"))
    (tmp_path / "s.yaml").write_text(yaml.safe_dump(cfg))
    sc = load_scenario(tmp_path / "s.yaml")
    np.testing.assert_allclose(sc.samples().data, X)


def test_dirichlet_sample_is_seeded():
    a = load_scenario(small()).samples().data
    b = load_scenario(small()).samples().data
    c = load_scenario(small(seed=4)).samples().data
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_action_rows_are_named():
    region = dict(type="actions", actions=[dict(name="k", kind="integer", upper=5)],
                  replicas=[dict(offset=dict(b=0.5), map=dict(a=dict(k=0.1)))],
                  inequalities=[dict(name="cap", coeffs=dict(k=1.0), rhs=3), dict(coeffs=[-1.0], rhs=0)])
    sc = load_scenario(small(region=region))
    R = sc.region()
    assert isinstance(R, ActionMapped)
    assert sc.row_names["inequalities"] == ["cap", "inequality-2"]
    np.testing.assert_allclose(R.attributes([2.0]), [[0.2, 0.5]])
    with pytest.raises(ConfigError):
        load_scenario(small(region=dict(region, inequalities=[dict(coeffs=dict(q=1), rhs=1)]))).region()


def test_ambiguity_selection():
    sc = load_scenario(small())
    assert sc.ambiguity().gamma == 0.2
    assert sc.ambiguity("bootstrap", alpha=0.3).alpha == 0.3
    assert sc.ambiguity("saa") is None
    with pytest.raises(ConfigError):
        load_scenario(small(ambiguity=dict(kind="bootstrap"))).ambiguity()
    with pytest.raises(ConfigError):
        sc.ambiguity("wasserstein")
    with pytest.raises(ConfigError):
        load_scenario(small(solver=dict(tol=-1))).options()
