"""Cohort sampling: copula behavior, marginal calibration, schema round trip.

The copula checks lean on two analytic facts: a Clayton copula with
parameter rho has Kendall tau rho/(rho+2), and its margins are exactly
uniform. Feature-rate checks compare empirical conditional rates to the
model's rates within Monte Carlo error at a fixed seed.
"""

import dataclasses

import numpy as np
import pytest
from scipy import stats

from nuindex.datagen import (
    ConfoundingSpec,
    Cohort,
    ScenarioSpec,
    builtin_scenarios,
    ingest_cohort_csv,
    sample_clayton_uniforms,
    sample_cohort,
    scenarios_from_config,
    scenarios_to_config,
    write_cohort_csv,
)
from nuindex.errors import DomainError, InfeasibleDesignError, SchemaError
from nuindex.theory import solve_conditional_from_marginal


def small_spec(**overrides):
    base = dict(
        n=400,
        alpha=0.8,
        pi=0.2,
        beta0=(0.2, 0.3, 0.25, 0.2),
        beta1=(1.9, 1.0, 1.4, 1.0),
        groups=((0, 1), (2,), (3,)),
        rho=2.0,
        seed=11,
    )
    base.update(overrides)
    return ScenarioSpec(**base)


# ---------------------------------------------------------------- copula


def test_clayton_kendall_tau_matches_analytic_value():
    # tau = rho / (rho + 2) = 5/7 for rho = 5
    rng = np.random.default_rng(7)
    u = sample_clayton_uniforms(5.0, 2, rng, size=100_000)
    tau = stats.kendalltau(u[:, 0], u[:, 1]).statistic
    assert abs(tau - 5.0 / 7.0) < 0.02


def test_clayton_margins_are_uniform():
    rng = np.random.default_rng(13)
    u = sample_clayton_uniforms(5.0, 3, rng, size=100_000)
    for j in range(3):
        ks = stats.kstest(u[:, j], "uniform").statistic
        assert ks < 0.01


def test_clayton_rho_zero_is_independent():
    rng = np.random.default_rng(5)
    u = sample_clayton_uniforms(0.0, 2, rng, size=100_000)
    tau = stats.kendalltau(u[:, 0], u[:, 1]).statistic
    assert abs(tau) < 0.02


def test_clayton_shapes_and_domain():
    rng = np.random.default_rng(0)
    assert sample_clayton_uniforms(1.0, 4, rng).shape == (4,)
    assert sample_clayton_uniforms(1.0, 4, rng, size=9).shape == (9, 4)
    with pytest.raises(DomainError):
        sample_clayton_uniforms(-0.5, 2, rng)
    with pytest.raises(DomainError):
        sample_clayton_uniforms(1.0, 0, rng)


def test_clayton_tau_scales_with_rho():
    rng = np.random.default_rng(21)
    for rho in (0.5, 2.0):
        u = sample_clayton_uniforms(rho, 2, rng, size=100_000)
        tau = stats.kendalltau(u[:, 0], u[:, 1]).statistic
        assert abs(tau - rho / (rho + 2.0)) < 0.02


# ------------------------------------------------------------- sampling


def test_latent_condition_only_among_infected():
    cohort = sample_cohort(small_spec(n=5000))
    assert not np.any((cohort.y_latent == 1) & (cohort.infected == 0))
    # and it does occur among the infected at this n
    assert cohort.y_latent.sum() > 0


def test_sampling_is_bit_identical_for_equal_specs():
    a = sample_cohort(small_spec(n=2000))
    b = sample_cohort(small_spec(n=2000))
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.infected, b.infected)
    assert np.array_equal(a.y_latent, b.y_latent)
    c = sample_cohort(small_spec(n=2000, seed=12))
    assert not np.array_equal(a.features, c.features)


def test_marginal_rates_match_model_within_monte_carlo_error():
    """P(X_k=1 | Y=y) should hit beta0 * beta1^y, copula or not."""
    spec = small_spec(n=200_000, rho=5.0, seed=3)
    cohort = sample_cohort(spec)
    for y in (0, 1):
        rows = cohort.y_latent == y
        m = rows.sum()
        for j in range(spec.k):
            p = spec.beta0[j] * (spec.beta1[j] if y == 1 else 1.0)
            se = np.sqrt(p * (1.0 - p) / m)
            assert abs(cohort.features[rows, j].mean() - p) < 3.0 * se + 1e-12


def test_infection_and_stratum_rates_match_confounded_design():
    design = ConfoundingSpec(pz=0.55, rr_az=0.65, rr_xz=(1.0, 1.8, 1.0, 1.0))
    spec = small_spec(n=200_000, rho=0.0, confounder=design, seed=9)
    cohort = sample_cohort(spec)
    z = cohort.z_values["z"]
    assert abs(z.mean() - 0.55) < 0.005
    a0, a1 = solve_conditional_from_marginal(0.8, 0.55, 0.65)
    for value, target in ((0, a0), (1, a1)):
        rows = z == value
        se = np.sqrt(target * (1.0 - target) / rows.sum())
        assert abs(cohort.infected[rows].mean() - target) < 3.0 * se
    # feature 2 responds to z among condition-free rows, feature 1 does not
    b0, b1 = solve_conditional_from_marginal(0.3, 0.55, 1.8)
    clean = cohort.y_latent == 0
    for value, target in ((0, b0), (1, b1)):
        rows = clean & (z == value)
        se = np.sqrt(target * (1.0 - target) / rows.sum())
        assert abs(cohort.features[rows, 1].mean() - target) < 3.0 * se
    for value in (0, 1):
        rows = clean & (z == value)
        se = np.sqrt(0.2 * 0.8 / rows.sum())
        assert abs(cohort.features[rows, 0].mean() - 0.2) < 3.0 * se


def test_group_dependence_only_within_groups():
    spec = ScenarioSpec(
        n=120_000,
        alpha=0.8,
        pi=0.2,
        beta0=(0.2,) * 4,
        beta1=(1.0,) * 4,
        groups=((0, 1), (2, 3)),
        rho=5.0,
        seed=17,
    )
    cohort = sample_cohort(spec)
    x = cohort.features.astype(float)
    within = np.corrcoef(x[:, 0], x[:, 1])[0, 1]
    across = np.corrcoef(x[:, 0], x[:, 2])[0, 1]
    assert within > 0.3
    assert abs(across) < 0.02


def test_subset_and_stratum_codes():
    design = ConfoundingSpec(pz=0.4, rr_az=1.2, rr_xz=(1.0,) * 4)
    cohort = sample_cohort(small_spec(confounder=design, rho=0.0))
    codes, labels = cohort.stratum_codes()
    assert set(codes) == {0, 1}
    assert labels == ("z=0", "z=1")
    sub = cohort.subset(cohort.infected == 1)
    assert sub.n == int(cohort.infected.sum())
    assert sub.feature_names == cohort.feature_names
    assert np.array_equal(sub.z_values["z"], cohort.z_values["z"][cohort.infected == 1])

    plain = sample_cohort(small_spec())
    with pytest.raises(DomainError, match="no stratum columns"):
        plain.stratum_codes()


def test_cohort_validation_rejects_bad_shapes_and_values():
    with pytest.raises(DomainError, match="binary"):
        Cohort(
            ids=np.arange(3),
            infected=np.array([0, 1, 2]),
            features=np.zeros((3, 2)),
            feature_names=("x_1", "x_2"),
        )
    with pytest.raises(DomainError, match="unique"):
        Cohort(
            ids=np.array([1, 1, 2]),
            infected=np.array([0, 1, 0]),
            features=np.zeros((3, 2)),
            feature_names=("x_1", "x_2"),
        )
    with pytest.raises(DomainError, match="impossible"):
        Cohort(
            ids=np.arange(2),
            infected=np.array([0, 1]),
            features=np.zeros((2, 1)),
            feature_names=("x_1",),
            y_latent=np.array([1, 0]),
        )


def test_scenario_spec_validation():
    with pytest.raises(DomainError, match="beta1"):
        small_spec(beta1=(6.0, 1.0, 1.0, 1.0))  # 6 > 1/0.2
    with pytest.raises(DomainError, match="partition"):
        small_spec(groups=((0, 1), (2,)))
    with pytest.raises(DomainError, match="partition"):
        small_spec(groups=((0, 1), (1, 2), (3,)))
    with pytest.raises(DomainError, match="alpha"):
        small_spec(alpha=1.0)
    with pytest.raises(DomainError, match="rr_xz length"):
        small_spec(confounder=ConfoundingSpec(pz=0.5, rr_az=1.2, rr_xz=(1.0,)))


def test_infeasible_confounded_rate_is_rejected_at_spec_time():
    # baseline 0.45 with rr_xz 2 pushes the z=1 rate to ~0.62; risk
    # ratio 1.9 then forces a conditional rate above one.
    design = ConfoundingSpec(pz=0.5, rr_az=1.2, rr_xz=(2.0, 1.0, 1.0, 1.0))
    with pytest.raises(InfeasibleDesignError, match="feature 1"):
        small_spec(beta0=(0.45, 0.3, 0.25, 0.2), confounder=design)


# -------------------------------------------------------------- catalog


def test_builtin_catalog_inventory():
    cat = builtin_scenarios()
    main = [k for k in cat if not k.startswith("confound_")]
    conf = [k for k in cat if k.startswith("confound_")]
    assert len(main) == 9 and len(conf) == 6
    for name, spec in cat.items():
        assert spec.n == 10_000
        assert spec.k == 40
        assert spec.beta0 == (0.2,) * 40
        assert sum(b != 1.0 for b in spec.beta1) == 12


def test_builtin_signal_levels_and_grouping():
    cat = builtin_scenarios()
    med = cat["medium_uncorrelated"]
    assert med.rho == 0.0 and med.alpha == 0.8 and med.pi == 0.2
    assert med.beta1[0] == pytest.approx(1.3**1.2)
    assert med.beta1[4] == pytest.approx(1.5**1.2)
    assert med.beta1[8] == pytest.approx(1.7**1.2)
    assert cat["low_uncorrelated"].beta1[0] == pytest.approx(1.3)
    assert cat["high_uncorrelated"].beta1[8] == pytest.approx(1.7**1.4)

    gs = cat["medium_group_sparse"]
    assert gs.rho == 5.0
    sizes = tuple(sorted(len(g) for g in gs.groups))
    assert sizes == (1, 2, 3, 3, 3, 5, 6, 7, 10)
    # group-sparse means each block is all-signal or all-null
    for block in gs.groups:
        flags = {gs.beta1[j] != 1.0 for j in block}
        assert len(flags) == 1

    ngs = cat["medium_non_group_sparse"]
    mixed = sum(
        len({ngs.beta1[j] != 1.0 for j in block}) == 2 for block in ngs.groups
    )
    assert mixed > 0  # some blocks mix signal and null features
    for block in ngs.groups:
        if len(block) > 1:
            assert any(ngs.beta1[j] != 1.0 for j in block)


def test_builtin_confounded_cells():
    cat = builtin_scenarios()
    for sign, rr_az in (("negative", 0.65), ("positive", 1.7)):
        for label in ("none", "nonoverlap", "overlap"):
            spec = cat[f"confound_{label}_{sign}"]
            assert spec.alpha == 0.7
            assert spec.confounder.pz == 0.55
            assert spec.confounder.rr_az == rr_az
            touched = [j for j, v in enumerate(spec.confounder.rr_xz) if v != 1.0]
            if label == "none":
                assert touched == []
            elif label == "overlap":
                assert touched == list(range(12))
            else:
                assert touched == list(range(12, 24))
            if touched:
                values = [spec.confounder.rr_xz[j] for j in touched]
                assert values[0] == pytest.approx(1.35)
                assert values[-1] == pytest.approx(2.0)


def test_builtin_scenarios_respect_requested_n():
    cat = builtin_scenarios(n=500)
    assert all(s.n == 500 for s in cat.values())


# ------------------------------------------------------ CSV round trip


def test_cohort_csv_round_trip(tmp_path):
    design = ConfoundingSpec(pz=0.4, rr_az=1.4, rr_xz=(1.0, 1.5, 1.0, 1.0))
    cohort = sample_cohort(small_spec(confounder=design, rho=0.0, n=300))
    path = tmp_path / "cohort.csv"
    write_cohort_csv(cohort, str(path), include_latent=True)

    back = ingest_cohort_csv(str(path), keep_latent=True)
    assert np.array_equal(back.infected, cohort.infected)
    assert np.array_equal(back.features, cohort.features)
    assert back.feature_names == cohort.feature_names
    assert np.array_equal(back.y_latent, cohort.y_latent)
    assert np.array_equal(
        back.z_values["z"].astype(int), cohort.z_values["z"]
    )

    # latent column silently dropped unless requested
    plain = ingest_cohort_csv(str(path))
    assert plain.y_latent is None


def test_ingest_schema_errors_point_at_row_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,infected,x_1\n1,0,1\n2,2,0\n")
    with pytest.raises(SchemaError, match="row 3, column infected"):
        ingest_cohort_csv(str(path))

    path.write_text("id,infected,x_1\n1,0,1\n2,1,7\n")
    with pytest.raises(SchemaError, match="row 3, column x_1"):
        ingest_cohort_csv(str(path))

    path.write_text("id,infected\n1,0\n")
    with pytest.raises(SchemaError, match="no feature columns"):
        ingest_cohort_csv(str(path))

    path.write_text("id,x_1\n1,0\n")
    with pytest.raises(SchemaError, match="missing required column"):
        ingest_cohort_csv(str(path))

    path.write_text("id,infected,x_1\n1,0,1\n1,1,0\n")
    with pytest.raises(SchemaError, match="duplicate"):
        ingest_cohort_csv(str(path))

    path.write_text("id,infected,x_1\n1,0\n")
    with pytest.raises(SchemaError, match="row 2"):
        ingest_cohort_csv(str(path))


def test_scenario_config_round_trip():
    cat = {
        "demo": small_spec(),
        "conf": small_spec(
            confounder=ConfoundingSpec(pz=0.4, rr_az=1.4, rr_xz=(1.0, 1.5, 1.0, 1.0)),
            rho=0.0,
        ),
    }
    text = scenarios_to_config(cat)
    back = scenarios_from_config(text)
    assert set(back) == {"demo", "conf"}
    for name in cat:
        a, b = cat[name], back[name]
        assert a.n == b.n and a.alpha == b.alpha and a.pi == b.pi
        assert a.beta0 == b.beta0 and a.beta1 == b.beta1
        assert a.groups == b.groups and a.rho == b.rho
        if a.confounder is None:
            assert b.confounder is None
        else:
            assert b.confounder == a.confounder
