import numpy as np
import pytest

from stochlcp.game import game_to_dict
from stochlcp.generator import GAMMA_BAR_MIN, GeneratorSpec, generate_instance


@pytest.mark.parametrize("seed", range(20))
def test_sampled_ranges(seed):
    g = generate_instance(GeneratorSpec(5, 8, seed))
    assert np.all((g.h >= 2.0) & (g.h <= 6.0))
    assert np.all((g.gamma > 0) & (g.gamma <= 1.0))
    assert np.all(g.rho < 0)
    fs = g.first_stage
    assert np.all((fs.a >= 0) & (fs.a <= 1))
    np.testing.assert_array_equal(fs.r, 0.5)


def test_first_stage_diagonal():
    for seed in range(50):
        fs = generate_instance(GeneratorSpec(5, 1, seed)).first_stage
        C = fs.c + fs.r
        assert np.all((C >= 14.0) & (C <= 15.0))


def test_diagonal_formula_general_J():
    J = 7
    fs = generate_instance(GeneratorSpec(J, 1, 3)).first_stage
    # C_ii - c_i = 10 + r'e + (J - 2) r_i
    base = 10 + 0.5 * J + 0.5 * (J - 2)
    assert np.all((fs.c + fs.r - base >= 0) & (fs.c + fs.r - base <= 1))


def test_scenarios_share_one_multiplier():
    g = generate_instance(GeneratorSpec(4, 6, 2))
    ratio = g.h / g.h[0]
    np.testing.assert_allclose(ratio, np.broadcast_to(ratio[:, :1], ratio.shape))
    np.testing.assert_allclose(g.gamma / g.gamma[0], ratio[:, 0])
    assert np.all((ratio[:, 0] * 2 >= 1 - 1e-12) & (ratio[:, 0] <= 2 + 1e-12))


def test_bit_identical_for_equal_seed():
    a = generate_instance(GeneratorSpec(5, 10, 123))
    b = generate_instance(GeneratorSpec(5, 10, 123))
    assert game_to_dict(a) == game_to_dict(b)


def test_seed_changes_instance():
    assert game_to_dict(generate_instance(GeneratorSpec(3, 2, 1))) != game_to_dict(generate_instance(GeneratorSpec(3, 2, 2)))


def test_first_stage_independent_of_nu():
    a = generate_instance(GeneratorSpec(5, 5, 9)).first_stage
    b = generate_instance(GeneratorSpec(5, 500, 9)).first_stage
    np.testing.assert_array_equal(a.c, b.c)
    np.testing.assert_array_equal(a.a, b.a)


def test_gamma_lower_bound_is_positive():
    assert GAMMA_BAR_MIN > 0
    for seed in range(200):
        assert generate_instance(GeneratorSpec(1, 1, seed)).gamma[0] >= GAMMA_BAR_MIN


@pytest.mark.parametrize("kwargs", [dict(J=0, nu=1), dict(J=1, nu=0), dict(J=1, nu=1, seed=-1), dict(J=1.5, nu=1)])
def test_invalid_spec(kwargs):
    with pytest.raises(ValueError):
        GeneratorSpec(**kwargs)


def test_large_dimension():
    g = generate_instance(GeneratorSpec(15, 1000, 0))
    assert g.dim == 30015
