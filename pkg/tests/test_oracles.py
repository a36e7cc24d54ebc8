import numpy as np
import pytest

from oracles import (cvx_box_eq_qp, enumerate_box_eq_qp, enumerate_box_qp, kkt_residual,
                     pdas_lower, plain_cg, random_box, random_spd, refine_box_eq_kkt)


def test_enumeration_matches_projected_solution_for_diagonal():
    d = np.array([1.0, 2.0, 4.0])
    b = np.array([3.0, -1.0, 2.0])
    l, u = -np.ones(3), np.ones(3)
    x = enumerate_box_qp(np.diag(d), b, l, u)
    np.testing.assert_allclose(x, np.clip(b / d, l, u))
    assert kkt_residual(np.diag(d), b, l, u, x) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_pdas_agrees_with_enumeration(seed):
    rng = np.random.default_rng(seed)
    a = random_spd(rng, 7, 20)
    b = rng.standard_normal(7) * 3
    l = rng.uniform(-1, 0, 7)
    np.testing.assert_allclose(pdas_lower(a, b, l),
                               enumerate_box_qp(a, b, l, np.full(7, np.inf)), atol=1e-10)


@pytest.mark.parametrize("form", ["residual", "gradient"])
def test_plain_cg_solves_spd(form):
    rng = np.random.default_rng(3)
    a = random_spd(rng, 12, 50)
    b = rng.standard_normal(12)
    xs = plain_cg(a, b, np.zeros(12), 1e-12, form=form)
    np.testing.assert_allclose(a @ xs[-1], b, atol=1e-10)
    assert len(xs) <= 13 + 5


def test_equality_oracles_agree():
    rng = np.random.default_rng(8)
    n = 6
    a = random_spd(rng, n, 10)
    b = rng.standard_normal(n)
    l, u = random_box(rng, n)
    l, u = np.maximum(l, -2), np.minimum(u, 2)
    l, u = np.minimum(l, -0.5), np.maximum(u, 0.5)
    g = rng.standard_normal((1, n))
    e = g @ rng.uniform(-0.5, 0.5, n)
    ref = enumerate_box_eq_qp(a, b, l, u, g, e)
    x, ok = refine_box_eq_kkt(a, b, l, u, g, e, cvx_box_eq_qp(a, b, l, u, g, e))
    assert ok
    np.testing.assert_allclose(x, ref, atol=1e-9)
