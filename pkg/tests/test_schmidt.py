import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from bfcsim.events import ChannelConfig, SourceConfig
from bfcsim.schmidt import (SchmidtResult, diagonal_schmidt, jacobi_svd, schmidt_decompose,
                            simulate_schmidt_pipeline)
from bfcsim.spectral import Flat, LorentzianRolloff, RingParams
from bfcsim.state import BiphotonState, JsiMatrix


def cubic_singular_values(a):
    """Singular values of a 3x3 matrix from the characteristic cubic of A^T A.

    lambda^3 - c2 lambda^2 + c1 lambda - c0 = 0 with real non-negative roots,
    solved in trigonometric form.
    """
    g = a.T @ a
    c2 = g[0, 0] + g[1, 1] + g[2, 2]
    c1 = (g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0] + g[0, 0] * g[2, 2] - g[0, 2] * g[2, 0]
          + g[1, 1] * g[2, 2] - g[1, 2] * g[2, 1])
    c0 = (g[0, 0] * (g[1, 1] * g[2, 2] - g[1, 2] * g[2, 1])
          - g[0, 1] * (g[1, 0] * g[2, 2] - g[1, 2] * g[2, 0])
          + g[0, 2] * (g[1, 0] * g[2, 1] - g[1, 1] * g[2, 0]))
    # depressed cubic t^3 + p t + q with lambda = t + c2/3
    p = c1 - c2 * c2 / 3
    q = -2 * c2**3 / 27 + c2 * c1 / 3 - c0
    if abs(p) < 1e-300:
        roots = [c2 / 3] * 3
    else:
        r = 2 * math.sqrt(-p / 3)
        arg = max(-1.0, min(1.0, 3 * q / (p * r)))
        phi = math.acos(arg) / 3
        roots = [c2 / 3 + r * math.cos(phi - 2 * math.pi * j / 3) for j in range(3)]
    return np.sqrt(np.clip(sorted(roots, reverse=True), 0, None))


def test_jacobi_matches_cubic_oracle_random():
    r = np.random.default_rng(2016)
    worst = 0.0
    for _ in range(500):
        a = r.normal(size=(3, 3))
        _, s, _ = jacobi_svd(a)
        worst = max(worst, float(np.max(np.abs(s - cubic_singular_values(a)))))
    assert worst <= 1e-10


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(float, (4, 6), elements=st.floats(-10, 10)))
def test_jacobi_reconstructs(a):
    u, s, vt = jacobi_svd(a)
    assert np.all(np.diff(s) <= 1e-12)
    assert np.allclose(u @ np.diag(s) @ vt, a, atol=1e-9)
    # singular vectors are only defined for non-zero singular values
    nz = s > 1e-9 * max(1.0, s.max())
    assert np.allclose(vt[nz] @ vt[nz].T, np.eye(nz.sum()), atol=1e-9)
    assert np.allclose(u[:, nz].T @ u[:, nz], np.eye(nz.sum()), atol=1e-9)


def test_diag_quarter_is_four():
    r = schmidt_decompose(np.diag([0.25] * 4))
    assert r.schmidt_number == 4.0
    assert r.effective_bits == 2.0


def test_diag_hand_arithmetic():
    r = schmidt_decompose(np.diag([0.4, 0.3, 0.2, 0.1]))
    assert r.schmidt_number == pytest.approx(1 / 0.30, abs=1e-12)


def test_rank_one_is_separable():
    x = np.array([1.0, 2.0, 3.0])
    y = np.array([0.5, 0.1, 4.0, 2.0])
    r = schmidt_decompose(np.outer(x, y) ** 2)
    assert r.schmidt_number == pytest.approx(1.0, abs=1e-10)


def test_all_zero_errors():
    with pytest.raises(ValueError):
        schmidt_decompose(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        diagonal_schmidt(np.ones((2, 3)))
    with pytest.raises(ValueError):
        diagonal_schmidt(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_negative_cells_clamped(caplog):
    m = np.diag([1.0, 1.0])
    m[0, 1] = -0.2
    with caplog.at_level(logging.WARNING):
        r = schmidt_decompose(m)
    assert r.schmidt_number == pytest.approx(2.0)
    assert "clamping" in caplog.text


def test_diagonal_of_diagonal_unchanged():
    m = np.diag([3.0, 1.0, 2.0])
    assert diagonal_schmidt(m).schmidt_number == pytest.approx(schmidt_decompose(m).schmidt_number,
                                                               abs=1e-15)


def test_single_mode_diag():
    assert diagonal_schmidt(np.diag([1.0, 0, 0, 0])).schmidt_number == 1.0


def test_uniform_floor_raises_diag_over_full():
    w = np.array([0.35, 0.28, 0.18, 0.1, 0.055, 0.035])
    jsi = np.diag(w * 1e4) + 3.0
    assert diagonal_schmidt(jsi).schmidt_number > schmidt_decompose(jsi).schmidt_number


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(float, (4, 4), elements=st.floats(0, 5)).filter(lambda m: m.sum() > 1e-3),
       st.permutations(range(4)), st.permutations(range(4)))
def test_invariances_and_bounds(m, pr, pc):
    k = schmidt_decompose(m).schmidt_number
    assert 1 - 1e-9 <= k <= 4 + 1e-9
    assert schmidt_decompose(m[list(pr)][:, list(pc)]).schmidt_number == pytest.approx(k, rel=1e-9)
    assert schmidt_decompose(m.T).schmidt_number == pytest.approx(k, rel=1e-9)


@settings(max_examples=50)
@given(st.lists(st.floats(0.001, 1.0), min_size=1, max_size=10))
def test_diagonal_formula(ws):
    w = np.array(ws)
    w_hat = w / w.sum()
    r = schmidt_decompose(np.diag(w))
    assert r.schmidt_number == pytest.approx(1 / np.sum(w_hat**2), abs=1e-12)
    assert abs(r.coefficients.sum() - 1) < 1e-9
    assert np.all(np.diff(r.coefficients) <= 0)


def test_result_text():
    text = schmidt_decompose(np.diag([0.25] * 4)).to_text()
    assert "schmidt_number = 4.0" in text
    assert "effective_bits = 2.0" in text


def test_jsi_matrix_input():
    jsi = JsiMatrix((2, 5), np.diag([1.0, 1, 1, 1]), "counts")
    assert schmidt_decompose(jsi).schmidt_number == pytest.approx(4.0)


@pytest.mark.parametrize("n", [4, 6])
def test_pipeline_flat_noiseless(n):
    st_ = BiphotonState(RingParams(n_sidebands=n, weight_model=Flat()))
    k_hi = 2 + n - 1
    src = SourceConfig(2e4, 2.0, seed=n)
    res = simulate_schmidt_pipeline(st_, src, (ChannelConfig(0.3),) * 2, (2, k_hi), seed=n)
    # about 360 counts per diagonal cell: relative spread of K well under 5%
    assert res.k_min == pytest.approx(n, rel=0.05)
