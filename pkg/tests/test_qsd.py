import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qsnloc import geometry as geo, qmath, qsd
from qsnloc.errors import DegenerateTargets, NotNormalized, TooManyQubits
from qsnloc.sensing import SensingConfig


def helstrom(c: complex) -> float:
    return (1 - math.sqrt(1 - abs(c) ** 2)) / 2


class TestBuildPgm:
    def test_single_target(self, rng):
        psi = qmath.random_state(4, rng)
        povm = qsd.build_pgm(qsd.make_targets([psi]))
        els = povm.elements()
        assert np.allclose(els[0], np.outer(psi, psi.conj()), atol=1e-10)
        assert povm.has_reject and povm.check()["ok"]

    def test_orthogonal_targets(self):
        povm = qsd.build_pgm(qsd.make_targets(np.eye(4)[:2]))
        t = qsd.make_targets(np.eye(4)[:2])
        assert qsd.probability_of_error(povm, t) < 1e-12

    def test_helstrom_pair(self):
        t = qsd.make_targets([[1, 0], [np.cos(0.3), np.sin(0.3)]])
        c = np.vdot(t.states[0], t.states[1])
        assert abs(qsd.probability_of_error(qsd.build_pgm(t), t) - helstrom(c)) < 1e-9

    def test_too_many_qubits(self):
        with pytest.raises(TooManyQubits):
            qsd.build_pgm(qsd.make_targets(np.ones((2, 512))))

    def test_zero_state(self):
        with pytest.raises(DegenerateTargets):
            qsd.make_targets([[0, 0], [1, 0]])


class TestMeasure:
    def test_projective_z(self, rng):
        povm = qsd.Povm.from_elements(np.array([np.diag([1, 0]), np.diag([0, 1])], dtype=complex))
        assert all(qsd.measure(np.array([1, 0]), povm, rng) == 0 for _ in range(50))

    def test_uniform_chi_square(self, rng):
        povm = qsd.Povm.from_elements(np.array([np.diag(e) for e in np.eye(4)], dtype=complex))
        psi = np.full(4, 0.5, dtype=complex)
        counts = np.bincount(qsd.measure_many(np.tile(psi, (10_000, 1)), povm, rng), minlength=4)
        chi2 = np.sum((counts - 2500) ** 2 / 2500)
        assert chi2 < 11.345  # chi-square 0.99 quantile, 3 dof

    def test_pgm_frequencies_three_sigma(self, rng):
        t = qsd.make_targets([qmath.random_state(4, rng) for _ in range(3)])
        povm = qsd.build_pgm(t)
        p = povm.probabilities(t.states[2])
        counts = np.bincount(qsd.measure_many(np.tile(t.states[2], (10_000, 1)), povm, rng), minlength=len(p))
        sigma = np.sqrt(10_000 * p * (1 - p))
        assert np.all(np.abs(counts - 10_000 * p) <= 3 * sigma + 1e-9)

    def test_corrupted_povm(self, rng):
        povm = qsd.Povm.from_elements(np.array([np.eye(2) * 0.7, np.eye(2) * 0.7], dtype=complex))
        with pytest.raises(NotNormalized):
            qsd.measure(np.array([1, 0]), povm, rng)


class TestMultishot:
    def test_single_shot_is_single_measure(self):
        g = geo.make_grid(2)
        sensors = geo.coarse_positions(g, 4)
        t = qsd.targets_for_points(geo.centers(g, "cell"), sensors)
        povm = qsd.build_pgm(t)
        cfg = SensingConfig(noise_halfwidth=0.0)
        a = qsd.discriminate_multishot((5, 5), sensors, povm, t, 1, cfg, qmath.make_rng(3))
        r = qmath.make_rng(3)
        r.uniform(size=(1, 4))  # noise draws consumed first
        state = qsd.targets_for_points([(5, 5)], sensors).states[0]
        b = qsd.measure(state, povm, r)
        if b == povm.n_targets:
            b = 0
        assert a == b

    def test_noiseless_orthogonal(self):
        # one sensor, two hypotheses with phases 2π and π: orthogonal single-qubit states
        sensors = np.array([[0.0, 0.0]])
        t = qsd.targets_for_points([(5, 0), (10, 0)], sensors)
        assert abs(np.vdot(t.states[0], t.states[1])) < 1e-12
        povm = qsd.build_pgm(t)
        cfg = SensingConfig(noise_halfwidth=0.0)
        for shots in (1, 7, 100):
            assert qsd.discriminate_multishot((10, 0), sensors, povm, t, shots, cfg, qmath.make_rng(1)) == 1

    def test_cell_center_recovery_small_grid(self):
        g = geo.make_grid(2)
        layout = geo.deploy_sensors(g, 4)
        cfg = SensingConfig(noise_halfwidth=0.0)
        pred = qsd.qsd_one(g, layout, geo.sample_tx(g, 0, "discrete"), 101, cfg, qmath.make_rng(0))
        t, povm = qsd.localizer_for(g, layout, cfg).stage("cell")
        p = povm.probabilities(t.states[0])
        assert pred.cell == int(np.argmax(p[:t.n]))
        assert np.allclose(pred.point, geo.centers(g, "cell")[pred.cell])

    def test_two_level_confined_to_block(self):
        g = geo.make_grid(4)
        layout = geo.deploy_sensors(g, 8)
        for cell in range(16):
            pred = qsd.qsd_two(g, layout, geo.sample_tx(g, cell, "discrete"), 50, rng=qmath.make_rng(cell))
            assert g.block_of_cell(pred.cell) == pred.coarse_block

    def test_too_many_sensors(self):
        g = geo.make_grid(16)
        layout = geo.deploy_sensors(g, 16)
        with pytest.raises(TooManyQubits):
            qsd.qsd_one(g, layout, geo.sample_tx(g, 0, "discrete"), 1, rng=qmath.make_rng(0))


class TestPovmFile:
    def test_round_trip(self, tmp_path, rng):
        t = qsd.make_targets([qmath.random_state(8, rng) for _ in range(3)])
        povm = qsd.build_pgm(t)
        qsd.save_povm(tmp_path / "x.povm", povm)
        back = qsd.load_povm(tmp_path / "x.povm")
        assert back.has_reject == povm.has_reject
        assert np.array_equal(back.elements(), povm.elements())

    def test_bad_magic(self, tmp_path):
        (tmp_path / "bad.povm").write_bytes(b"0" * 64)
        with pytest.raises(ValueError):
            qsd.load_povm(tmp_path / "bad.povm")


@st.composite
def target_sets(draw):
    m = draw(st.integers(1, 4))
    n = draw(st.integers(1, 8))
    seed = draw(st.integers(0, 2**32 - 1))
    r = np.random.default_rng(seed)
    return qsd.make_targets([qmath.random_state(2**m, r) for _ in range(n)], r.dirichlet(np.ones(n)) if n > 1 else None)


@given(target_sets())
def test_pgm_complete_and_psd(t):
    povm = qsd.build_pgm(t)
    check = povm.check(atol=1e-8)
    assert check["ok"], check
    els = povm.elements()
    assert np.allclose(els.sum(axis=0), np.eye(povm.dim), atol=1e-8)
    for e in els:
        assert np.linalg.eigvalsh(e).min() >= -1e-8


@given(target_sets(), st.integers(0, 2**32 - 1))
def test_probabilities_sum_to_one(t, seed):
    povm = qsd.build_pgm(t)
    p = povm.probabilities(qmath.random_state(povm.dim, np.random.default_rng(seed)))
    assert np.all(p >= -1e-10) and abs(p.sum() - 1) < 1e-8


@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_orthonormal_sets_zero_error(m, seed):
    r = np.random.default_rng(seed)
    d = 2**m
    q, _ = np.linalg.qr(r.normal(size=(d, d)) + 1j * r.normal(size=(d, d)))
    n = r.integers(1, min(d, 8) + 1)
    t = qsd.make_targets(q.T[:n])
    assert qsd.probability_of_error(qsd.build_pgm(t), t) < 1e-10


@given(st.integers(0, 2**32 - 1))
def test_helstrom_random_pairs(seed):
    r = np.random.default_rng(seed)
    t = qsd.make_targets([qmath.random_state(4, r), qmath.random_state(4, r)])
    c = np.vdot(t.states[0], t.states[1])
    assert abs(qsd.probability_of_error(qsd.build_pgm(t), t) - helstrom(c)) < 1e-9
