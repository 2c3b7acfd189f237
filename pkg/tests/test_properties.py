"""Randomized invariant checks at the pipeline level.

Cheap algebraic invariants run with large randomized case counts in
test_symplectic; the checks here drive full propagations, so they use a
smaller number of seeded draws.
"""

import numpy as np
import pytest

from maslov_stab.maslov import find_conjugate_points, scan_conjugate_points
from maslov_stab.oracle import morse_whole_line
from maslov_stab.problem import (block_diagonal, constant_potential,
                                 poeschl_teller)
from maslov_stab.propagation import propagate_frame, truncation_point


def test_lagrangian_preservation_random_problems():
    rng = np.random.default_rng(17)
    for _ in range(12):
        n = int(rng.integers(1, 4))
        d = rng.uniform(0.4, 2.0, n)
        g = rng.standard_normal((n, n))
        p = constant_potential(g @ g.T + 0.6 * np.eye(n), d=d)
        lam = -float(rng.uniform(0.0, 2.0))
        trace = propagate_frame(p, lam, -4.0, 12.0)
        assert trace.lagrangian_residual.max() <= 1e-8


def test_lagrangian_preservation_variable_potentials(pulse_problem, pt052, double_pulse):
    for p in (pulse_problem, pt052, double_pulse):
        x_min = truncation_point(p)[0]
        for lam in (0.0, -1.7):
            trace = propagate_frame(p, lam, x_min, 12.0)
            assert trace.lagrangian_residual.max() <= 1e-8


def test_translation_equivariance_random_shifts(pulse_problem):
    rng = np.random.default_rng(99)
    base = find_conjugate_points(pulse_problem, 12.0)
    assert len(base) == 1
    for _ in range(8):
        a = float(rng.uniform(-3.0, 3.0))
        moved = find_conjugate_points(pulse_problem.shifted(a), 12.0 + a)
        assert len(moved) == 1
        assert moved[0].location - base[0].location == pytest.approx(a, abs=1e-6)
        assert moved[0].multiplicity == base[0].multiplicity


def test_morse_block_additivity_random_pairs():
    rng = np.random.default_rng(31)
    for _ in range(5):
        c1 = float(rng.uniform(0.3, 2.0))
        c2 = float(rng.uniform(0.3, 2.0))
        a = poeschl_teller(c1, 2.0)
        b = poeschl_teller(c2, 1.0)
        blk = block_diagonal([a, b])
        assert morse_whole_line(blk)[0] == morse_whole_line(a)[0] + morse_whole_line(b)[0]


def test_crossing_forms_positive_definite(pulse_problem, double_pulse, pt052):
    for p, L in ((pulse_problem, 15.0), (double_pulse, 15.0), (pt052, 15.0)):
        scan = scan_conjugate_points(p, L)
        for c in scan.crossings:
            assert min(c.form_eigenvalues) > 0
            assert c.signature == c.multiplicity == len(c.form_eigenvalues)
