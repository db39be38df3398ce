import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ripgate.closed_form import PhaseTable, accumulate_phase
from ripgate.envelopes import SplineEnvelope, StepTrainEnvelope
from ripgate.errors import InvalidTable
from ripgate.metrics import (
    angle_error,
    average_gate_fidelity,
    composite_echo,
    fidelity_closed_form,
    fidelity_pauli_sum,
    theta_of,
)
from ripgate.params import derive_params

from oracles import brute_force_fidelity

def random_table(rng, scale=2.0):
    upper = {}
    labels = ["00", "01", "10", "11"]
    for i in range(4):
        for j in range(i + 1, 4):
            upper[(labels[i], labels[j])] = scale * rng.normal() + 1j * abs(rng.normal()) * scale / 4
    return PhaseTable.from_pairs(upper)


def test_closed_form_equals_brute_force(rng):
    worst = 0.0
    for _ in range(100):
        table = random_table(rng)
        worst = max(worst, abs(fidelity_closed_form(table) - brute_force_fidelity(table.mu)))
        assert fidelity_pauli_sum(composite_echo(table)) == pytest.approx(brute_force_fidelity(table.mu), abs=1e-12)
    assert worst <= 1e-12


def test_closed_form_on_physical_tables(high, rng):
    p = derive_params(high, 112.0)
    for _ in range(5):
        env = StepTrainEnvelope(0.25, 150 * (rng.normal(size=40) + 1j * rng.normal(size=40)))
        table = accumulate_phase(p, env)
        assert fidelity_closed_form(table) == pytest.approx(brute_force_fidelity(table.mu), abs=1e-12)


def test_ideal_gate():
    ideal = PhaseTable.from_pairs({("00", "01"): -np.pi / 4, ("00", "10"): -np.pi / 4,
                                   ("00", "11"): 0.0, ("01", "10"): 0.0,
                                   ("01", "11"): np.pi / 4, ("10", "11"): np.pi / 4})
    assert theta_of(ideal) == pytest.approx(-np.pi / 2)
    assert fidelity_closed_form(ideal) == pytest.approx(1.0, abs=1e-15)
    composite = composite_echo(ideal)
    assert abs(theta_of(composite)) == pytest.approx(np.pi)
    assert angle_error(composite) == pytest.approx(0.0, abs=1e-15)


def test_fully_dephased():
    table = PhaseTable.from_pairs({(a, b): 0.7 + 1e3j for a, b in
                                   [("00", "01"), ("00", "10"), ("00", "11"),
                                    ("01", "10"), ("01", "11"), ("10", "11")]})
    assert fidelity_closed_form(table) == pytest.approx(0.4, abs=1e-15)
    assert brute_force_fidelity(table.mu) == pytest.approx(0.4, abs=1e-15)


def test_lower_bound_fails_for_wrong_angle():
    # with no dephasing, a composite angle of 0 instead of pi gives 1/5
    table = PhaseTable.from_pairs({("00", "01"): np.pi / 4, ("00", "10"): np.pi / 4,
                                   ("01", "11"): -np.pi / 4, ("10", "11"): -np.pi / 4})
    assert fidelity_closed_form(table) == pytest.approx(0.2, abs=1e-15)


def test_theta_examples():
    assert theta_of(PhaseTable.from_pairs({})) == 0.0
    assert theta_of(PhaseTable.from_pairs({("00", "11"): -np.pi / 2})) == pytest.approx(np.pi / 2)


def test_composite_zero_and_additivity():
    zero = composite_echo(PhaseTable.from_pairs({}))
    assert np.all(zero.mu == 0)
    # additive table (mu_ac = mu_ab + mu_bc), as in the lossless steady state
    single = PhaseTable.from_pairs({("00", "01"): -0.4, ("00", "10"): -0.5, ("00", "11"): 0.6,
                                    ("01", "11"): 1.0, ("10", "11"): 1.1, ("01", "10"): -0.1})
    assert theta_of(composite_echo(single)) == pytest.approx(2 * theta_of(single))


def test_composite_dephasing_doubles_and_real_part_cancels(high):
    p = derive_params(high, 57.0)
    single = accumulate_phase(p, SplineEnvelope(7, 53.0, 284.0), method="gauss")
    composite = composite_echo(single)
    assert composite.mu[0, 3].imag == pytest.approx(2 * single.mu[0, 3].imag, rel=1e-12)
    assert composite.mu[0, 3].real == pytest.approx(0.0, abs=1e-12)
    assert composite.mu[1, 2].imag == pytest.approx(2 * single.mu[1, 2].imag, rel=1e-12)


def test_gate_report(high, tmp_path):
    p = derive_params(high, 57.0)
    single = accumulate_phase(p, SplineEnvelope(7, 52.57, 284.0), method="gauss")
    report = average_gate_fidelity(single)
    assert report.avg_infidelity == pytest.approx(1 - fidelity_closed_form(single))
    assert sum(report.contributions.values()) == pytest.approx(report.avg_fidelity, abs=1e-15)
    assert 0 < report.dephasing_0011 <= 1
    assert report.residual_photons_max < 1e-3
    path = tmp_path / "r.json"
    report.to_json(path, header={"command": "x"})
    data = json.loads(path.read_text())
    assert data["config"]["command"] == "x"
    assert data["avg_infidelity"] == pytest.approx(report.avg_infidelity)


def test_report_validates():
    bad = np.zeros((4, 4), dtype=complex)
    bad[0, 1] = 1.0
    with pytest.raises(InvalidTable):
        average_gate_fidelity(PhaseTable(bad, np.zeros(4), 0.0))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-4, 4), min_size=6, max_size=6), st.lists(st.floats(0, 3), min_size=6, max_size=6))
def test_fidelity_range_and_oracle(re, im):
    pairs = [("00", "01"), ("00", "10"), ("00", "11"), ("01", "10"), ("01", "11"), ("10", "11")]
    table = PhaseTable.from_pairs({k: r + 1j * i for k, r, i in zip(pairs, re, im)})
    f = fidelity_closed_form(table)
    assert 0.0 <= f <= 1.0 + 1e-12
    assert f == pytest.approx(brute_force_fidelity(table.mu), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(re=st.floats(-np.pi, np.pi), im=st.floats(0, 2), bump=st.floats(0, 1))
def test_monotone_in_dephasing_where_angle_term_helps(re, im, bump):
    # more dephasing lowers F only while sin(Re x) <= 0 for the affected term
    base = {("00", "01"): re / 2, ("10", "11"): -re / 2}
    a = PhaseTable.from_pairs({("00", "01"): re / 2 + 1j * im, ("10", "11"): -re / 2})
    b = PhaseTable.from_pairs({("00", "01"): re / 2 + 1j * (im + bump), ("10", "11"): -re / 2})
    x = a.mu[0, 1] - np.conj(a.mu[2, 3])
    if np.sin(x.real) <= 0:
        assert fidelity_closed_form(b) <= fidelity_closed_form(a) + 1e-15
    else:
        assert fidelity_closed_form(b) >= fidelity_closed_form(a) - 1e-15
    assert base
