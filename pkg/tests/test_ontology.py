"""Ontology tests: document validation, round-trips, the range penalty against
a brute-force hinge oracle, penalty gradient FD checks, and explanations.
"""

import json
import math

import numpy as np
import pytest

from smartpilot import ontology as O

MINIMAL = json.dumps(
    {
        "version": "1",
        "facility_id": "test",
        "states": [
            {
                "state_id": "S1",
                "description": "only state",
                "robot_functions": {"r1": "holds the part"},
                "variable_ranges": {"v1": {"lo": 0.0, "hi": 10.0, "unit": "mm"}},
            }
        ],
    }
)


def brute_force_hinge(values, los, his):
    """Independent per-variable hinge sum, plain python math."""
    total = 0.0
    for v, lo, hi in zip(values, los, his):
        if v < lo:
            total += (lo - v) ** 2
        elif v > hi:
            total += (v - hi) ** 2
    return total


def make_ontology(n_states=3, n_vars=4, seed=0):
    rng = np.random.default_rng(seed)
    states = []
    for i in range(n_states):
        ranges = {}
        for j in range(n_vars):
            lo = float(rng.uniform(-5, 5))
            ranges[f"v{j}"] = O.VariableRange(lo, lo + float(rng.uniform(0.5, 4.0)))
        states.append(O.CycleState(f"S{i}", f"state {i}", {"r0": f"task {i}"}, ranges))
    return O.ProcessOntology(tuple(states), facility_id="gen")


# ------------------------------------------------------------------ loading


def test_load_minimal_document():
    onto = O.load_ontology(MINIMAL)
    assert len(onto.states) == 1
    assert onto.range_for("S1", "v1") == O.VariableRange(0.0, 10.0, "mm")


def test_inverted_range_rejected_naming_variable():
    doc = json.loads(MINIMAL)
    doc["states"][0]["variable_ranges"]["bad_var"] = {"lo": 5, "hi": 3}
    with pytest.raises(O.OntologyValidationError, match="bad_var"):
        O.load_ontology(json.dumps(doc))


def test_duplicate_state_ids_rejected():
    doc = json.loads(MINIMAL)
    doc["states"].append(doc["states"][0])
    with pytest.raises(O.OntologyValidationError, match="duplicate"):
        O.load_ontology(json.dumps(doc))


def test_validation_lists_all_violations():
    doc = json.loads(MINIMAL)
    doc["states"][0]["variable_ranges"]["a"] = {"lo": 2, "hi": 1}
    doc["states"][0]["variable_ranges"]["b"] = {"lo": 9, "hi": 1}
    with pytest.raises(O.OntologyValidationError) as e:
        O.load_ontology(json.dumps(doc))
    assert "a" in str(e.value) and "b" in str(e.value)


def test_round_trip_exact(tmp_path):
    onto = make_ontology(seed=3)
    path = tmp_path / "onto.json"
    O.save_ontology(onto, path)
    again = O.load_ontology(path)
    assert again.states == onto.states
    assert again.facility_id == onto.facility_id
    # serialize -> parse -> serialize is a fixed point (bit-exact text)
    assert O.save_ontology(again) == O.save_ontology(onto)


# ------------------------------------------------------------------ penalty


def test_penalty_zero_in_range():
    onto = O.load_ontology(MINIMAL)
    assert O.range_penalty([5.0], "S1", onto, ["v1"]) == 0.0


def test_penalty_quadratic_hinge_value():
    onto = O.load_ontology(MINIMAL)
    assert O.range_penalty([12.0], "S1", onto, ["v1"]) == 4.0


def test_penalty_matches_brute_force_oracle():
    onto = make_ontology(n_states=4, n_vars=6, seed=7)
    variables = [f"v{j}" for j in range(6)]
    rng = np.random.default_rng(11)
    for _ in range(500):
        sid = f"S{rng.integers(0, 4)}"
        v = rng.uniform(-12, 12, size=6)
        lo, hi = onto.bounds(sid, variables)
        expected = brute_force_hinge(v, lo, hi)
        assert math.isclose(O.range_penalty(v, sid, onto, variables), expected, abs_tol=1e-12)


def test_penalty_zero_iff_in_range_grid():
    # Exhaustive 5-variable grid across each range boundary.
    onto = make_ontology(n_states=1, n_vars=5, seed=5)
    variables = [f"v{j}" for j in range(5)]
    lo, hi = onto.bounds("S0", variables)
    marks = [-0.6, 0.0, 0.5, 1.0, 1.7]  # relative position within/outside [lo, hi]
    from itertools import product

    for combo in product(range(len(marks)), repeat=5):
        v = np.array([lo[j] + marks[combo[j]] * (hi[j] - lo[j]) for j in range(5)])
        inside = all(0.0 <= marks[c] <= 1.0 for c in combo)
        p = O.range_penalty(v, "S0", onto, variables)
        assert (p == 0.0) == inside


def test_penalty_gradient_matches_fd_off_boundary():
    onto = make_ontology(n_states=2, n_vars=4, seed=9)
    variables = [f"v{j}" for j in range(4)]
    rng = np.random.default_rng(13)
    h = 1e-6
    checked = 0
    while checked < 200:
        sid = f"S{rng.integers(0, 2)}"
        v = rng.uniform(-10, 10, size=4)
        lo, hi = onto.bounds(sid, variables)
        if np.min(np.abs(np.concatenate([v - lo, v - hi]))) < 1e-3:
            continue  # FD is one-sided exactly at the hinge
        g = O.range_penalty_grad(v, sid, onto, variables)
        for j in range(4):
            vp, vm = v.copy(), v.copy()
            vp[j] += h
            vm[j] -= h
            fd = (O.range_penalty(vp, sid, onto, variables) - O.range_penalty(vm, sid, onto, variables)) / (2 * h)
            assert abs(g[j] - fd) < 1e-4 * max(1.0, abs(fd))
        checked += 1


def test_batch_penalty_consistent_with_scalar():
    onto = make_ontology(n_states=3, n_vars=4, seed=21)
    variables = [f"v{j}" for j in range(4)]
    rng = np.random.default_rng(22)
    pred = rng.uniform(-10, 10, size=(8, 4))
    sids = [f"S{rng.integers(0, 3)}" for _ in range(8)]
    total, grad = O.batch_range_penalty(pred, sids, onto, variables)
    expected = sum(O.range_penalty(pred[i], sids[i], onto, variables) for i in range(8))
    assert math.isclose(total, expected, rel_tol=1e-12)
    for i in range(8):
        np.testing.assert_array_equal(grad[i], O.range_penalty_grad(pred[i], sids[i], onto, variables))


def test_unknown_state_and_variable_raise_lookup():
    onto = O.load_ontology(MINIMAL)
    with pytest.raises(O.OntologyLookupError):
        O.range_penalty([1.0], "NOPE", onto, ["v1"])
    with pytest.raises(O.OntologyLookupError):
        O.range_penalty([1.0], "S1", onto, ["nope"])


# ------------------------------------------------------------------ explain


def test_explain_single_violation():
    onto = O.load_ontology(MINIMAL)
    ex = O.explain(True, [12.0], "S1", onto, ["v1"])
    assert ex.responsible_variables == (("v1", 12.0, 0.0, 10.0),)
    assert ex.robot_functions == {"r1": "holds the part"}
    assert not ex.possible_misclassification


def test_explain_flags_possible_misclassification():
    onto = O.load_ontology(MINIMAL)
    ex = O.explain(True, [5.0], "S1", onto, ["v1"])
    assert ex.responsible_variables == ()
    assert ex.possible_misclassification


def test_explain_normal_prediction_not_flagged():
    onto = O.load_ontology(MINIMAL)
    ex = O.explain(False, [5.0], "S1", onto, ["v1"])
    assert not ex.possible_misclassification


def test_explain_orders_by_violation_magnitude():
    states = (
        O.CycleState(
            "S",
            variable_ranges={
                "small": O.VariableRange(0, 10),
                "big": O.VariableRange(0, 10),
            },
        ),
    )
    onto = O.ProcessOntology(states)
    ex = O.explain(True, [12.0, 15.0], "S", onto, ["small", "big"])
    assert [r[0] for r in ex.responsible_variables] == ["big", "small"]


def test_explain_is_pure():
    onto = make_ontology(seed=2)
    variables = [f"v{j}" for j in range(4)]
    frame = [100.0, -100.0, 0.0, 3.0]
    a = O.explain(True, frame, "S1", onto, variables)
    b = O.explain(True, frame, "S1", onto, variables)
    assert a == b
