"""Process ontology: cycle states, per-state sensor ranges, robot functions.

Three jobs: validate and round-trip the ontology document, compute the
knowledge-infusion range penalty (a quadratic hinge outside [lo, hi], so it
is differentiable for training), and assemble user-level explanations for
predictions (responsible variables, robot functions, expected ranges).

File format: JSON with top-level keys version, facility_id, states[]; each
state carries state_id, description, robot_functions{}, variable_ranges
{name: {lo, hi, unit}}. JSON float serialization round-trips exactly.

The ontology is immutable after load; all query paths are pure reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class OntologyValidationError(ValueError):
    """Document violates the ontology invariants; message lists all violations."""


class OntologyLookupError(KeyError):
    """Unknown state or variable."""


@dataclass(frozen=True)
class VariableRange:
    lo: float
    hi: float
    unit: str = ""


@dataclass(frozen=True)
class CycleState:
    state_id: str
    description: str = ""
    robot_functions: dict = field(default_factory=dict)  # robot_id -> text
    variable_ranges: dict = field(default_factory=dict)  # name -> VariableRange


@dataclass(frozen=True)
class ProcessOntology:
    states: tuple
    version: str = "1"
    facility_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "_by_id", {s.state_id: s for s in self.states})

    def state(self, state_id: str) -> CycleState:
        try:
            return self._by_id[state_id]
        except KeyError:
            raise OntologyLookupError(f"unknown state {state_id!r}") from None

    def state_ids(self) -> list[str]:
        return [s.state_id for s in self.states]

    def range_for(self, state_id: str, variable: str) -> VariableRange:
        st = self.state(state_id)
        try:
            return st.variable_ranges[variable]
        except KeyError:
            raise OntologyLookupError(f"state {state_id!r} has no range for {variable!r}") from None

    def bounds(self, state_id: str, variables: list[str]) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) arrays for the given variables in the given state."""
        st = self.state(state_id)
        lo = np.empty(len(variables))
        hi = np.empty(len(variables))
        for i, v in enumerate(variables):
            try:
                r = st.variable_ranges[v]
            except KeyError:
                raise OntologyLookupError(f"state {state_id!r} has no range for {v!r}") from None
            lo[i], hi[i] = r.lo, r.hi
        return lo, hi


@dataclass(frozen=True)
class Explanation:
    """Per-prediction explanation assembled from the ontology.

    responsible_variables: (name, observed, expected_lo, expected_hi), sorted
    by violation magnitude descending. possible_misclassification is set when
    the predicted class is anomalous yet no variable leaves its range.
    """

    state_id: str
    responsible_variables: tuple
    robot_functions: dict
    possible_misclassification: bool


def _validate(version, facility_id, states_raw) -> list[str]:
    problems = []
    seen = set()
    for s in states_raw:
        sid = s.get("state_id")
        if sid in seen:
            problems.append(f"duplicate state id {sid!r}")
        seen.add(sid)
        for name, r in s.get("variable_ranges", {}).items():
            if "lo" not in r or "hi" not in r:
                problems.append(f"state {sid!r} variable {name!r}: missing lo/hi")
            elif r["lo"] > r["hi"]:
                problems.append(f"state {sid!r} variable {name!r}: lo {r['lo']} > hi {r['hi']}")
    return problems


def load_ontology(source) -> ProcessOntology:
    """Parse and validate an ontology document (path or JSON string)."""
    looks_like_json = isinstance(source, str) and source.lstrip().startswith("{")
    if not looks_like_json and isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise OntologyValidationError(f"not valid JSON: {e}") from None
    states_raw = doc.get("states", [])
    problems = _validate(doc.get("version"), doc.get("facility_id"), states_raw)
    if problems:
        raise OntologyValidationError("; ".join(problems))
    states = []
    for s in states_raw:
        ranges = {
            name: VariableRange(float(r["lo"]), float(r["hi"]), r.get("unit", ""))
            for name, r in s.get("variable_ranges", {}).items()
        }
        states.append(
            CycleState(
                state_id=s["state_id"],
                description=s.get("description", ""),
                robot_functions=dict(s.get("robot_functions", {})),
                variable_ranges=ranges,
            )
        )
    return ProcessOntology(
        states=tuple(states),
        version=str(doc.get("version", "1")),
        facility_id=str(doc.get("facility_id", "")),
    )


def save_ontology(onto: ProcessOntology, path=None) -> str:
    """Serialize to the document format; writes to path when given."""
    doc = {
        "version": onto.version,
        "facility_id": onto.facility_id,
        "states": [
            {
                "state_id": s.state_id,
                "description": s.description,
                "robot_functions": dict(s.robot_functions),
                "variable_ranges": {
                    n: {"lo": r.lo, "hi": r.hi, "unit": r.unit} for n, r in s.variable_ranges.items()
                },
            }
            for s in onto.states
        ],
    }
    text = json.dumps(doc, indent=2)
    if path is not None:
        Path(path).write_text(text)
    return text


def range_penalty(values, state_id: str, onto: ProcessOntology, variables: list[str]) -> float:
    """Sum over variables of max(0, lo - v)^2 + max(0, v - hi)^2.

    Zero iff every variable sits inside its state range.
    """
    v = np.asarray(values, dtype=float)
    lo, hi = onto.bounds(state_id, variables)
    below = np.maximum(lo - v, 0.0)
    above = np.maximum(v - hi, 0.0)
    return float((below * below + above * above).sum())


def range_penalty_grad(values, state_id: str, onto: ProcessOntology, variables: list[str]) -> np.ndarray:
    """d(range_penalty)/d(values): -2 max(0, lo - v) + 2 max(0, v - hi)."""
    v = np.asarray(values, dtype=float)
    lo, hi = onto.bounds(state_id, variables)
    return 2.0 * np.maximum(v - hi, 0.0) - 2.0 * np.maximum(lo - v, 0.0)


def batch_range_penalty(pred: np.ndarray, state_ids, onto: ProcessOntology, variables: list[str]):
    """Summed penalty and gradient over a batch with per-row states.

    This is the shape the composite training loss injects: pred [B, C],
    state_ids length B; returns (total, grad [B, C]).
    """
    pred = np.asarray(pred, dtype=float)
    lo = np.empty_like(pred)
    hi = np.empty_like(pred)
    for i, sid in enumerate(state_ids):
        lo[i], hi[i] = onto.bounds(sid, variables)
    below = np.maximum(lo - pred, 0.0)
    above = np.maximum(pred - hi, 0.0)
    total = float((below * below + above * above).sum())
    grad = 2.0 * above - 2.0 * below
    return total, grad


def explain(prediction, frame, state_id: str, onto: ProcessOntology,
            variables: list[str]) -> Explanation:
    """Assemble the user-level explanation for one observed frame.

    prediction is either a prediction result (anything with a predicted_class
    whose .name marks anomalies, i.e. != "Normal") or a plain bool saying the
    predicted class was anomalous. Responsible variables are exactly those
    outside their state range, sorted by violation magnitude descending
    (ties by variable name for stability).
    """
    if isinstance(prediction, bool):
        predicted_is_anomalous = prediction
    else:
        cls = getattr(prediction, "predicted_class", prediction)
        predicted_is_anomalous = getattr(cls, "name", str(cls)) != "Normal"
    st = onto.state(state_id)
    v = np.asarray(frame, dtype=float)
    lo, hi = onto.bounds(state_id, variables)
    viol = np.maximum(lo - v, 0.0) + np.maximum(v - hi, 0.0)
    hits = [
        (variables[i], float(v[i]), float(lo[i]), float(hi[i]), float(viol[i]))
        for i in range(len(variables))
        if viol[i] > 0.0
    ]
    hits.sort(key=lambda h: (-h[4], h[0]))
    responsible = tuple((name, obs, l, h) for name, obs, l, h, _ in hits)
    return Explanation(
        state_id=state_id,
        responsible_variables=responsible,
        robot_functions=dict(st.robot_functions),
        possible_misclassification=bool(predicted_is_anomalous and not responsible),
    )
