"""Candidate-function libraries for sparse regression of bi-rotor dynamics.

A library is an ordered tuple of :class:`Feature` descriptors. Each feature is
a scalar function of the stacked vector ``z = (x1..x6, u1, u2)``. Evaluation
is vectorised over samples, so the same object serves the ground-truth plant
(one state at a time) and the regression (thousands of rows at once).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

N_STATES = 6
N_INPUTS = 2

KINDS = ("const", "linear", "cos_x2", "sq_sin_x2", "sin", "cos", "poly")

_NAME_PATTERNS = [
    (re.compile(r"^1$"), "const"),
    (re.compile(r"^([xu]\d+)\^2\*sin\(x2\)$"), "sq_sin_x2"),
    (re.compile(r"^([xu]\d+)\*cos\(x2\)$"), "cos_x2"),
    (re.compile(r"^sin\(([xu]\d+)\)$"), "sin"),
    (re.compile(r"^cos\(([xu]\d+)\)$"), "cos"),
    (re.compile(r"^([xu]\d+)\^(\d+)$"), "poly"),
    (re.compile(r"^([xu]\d+)$"), "linear"),
]


def variable_index(var: str, n_states: int = N_STATES) -> int:
    """Column of ``var`` in the stacked (state, input) vector."""
    kind, num = var[0], int(var[1:])
    if num < 1:
        raise ValueError(f"bad variable name {var!r}")
    return num - 1 if kind == "x" else n_states + num - 1


@dataclass(frozen=True)
class Feature:
    kind: str
    var: str = ""
    power: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.kind != "const" and not re.fullmatch(r"[xu]\d+", self.var):
            raise ValueError(f"feature {self.kind!r} needs a variable like 'x3' or 'u1'")
        if self.kind == "poly" and self.power < 2:
            raise ValueError("poly features need power >= 2")

    @property
    def name(self) -> str:
        v = self.var
        return {
            "const": "1",
            "linear": v,
            "cos_x2": f"{v}*cos(x2)",
            "sq_sin_x2": f"{v}^2*sin(x2)",
            "sin": f"sin({v})",
            "cos": f"cos({v})",
            "poly": f"{v}^{self.power}",
        }[self.kind]

    @classmethod
    def from_name(cls, name: str) -> "Feature":
        name = name.replace(" ", "")
        for pattern, kind in _NAME_PATTERNS:
            m = pattern.match(name)
            if m is None:
                continue
            if kind == "const":
                return cls("const")
            if kind == "poly":
                return cls("poly", m.group(1), int(m.group(2)))
            return cls(kind, m.group(1))
        raise ValueError(f"cannot parse feature name {name!r}")


class FeatureLibrary:
    """Immutable ordered collection of features."""

    def __init__(self, features, n_states: int = N_STATES, n_inputs: int = N_INPUTS):
        self.features = tuple(features)
        self.n_states = n_states
        self.n_inputs = n_inputs
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("duplicate features in library")
        for f in self.features:
            if f.kind != "const":
                limit = n_states if f.var[0] == "x" else n_inputs
                if int(f.var[1:]) > limit:
                    raise ValueError(f"variable {f.var} out of range")
        self._plan = self._compile()

    @classmethod
    def from_names(cls, names, **kwargs) -> "FeatureLibrary":
        return cls([Feature.from_name(n) for n in names], **kwargs)

    def __len__(self):
        return len(self.features)

    def __eq__(self, other):
        return (
            isinstance(other, FeatureLibrary)
            and self.features == other.features
            and self.n_states == other.n_states
            and self.n_inputs == other.n_inputs
        )

    def __repr__(self):
        return f"FeatureLibrary({len(self)} features)"

    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def subset(self, mask) -> "FeatureLibrary":
        """Library restricted to the features where ``mask`` is true."""
        return FeatureLibrary(
            [f for f, keep in zip(self.features, mask) if keep], self.n_states, self.n_inputs
        )

    def _compile(self):
        # Group features by kind so evaluation is a handful of numpy calls.
        groups: dict[tuple, tuple[list, list]] = {}
        for pos, f in enumerate(self.features):
            key = (f.kind, f.power)
            cols = -1 if f.kind == "const" else variable_index(f.var, self.n_states)
            groups.setdefault(key, ([], []))
            groups[key][0].append(pos)
            groups[key][1].append(cols)
        return [(k, np.array(p), np.array(c)) for k, (p, c) in groups.items()]

    def evaluate(self, states, actions) -> np.ndarray:
        """Feature matrix for a batch, shape ``(n, len(self))``.

        A single state/action pair gives a 1-D vector.
        """
        x = np.asarray(states, dtype=float)
        u = np.asarray(actions, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        u = np.atleast_2d(u)
        if x.shape[1] != self.n_states or u.shape[1] != self.n_inputs:
            raise ValueError(
                f"expected {self.n_states} states and {self.n_inputs} inputs, "
                f"got {x.shape[1]} and {u.shape[1]}"
            )
        z = np.concatenate([x, u], axis=1)
        out = np.empty((z.shape[0], len(self.features)))
        x2 = x[:, 1:2]
        for (kind, power), pos, cols in self._plan:
            if kind == "const":
                out[:, pos] = 1.0
                continue
            v = z[:, cols]
            if kind == "linear":
                out[:, pos] = v
            elif kind == "cos_x2":
                out[:, pos] = v * np.cos(x2)
            elif kind == "sq_sin_x2":
                out[:, pos] = v * v * np.sin(x2)
            elif kind == "sin":
                out[:, pos] = np.sin(v)
            elif kind == "cos":
                out[:, pos] = np.cos(v)
            else:
                out[:, pos] = v**power
        return out[0] if single else out


def _variables(n_states=N_STATES, n_inputs=N_INPUTS):
    return [f"x{i + 1}" for i in range(n_states)] + [f"u{j + 1}" for j in range(n_inputs)]


def full_library(n_states: int = N_STATES, n_inputs: int = N_INPUTS) -> FeatureLibrary:
    """Every candidate family for every variable (41 features for 6 states, 2 inputs).

    Constant, linear terms, ``v*cos(x2)``, ``v^2*sin(x2)``, ``sin(v)`` and ``cos(v)``
    for each state and input ``v``.
    """
    vs = _variables(n_states, n_inputs)
    feats = [Feature("const")]
    for kind in ("linear", "cos_x2", "sq_sin_x2", "sin", "cos"):
        feats += [Feature(kind, v) for v in vs]
    return FeatureLibrary(feats, n_states, n_inputs)


def identified_library() -> FeatureLibrary:
    """Default 27-feature bi-rotor library.

    Constant, the eight linear terms, ``v*cos(x2)`` and ``v^2*sin(x2)`` for
    every state and input, plus ``sin(x2)`` and ``cos(x2)``. Trigonometric
    functions of the other variables are left out: ``sin``/``cos`` of rotor
    speeds in the thousands of rad/s alias into noise-like columns that
    regression happily overfits. Use :func:`full_library` to include them.
    """
    vs = _variables()
    feats = [Feature("const")]
    for kind in ("linear", "cos_x2", "sq_sin_x2"):
        feats += [Feature(kind, v) for v in vs]
    feats += [Feature("sin", "x2"), Feature("cos", "x2")]
    return FeatureLibrary(feats)


def polynomial_library(degree: int, n_states=N_STATES, n_inputs=N_INPUTS) -> FeatureLibrary:
    """Constant, linear and pure per-variable powers up to ``degree``."""
    vs = _variables(n_states, n_inputs)
    feats = [Feature("const")] + [Feature("linear", v) for v in vs]
    for p in range(2, degree + 1):
        feats += [Feature("poly", v, p) for v in vs]
    return FeatureLibrary(feats, n_states, n_inputs)
