"""Sparse identification of ``xdot = Theta(x, u) @ Xi`` by sequential thresholding."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .library import FeatureLibrary, identified_library
from .plant import BirotorEnv, NumericalBlowupError, SparseDynamics, observe, simulate
from .signals import TrajectoryDataset

log = logging.getLogger(__name__)

THRESHOLD_MODES = ("normalized", "absolute", "relative_median")
BLOWUP_LIMIT = 1e6


class DegenerateFitError(ValueError):
    """The surviving support of one state column is rank deficient."""

    def __init__(self, column: int, msg: str = ""):
        super().__init__(msg or f"rank-deficient support for state column {column}")
        self.column = column


@dataclass(frozen=True)
class StlsqConfig:
    """Sequentially thresholded least squares settings.

    ``threshold_mode``:

    * ``"normalized"`` - a coefficient survives when ``|xi_j| * ||Theta_j||_2 >= lam``,
      i.e. the threshold applies after scaling every library column to unit norm.
    * ``"absolute"`` - survives when ``|xi_j| >= lam``.
    * ``"relative_median"`` - survives when ``|xi_j| >= lam * median`` of the
      non-negligible coefficient magnitudes of the first unthresholded solve.
    """

    lam: float = 0.9
    max_iterations: int = 20
    ridge: float = 0.0
    threshold_mode: str = "normalized"

    def __post_init__(self):
        if self.lam < 0 or self.ridge < 0:
            raise ValueError("lam and ridge must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold_mode must be one of {THRESHOLD_MODES}")


def _fd_derivative(y, h):
    """Fourth-order central differences, one-sided second order at two points per end."""
    n = len(y)
    d = np.empty_like(y)
    d[2:-2] = (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / (12 * h)
    d[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * h)
    d[1] = (-3 * y[1] + 4 * y[2] - y[3]) / (2 * h)
    d[n - 1] = (3 * y[n - 1] - 4 * y[n - 2] + y[n - 3]) / (2 * h)
    d[n - 2] = (3 * y[n - 2] - 4 * y[n - 3] + y[n - 4]) / (2 * h)
    return d


def build_data_matrices(traj: TrajectoryDataset):
    """Stack ``(X, Xdot, U, boundary)`` from a trajectory.

    Uses the stored derivatives when present. ``boundary`` flags rows whose
    derivative came from a one-sided stencil.
    """
    n = len(traj)
    X = traj.states.copy()
    U = traj.inputs.copy()
    boundary = np.zeros(n, dtype=bool)
    if traj.derivatives is not None:
        return X, traj.derivatives.copy(), U, boundary
    if n < 5:
        raise ValueError(f"need at least 5 samples for finite differences, got {n}")
    Xdot = _fd_derivative(X, traj.dt)
    boundary[[0, 1, n - 2, n - 1]] = True
    return X, Xdot, U, boundary


def _solve(A, y, ridge, column):
    m = A.shape[1]
    if ridge > 0:
        A = np.vstack([A, np.sqrt(ridge) * np.eye(m)])
        y = np.concatenate([y, np.zeros(m)])
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < m:
        raise DegenerateFitError(column, f"state column {column}: support of {m} terms has rank {rank}")
    return coef


def stlsq(Theta, Xdot, cfg: StlsqConfig | None = None, return_thresholds=False):
    """Sparse coefficient matrix ``Xi`` with ``Xdot ~= Theta @ Xi``.

    Each column is solved on unit-norm library columns (SVD least squares),
    thresholded, and re-solved on the surviving support until the support
    stops changing. Library columns that are identically zero get coefficient 0.
    With ``return_thresholds`` the per-entry magnitude below which coefficients
    were cut is returned as well.
    """
    cfg = cfg or StlsqConfig()
    Theta = np.asarray(Theta, dtype=float)
    Xdot = np.asarray(Xdot, dtype=float)
    if Xdot.ndim == 1:
        Xdot = Xdot[:, None]
    if Theta.shape[0] != Xdot.shape[0]:
        raise ValueError(f"Theta has {Theta.shape[0]} rows but Xdot has {Xdot.shape[0]}")
    if Theta.shape[1] < 1:
        raise ValueError("empty library")
    norms = np.linalg.norm(Theta, axis=0)
    usable = norms > 0
    A = Theta[:, usable] / norms[usable]
    n_feat, n_out = Theta.shape[1], Xdot.shape[1]
    xi = np.zeros((n_feat, n_out))
    thresholds = np.zeros((n_feat, n_out))

    for k in range(n_out):
        y = Xdot[:, k]
        c = _solve(A, y, cfg.ridge, k)
        raw = c / norms[usable]
        if cfg.threshold_mode == "normalized":
            cut = np.full_like(c, cfg.lam)
        elif cfg.threshold_mode == "absolute":
            cut = cfg.lam * norms[usable]
        else:
            mags = np.abs(raw)
            live = mags[mags > 1e-12 * max(mags.max(), 1e-300)]
            scale = np.median(live) if live.size else 0.0
            cut = cfg.lam * scale * norms[usable]
        support = np.abs(c) >= cut
        for _ in range(cfg.max_iterations):
            c = np.zeros_like(c)
            if support.any():
                c[support] = _solve(A[:, support], y, cfg.ridge, k)
            new_support = support & (np.abs(c) >= cut)
            if np.array_equal(new_support, support):
                break
            support = new_support
        c[~support] = 0.0
        c[np.abs(c) < cut] = 0.0
        xi[usable, k] = c / norms[usable]
        thresholds[usable, k] = cut / norms[usable]
    return (xi, thresholds) if return_thresholds else xi


@dataclass
class SindyModel:
    library: FeatureLibrary
    xi: np.ndarray
    lambda_used: float = 0.0
    _rhs: SparseDynamics | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        if self.xi.shape != (len(self.library), self.library.n_states):
            raise ValueError(
                f"xi must be {len(self.library)} x {self.library.n_states}, got {self.xi.shape}"
            )

    def __eq__(self, other):
        if not isinstance(other, SindyModel):
            return NotImplemented
        return (
            self.library == other.library
            and np.array_equal(self.xi, other.xi)
            and self.lambda_used == other.lambda_used
        )

    @property
    def rhs(self) -> SparseDynamics:
        if self._rhs is None:
            self._rhs = SparseDynamics(self.library, self.xi)
        return self._rhs

    def predict(self, states, actions) -> np.ndarray:
        return self.rhs(states, actions)

    def support(self) -> np.ndarray:
        return self.xi != 0.0

    def equations(self, precision: int = 5) -> list[str]:
        names = self.library.names()
        out = []
        for k in range(self.xi.shape[1]):
            terms = []
            for j in np.flatnonzero(self.xi[:, k]):
                coef = f"{self.xi[j, k]:+.{precision}g}"
                terms.append(coef if names[j] == "1" else f"{coef}*{names[j]}")
            out.append(f"dx{k + 1}/dt = " + (" ".join(terms) if terms else "0"))
        return out


def fit_sindy(traj: TrajectoryDataset, library: FeatureLibrary | None = None,
              cfg: StlsqConfig | None = None) -> SindyModel:
    library = library or identified_library()
    cfg = cfg or StlsqConfig()
    X, Xdot, U, _ = build_data_matrices(traj)
    Theta = library.evaluate(X, U)
    return SindyModel(library, stlsq(Theta, Xdot, cfg), cfg.lam)


def transition_matrices(states, actions, next_states, dt):
    """Regression rows from zero-order-hold transitions ``(x_k, u_k, x_{k+1})``.

    Pairs the forward difference ``(x_{k+1} - x_k) / dt`` with the midpoint
    state and the held input, which is second-order accurate for the interval
    average and never differences across an input switch. Returns ``(X, Xdot, U)``.
    """
    s = np.asarray(states, dtype=float)
    s1 = np.asarray(next_states, dtype=float)
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (len(s),))[:, None]
    return 0.5 * (s + s1), (s1 - s) / dt, np.asarray(actions, dtype=float)


def fit_transitions(states, actions, next_states, dt, library: FeatureLibrary | None = None,
                    cfg: StlsqConfig | None = None) -> SindyModel:
    """Fit from sampled transitions (see :func:`transition_matrices`)."""
    library = library or identified_library()
    cfg = cfg or StlsqConfig()
    X, Xdot, U = transition_matrices(states, actions, next_states, dt)
    return SindyModel(library, stlsq(library.evaluate(X, U), Xdot, cfg), cfg.lam)


def simulate_model(model: SindyModel, x0, controls, dt, substep=None) -> TrajectoryDataset:
    """RK4 rollout of the identified model under zero-order-hold controls.

    Stops early (``blowup=True``) if a state magnitude exceeds 1e6.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    controls = np.asarray(controls, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        states, completed = simulate(model.rhs, x0, controls, dt, substep, blowup=BLOWUP_LIMIT)
    n = len(states)
    return TrajectoryDataset(np.arange(n) * dt, states, controls[:n], blowup=not completed)


def _run_episode(env: BirotorEnv, policy, reference):
    env.reset(reference)
    total = 0.0
    for _ in range(env.config.max_steps):
        state, r, terminated, _ = env.step(policy(env.observation()))
        total += r
        if terminated:
            break
        if np.max(np.abs(state)) > BLOWUP_LIMIT:
            raise NumericalBlowupError("model state exceeded blowup limit")
    return total


def model_reward_error(model: SindyModel, env: BirotorEnv, policy, n_episodes: int = 1,
                       seed: int = 0, max_error: float = 1e6, references=None) -> float:
    """Mean absolute gap in episode return between ``env`` and the model.

    Each episode uses the same random step reference (drawn uniformly in
    [-0.5, 0.5]^2 from ``seed`` unless ``references`` is given) and the same
    deterministic ``policy(observation) -> action`` in both. Episodes where the
    model blows up contribute ``max_error``.
    """
    rng = np.random.default_rng(seed)
    if references is None:
        references = rng.uniform(-0.5, 0.5, size=(n_episodes, 2))
    surrogate = env.with_dynamics(model.rhs)
    errors = []
    for ref in references:
        real = _run_episode(env, policy, ref)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                synth = _run_episode(surrogate, policy, ref)
            err = abs(real - synth)
            errors.append(err if np.isfinite(err) else max_error)
        except (NumericalBlowupError, FloatingPointError, OverflowError):
            errors.append(max_error)
    return float(np.mean(errors))


# -- model files -----------------------------------------------------------

def save_model(model: SindyModel, path):
    lines = [
        "sindy-model v1",
        f"{len(model.library)} {model.xi.shape[1]}",
        f"lambda {model.lambda_used:.17g}",
        "library " + " ".join(model.library.names()),
    ]
    names = model.library.names()
    for k in range(model.xi.shape[1]):
        for j in np.flatnonzero(model.xi[:, k]):
            lines.append(f"{k + 1} {names[j]} {model.xi[j, k]:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> SindyModel:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "sindy-model v1":
        raise ValueError("not a sindy-model v1 file")
    n_feat, n_states = (int(v) for v in lines[1].split())
    lam = float(lines[2].split()[1])
    names = lines[3].split()[1:]
    if len(names) != n_feat:
        raise ValueError(f"library lists {len(names)} features, header says {n_feat}")
    library = FeatureLibrary.from_names(names, n_states=n_states)
    xi = np.zeros((n_feat, n_states))
    for lineno, line in enumerate(lines[4:], start=5):
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected '<state> <feature> <coefficient>'")
        xi[names.index(parts[1]), int(parts[0]) - 1] = float(parts[2])
    return SindyModel(library, xi, lam)
