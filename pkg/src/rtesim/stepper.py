"""Fixed-step Theta-Maruyama solver.

One step advances the state by a blended explicit/implicit drift increment
plus the actual Poisson counts observed while each internal clock moves
forward by h * phi3, where phi3 is one of five quadrature rules for the
rate integral.  Because the counts come from shared epoch streams rather
than fresh Poisson draws, runs with different step sizes or rules on the
same PathBundle are pathwise coupled.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigurationError, GridError, ImplicitSolveError,
                     ModelEvaluationError, NegativeStateError)
from .model import eval_drift, eval_rate, eval_rates

QUADRATURES = ("euler", "midpoint", "trapezoidal",
               "improved-midpoint", "improved-trapezoidal")
NEGATIVITY_POLICIES = ("reset-to-zero", "allow", "error")


@dataclass(frozen=True)
class SolverConfig:
    """One Theta-Maruyama variant: theta, step size and quadrature rule.

    fp_tol / fp_max_iter control the Picard iteration of the implicit
    drift solve (max-norm on successive iterates).  clamp_phi3 keeps the
    clock increments nonnegative; the improved rules can dip below zero
    near the boundary and a Poisson count over a negative interval is
    undefined.
    """

    theta: float
    h: float
    quadrature: str = "euler"
    fp_tol: float = 1e-12
    fp_max_iter: int = 100
    negativity: str = "reset-to-zero"
    clamp_phi3: bool = True

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError(f"theta must be in [0, 1], got {self.theta}")
        if not self.h > 0:
            raise ConfigurationError(f"step size h must be positive, got {self.h}")
        if self.quadrature not in QUADRATURES:
            raise ConfigurationError(
                f"unknown quadrature {self.quadrature!r}; known: {', '.join(QUADRATURES)}")
        if self.negativity not in NEGATIVITY_POLICIES:
            raise ConfigurationError(
                f"unknown negativity policy {self.negativity!r}; "
                f"known: {', '.join(NEGATIVITY_POLICIES)}")
        if not self.fp_tol > 0:
            raise ConfigurationError(f"fp_tol must be positive, got {self.fp_tol}")
        if self.fp_max_iter < 1:
            raise ConfigurationError(f"fp_max_iter must be >= 1, got {self.fp_max_iter}")

    def label(self):
        return f"theta{self.theta:g}-{self.quadrature}-h{self.h:g}"

    def variant(self):
        """Label without the step size (variants share theta and rule)."""
        return f"theta{self.theta:g}-{self.quadrature}"


@dataclass
class StepperState:
    """Iterate of the fixed-step method: grid index, state, internal clocks."""

    n: int
    t: float
    x: np.ndarray
    clocks: np.ndarray
    jump_counts: np.ndarray


@dataclass
class Trajectory:
    """Grid, states and internal clocks of one fixed-step run."""

    grid: np.ndarray
    states: np.ndarray
    clocks: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def clocks_final(self):
        return self.clocks[-1]

    @property
    def endpoint(self):
        return self.states[-1]

    def write_csv(self, fileobj, comments=()):
        d = self.states.shape[1]
        p = self.clocks.shape[1]
        for line in comments:
            fileobj.write(f"# {line}\n")
        cols = (["t"] + [f"x_{i + 1}" for i in range(d)]
                + [f"tau_{k + 1}" for k in range(p)])
        fileobj.write(",".join(cols) + "\n")
        for i in range(len(self.grid)):
            row = [repr(float(self.grid[i]))]
            row += [repr(float(v)) for v in self.states[i]]
            row += [repr(float(v)) for v in self.clocks[i]]
            fileobj.write(",".join(row) + "\n")


def _shifted_rates(model, x):
    """Matrix R[j, k] = clamped rate k at the state displaced by jump j.

    Tries one batched call per rate over the p displaced states (the
    built-in models broadcast); falls back to pointwise evaluation and
    remembers the outcome on the model.
    """
    p = model.jump_count
    displaced = x + model.jumps  # (p, d)
    if getattr(model, "_rates_batch", True):
        try:
            cols = [np.asarray(r(displaced), dtype=float) for r in model.rates]
            shifted = np.stack(cols, axis=1)
            if shifted.shape != (p, p):
                raise ValueError(shifted.shape)
            if not np.isfinite(shifted).all():
                raise ModelEvaluationError(
                    f"rate non-finite near x={x!r}", x=x)
            neg = shifted < 0.0
            if neg.any():
                model.clamp_diag.bump(int(neg.sum()))
                shifted = np.where(neg, 0.0, shifted)
            model._rates_batch = True
            return shifted
        except (TypeError, ValueError, IndexError):
            model._rates_batch = False
    shifted = np.empty((p, p))
    for j in range(p):
        for k in range(p):
            shifted[j, k] = eval_rate(model, k, displaced[j])
    return shifted


def _phi3_vector(model, x, h, rule, clamp):
    """phi3 for all p processes at once; returns (values, clamp_count).

    The midpoint/trapezoidal predictor points are shared across k, so the
    vector form costs p+1 rate evaluations instead of p*(p+1).
    """
    p = model.jump_count
    if rule == "euler":
        vals = eval_rates(model, x)
    elif rule == "midpoint":
        lam0 = eval_rates(model, x)
        xm = x + 0.5 * h * eval_drift(model, x) + 0.5 * h * (lam0 @ model.jumps)
        vals = eval_rates(model, xm)
    elif rule == "trapezoidal":
        lam0 = eval_rates(model, x)
        xe = x + h * eval_drift(model, x) + h * (lam0 @ model.jumps)
        vals = 0.5 * (lam0 + eval_rates(model, xe))
    elif rule in ("improved-midpoint", "improved-trapezoidal"):
        lam0 = eval_rates(model, x)
        shifted = _shifted_rates(model, x)
        corr = 0.5 * h * (lam0 @ shifted - lam0.sum() * lam0)
        if rule == "improved-midpoint":
            vals = eval_rates(model, x + 0.5 * h * eval_drift(model, x)) + corr
        else:
            vals = (0.5 * lam0
                    + 0.5 * eval_rates(model, x + h * eval_drift(model, x))
                    + corr)
    else:
        raise ConfigurationError(f"unknown quadrature {rule!r}")
    nclamp = 0
    if clamp:
        neg = vals < 0.0
        if neg.any():
            nclamp = int(neg.sum())
            vals = np.where(neg, 0.0, vals)
    return vals, nclamp


def phi3(model, k, x, h, rule="euler", clamp=True):
    """Clock-increment quadrature phi3(k, x, h) for one process (0-based k)."""
    if not 0 <= k < model.jump_count:
        raise ConfigurationError(f"process index {k} out of range")
    vals, _ = _phi3_vector(model, np.asarray(x, dtype=float), h, rule, clamp)
    return float(vals[k])


def _implicit_solve(model, x_prev, h, theta, disp, fp_tol, fp_max_iter, step_idx):
    """Picard iteration for y = x_prev + h*theta*f(y) + h*(1-theta)*f(x_prev) + disp.

    The map is a contraction for h*theta*L_f < 1; the explicit full step is
    the initial guess.
    """
    f_prev = eval_drift(model, x_prev)
    base = x_prev + h * (1.0 - theta) * f_prev + disp
    y = x_prev + h * f_prev + disp
    ht = h * theta
    for _ in range(fp_max_iter):
        y_next = base + ht * eval_drift(model, y)
        resid = float(np.max(np.abs(y_next - y)))
        if resid < fp_tol:
            return y_next
        y = y_next
    raise ImplicitSolveError(
        f"implicit drift solve stalled at step {step_idx}: residual {resid:.3e} "
        f"after {fp_max_iter} iterations (tolerance {fp_tol:.1e})",
        residual=resid, step=step_idx)


def _advance(model, config, paths, x, clocks, step_idx):
    """One Theta-Maruyama update; returns (x_new, r, dys, clamp_count)."""
    h = config.h
    vals, nclamp = _phi3_vector(model, x, h, config.quadrature, config.clamp_phi3)
    r = h * vals
    dys = np.array([paths[k].increment(clocks[k], clocks[k] + r[k])
                    for k in range(model.jump_count)])
    disp = dys @ model.jumps
    if config.theta == 0.0:
        x_new = x + h * eval_drift(model, x) + disp
    else:
        x_new = _implicit_solve(model, x, h, config.theta, disp,
                                config.fp_tol, config.fp_max_iter, step_idx)
    if x_new.min() < 0.0:
        if config.negativity == "reset-to-zero":
            x_new = np.maximum(x_new, 0.0)
        elif config.negativity == "error":
            raise NegativeStateError(
                f"negative component at step {step_idx}: x={x_new!r}")
    return x_new, r, dys, nclamp


def step(state, model, config, paths):
    """Advance one StepperState by a single step (functional)."""
    x_new, r, dys, _ = _advance(model, config, paths, state.x, state.clocks, state.n)
    n = state.n + 1
    return StepperState(n=n, t=n * config.h, x=x_new,
                        clocks=state.clocks + r,
                        jump_counts=state.jump_counts + dys)


def grid_steps(T, h):
    """Number of steps n with n*h = T, or GridError if T/h is not integral."""
    ratio = T / h
    nbar = int(round(ratio))
    if nbar < 1 or abs(ratio - nbar) > 1e-9 * max(1.0, abs(ratio)):
        raise GridError(f"horizon T={T} is not an integer multiple of h={h}")
    return nbar


def check_step_size(model, config):
    """Warn when an implicit run violates the contraction condition."""
    if config.theta > 0.0 and model.lipschitz_f:
        if config.h * config.theta * model.lipschitz_f >= 1.0:
            warnings.warn(
                f"h*theta*L_f = {config.h * config.theta * model.lipschitz_f:g} >= 1 "
                f"for model {model.name!r}: the implicit solve may not contract",
                stacklevel=3)


def solve_trajectory(model, config, paths, x0, T):
    """Run the Theta-Maruyama method over [0, T] on the given epoch streams.

    Deterministic in (model, config, paths, x0, T).  Grid times are n*h by
    integer multiplication, never accumulated.
    """
    nbar = grid_steps(T, config.h)
    check_step_size(model, config)
    d, p = model.dim, model.jump_count
    try:
        x = np.asarray(x0, dtype=float).reshape(d).copy()
    except ValueError:
        raise ConfigurationError(
            f"initial state {x0!r} does not match model dimension {d}") from None
    if not np.isfinite(x).all():
        raise ConfigurationError(f"initial state must be finite, got {x0!r}")
    clocks = np.zeros(p)
    jump_counts = np.zeros(p, dtype=np.int64)
    states = np.empty((nbar + 1, d))
    clock_hist = np.empty((nbar + 1, p))
    states[0] = x
    clock_hist[0] = clocks
    clamp_total = 0
    for n in range(nbar):
        x, r, dys, nclamp = _advance(model, config, paths, x, clocks, n)
        clocks = clocks + r
        jump_counts += dys
        clamp_total += nclamp
        states[n + 1] = x
        clock_hist[n + 1] = clocks
    grid = np.arange(nbar + 1) * config.h
    meta = {
        "model": model.name,
        "config": config,
        "jump_counts": jump_counts,
        "phi3_clamps": clamp_total,
    }
    return Trajectory(grid=grid, states=states, clocks=clock_hist, meta=meta)
