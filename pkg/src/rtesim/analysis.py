"""Strong-error estimation, order fitting and pathwise diagnostics.

All Monte Carlo estimators here run variants and their reference on the
*same* Poisson epoch streams per replication, so endpoint differences are
pathwise strong errors with low variance.  Replications are independent
tasks; results are reduced in replication order, which keeps every
reported number bit-stable no matter how many workers run.
"""

import math
import multiprocessing as mp
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (ConfigurationError, FitError, ModelEvaluationError,
                     RteSimError, UnsupportedModelError)
from .exact import exact_trajectory
from .model import eval_drift, eval_rate
from .poisson import PathBundle
from .stepper import _phi3_vector, grid_steps, solve_trajectory

# ---------------------------------------------------------------------------
# replication worker pool (fork-based; serial fallback elsewhere)

_ACTIVE_WORKER = None


def _pool_call(j):
    return _ACTIVE_WORKER(j)


def run_replications(worker, M, threads=1):
    """Evaluate worker(0..M-1), in replication order, optionally in parallel."""
    threads = max(1, int(threads))
    if threads == 1 or M < 2:
        return [worker(j) for j in range(M)]
    try:
        ctx = mp.get_context("fork")
    except ValueError:
        return [worker(j) for j in range(M)]
    global _ACTIVE_WORKER
    _ACTIVE_WORKER = worker
    try:
        with ctx.Pool(min(threads, M)) as pool:
            chunk = max(1, M // (4 * threads))
            return pool.map(_pool_call, range(M), chunksize=chunk)
    finally:
        _ACTIVE_WORKER = None


# ---------------------------------------------------------------------------
# strong error and order fitting


class ErrorRow(NamedTuple):
    h: float
    mean_abs_error: float
    std_error: float
    M: int


@dataclass
class ErrorReport:
    """Per-step-size endpoint errors of one Monte Carlo experiment."""

    rows: list
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def write_csv(self, fileobj, comments=(), fit=None):
        for line in comments:
            fileobj.write(f"# {line}\n")
        fileobj.write("h,mean_abs_error,std_error,M\n")
        for r in self.rows:
            fileobj.write(f"{r.h!r},{r.mean_abs_error!r},{r.std_error!r},{r.M}\n")
        if fit is not None:
            fileobj.write(f"# slope={fit.slope!r}, intercept={fit.intercept!r}, "
                          f"r2={fit.r_squared!r}\n")


@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    r_squared: float


def fit_order(report):
    """Least-squares slope of log(mean error) against log(h)."""
    rows = report.rows if isinstance(report, ErrorReport) else list(report)
    if len(rows) < 2:
        raise FitError(f"order fit needs >= 2 rows, got {len(rows)}")
    for r in rows:
        if not r.mean_abs_error > 0.0:
            raise FitError(f"nonpositive mean error {r.mean_abs_error!r} at h={r.h!r}")
    logh = np.log([r.h for r in rows])
    loge = np.log([r.mean_abs_error for r in rows])
    slope, intercept = np.polyfit(logh, loge, 1)
    resid = loge - (slope * logh + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((loge - loge.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return OrderFit(slope=float(slope), intercept=float(intercept), r_squared=r2)


def _norm_fn(norm):
    if norm == "euclidean":
        return lambda v: float(np.sqrt(np.sum(v * v)))
    if norm == "max":
        return lambda v: float(np.max(np.abs(v)))
    raise ConfigurationError(f"unknown norm {norm!r}; use 'euclidean' or 'max'")


def strong_error(model, reference, configs, x0, T, M, master_seed,
                 threads=1, norm="euclidean"):
    """Coupled-path endpoint errors of the given solver variants.

    For each replication one PathBundle is built; the reference (exact
    solver for hooked models, or a nested fine-step run) and every config
    consume those same epochs.  Rows follow the order of ``configs``.

    ``reference`` is the string "exact" or a ReferenceSpec.
    """
    configs = list(configs)
    if M < 1:
        raise ConfigurationError(f"replication count M must be >= 1, got {M}")
    if not configs:
        raise ConfigurationError("at least one solver config is required")
    for cfg in configs:
        grid_steps(T, cfg.h)  # validates divisibility up front
    use_exact = isinstance(reference, str)
    if use_exact:
        if reference != "exact":
            raise ConfigurationError(f"unknown reference {reference!r}")
    else:
        reference.check_nesting([cfg.h for cfg in configs])
        ref_config = reference.resolve_config()
    dist = _norm_fn(norm)
    labels = [cfg.label() for cfg in configs]
    p = model.jump_count

    def worker(j):
        bundle = PathBundle(master_seed, j, p)
        try:
            if use_exact:
                ref_x = exact_trajectory(model, bundle, x0, T).endpoint
            else:
                ref_x = solve_trajectory(model, ref_config, bundle, x0, T).endpoint
        except RteSimError as e:
            raise type(e)(f"replication {j}, reference: {e}") from e
        errs = np.empty(len(configs))
        for i, cfg in enumerate(configs):
            try:
                end = solve_trajectory(model, cfg, bundle, x0, T).endpoint
            except RteSimError as e:
                raise type(e)(f"replication {j}, config {labels[i]}: {e}") from e
            errs[i] = dist(ref_x - end)
        return errs

    samples = np.array(run_replications(worker, M, threads))  # (M, nconfig)
    means = samples.mean(axis=0)
    if M > 1:
        ses = samples.std(axis=0, ddof=1) / math.sqrt(M)
    else:
        ses = np.zeros(len(configs))
    rows = [ErrorRow(cfg.h, float(means[i]), float(ses[i]), M)
            for i, cfg in enumerate(configs)]
    meta = {
        "model": model.name,
        "configs": labels,
        "reference": "exact" if use_exact else f"h_ref={reference.h_ref!r}",
        "T": T,
        "norm": norm,
    }
    return ErrorReport(rows=rows, seed=master_seed, meta=meta)


# ---------------------------------------------------------------------------
# local one-step errors sampled on the exact solution


@dataclass(frozen=True)
class LocalErrorSample:
    """Drift (L) and clock (K) one-step errors started from the exact path."""

    n: int
    L_abs: float
    K_abs: float


def _segment_overlaps(exact, a, b):
    """Yield (segment state, lo, hi) offsets covering [a, b] piecewise."""
    starts = exact.seg_starts
    durs = exact.seg_durations
    i = max(int(np.searchsorted(starts, a, side="right")) - 1, 0)
    while i < len(starts):
        s0 = starts[i]
        s1 = s0 + durs[i]
        lo = max(a, s0)
        hi = min(b, s1)
        if hi > lo:
            yield exact.seg_states[i], lo - s0, hi - s0
        if s1 >= b:
            break
        i += 1


def local_errors(model, exact, config, n):
    """L and K over grid step n of ``config``, measured on ``exact``.

    Both integrals are summed in closed form segment by segment across any
    jumps that fall inside the step, so the only approximation in the
    sample is the quadrature rule under test.
    """
    hooks = model.analytic
    if hooks is None or hooks.drift_integral is None:
        raise UnsupportedModelError(
            f"local error sampling needs analytic hooks with a drift integral; "
            f"model {model.name!r} does not provide them")
    h = config.h
    t0, t1 = n * h, (n + 1) * h
    if t1 > exact.T * (1.0 + 1e-12):
        raise ConfigurationError(
            f"step [{t0:g}, {t1:g}] not covered by exact trajectory (T={exact.T})")
    p = model.jump_count
    drift_int = np.zeros(model.dim)
    hazard_int = np.zeros(p)
    for x_seg, lo, hi in _segment_overlaps(exact, t0, t1):
        drift_int += (np.asarray(hooks.drift_integral(hi, x_seg), dtype=float)
                      - np.asarray(hooks.drift_integral(lo, x_seg), dtype=float))
        for k in range(p):
            hazard_int[k] += (hooks.hazard_integral[k](hi, x_seg)
                              - hooks.hazard_integral[k](lo, x_seg))
    x_n = exact.state_at(t0)
    x_n1 = exact.state_at(min(t1, exact.T))
    phi1 = ((1.0 - config.theta) * eval_drift(model, x_n)
            + config.theta * eval_drift(model, x_n1))
    L = drift_int - h * phi1
    phis, _ = _phi3_vector(model, x_n, h, config.quadrature, config.clamp_phi3)
    K = (hazard_int - h * phis) @ model.jumps
    dist = _norm_fn("euclidean")
    return LocalErrorSample(n=n, L_abs=dist(L), K_abs=dist(K))


# ---------------------------------------------------------------------------
# generator and martingale diagnostics


def generator_apply(model, F, gradF, x):
    """Generator value grad F . f + sum_k lambda_k (F(x + nu_k) - F(x))."""
    x = np.asarray(x, dtype=float)
    gF = np.asarray(gradF(x), dtype=float).reshape(model.dim)
    val = float(gF @ eval_drift(model, x))
    Fx = float(F(x))
    for k in range(model.jump_count):
        val += eval_rate(model, k, x) * (float(F(x + model.jumps[k])) - Fx)
    if not math.isfinite(val):
        raise ModelEvaluationError(f"generator non-finite at x={x!r}", x=x)
    return val


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_GL01_X = 0.5 * (_GL_X + 1.0)
_GL01_W = 0.5 * _GL_W


def _composite_gl(exact, g, cap, subdiv=1):
    """Composite Gauss-Legendre value of integral g(X(s)) ds.

    Each flow segment is split into ceil(duration/cap) * subdiv chunks, so
    doubling ``subdiv`` genuinely refines every segment.
    """
    flow = exact.model.analytic.flow
    durs = exact.seg_durations
    keep = durs > 0.0
    durs = durs[keep]
    if durs.size == 0:
        return 0.0
    xs = exact.seg_states[keep]
    reps = np.maximum(1, np.ceil(durs / cap).astype(np.int64)) * subdiv
    seg_idx = np.repeat(np.arange(durs.size), reps)
    chunk_len = (durs / reps)[seg_idx]
    rank = np.arange(seg_idx.size) - np.repeat(np.cumsum(reps) - reps, reps)
    offs = rank * chunk_len
    t_nodes = offs[:, None] + chunk_len[:, None] * _GL01_X[None, :]
    d = xs.shape[1]
    if d == 1:
        x_nodes = np.asarray(flow(t_nodes, xs[seg_idx, 0][:, None]), dtype=float)
        vals = np.asarray(g(x_nodes.reshape(-1, 1)), dtype=float)
        vals = vals.reshape(t_nodes.shape)
    else:
        vals = np.empty_like(t_nodes)
        x_chunk = xs[seg_idx]
        for i in range(t_nodes.shape[0]):
            batch = np.array([flow(t, x_chunk[i]) for t in t_nodes[i]])
            vals[i] = np.asarray(g(batch), dtype=float)
    return float(np.sum((vals @ _GL01_W) * chunk_len))


def integrate_along_path(exact, g, tol=1e-8, chunk_cap=0.25, max_levels=10):
    """Integral of g(X(s)) ds over [0, T] on a piecewise-flow trajectory.

    ``g`` maps a batch of states with shape (m, d) to values of shape (m,).
    Chunk lengths are halved until two successive composite rules agree to
    ``tol`` in absolute value.
    """
    prev = None
    subdiv = 1
    for _ in range(max_levels):
        val = _composite_gl(exact, g, chunk_cap, subdiv)
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        subdiv *= 2
    warnings.warn(f"path integral refinement stalled at |diff|="
                  f"{abs(val - prev):.2e} (tol {tol:.1e})", stacklevel=2)
    return val


def _generator_batch(model, F, gradF):
    """Vectorised x -> AF(x) over batches of states (m, d) -> (m,)."""
    jumps = model.jumps
    rates = model.rates

    def g(xs):
        gF = np.asarray(gradF(xs), dtype=float)
        fx = np.asarray(model.drift(xs), dtype=float)
        val = np.sum(gF * fx, axis=-1)
        Fx = np.asarray(F(xs), dtype=float)
        for k in range(len(rates)):
            lam = np.maximum(np.asarray(rates[k](xs), dtype=float), 0.0)
            val = val + lam * (np.asarray(F(xs + jumps[k]), dtype=float) - Fx)
        return val

    return g


def _jump_variation_batch(model, F):
    """Vectorised integrand of the predictable second-moment identity."""
    jumps = model.jumps
    rates = model.rates

    def g(xs):
        Fx = np.asarray(F(xs), dtype=float)
        val = np.zeros(xs.shape[0])
        for k in range(len(rates)):
            lam = np.maximum(np.asarray(rates[k](xs), dtype=float), 0.0)
            dF = np.asarray(F(xs + jumps[k]), dtype=float) - Fx
            val = val + lam * dF * dF
        return val

    return g


@dataclass(frozen=True)
class MartingaleCheck:
    """Monte Carlo summary of the compensated-observable diagnostics.

    ``mean`` estimates E M^F(T) (zero for the true process); ``abs_z`` is
    its standardised magnitude.  ``second_moment_lhs`` is the empirical
    E|M^F(T)|^2 and ``second_moment_rhs`` the pathwise estimate of the
    predictable variation it must equal.
    """

    mean: float
    abs_z: float
    second_moment_lhs: float
    second_moment_rhs: float
    se_mean: float
    se_lhs: float
    se_rhs: float
    M: int

    def combined_se(self):
        return math.hypot(self.se_lhs, self.se_rhs)


def martingale_check(model, F, gradF, x0, T, M, master_seed, threads=1, tol=1e-8):
    """Check the martingale and second-moment identities by exact simulation.

    F and gradF must accept batched states of shape (m, d) (returning (m,)
    and (m, d)); the built-in scalar models' coefficients broadcast the
    same way, which keeps the per-path time integrals vectorised.
    """
    if M < 2:
        raise ConfigurationError(f"martingale check needs M >= 2, got {M}")
    g_af = _generator_batch(model, F, gradF)
    g_qv = _jump_variation_batch(model, F)
    p = model.jump_count
    x0 = np.asarray(x0, dtype=float).reshape(model.dim)
    f_start = float(np.asarray(F(x0.reshape(1, -1)), dtype=float).reshape(-1)[0])

    def worker(j):
        bundle = PathBundle(master_seed, j, p)
        traj = exact_trajectory(model, bundle, x0, T)
        f_end = float(np.asarray(F(traj.endpoint.reshape(1, -1)),
                                 dtype=float).reshape(-1)[0])
        mf = f_end - f_start - integrate_along_path(traj, g_af, tol=tol)
        qv = integrate_along_path(traj, g_qv, tol=tol)
        return mf, qv

    results = run_replications(worker, M, threads)
    mf = np.array([r[0] for r in results])
    qv = np.array([r[1] for r in results])
    mean = float(mf.mean())
    se_mean = float(mf.std(ddof=1)) / math.sqrt(M)
    if se_mean > 0.0:
        abs_z = abs(mean) / se_mean
    else:
        abs_z = 0.0 if mean == 0.0 else math.inf
    sq = mf * mf
    lhs = float(sq.mean())
    se_lhs = float(sq.std(ddof=1)) / math.sqrt(M)
    rhs = float(qv.mean())
    se_rhs = float(qv.std(ddof=1)) / math.sqrt(M)
    return MartingaleCheck(mean=mean, abs_z=abs_z, second_moment_lhs=lhs,
                           second_moment_rhs=rhs, se_mean=se_mean,
                           se_lhs=se_lhs, se_rhs=se_rhs, M=M)
