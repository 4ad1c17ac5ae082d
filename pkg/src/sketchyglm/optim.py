"""Stochastic optimizers with lazily updated curvature preconditioners.

Implements preconditioned SGD, SVRG, b-nice SAGA, and loopless Katyusha
(``sketchysgd``/``sketchysvrg``/``sketchysaga``/``sketchykatyusha``) together
with their unpreconditioned counterparts (``svrg``/``saga``/``lkatyusha``)
run at theory-default learning rates. All methods start from w0 = 0, sample
batches uniformly without replacement, and emit one RunRecord per epoch
(= ceil(n / b_g) steps) through an optional callback.

Full-data-pass accounting: every step charges b_g gradient evaluations, a
full gradient charges n, and a preconditioner update charges 2 b_H (two
independent Hessian batches). Wall time is measured around optimizer work
only, not metric evaluation or data loading.
"""

import math
import time
from dataclasses import dataclass, field, replace
from types import SimpleNamespace

import numpy as np

from .glm import LOGISTIC, SQUARED
from .precond import (
    UpdateSchedule,
    default_hessian_batch_size,
    make_preconditioner,
)

SKETCHY_SGD = "sketchysgd"
SKETCHY_SVRG = "sketchysvrg"
SKETCHY_SAGA = "sketchysaga"
SKETCHY_KATYUSHA = "sketchykatyusha"
SVRG = "svrg"
SAGA = "saga"
LKATYUSHA = "lkatyusha"
PRECONDITIONED_METHODS = (
    SKETCHY_SGD,
    SKETCHY_SVRG,
    SKETCHY_SAGA,
    SKETCHY_KATYUSHA,
)
BASELINE_METHODS = (SVRG, SAGA, LKATYUSHA)
METHODS = PRECONDITIONED_METHODS + BASELINE_METHODS

DIVERGENCE_FACTOR = 1e6


@dataclass
class OptimizerConfig:
    """Run settings; ``None`` fields resolve to the documented defaults at
    run time (b_H -> floor(sqrt(n)), update_freq -> once for squared loss and
    every epoch for logistic, m and pi -> one epoch, mu -> nu)."""

    method: str
    b_g: int = 256
    b_H: int = None
    precond: str = "nyssn"
    rank: int = None
    rho: float = None
    update_freq: int = None
    alpha: float = None
    m: int = None
    theta2: float = 0.5
    pi: float = None
    mu: float = None
    eta: float = None
    max_epochs: int = 50
    seed: int = 0
    svrg_option: str = "I"

    def with_overrides(self, **kw):
        return replace(self, **kw)


@dataclass
class RunRecord:
    """Per-epoch metrics row."""

    epoch: int
    passes: float
    train_loss: float
    subopt: float
    seconds: float
    lambda_p: float
    eta: float

    HEADER = "epoch,passes,train_loss,subopt,seconds,lambda_p,eta"

    def csv_row(self):
        vals = [
            str(self.epoch),
            repr(float(self.passes)),
            repr(float(self.train_loss)),
            repr(float(self.subopt)),
            repr(float(self.seconds)),
            repr(float(self.lambda_p)),
            repr(float(self.eta)),
        ]
        return ",".join(vals)


@dataclass
class RunResult:
    w: np.ndarray
    records: list
    diverged: bool = False
    trajectory: list = None
    precond_steps: list = field(default_factory=list)

    @property
    def final_record(self):
        return self.records[-1] if self.records else None


def learning_rate_saga_rule(lambda_p, nu, n):
    """Step size max{ 1/(2(nu n + lambda_P)), 1/(3 lambda_P) }."""
    return max(1.0 / (2.0 * (nu * n + lambda_p)), 1.0 / (3.0 * lambda_p))


class SagaTable:
    """O(n) gradient table for GLMs.

    Slot i stores the scalar phi_i' at the last touch, standing in for the
    table row phi_i' a_i; ``avg`` tracks the table average (1/n) sum_i
    slot_i a_i. The nu w regularization term stays outside the table.
    """

    def __init__(self, model):
        self.model = model
        self.slots = np.zeros(model.n)
        self.avg = np.zeros(model.p)

    def variance_reduced_grad(self, batch, w):
        """Unbiased gradient estimate at w; refreshes the touched slots and
        the running average."""
        coeffs = self.model.grad_coefficients(batch, w)
        aux = np.asarray(
            self.model.get_data(batch).T @ (coeffs - self.slots[batch])
        ).ravel()
        g = self.avg + aux / len(batch) + self.model.nu * w
        self.avg = self.avg + aux / self.model.n
        self.slots[batch] = coeffs
        return g

    def recomputed_average(self):
        """(1/n) sum_i slot_i a_i from scratch, for invariant checks."""
        return (
            np.asarray(self.model.dataset.A.T @ self.slots).ravel()
            / self.model.n
        )


def average_smoothness(model):
    """Mean-row-norm smoothness bound: (1/n) sum ||a_i||^2, divided by 4 for
    logistic loss."""
    avg = float(model.dataset.row_norms_squared().mean())
    return avg / 4.0 if model.loss == LOGISTIC else avg


def baseline_learning_rate(model):
    """Default SVRG/SAGA step size max{ 1/(3 L), 1/(2(L + n mu)) } built from
    the average smoothness bound with mu = nu."""
    L = average_smoothness(model)
    return max(1.0 / (3.0 * L), 1.0 / (2.0 * (L + model.n * model.nu)))


def _resolve(model, config):
    if config.method not in METHODS:
        raise ValueError(f"unknown method {config.method!r}")
    n = model.n
    if not 1 <= config.b_g <= n:
        raise ValueError(f"b_g={config.b_g} must lie in [1, n={n}]")
    b_H = config.b_H if config.b_H is not None else default_hessian_batch_size(n)
    if not 1 <= b_H <= n:
        raise ValueError(f"b_H={b_H} must lie in [1, n={n}]")
    steps_per_epoch = math.ceil(n / config.b_g)
    if config.update_freq is None:
        every = None if model.loss == SQUARED else steps_per_epoch
    elif config.update_freq == 0:
        every = None
    else:
        every = int(config.update_freq)
    alpha = config.alpha
    if alpha is not None and alpha <= 0:
        raise ValueError("alpha must be positive")
    if alpha is None and config.method == SKETCHY_SGD:
        alpha = 0.5
    if alpha is None and config.method == SKETCHY_KATYUSHA:
        alpha = 2.0 / 3.0
    mu = config.mu if config.mu is not None else model.nu
    if config.method in (SKETCHY_KATYUSHA, LKATYUSHA) and mu <= 0:
        raise ValueError("Katyusha requires a positive strong convexity mu")
    if config.svrg_option not in ("I", "II"):
        raise ValueError("svrg_option must be 'I' or 'II'")
    return SimpleNamespace(
        method=config.method,
        b_g=config.b_g,
        b_H=b_H,
        precond=config.precond,
        rank=config.rank,
        rho=config.rho,
        schedule=UpdateSchedule(every),
        alpha=alpha,
        m=config.m if config.m is not None else steps_per_epoch,
        theta2=config.theta2,
        pi=config.pi if config.pi is not None else config.b_g / n,
        mu=mu,
        eta=config.eta,
        max_epochs=config.max_epochs,
        seed=config.seed,
        svrg_option=config.svrg_option,
        steps_per_epoch=steps_per_epoch,
    )


class _Meter:
    """Epoch bookkeeping: pass counting, wall time, records, divergence."""

    def __init__(self, model, cfg, callback, f_star, record_trajectory):
        self.model = model
        self.cfg = cfg
        self.callback = callback
        self.f_star = f_star
        self.evals = 0
        self.steps = 0
        self.epoch = 0
        self.seconds = 0.0
        self._t0 = None
        self.records = []
        self.diverged = False
        self.done = False
        self.initial_loss = None
        self.trajectory = [] if record_trajectory else None
        self.precond_steps = []

    def tic(self):
        self._t0 = time.perf_counter()

    def toc(self):
        self.seconds += time.perf_counter() - self._t0
        self._t0 = None

    def charge(self, n_evals):
        self.evals += n_evals

    def note_step_start(self, w):
        if self.trajectory is not None:
            self.trajectory.append(w.copy())

    def note_precond_update(self):
        self.precond_steps.append(self.steps)

    def _record(self, w, lambda_p, eta):
        loss = self.model.full_loss(w)
        subopt = loss - self.f_star if self.f_star is not None else math.nan
        rec = RunRecord(
            epoch=self.epoch,
            passes=self.evals / self.model.n,
            train_loss=loss,
            subopt=subopt,
            seconds=self.seconds,
            lambda_p=math.nan if lambda_p is None else float(lambda_p),
            eta=math.nan if eta is None else float(eta),
        )
        self.records.append(rec)
        if self.callback is not None:
            self.callback(rec)
        if self.initial_loss is None:
            self.initial_loss = loss
        elif not math.isfinite(loss) or loss > DIVERGENCE_FACTOR * max(
            self.initial_loss, np.finfo(float).tiny
        ):
            self.diverged = True
            self.done = True
        return rec

    def record_initial(self, w):
        self._record(w, None, None)

    def end_step(self, w, lambda_p, eta):
        """Call once per parameter update; records at epoch boundaries and
        flips ``done`` when the epoch budget is exhausted."""
        self.steps += 1
        if self.steps % self.cfg.steps_per_epoch == 0:
            self.epoch += 1
            self._record(w, lambda_p, eta)
            if self.epoch >= self.cfg.max_epochs:
                self.done = True
        return self.done

    def finish(self, w):
        if self.trajectory is not None:
            self.trajectory.append(w.copy())
        return RunResult(
            w=w,
            records=self.records,
            diverged=self.diverged,
            trajectory=self.trajectory,
            precond_steps=self.precond_steps,
        )


def _sample(rng, n, size):
    return rng.choice(n, size=size, replace=False)


def _update_preconditioner(P, model, cfg, w, rng, meter):
    b1 = _sample(rng, model.n, cfg.b_H)
    b2 = _sample(rng, model.n, cfg.b_H)
    P.update(model, b1, b2, w)
    meter.charge(2 * cfg.b_H)
    meter.note_precond_update()
    return P.lambda_p


def run_sketchy_sgd(model, config, callback=None, f_star=None,
                    record_trajectory=False):
    """Preconditioned SGD: w <- w - eta P^{-1} g with eta = alpha / lambda_P
    refreshed at every preconditioner update (alpha defaults to 1/2)."""
    cfg = _resolve(model, config)
    rng = np.random.default_rng(cfg.seed)
    P = make_preconditioner(cfg.precond, rho=cfg.rho, rank=cfg.rank, rng=rng)
    meter = _Meter(model, cfg, callback, f_star, record_trajectory)
    w = np.zeros(model.p)
    meter.record_initial(w)
    eta = lambda_p = None
    while not meter.done:
        meter.note_step_start(w)
        meter.tic()
        if meter.steps in cfg.schedule:
            lambda_p = _update_preconditioner(P, model, cfg, w, rng, meter)
            eta = cfg.alpha / lambda_p
        batch = _sample(rng, model.n, cfg.b_g)
        g = model.get_stoch_grad(batch, w)
        w = w - eta * P.direction(g)
        meter.charge(cfg.b_g)
        meter.toc()
        meter.end_step(w, lambda_p, eta)
    return meter.finish(w)


def _svrg_loop(model, cfg, callback, f_star, record_trajectory, preconditioned):
    rng = np.random.default_rng(cfg.seed)
    P = None
    eta = lambda_p = None
    if preconditioned:
        P = make_preconditioner(cfg.precond, rho=cfg.rho, rank=cfg.rank, rng=rng)
    else:
        eta = cfg.eta if cfg.eta is not None else baseline_learning_rate(model)
        lambda_p = average_smoothness(model)
    meter = _Meter(model, cfg, callback, f_star, record_trajectory)
    w_hat = np.zeros(model.p)
    meter.record_initial(w_hat)
    while not meter.done:
        g_bar = model.get_full_grad(w_hat)
        meter.charge(model.n)
        w = w_hat.copy()
        pick = rng.integers(cfg.m) if cfg.svrg_option == "II" else None
        snap = None
        for k in range(cfg.m):
            if pick is not None and k == pick:
                snap = w.copy()
            meter.note_step_start(w)
            meter.tic()
            if preconditioned and meter.steps in cfg.schedule:
                lambda_p = _update_preconditioner(P, model, cfg, w, rng, meter)
                if cfg.alpha is not None:
                    eta = cfg.alpha / lambda_p
                else:
                    eta = learning_rate_saga_rule(lambda_p, model.nu, model.n)
            batch = _sample(rng, model.n, cfg.b_g)
            g = (
                model.get_stoch_grad(batch, w)
                - model.get_stoch_grad(batch, w_hat)
                + g_bar
            )
            v = P.direction(g) if preconditioned else g
            w = w - eta * v
            meter.charge(cfg.b_g)
            meter.toc()
            if meter.end_step(w, lambda_p, eta):
                break
        w_hat = snap if snap is not None else w
    return meter.finish(w)


def run_sketchy_svrg(model, config, callback=None, f_star=None,
                     record_trajectory=False):
    """Preconditioned SVRG. The outer loop takes a full gradient at the
    snapshot; inner steps use the variance-reduced gradient
    g = grad_B(w) - grad_B(w_hat) + g_bar, preconditioned and scaled by the
    SAGA-rule step size. Preconditioner refreshes key on the global inner
    step count. Option I (default) advances the snapshot to the last inner
    iterate; Option II picks an inner iterate uniformly at random."""
    cfg = _resolve(model, config)
    return _svrg_loop(model, cfg, callback, f_star, record_trajectory, True)


def _saga_loop(model, cfg, callback, f_star, record_trajectory, preconditioned):
    rng = np.random.default_rng(cfg.seed)
    P = None
    eta = lambda_p = None
    if preconditioned:
        P = make_preconditioner(cfg.precond, rho=cfg.rho, rank=cfg.rank, rng=rng)
    else:
        eta = cfg.eta if cfg.eta is not None else baseline_learning_rate(model)
        lambda_p = average_smoothness(model)
    meter = _Meter(model, cfg, callback, f_star, record_trajectory)
    w = np.zeros(model.p)
    table = SagaTable(model)
    meter.record_initial(w)
    while not meter.done:
        meter.note_step_start(w)
        meter.tic()
        if preconditioned and meter.steps in cfg.schedule:
            lambda_p = _update_preconditioner(P, model, cfg, w, rng, meter)
            if cfg.alpha is not None:
                eta = cfg.alpha / lambda_p
            else:
                eta = learning_rate_saga_rule(lambda_p, model.nu, model.n)
        batch = _sample(rng, model.n, cfg.b_g)
        g = table.variance_reduced_grad(batch, w)
        v = P.direction(g) if preconditioned else g
        w = w - eta * v
        meter.charge(cfg.b_g)
        meter.toc()
        meter.end_step(w, lambda_p, eta)
    return meter.finish(w)


def run_sketchy_saga(model, config, callback=None, f_star=None,
                     record_trajectory=False):
    """Preconditioned b-nice SAGA with the O(n) GLM gradient table. Each step
    refreshes the touched scalar slots and the running table average, then
    moves along the preconditioned variance-reduced gradient."""
    cfg = _resolve(model, config)
    return _saga_loop(model, cfg, callback, f_star, record_trajectory, True)


def _katyusha_loop(model, cfg, callback, f_star, record_trajectory,
                   preconditioned):
    rng = np.random.default_rng(cfg.seed)
    P = None
    mu = cfg.mu
    theta2 = cfg.theta2
    if preconditioned:
        P = make_preconditioner(cfg.precond, rho=cfg.rho, rank=cfg.rank, rng=rng)
        L = sigma = theta1 = eta = lambda_p = None
    else:
        L = average_smoothness(model)
        lambda_p = L
        sigma = mu / L
        theta1 = min(math.sqrt(2.0 * sigma * model.n / 3.0), 0.5)
        eta = theta2 / ((1.0 + theta2) * theta1)
    meter = _Meter(model, cfg, callback, f_star, record_trajectory)
    w = np.zeros(model.p)
    meter.record_initial(w)
    y = w.copy()
    z = w.copy()
    g_bar = model.get_full_grad(y)
    meter.charge(model.n)
    stale_limit = 3 * cfg.steps_per_epoch
    steps_since_snapshot = 0
    while not meter.done:
        meter.note_step_start(w)
        meter.tic()
        if preconditioned and meter.steps in cfg.schedule:
            lambda_p = _update_preconditioner(P, model, cfg, w, rng, meter)
            L = lambda_p
            sigma = mu / L
            theta1 = min(math.sqrt(cfg.alpha * model.n * sigma), 0.5)
            eta = theta2 / ((1.0 + theta2) * theta1)
        x = theta1 * z + theta2 * y + (1.0 - theta1 - theta2) * w
        batch = _sample(rng, model.n, cfg.b_g)
        g = (
            model.get_stoch_grad(batch, x)
            - model.get_stoch_grad(batch, y)
            + g_bar
        )
        v = P.direction(g) if preconditioned else g
        z_next = (eta * sigma * x + z - (eta / L) * v) / (1.0 + eta * sigma)
        w_next = x + theta1 * (z_next - z)
        meter.charge(cfg.b_g)
        draw = rng.uniform()
        if draw <= cfg.pi or steps_since_snapshot >= stale_limit:
            y = w.copy()  # snapshot moves to w_k, per the update rule
            g_bar = model.get_full_grad(y)
            meter.charge(model.n)
            steps_since_snapshot = 0
        else:
            steps_since_snapshot += 1
        z = z_next
        w = w_next
        meter.toc()
        meter.end_step(w, lambda_p, eta)
    return meter.finish(w)


def run_sketchy_katyusha(model, config, callback=None, f_star=None,
                         record_trajectory=False):
    """Preconditioned loopless Katyusha. Every preconditioner refresh resets
    L = lambda_P, sigma = mu/L, theta1 = min(sqrt(alpha n sigma), 1/2) and
    eta = theta2/((1+theta2) theta1); the snapshot and its full gradient
    refresh with probability pi = b_g/n (forced after three stale epochs)."""
    cfg = _resolve(model, config)
    return _katyusha_loop(model, cfg, callback, f_star, record_trajectory, True)


def run_baseline(model, config, callback=None, f_star=None,
                 record_trajectory=False):
    """Unpreconditioned SVRG, b-nice SAGA, or loopless Katyusha with the
    theory-default learning rates built from the average smoothness bound
    (config.eta overrides)."""
    cfg = _resolve(model, config)
    if cfg.method == SVRG:
        return _svrg_loop(model, cfg, callback, f_star, record_trajectory, False)
    if cfg.method == SAGA:
        return _saga_loop(model, cfg, callback, f_star, record_trajectory, False)
    if cfg.method == LKATYUSHA:
        return _katyusha_loop(
            model, cfg, callback, f_star, record_trajectory, False
        )
    raise ValueError(f"{cfg.method!r} is not a baseline method")


_RUNNERS = {
    SKETCHY_SGD: run_sketchy_sgd,
    SKETCHY_SVRG: run_sketchy_svrg,
    SKETCHY_SAGA: run_sketchy_saga,
    SKETCHY_KATYUSHA: run_sketchy_katyusha,
    SVRG: run_baseline,
    SAGA: run_baseline,
    LKATYUSHA: run_baseline,
}


def run(model, config, callback=None, f_star=None, record_trajectory=False):
    """Dispatch on config.method."""
    if config.method not in _RUNNERS:
        raise ValueError(f"unknown method {config.method!r}")
    return _RUNNERS[config.method](
        model, config, callback=callback, f_star=f_star,
        record_trajectory=record_trajectory,
    )
