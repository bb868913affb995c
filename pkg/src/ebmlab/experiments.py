"""Config-driven experiment runner.

Configs are flat ``key = value`` text with ``#`` comments and dotted keys;
every run is a pure function of (config, seed) and emits ``run.csv`` plus
``summary.csv`` (and ``samples.csv`` where draws are part of the result) under
the output directory. Summary rows mirror the tolerances the check suite
enforces.

The ``wall_ms`` column records elapsed milliseconds only when EBM_TIMING=1;
it is zero otherwise so that rerunning a config byte-identically reproduces
its CSVs, which is itself a tested property.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .csvio import format_cell, write_csv
from .energy import (
    GaussianDensity,
    GaussianEnergy,
    MixtureRbfEnergy,
    ParamVector,
    Poly1dEnergy,
    gaussian_fisher_divergence,
    gaussian_fisher_theta_gradient,
    gaussian_kl,
)
from .errors import ConfigError
from .estimators import (
    NceConfig,
    SliceConfig,
    cd_gradient,
    dsm_loss,
    nce_loss,
    nce_params,
    shifted_nce_loss,
    sm_loss,
    ssm_loss,
    ssm_objective_fixed_direction,
)
from .numerics import OptimizerState, RngStream, optimizer_step
from .samplers import (
    LangevinConfig,
    NoiseSchedule,
    ReplayBuffer,
    annealed_langevin,
    fresh_gaussian_init,
    langevin_chain,
    model_target,
)

_REQUIRED = object()


# -- config schema -----------------------------------------------------------------


@dataclass(frozen=True)
class KeySpec:
    kind: str  # str | int | float | bool | float_list
    default: object = _REQUIRED
    choices: tuple | None = None
    positive: bool = False
    unit_interval: bool = False


_COMMON_KEYS = {
    "experiment": KeySpec("str"),
    "seed": KeySpec("int"),
    "out": KeySpec("str", default=None),
    "log_every": KeySpec("int", default=10, positive=True),
}

_OPTIMIZER_KEYS = {
    "optimizer.lr": KeySpec("float", default=1e-2, positive=True),
    "optimizer.lr_final": KeySpec("float", default=1e-3, positive=True),
    "optimizer.beta1": KeySpec("float", default=0.9, unit_interval=True),
    "optimizer.beta2": KeySpec("float", default=0.999, unit_interval=True),
    "optimizer.epsilon": KeySpec("float", default=1e-8, positive=True),
}

EXPERIMENT_SCHEMAS: dict[str, dict[str, KeySpec]] = {
    "gaussian_recovery": {
        **_OPTIMIZER_KEYS,
        "steps": KeySpec("int", default=2000, positive=True),
        "family.kind": KeySpec("str", default="gaussian", choices=("gaussian",)),
        "family.dim": KeySpec("int", default=1, positive=True),
        "estimator.name": KeySpec("str", choices=("sm", "ssm", "dsm", "nce", "cd")),
        "estimator.sigma": KeySpec("float", default=0.5, positive=True),
        "estimator.num_slices": KeySpec("int", default=64, positive=True),
        "estimator.projection": KeySpec("str", default="gaussian",
                                        choices=("gaussian", "rademacher")),
        "estimator.variance_reduced": KeySpec("bool", default=False),
        "estimator.noise_mean": KeySpec("float", default=1.0),
        "estimator.noise_std": KeySpec("float", default=3.0, positive=True),
        "estimator.learn_log_z": KeySpec("bool", default=True),
        "estimator.k_steps": KeySpec("int", default=50, positive=True),
        "estimator.step_size": KeySpec("float", default=0.1, positive=True),
        "estimator.adjust": KeySpec("bool", default=False),
        "estimator.init": KeySpec("str", default="data", choices=("data", "buffer")),
        "estimator.buffer_capacity": KeySpec("int", default=10_000, positive=True),
        "estimator.reinit_prob": KeySpec("float", default=0.05, unit_interval=True),
        "estimator.batch_size": KeySpec("int", default=1000, positive=True),
        "data.mean": KeySpec("float", default=1.0),
        "data.std": KeySpec("float", default=2.0, positive=True),
        "data.n": KeySpec("int", default=10_000, positive=True),
    },
    "nce_partition": {
        **_OPTIMIZER_KEYS,
        "steps": KeySpec("int", default=500, positive=True),
        "selfnorm_steps": KeySpec("int", default=800, positive=True),
        "selfnorm_n": KeySpec("int", default=50_000, positive=True),
        "data.n": KeySpec("int", default=100_000, positive=True),
        "noise.mean": KeySpec("float", default=0.0),
        "noise.var": KeySpec("float", default=2.0, positive=True),
        "optimizer.lr": KeySpec("float", default=0.05, positive=True),
        "optimizer.lr_final": KeySpec("float", default=0.005, positive=True),
    },
    "mode_weight": {
        **_OPTIMIZER_KEYS,
        "steps": KeySpec("int", default=1000, positive=True),
        "plain_steps": KeySpec("int", default=2000, positive=True),
        "data.pi": KeySpec("float", default=0.7, unit_interval=True),
        "data.mean_pos": KeySpec("float", default=4.0),
        "data.mean_neg": KeySpec("float", default=-4.0),
        "data.component_std": KeySpec("float", default=0.1, positive=True),
        "data.n": KeySpec("int", default=10_000, positive=True),
        "schedule.sigma_max": KeySpec("float", default=2.0, positive=True),
        "schedule.sigma_min": KeySpec("float", default=0.1, positive=True),
        "schedule.levels": KeySpec("int", default=5, positive=True),
        "estimator.batch_size": KeySpec("int", default=2048, positive=True),
        "sampler.step_size": KeySpec("float", default=0.06, positive=True),
        "sampler.steps_per_level": KeySpec("int", default=150, positive=True),
        "sampler.num_draws": KeySpec("int", default=10_000, positive=True),
        "optimizer.lr": KeySpec("float", default=0.04, positive=True),
        "optimizer.lr_final": KeySpec("float", default=0.002, positive=True),
    },
    "cd_sm_connection": {
        "epsilons": KeySpec("float_list", default=(0.3, 0.1, 0.03, 0.01),
                            positive=True),
        "num_pairs": KeySpec("int", default=100_000, positive=True),
        "data.mean": KeySpec("float", default=0.5),
        "data.std": KeySpec("float", default=1.0, positive=True),
    },
    "de_bruijn": {
        "t_values": KeySpec("float_list", default=(0.1, 0.5, 1.0), positive=True),
        "h_t": KeySpec("float", default=1e-4, positive=True),
        "data.mean": KeySpec("float", default=0.0),
        "data.var": KeySpec("float", default=1.0, positive=True),
        "model.mean": KeySpec("float", default=0.8),
        "model.var": KeySpec("float", default=2.25, positive=True),
    },
    "ssm_nce_equiv": {
        "v_scales": KeySpec("float_list", default=(0.1, 0.05, 0.025, 0.0125),
                            positive=True),
        "data.n": KeySpec("int", default=10_000, positive=True),
        "theta.mu": KeySpec("float", default=0.3),
        "theta.log_chol": KeySpec("float", default=0.15),
    },
}

ESTIMATOR_NAMES = ("sm", "ssm", "dsm", "dsm_cv", "nce", "shifted_nce", "cd", "ksd")


def _schema_for(experiment: str) -> dict[str, KeySpec]:
    if experiment not in EXPERIMENT_SCHEMAS:
        names = ", ".join(sorted(EXPERIMENT_SCHEMAS))
        raise ConfigError(
            f"unknown experiment {experiment!r}; available experiments: {names}"
        )
    return {**_COMMON_KEYS, **EXPERIMENT_SCHEMAS[experiment]}


def _convert(key: str, spec: KeySpec, raw: str, line: int):
    try:
        if spec.kind == "str":
            value = raw
        elif spec.kind == "int":
            value = int(raw)
        elif spec.kind == "float":
            value = float(raw)
        elif spec.kind == "bool":
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError(raw)
            value = low == "true"
        elif spec.kind == "float_list":
            value = tuple(float(part) for part in raw.split(","))
            if not value:
                raise ValueError(raw)
        else:  # pragma: no cover
            raise AssertionError(spec.kind)
    except ValueError:
        raise ConfigError(
            f"key {key!r} expects type {spec.kind}, got {raw!r}", line=line
        ) from None
    _validate_value(key, spec, value, line)
    return value


def _validate_value(key: str, spec: KeySpec, value, line: int | None):
    if spec.choices is not None and value not in spec.choices:
        raise ConfigError(
            f"key {key!r} must be one of {spec.choices}, got {value!r}", line=line
        )
    vals = value if isinstance(value, tuple) else (value,)
    if spec.positive and any(
        isinstance(v, (int, float)) and v <= 0 for v in vals
    ):
        raise ConfigError(f"key {key!r} must be positive, got {value}", line=line)
    if spec.unit_interval and not all(0.0 < float(v) < 1.0 for v in vals):
        raise ConfigError(f"key {key!r} must lie in (0, 1), got {value}", line=line)


@dataclass
class ExperimentConfig:
    """Validated config: typed entries with defaults applied."""

    entries: dict

    @property
    def experiment(self) -> str:
        return self.entries["experiment"]

    @property
    def seed(self) -> int:
        return self.entries["seed"]

    def get(self, key: str):
        return self.entries[key]

    def with_overrides(self, seed: int | None = None,
                       out: str | None = None) -> "ExperimentConfig":
        entries = dict(self.entries)
        if seed is not None:
            entries["seed"] = int(seed)
        if out is not None:
            entries["out"] = str(out)
        return ExperimentConfig(entries)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.entries == other.entries


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate flat ``key = value`` config text."""
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=lineno)
        key, value = (part.strip() for part in body.split("=", 1))
        if not key or not value:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        raw[key] = (value, lineno)

    missing = [k for k in ("experiment", "seed") if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    schema = _schema_for(raw["experiment"][0])

    entries: dict = {}
    for key, (value, lineno) in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        entries[key] = _convert(key, schema[key], value, lineno)
    for key, spec in schema.items():
        if key in entries:
            continue
        if spec.default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        if spec.default is not None:
            entries[key] = spec.default
    _validate_config(entries)
    return ExperimentConfig(dict(sorted(entries.items())))


def _validate_config(entries: dict):
    """Cross-key validation that must fail before any compute."""
    experiment = entries["experiment"]
    if experiment == "gaussian_recovery" and entries["family.dim"] != 1:
        raise ConfigError(
            "estimator/family mismatch: gaussian_recovery trains a 1-D family "
            f"on 1-D data, got family.dim = {entries['family.dim']}"
        )
    if experiment == "mode_weight":
        if entries["schedule.sigma_min"] >= entries["schedule.sigma_max"]:
            raise ConfigError("schedule.sigma_min must be below schedule.sigma_max")


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key in sorted(cfg.entries):
        value = cfg.entries[key]
        if value is None:
            continue
        if isinstance(value, tuple):
            text = ",".join(format_cell(float(v)) for v in value)
        else:
            text = format_cell(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


# -- shared run machinery -----------------------------------------------------------


def _timing_enabled() -> bool:
    return os.environ.get("EBM_TIMING", "") == "1"


class _Timer:
    def __init__(self):
        self.start = time.monotonic()
        self.enabled = _timing_enabled()

    def wall_ms(self) -> int:
        return int((time.monotonic() - self.start) * 1000) if self.enabled else 0


def _streams(seed: int) -> dict[str, RngStream]:
    root = RngStream(seed=seed, stream_id=0)
    return {name: root.split() for name in ("data", "noise", "chains", "batch", "draws")}


def train_loop(theta: ParamVector, step_fn, steps: int, entries: dict,
               log_every: int, timer: _Timer, stage: str | None = None,
               freeze_mask: np.ndarray | None = None,
               extra_log=None) -> tuple[ParamVector, list[dict]]:
    """Adam training with a geometric learning-rate ramp and periodic logging.

    ``step_fn(theta)`` returns a LossReport; logging happens every
    ``log_every`` steps and always on the final step, recording the
    post-update parameters.
    """
    lr0 = entries["optimizer.lr"]
    lr1 = entries["optimizer.lr_final"]
    state = OptimizerState.fresh(
        theta.dim, learning_rate=lr0, beta1=entries["optimizer.beta1"],
        beta2=entries["optimizer.beta2"], epsilon=entries["optimizer.epsilon"],
    )
    param_cols = theta.column_names()
    rows = []
    for step in range(steps):
        report = step_fn(theta)
        grad = report.grad_theta
        if freeze_mask is not None:
            grad = grad * freeze_mask
        if steps > 1:
            state.learning_rate = lr0 * (lr1 / lr0) ** (step / (steps - 1))
        state, new_values = optimizer_step(state, theta.values, grad)
        theta = theta.with_values(new_values)
        if step % log_every == 0 or step == steps - 1:
            row = {"step": step, "loss": report.loss}
            if stage is not None:
                row["stage"] = stage
            row.update(zip(param_cols, theta.values))
            row["grad_norm"] = float(np.linalg.norm(grad))
            row.update(report.aux)
            if extra_log is not None:
                row.update(extra_log(theta))
            row["wall_ms"] = timer.wall_ms()
            rows.append(row)
    return theta, rows


def _summary_row(metric: str, value, criterion: str = "",
                 passed: bool | None = None) -> dict:
    return {"metric": metric, "value": value, "criterion": criterion,
            "passed": passed}


def _param_summary_rows(theta: ParamVector) -> list[dict]:
    return [_summary_row(f"param_{name}", float(v))
            for name, v in zip(theta.column_names(), theta.values)]


@dataclass
class ExperimentResult:
    run_columns: list[str]
    run_rows: list[dict]
    summary_rows: list[dict]
    samples: dict[str, np.ndarray] = field(default_factory=dict)


# -- gaussian_recovery -----------------------------------------------------------------


def _recovery_moments(family: GaussianEnergy, theta: ParamVector) -> tuple[float, float]:
    mu_hat = float(theta.get("mu")[0])
    sigma_hat = float(np.exp(-theta.get("chol_diag")[0]))
    return mu_hat, sigma_hat


def run_gaussian_recovery(entries: dict) -> ExperimentResult:
    """Train a 1-D Gaussian energy on N(mean, std^2) data with the chosen
    estimator and report the recovered moments against their targets."""
    timer = _Timer()
    streams = _streams(entries["seed"])
    family = GaussianEnergy(1)
    data = GaussianDensity([entries["data.mean"]], [entries["data.std"] ** 2])
    X = data.sample(streams["data"], entries["data.n"])
    name = entries["estimator.name"]
    steps = entries["steps"]
    noise_rng = streams["noise"]
    chain_rng = streams["chains"]
    batch_rng = streams["batch"]

    if name == "nce":
        noise = GaussianDensity([entries["estimator.noise_mean"]],
                                [entries["estimator.noise_std"] ** 2])
        noise_batch = noise.sample(noise_rng, X.shape[0])
        nce_cfg = NceConfig(noise=noise, learn_log_z=entries["estimator.learn_log_z"])
        theta0 = nce_params(family, np.zeros(family.param_count), log_z=0.0)

        def step_fn(theta):
            return nce_loss(family, theta, X, noise_batch, nce_cfg)
    else:
        theta0 = family.params(np.zeros(family.param_count))
        if name == "sm":
            def step_fn(theta):
                return sm_loss(family, theta, X)
        elif name == "ssm":
            slice_cfg = SliceConfig(
                projection=entries["estimator.projection"],
                num_slices=entries["estimator.num_slices"],
                variance_reduced=entries["estimator.variance_reduced"],
            )
            batch_size = min(entries["estimator.batch_size"], X.shape[0])

            def step_fn(theta):
                idx = batch_rng.integers(0, X.shape[0], batch_size)
                return ssm_loss(family, theta, X[idx], slice_cfg, noise_rng)
        elif name == "dsm":
            sigma = entries["estimator.sigma"]

            def step_fn(theta):
                return dsm_loss(family, theta, X, sigma, noise_rng)
        elif name == "cd":
            sampler = LangevinConfig(step_size=entries["estimator.step_size"],
                                     num_steps=entries["estimator.k_steps"],
                                     adjust=entries["estimator.adjust"])
            batch_size = min(entries["estimator.batch_size"], X.shape[0])
            buffer = None
            if entries["estimator.init"] == "buffer":
                buffer = ReplayBuffer(capacity=entries["estimator.buffer_capacity"],
                                      reinit_prob=entries["estimator.reinit_prob"],
                                      rng=chain_rng.split())

            def step_fn(theta):
                idx = batch_rng.integers(0, X.shape[0], batch_size)
                return cd_gradient(family, theta, X[idx], sampler,
                                   init=entries["estimator.init"], buffer=buffer,
                                   rng=chain_rng)
        else:  # pragma: no cover - schema forbids
            raise ConfigError(f"unknown estimator {name!r}")

    theta, rows = train_loop(theta0, step_fn, steps, entries,
                             entries["log_every"], timer)

    fam_theta = (family.params(theta.values[:family.param_count])
                 if name == "nce" else theta)
    mu_hat, sigma_hat = _recovery_moments(family, fam_theta)
    mu_target = entries["data.mean"]
    std_target = entries["data.std"]
    summary = _param_summary_rows(theta)
    if name == "dsm":
        var_target = std_target**2 + entries["estimator.sigma"] ** 2
        var_hat = sigma_hat**2
        summary.append(_summary_row(
            "var_hat", var_hat, f"|value - {var_target:g}| < 0.1",
            abs(var_hat - var_target) < 0.1,
        ))
        summary.append(_summary_row("mu_hat", mu_hat))
    else:
        summary.append(_summary_row(
            "mu_hat", mu_hat, f"|value - {mu_target:g}| < 0.05",
            abs(mu_hat - mu_target) < 0.05,
        ))
        summary.append(_summary_row(
            "sigma_hat", sigma_hat, f"|value - {std_target:g}| < 0.1",
            abs(sigma_hat - std_target) < 0.1,
        ))
    columns = (["step", "loss"] + theta.column_names() + ["grad_norm"]
               + sorted({k for row in rows for k in row
                         if k not in ("step", "loss", "grad_norm", "wall_ms")
                         and k not in theta.column_names()})
               + ["wall_ms"])
    return ExperimentResult(columns, rows, summary)


# -- nce_partition ------------------------------------------------------------------------


def log_partition_quadrature(family, theta, lo: float = -12.0, hi: float = 12.0,
                             n: int = 48_001) -> float:
    """log integral of exp(-E) on a 1-D grid (trapezoid; the integrand decays
    fast enough that [-12, 12] is exhaustive for every family used here)."""
    xs = np.linspace(lo, hi, n)
    e = family.energy(theta, xs[:, None])
    m = float(np.max(-e))
    return m + float(np.log(np.trapezoid(np.exp(-e - m), xs)))


def run_nce_partition(entries: dict) -> ExperimentResult:
    """Two NCE partition-function probes.

    Phase "learn_c": the energy is frozen at the unnormalized standard normal
    (0.5 x^2) and only the log-partition scalar c trains; it must land on
    0.5 ln(2 pi). Phase "self_normalized": c is pinned at zero and a quadratic
    polynomial family (which has a constant term to absorb the normalizer)
    trains; the learned energy's log-partition, measured by quadrature, must
    land near zero.
    """
    timer = _Timer()
    streams = _streams(entries["seed"])
    n = entries["data.n"]
    data = GaussianDensity([0.0], [1.0])
    noise = GaussianDensity([entries["noise.mean"]], [entries["noise.var"]])
    X = data.sample(streams["data"], n)
    Y = noise.sample(streams["noise"], n)

    gauss = GaussianEnergy(1)
    cfg_learn = NceConfig(noise=noise, learn_log_z=True)
    theta0 = nce_params(gauss, np.zeros(gauss.param_count), log_z=0.0)
    mask = np.zeros(theta0.dim)
    mask[-1] = 1.0  # only c moves; the energy stays 0.5 x^2

    def step_c(theta):
        return nce_loss(gauss, theta, X, Y, cfg_learn)

    theta_c, rows_a = train_loop(
        theta0, step_c, entries["steps"], entries, entries["log_every"], timer,
        stage="learn_c", freeze_mask=mask,
        extra_log=lambda th: {"partition_estimate": float(th.values[-1])},
    )
    c_hat = float(theta_c.values[-1])

    poly = Poly1dEnergy(2)
    cfg_self = NceConfig(noise=noise, learn_log_z=False)
    poly0 = poly.params([0.0, 0.0, np.log(0.5)])
    entries_b = dict(entries)
    entries_b["optimizer.lr"] = 0.02
    entries_b["optimizer.lr_final"] = 0.002
    n_b = min(entries["selfnorm_n"], n)
    Xb, Yb = X[:n_b], Y[:n_b]

    def step_self(theta):
        return nce_loss(poly, theta, Xb, Yb, cfg_self)

    theta_p, rows_b = train_loop(
        poly0, step_self, entries["selfnorm_steps"], entries_b,
        entries["log_every"], timer, stage="self_normalized",
        extra_log=lambda th: {
            "partition_estimate": log_partition_quadrature(poly, th)
        },
    )
    log_z_quad = log_partition_quadrature(poly, theta_p)

    c_target = 0.5 * np.log(2.0 * np.pi)
    summary = [
        _summary_row("c_hat", c_hat, f"|value - {c_target:.6f}| < 0.02",
                     abs(c_hat - c_target) < 0.02),
        _summary_row("self_normalized_log_z", log_z_quad, "|value| < 0.05",
                     abs(log_z_quad) < 0.05),
    ]
    rows = [{**row} for row in rows_a + rows_b]
    columns = ["step", "stage", "loss", "grad_norm", "partition_estimate", "wall_ms"]
    rows = [{col: row.get(col) for col in columns} for row in rows]
    return ExperimentResult(columns, rows, summary)


# -- mode_weight -----------------------------------------------------------------------


def sample_two_mode_data(entries: dict, rng: RngStream, n: int) -> np.ndarray:
    pick_pos = rng.uniform(n) < entries["data.pi"]
    x = rng.normal((n, 1)) * entries["data.component_std"]
    x[pick_pos, 0] += entries["data.mean_pos"]
    x[~pick_pos, 0] += entries["data.mean_neg"]
    return x


def _mixture_theta0(levels_sigma: float = 1.0) -> np.ndarray:
    # symmetric two-component start: means at +-2, unit widths, equal weights
    return np.array([0.0, 0.0, -2.0, 2.0, np.log(levels_sigma), np.log(levels_sigma)])


def run_mode_weight(entries: dict) -> ExperimentResult:
    """Two-mode weight recovery: plain score matching versus multi-scale
    denoising plus annealed Langevin sampling.

    The learned weight is measured operationally as the fraction of sampler
    draws landing in the positive-mean basin (x > 0). The plain path is
    recorded for contrast only: with numerically disjoint modes its objective
    carries no weight information.
    """
    timer = _Timer()
    streams = _streams(entries["seed"])
    family = MixtureRbfEnergy(2, 1)
    n = entries["data.n"]
    X = sample_two_mode_data(entries, streams["data"], n)
    batch_size = min(entries["estimator.batch_size"], n)
    batch_rng = streams["batch"]
    noise_rng = streams["noise"]
    num_draws = entries["sampler.num_draws"]
    pi_target = entries["data.pi"]

    ground_truth = sample_two_mode_data(entries, streams["draws"], num_draws)
    frac_truth = float(np.mean(ground_truth[:, 0] > 0.0))

    def minibatch():
        idx = batch_rng.integers(0, n, batch_size)
        return X[idx]

    all_rows: list[dict] = []

    # path (a): plain implicit score matching on the clean data
    theta_plain = family.params(_mixture_theta0())

    def step_sm(theta):
        return sm_loss(family, theta, minibatch())

    theta_plain, rows = train_loop(theta_plain, step_sm, entries["plain_steps"],
                                   entries, entries["log_every"], timer, stage="sm")
    all_rows.extend(rows)

    # path (b): one energy per noise scale, warm-started coarse to fine
    schedule = NoiseSchedule.geometric(entries["schedule.sigma_max"],
                                       entries["schedule.sigma_min"],
                                       entries["schedule.levels"])
    level_thetas: dict[float, ParamVector] = {}
    theta_level = family.params(_mixture_theta0())
    for sigma in schedule.sigmas:
        def step_dsm(theta, s=sigma):
            return dsm_loss(family, theta, minibatch(), s, noise_rng)

        theta_level, rows = train_loop(theta_level, step_dsm, entries["steps"],
                                       entries, entries["log_every"], timer,
                                       stage=f"dsm_sigma={sigma:.4g}")
        level_thetas[sigma] = theta_level
        all_rows.extend(rows)

    # sampling: annealed for the multi-scale path, single scale for plain SM
    cfg = LangevinConfig(step_size=entries["sampler.step_size"],
                         num_steps=entries["sampler.steps_per_level"])
    x0 = fresh_gaussian_init(streams["chains"], num_draws, 1)

    def score_at(Xc, sigma):
        return -family.grad_x(level_thetas[sigma], Xc)

    draws_multi = annealed_langevin(score_at, schedule, cfg, x0, streams["chains"])
    frac_multi = float(np.mean(draws_multi[:, 0] > 0.0))

    plain_cfg = LangevinConfig(
        step_size=entries["sampler.step_size"],
        num_steps=entries["sampler.steps_per_level"] * entries["schedule.levels"],
    )
    draws_plain = langevin_chain(model_target(family, theta_plain), x0, plain_cfg,
                                 streams["chains"]).final
    frac_plain = float(np.mean(draws_plain[:, 0] > 0.0))

    summary = [
        _summary_row("basin_fraction_ground_truth", frac_truth,
                     f"|value - {pi_target:g}| < 0.015",
                     abs(frac_truth - pi_target) < 0.015),
        _summary_row("basin_fraction_multiscale", frac_multi,
                     f"|value - {pi_target:g}| < 0.1",
                     abs(frac_multi - pi_target) < 0.1),
        _summary_row("basin_fraction_plain_sm", frac_plain),
    ]
    columns = (["step", "stage", "loss"] + family.params(_mixture_theta0()).column_names()
               + ["grad_norm", "per_sample_loss_var", "wall_ms"])
    all_rows = [{col: row.get(col) for col in columns} for row in all_rows]
    samples = {
        "ground_truth": ground_truth[:, 0],
        "multiscale": draws_multi[:, 0],
        "plain_sm": draws_plain[:, 0],
    }
    return ExperimentResult(columns, all_rows, summary, samples)


# -- cd_sm_connection -------------------------------------------------------------------


def run_cd_sm_connection(entries: dict) -> ExperimentResult:
    """One-step-Langevin CD gradient against the Fisher-divergence gradient.

    For each step size, g_cd is the Monte Carlo mean of grad_theta E at the
    data minus its mean after a single Langevin move; antithetic +-z pairs
    cancel the O(eps) proposal noise, which would otherwise swamp the
    O(eps^2) signal at the smallest step size. The comparison writes the
    cosine against the closed-form Fisher gradient and the norm ratio to
    (eps^2/2) times it.
    """
    timer = _Timer()
    streams = _streams(entries["seed"])
    family = GaussianEnergy(1)
    theta = family.params([0.0, 0.0])  # mu = 0, precision = 1
    data = GaussianDensity([entries["data.mean"]], [entries["data.std"] ** 2])
    n = entries["num_pairs"]
    X = data.sample(streams["data"], n)
    Z = streams["noise"].normal(X.shape)
    g_sm = gaussian_fisher_theta_gradient(data, family, theta)
    g_sm_norm = float(np.linalg.norm(g_sm))

    rows = []
    ratios, ratio_ses = [], []
    for eps in entries["epsilons"]:
        drift = X - 0.5 * eps**2 * family.grad_x(theta, X)
        rows_data = family.grad_theta(theta, X)
        rows_plus = family.grad_theta(theta, drift + eps * Z)
        rows_minus = family.grad_theta(theta, drift - eps * Z)
        contrib = rows_data - 0.5 * (rows_plus + rows_minus)
        g_cd = contrib.mean(axis=0)
        se = contrib.std(axis=0, ddof=1) / np.sqrt(n)
        norm = float(np.linalg.norm(g_cd))
        cosine = float(g_cd @ g_sm / (norm * g_sm_norm))
        ratio = norm / (0.5 * eps**2 * g_sm_norm)
        unit = g_cd / norm
        ratio_se = float(np.sqrt(np.sum((unit * se) ** 2))) / (0.5 * eps**2 * g_sm_norm)
        ratios.append(ratio)
        ratio_ses.append(ratio_se)
        rows.append({"epsilon": eps, "cosine": cosine, "norm_ratio": ratio,
                     "ratio_se": ratio_se, "wall_ms": timer.wall_ms()})

    cosine_small = rows[-1]["cosine"]
    trend_ok = all(
        abs(ratios[i + 1] - 1.0) <= abs(ratios[i] - 1.0)
        + 3.0 * (ratio_ses[i] + ratio_ses[i + 1])
        for i in range(len(ratios) - 1)
    )
    summary = [
        _summary_row("cosine_at_smallest_eps", cosine_small, "value > 0.99",
                     cosine_small > 0.99),
        _summary_row("ratio_monotone_toward_1", float(ratios[-1]),
                     "|ratio - 1| non-increasing within 3 SE", trend_ok),
    ]
    return ExperimentResult(["epsilon", "cosine", "norm_ratio", "ratio_se",
                             "wall_ms"], rows, summary)


# -- de_bruijn -------------------------------------------------------------------------


def de_bruijn_rows(t_values, h_t: float, data: GaussianDensity,
                   model: GaussianDensity) -> list[dict]:
    """Central-difference d/dt of KL(q_t || p_t) against the smoothed Fisher
    divergence.

    Both distributions are smoothed by N(0, t); the identity holds with the
    right side equal to minus the half-inclusive Fisher divergence
    -0.5 E|grad log q_t - grad log p_t|^2, which is exactly what the
    closed-form oracle returns.
    """
    rows = []
    for t in t_values:
        if t - h_t <= 0:
            raise ConfigError(f"h_t = {h_t} too large for t = {t}")
        kl_plus = gaussian_kl(data.smoothed(t + h_t), model.smoothed(t + h_t))
        kl_minus = gaussian_kl(data.smoothed(t - h_t), model.smoothed(t - h_t))
        lhs = (kl_plus - kl_minus) / (2.0 * h_t)
        rhs = -gaussian_fisher_divergence(data.smoothed(t), model.smoothed(t))
        gap = abs(lhs - rhs) / max(abs(rhs), 1e-300)
        rows.append({"t": t, "kl_time_derivative": lhs, "neg_fisher": rhs,
                     "rel_gap": gap})
    return rows


def run_de_bruijn(entries: dict) -> ExperimentResult:
    timer = _Timer()
    data = GaussianDensity([entries["data.mean"]], [entries["data.var"]])
    model = GaussianDensity([entries["model.mean"]], [entries["model.var"]])
    rows = de_bruijn_rows(entries["t_values"], entries["h_t"], data, model)
    for row in rows:
        row["wall_ms"] = timer.wall_ms()
    worst = max(row["rel_gap"] for row in rows)
    summary = [_summary_row("max_rel_gap", worst, "value < 1e-3", worst < 1e-3)]
    return ExperimentResult(["t", "kl_time_derivative", "neg_fisher", "rel_gap",
                             "wall_ms"], rows, summary)


# -- ssm_nce_equiv ----------------------------------------------------------------------


def run_ssm_nce_equiv(entries: dict) -> ExperimentResult:
    """Shifted-data NCE against its sliced second-order expansion.

    At shift v the exact objective satisfies
    loss = 2 log 2 + 0.5 [0.5 (v.grad E)^2 - v.Hess(E) v] + O(|v|^4),
    so gap(v)/|v|^2 must fall at every halving of |v|.
    """
    timer = _Timer()
    streams = _streams(entries["seed"])
    family = GaussianEnergy(1)
    theta = family.params([entries["theta.mu"], entries["theta.log_chol"]])
    X = GaussianDensity([0.0], [1.0]).sample(streams["data"], entries["data.n"])
    two_log2 = 2.0 * np.log(2.0)
    rows = []
    for scale in entries["v_scales"]:
        v = np.array([scale])
        loss = shifted_nce_loss(family, theta, X, v).loss
        taylor = 0.5 * ssm_objective_fixed_direction(family, theta, X, v)
        gap = abs(loss - two_log2 - taylor)
        rows.append({
            "v_norm": scale, "shifted_nce_loss": loss, "taylor_term": taylor,
            "gap": gap, "gap_over_vsq": gap / scale**2,
            "wall_ms": timer.wall_ms(),
        })
    normalized = [row["gap_over_vsq"] for row in rows]
    decreasing = all(a > b for a, b in zip(normalized, normalized[1:]))
    summary = [_summary_row(
        "gap_over_vsq_strictly_decreasing", normalized[-1],
        "strictly decreasing over the scale ladder", decreasing,
    )]
    return ExperimentResult(
        ["v_norm", "shifted_nce_loss", "taylor_term", "gap", "gap_over_vsq",
         "wall_ms"], rows, summary)


# -- dispatch ---------------------------------------------------------------------------


EXPERIMENT_RUNNERS = {
    "gaussian_recovery": run_gaussian_recovery,
    "nce_partition": run_nce_partition,
    "mode_weight": run_mode_weight,
    "cd_sm_connection": run_cd_sm_connection,
    "de_bruijn": run_de_bruijn,
    "ssm_nce_equiv": run_ssm_nce_equiv,
}


def output_root(explicit: str | None = None) -> Path:
    if explicit:
        return Path(explicit)
    env = os.environ.get("EBM_OUT")
    return Path(env) if env else Path("ebm_out")


def run_experiment(cfg: ExperimentConfig, out: str | None = None) -> Path:
    """Execute a config and write run.csv / summary.csv (and samples.csv when
    the experiment produces draws). Returns the run directory."""
    entries = cfg.entries
    runner = EXPERIMENT_RUNNERS.get(cfg.experiment)
    if runner is None:
        names = ", ".join(sorted(EXPERIMENT_RUNNERS))
        raise ConfigError(
            f"unknown experiment {cfg.experiment!r}; available experiments: {names}"
        )
    result = runner(entries)
    root = output_root(out if out is not None else entries.get("out"))
    run_dir = root / f"{cfg.experiment}-seed{cfg.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    write_csv(run_dir / "run.csv", result.run_columns, result.run_rows)
    write_csv(run_dir / "summary.csv", ["metric", "value", "criterion", "passed"],
              result.summary_rows)
    if result.samples:
        names = sorted(result.samples)
        length = max(arr.size for arr in result.samples.values())
        rows = []
        for i in range(length):
            rows.append({name: (float(result.samples[name][i])
                                if i < result.samples[name].size else None)
                         for name in names})
        write_csv(run_dir / "samples.csv", names, rows)
    (run_dir / "config.txt").write_text(serialize_config(cfg), encoding="utf-8")
    return run_dir
