"""Deterministic randomness, dense-vector plumbing, finite differences, and Adam.

Randomness is counter-based (Philox): every draw re-derives a fresh generator
from ``(seed, stream_id, counter)`` and then bumps the logical counter, so a
draw sequence is a pure function of the stream state. This is what makes
common-random-number tricks exact: snapshot the stream (or materialize the
noise once) and every replay sees bit-identical values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericError

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One round of splitmix64; used to derive child stream ids."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass
class RngStream:
    """A named, counter-based random stream.

    Identical ``(seed, stream_id)`` reproduce identical draw sequences across
    runs and platforms. Each draw call owns a disjoint 2**128-block slice of
    the underlying Philox counter space, so advancing the logical ``counter``
    by one per call can never reuse bits.

    A stream has a single owner. Hand concurrent consumers their own children
    via :meth:`split` instead of sharing.
    """

    seed: int
    stream_id: int = 0
    counter: int = 0

    def _generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        bitgen = np.random.Philox(key=key, counter=self.counter << 128)
        return np.random.Generator(bitgen)

    def _next(self) -> np.random.Generator:
        gen = self._generator()
        self.counter += 1
        return gen

    def clone(self) -> "RngStream":
        """Snapshot of the current state; replaying a clone repeats the draws."""
        return RngStream(self.seed, self.stream_id, self.counter)

    def split(self) -> "RngStream":
        """Derive an independent child stream and advance this one.

        The child's stream_id is a 64-bit hash of the parent's (stream_id,
        counter), so no (stream_id, counter) pair is ever reused between
        parent, child, or later siblings.
        """
        child_id = _splitmix64((self.stream_id ^ _splitmix64(self.counter + 1)) & _MASK64)
        self.counter += 1
        return RngStream(self.seed, child_id, 0)

    # -- draws ---------------------------------------------------------------

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws with the given shape."""
        return self._next().standard_normal(shape)

    def rademacher(self, shape) -> np.ndarray:
        """+1/-1 draws, each sign with probability 1/2."""
        gen = self._next()
        return gen.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0

    def uniform(self, shape) -> np.ndarray:
        """Uniform draws on [0, 1)."""
        return self._next().random(shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        """Uniform integers in [low, high)."""
        return self._next().integers(low, high, size=shape)


@dataclass(frozen=True)
class RealVector:
    """A finite, fixed-dimension vector of 64-bit floats."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidArgumentError(f"RealVector must be 1-D, got shape {arr.shape}")
        if arr.size == 0:
            raise InvalidArgumentError("RealVector must have at least one entry")
        if not np.all(np.isfinite(arr)):
            raise NumericError("RealVector entries must be finite")
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return int(self.entries.size)

    def to_array(self) -> np.ndarray:
        return self.entries.copy()


def gaussian_vector(rng: RngStream, d: int) -> RealVector:
    """d i.i.d. standard normal draws; advances the stream counter by one."""
    if d < 1:
        raise InvalidArgumentError(f"dimension must be >= 1, got {d}")
    return RealVector(rng.normal(d))


def rademacher_vector(rng: RngStream, d: int) -> RealVector:
    """d i.i.d. +1/-1 draws; advances the stream counter by one."""
    if d < 1:
        raise InvalidArgumentError(f"dimension must be >= 1, got {d}")
    return RealVector(rng.rademacher(d))


# -- finite differences -----------------------------------------------------


def fd_step_sizes(x: np.ndarray, h: float | None) -> np.ndarray:
    """Per-coordinate central-difference steps.

    The default h_i = 1e-5 * (1 + |x_i|) balances truncation against
    float64 rounding; an explicit h applies uniformly.
    """
    x = np.asarray(x, dtype=np.float64)
    if h is None:
        return 1e-5 * (1.0 + np.abs(x))
    if h <= 0:
        raise InvalidArgumentError(f"finite-difference step must be positive, got {h}")
    return np.full(x.shape, float(h))


def finite_diff_gradient(f, x, h: float | None = None) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    Per coordinate: (f(x + h_i e_i) - f(x - h_i e_i)) / (2 h_i). Any
    non-finite evaluation raises NumericError naming the coordinate.
    """
    if isinstance(x, RealVector):
        x = x.entries
    x = np.asarray(x, dtype=np.float64)
    steps = fd_step_sizes(x, h)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += steps[i]
        xm[i] -= steps[i]
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(
                f"non-finite evaluation in finite difference at coordinate {i}: "
                f"f(+)={fp}, f(-)={fm}"
            )
        grad[i] = (fp - fm) / (2.0 * steps[i])
    return grad


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    """Norm-based relative error with a small absolute floor."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    denom = max(float(np.linalg.norm(exact)), float(np.linalg.norm(approx)), 1e-12)
    return float(np.linalg.norm(approx - exact)) / denom


# -- optimizer ---------------------------------------------------------------


@dataclass
class OptimizerState:
    """Adam state: first/second moment EMAs plus hyperparameters.

    All losses in this package are minimized, so the update subtracts the
    bias-corrected step.
    """

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, dim: int, learning_rate: float = 1e-2, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> "OptimizerState":
        return cls(
            first_moment=np.zeros(dim),
            second_moment=np.zeros(dim),
            step_count=0,
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def optimizer_step(state: OptimizerState, params: np.ndarray,
                   gradient: np.ndarray) -> tuple[OptimizerState, np.ndarray]:
    """One bias-corrected Adam step; returns (new_state, new_params)."""
    params = np.asarray(params, dtype=np.float64)
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != params.shape:
        raise InvalidArgumentError(
            f"gradient shape {gradient.shape} does not match params {params.shape}"
        )
    if state.first_moment.shape != params.shape:
        raise InvalidArgumentError(
            f"optimizer state dim {state.first_moment.shape} does not match params"
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * gradient**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = OptimizerState(
        first_moment=m,
        second_moment=v,
        step_count=t,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return new_state, new_params
