"""Numerical checks on the mathematics of the two-EMA weights.

Everything here is a pure function of a loss trace or a small problem, kept
independent of :mod:`evolved_sampling.sampler` so the two can check each other.

Closed forms used below, for a single sample with losses l(1..T), initial
score s0 and betas (b1, b2):

* exact expansion of the weight (valid for b2 != 1)::

      w(t) = (1-b2) sum_{k<=t} b2^(t-k) l(k)
           + (b2-b1) sum_{k<t} b2^(t-1-k) (l(k+1) - l(k))
           + b2^(t-1) (b1 s0 + (b2-b1) l(1))

  The last line is the initialization remainder; it decays like b2^t.

* discrete frequency response, from the z-transform of the recursion::

      H(z) = (1-b1) + b1 (1-b2) z^-1 / (1 - b2 z^-1)

* continuous idealization: |H(i w)| = sqrt(((b2-b1)^2 w^2 + (1-b2)^2) / (w^2 + (1-b2)^2))
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _trace(losses) -> np.ndarray:
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 1 or losses.size == 0:
        raise ValueError("a loss trace is a non-empty 1-d sequence")
    if not np.all(np.isfinite(losses)) or (losses < 0).any():
        raise ValueError("loss traces must be finite and non-negative")
    return losses


def _check_betas(beta1: float, beta2: float) -> None:
    if not (0.0 <= beta1 <= 1.0 and 0.0 <= beta2 <= 1.0):
        raise ValueError(f"betas must lie in [0, 1], got ({beta1}, {beta2})")


def recursion_weights(losses, beta1: float, beta2: float, s0: float) -> np.ndarray:
    """Run the recursion over the trace; element ``t-1`` holds w(t)."""
    losses = _trace(losses)
    _check_betas(beta1, beta2)
    w = np.empty_like(losses)
    s = float(s0)
    for t, loss in enumerate(losses):
        w[t] = beta1 * s + (1.0 - beta1) * loss
        s = beta2 * s + (1.0 - beta2) * loss
    return w


def init_remainder(losses, beta1: float, beta2: float, s0: float, t: int) -> float:
    """Initialization term of the expansion at step ``t`` (1-based)."""
    losses = _trace(losses)
    return beta2 ** (t - 1) * (beta1 * s0 + (beta2 - beta1) * losses[0])


def expansion_weight(
    losses, beta1: float, beta2: float, t: int, s0: float, exact: bool = True
) -> float:
    """w(t) from explicit sums over the loss history and its differences.

    With ``exact=False`` the initialization remainder is dropped, leaving only
    the loss and loss-difference sums.
    """
    losses = _trace(losses)
    _check_betas(beta1, beta2)
    if beta2 == 1.0:
        raise ValueError("the expansion needs beta2 != 1")
    if not (1 <= t <= losses.size):
        raise ValueError(f"t must lie in [1, {losses.size}], got {t}")
    hist = losses[:t]
    powers = beta2 ** np.arange(t - 1, -1, -1, dtype=np.float64)  # b2^(t-k), k=1..t
    level = (1.0 - beta2) * float(np.dot(powers, hist))
    diffs = np.diff(hist)  # l(k+1) - l(k), k=1..t-1
    trend = (beta2 - beta1) * float(np.dot(powers[1:], diffs)) if t > 1 else 0.0
    value = level + trend
    if exact:
        value += init_remainder(losses, beta1, beta2, s0, t)
    return value


def _power_blocks(T: int, beta2: float, rows: int = 256):
    """Yield ``(start, M)`` with ``M[i, k] = b2^(t-1-k)`` for ``k < t``, else 0, where ``t = start+i+1``.

    Rows cover t = start+1 .. start+rows; columns are 0-based history positions.
    """
    powers = beta2 ** np.arange(T, dtype=np.float64)
    k = np.arange(T)
    for start in range(0, T, rows):
        t = np.arange(start, min(start + rows, T))[:, None]  # 0-based t-1
        lag = t - k[None, :]
        yield start, np.where(lag >= 0, powers[np.clip(lag, 0, T - 1)], 0.0)


def expansion_weights(
    losses, beta1: float, beta2: float, s0: float, exact: bool = True
) -> np.ndarray:
    """:func:`expansion_weight` for every t, as explicit O(T^2) sums in row blocks."""
    losses = _trace(losses)
    _check_betas(beta1, beta2)
    if beta2 == 1.0:
        raise ValueError("the expansion needs beta2 != 1")
    T = losses.size
    diffs = np.diff(losses)
    out = np.empty(T)
    for start, block in _power_blocks(T, beta2):
        rows = block.shape[0]
        level = block @ losses  # sum_{k<=t} b2^(t-k) l(k)
        trend = block[:, 1:] @ diffs if T > 1 else 0.0  # sum_{k<t} b2^(t-1-k) (l(k+1)-l(k))
        out[start : start + rows] = (1.0 - beta2) * level + (beta2 - beta1) * trend
    if exact:
        steps = np.arange(T)
        out += beta2**steps * (beta1 * s0 + (beta2 - beta1) * losses[0])
    return out


def recursion_expansion_gap(
    losses, beta1: float, beta2: float, s0: float, exact: bool = True
) -> float:
    """Largest |recursion - expansion| over all steps of the trace."""
    rec = recursion_weights(losses, beta1, beta2, s0)
    exp = expansion_weights(losses, beta1, beta2, s0, exact)
    return float(np.max(np.abs(rec - exp)))


# -- frequency response ------------------------------------------------------


def continuous_gain(beta1: float, beta2: float, omega0: float) -> float:
    """|H(i omega0)| of the continuous-time idealization."""
    _check_betas(beta1, beta2)
    if omega0 < 0:
        raise ValueError("omega0 must be non-negative")
    a = 1.0 - beta2
    diff = beta2 - beta1
    if math.isinf(omega0):
        return abs(diff)
    num = diff * diff * omega0 * omega0 + a * a
    den = omega0 * omega0 + a * a
    if den == 0.0:
        return 1.0
    return math.sqrt(num / den)


def discrete_response(beta1: float, beta2: float, omega: float) -> complex:
    """H(e^{i omega}) of the per-step recursion from loss to weight."""
    _check_betas(beta1, beta2)
    zinv = complex(math.cos(omega), -math.sin(omega))
    return (1.0 - beta1) + beta1 * (1.0 - beta2) * zinv / (1.0 - beta2 * zinv)


def discrete_gain(beta1: float, beta2: float, omega: float) -> float:
    return abs(discrete_response(beta1, beta2, omega))


def _sinusoid_amplitude(signal: np.ndarray, omega: float, t: np.ndarray) -> float:
    """Amplitude of the omega-component by least squares on [1, cos, sin]."""
    cos, sin = np.cos(omega * t), np.sin(omega * t)
    # at omega = pi the sine column is rounding noise; fitting it is ill-posed
    if np.linalg.norm(sin) < 1e-8 * np.linalg.norm(cos):
        basis = np.column_stack([np.ones_like(t), cos])
    else:
        basis = np.column_stack([np.ones_like(t), cos, sin])
    coef, *_ = np.linalg.lstsq(basis, signal, rcond=None)
    return float(math.hypot(*coef[1:]))


def empirical_gain(
    beta1: float,
    beta2: float,
    omega: float,
    cycles: int = 20,
    amplitude: float = 0.5,
    min_samples: int = 64,
) -> float:
    """Measured output/input amplitude of the recursion under a cosine loss.

    The loss is ``1 + amplitude * cos(omega t)`` (a cosine so that the Nyquist
    frequency pi still carries signal). The recursion runs a burn-in of
    ``ceil(10 / (1 - beta2))`` steps, then the amplitude of the weight's
    omega-component is fitted over ``cycles`` periods.
    """
    _check_betas(beta1, beta2)
    if not (0.0 < omega <= math.pi):
        raise ValueError(f"omega must lie in (0, pi], got {omega!r}")
    if beta2 >= 1.0:
        raise ValueError("empirical gain needs beta2 < 1 to forget the initial score")
    burn = math.ceil(10.0 / (1.0 - beta2))
    length = max(min_samples, math.ceil(cycles * 2.0 * math.pi / omega))
    t = np.arange(1, burn + length + 1, dtype=np.float64)
    losses = 1.0 + amplitude * np.cos(omega * t)
    w = recursion_weights(losses, beta1, beta2, s0=1.0)
    tail = slice(burn, None)
    return _sinusoid_amplitude(w[tail], omega, t[tail]) / amplitude


@dataclass(frozen=True)
class TransferPoint:
    omega: float
    gain: float


def gain_table(beta1: float, beta2: float, omegas, cycles: int = 20) -> list[dict]:
    rows = []
    for omega in omegas:
        rows.append(
            {
                "omega": float(omega),
                "continuous_gain": continuous_gain(beta1, beta2, omega),
                "discrete_gain": discrete_gain(beta1, beta2, omega),
                "empirical_gain": empirical_gain(beta1, beta2, omega, cycles),
            }
        )
    return rows


# -- DRO view ----------------------------------------------------------------


def dro_reference_loss(losses, beta1: float, beta2: float, s0: float, t: int) -> float:
    """Reference loss that turns the weight update into an ascent step on a DRO objective.

    With this reference, ``w(t+1) - w(t) = (1 - beta1) (l(t+1) - ref(t))``.
    Uses the per-sample initial score ``s0`` (1/n under the default init).
    """
    losses = _trace(losses)
    _check_betas(beta1, beta2)
    if beta1 == 1.0:
        raise ValueError("the DRO reference loss needs beta1 != 1")
    if not (1 <= t <= losses.size):
        raise ValueError(f"t must lie in [1, {losses.size}], got {t}")
    scale = 1.0 / (1.0 - beta1)
    past = losses[: t - 1]
    powers = beta2 ** np.arange(t - 2, -1, -1, dtype=np.float64)  # b2^(t-1-k), k=1..t-1
    history = float(np.dot(powers, past)) if t > 1 else 0.0
    return scale * (
        (1.0 - 2.0 * beta1 + beta1 * beta2) * losses[t - 1]
        + beta1 * (1.0 - beta2) ** 2 * history
        + beta1 * (1.0 - beta2) * beta2 ** (t - 1) * s0
    )


def dro_reference_losses(losses, beta1: float, beta2: float, s0: float) -> np.ndarray:
    """:func:`dro_reference_loss` for every t, via the same block sums as the expansion."""
    losses = _trace(losses)
    _check_betas(beta1, beta2)
    if beta1 == 1.0:
        raise ValueError("the DRO reference loss needs beta1 != 1")
    T = losses.size
    history = np.zeros(T)
    if T > 1:
        for start, block in _power_blocks(T, beta2):
            # sum_{k<t} b2^(t-1-k) l(k)
            history[start : start + block.shape[0]] = block[:, 1:] @ losses[:-1]
    steps = np.arange(T)
    return (
        (1.0 - 2.0 * beta1 + beta1 * beta2) * losses
        + beta1 * (1.0 - beta2) ** 2 * history
        + beta1 * (1.0 - beta2) * beta2**steps * s0
    ) / (1.0 - beta1)


def dro_identity_residual(losses, beta1: float, beta2: float, s0: float) -> float:
    """max_t |(w(t+1) - w(t)) - (1 - beta1)(l(t+1) - ref(t))| along the trace."""
    losses = _trace(losses)
    if losses.size < 2:
        return 0.0
    w = recursion_weights(losses, beta1, beta2, s0)
    ref = dro_reference_losses(losses, beta1, beta2, s0)
    rhs = (1.0 - beta1) * (losses[1:] - ref[:-1])
    return float(np.max(np.abs(np.diff(w) - rhs)))


# -- loss-weighted gradient descent ------------------------------------------


@dataclass
class LeastSquaresProblem:
    """Per-sample losses 0.5 (a_i . theta - b_i)^2 of a consistent linear system."""

    A: np.ndarray
    b: np.ndarray
    theta_star: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.theta_star = np.asarray(self.theta_star, dtype=np.float64)
        residual = self.A @ self.theta_star - self.b
        scale = max(1.0, float(np.abs(self.b).max(initial=0.0)))
        if np.abs(residual).max(initial=0.0) > 1e-10 * scale:
            raise ValueError("theta_star does not interpolate: the system is inconsistent")

    @classmethod
    def from_system(cls, A, b) -> "LeastSquaresProblem":
        theta, *_ = np.linalg.lstsq(np.asarray(A, float), np.asarray(b, float), rcond=None)
        return cls(A, b, theta)

    @classmethod
    def random(cls, n: int, d: int, seed: int) -> "LeastSquaresProblem":
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n, d))
        theta = rng.standard_normal(d)
        return cls(A, A @ theta, theta)

    def losses(self, theta) -> np.ndarray:
        r = self.A @ theta - self.b
        return 0.5 * r * r

    def sample_grads(self, theta) -> np.ndarray:
        return (self.A @ theta - self.b)[:, None] * self.A


def delta_slack(losses) -> float:
    """Slack of the loss-weighted convergence bound at one instant.

    (min above-average loss - max at-or-below-average loss) times the total
    excess probability mass of the above-average samples; 0 when all losses
    are equal.
    """
    losses = np.asarray(losses, dtype=np.float64)
    total = losses.sum()
    mean = total / losses.size
    above = losses > mean
    if not above.any() or total == 0.0:
        return 0.0
    gap = losses[above].min() - losses[~above].max()
    excess = float(np.sum((losses[above] - mean) / total))
    return float(gap * excess)


@dataclass
class LwGdTrace:
    mean_loss: np.ndarray
    delta: np.ndarray
    distance: np.ndarray
    weight_sums: np.ndarray
    min_weight: np.ndarray
    all_equal: np.ndarray
    converged: bool
    steps_run: int


def lw_gd_run(
    problem: LeastSquaresProblem,
    step_size: float = 0.01,
    steps: int = 100_000,
    tol: float = 1e-8,
    theta0=None,
    loss_weighted: bool = True,
    patience: int = 100,
) -> LwGdTrace:
    """Discretized loss-weighted gradient flow: theta -= step * sum_i p_i grad l_i, p ∝ l.

    ``loss_weighted=False`` runs plain GD on the mean loss for comparison.
    Stops early once every loss is exactly zero; aborts with ``FloatingPointError``
    if the mean loss grows for ``patience`` consecutive steps.
    """
    n, d = problem.A.shape
    theta = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    records = {k: [] for k in ("mean", "delta", "dist", "wsum", "wmin", "eq")}
    rising = 0
    prev = math.inf
    steps_run = 0
    for _ in range(steps + 1):
        losses = problem.losses(theta)
        total = losses.sum()
        mean = total / n
        if total > 0.0 and loss_weighted:
            p = losses / total
        else:
            p = np.full(n, 1.0 / n)
        records["mean"].append(mean)
        records["delta"].append(delta_slack(losses))
        records["dist"].append(float(np.linalg.norm(theta - problem.theta_star)))
        records["wsum"].append(float(p.sum()))
        records["wmin"].append(float(p.min()))
        records["eq"].append(bool(np.all(losses == losses[0])))
        if total == 0.0 or steps_run == steps:
            break
        rising = rising + 1 if mean > prev else 0
        if rising >= patience:
            raise FloatingPointError(
                f"loss-weighted GD diverging: mean loss rose for {patience} steps "
                f"(step {steps_run}, loss {mean:.3e}); reduce step_size"
            )
        prev = mean
        grad = p @ problem.sample_grads(theta)
        theta = theta - step_size * grad
        steps_run += 1
    mean_loss = np.array(records["mean"])
    return LwGdTrace(
        mean_loss=mean_loss,
        delta=np.array(records["delta"]),
        distance=np.array(records["dist"]),
        weight_sums=np.array(records["wsum"]),
        min_weight=np.array(records["wmin"]),
        all_equal=np.array(records["eq"]),
        converged=bool(mean_loss[-1] < tol),
        steps_run=steps_run,
    )
