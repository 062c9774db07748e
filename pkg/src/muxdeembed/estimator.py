"""DUT recovery from a measurement campaign by Adam descent on a relative l1 misfit.

The reciprocal DUT is parametrized by its upper triangle ``theta`` (length
``d = n_s (n_s + 1) / 2``), enumerated column-wise: ``(0,0), (0,1), (1,1),
(0,2), ...``. Jacobians use column-major ``vec`` of each H and stack the
realizations vertically, giving shape ``(m p, d)``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .campaign import MeasurementCampaign
from .network import (
    DEFAULT_TOLERANCES,
    ResonantCascadeError,
    ScatteringMatrix,
    spectral_norm,
)

logger = logging.getLogger(__name__)


class DegenerateCampaignError(ValueError):
    """No realization carries a DUT signature, so the relative loss is undefined."""


@lru_cache(maxsize=None)
def index_map(n_s: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, j) for j in range(n_s) for i in range(j + 1))


def n_ports_from_d(d: int) -> int:
    n = int(round((math.sqrt(8 * d + 1) - 1) / 2))
    if n < 1 or n * (n + 1) // 2 != d:
        raise ValueError(f"parameter length {d} is not a triangular number")
    return n


def basis_matrix(k: int, n_s: int) -> np.ndarray:
    """E_k: unit symmetric basis matrix of parameter ``k``."""
    i, j = index_map(n_s)[k]
    e = np.zeros((n_s, n_s))
    e[i, j] = e[j, i] = 1.0
    return e


@lru_cache(maxsize=None)
def _tri_indices(n_s: int):
    ij = np.array(index_map(n_s)).T
    return ij[0], ij[1]


def sym_array(theta: np.ndarray) -> np.ndarray:
    """Batched Sym(): ``(..., d) -> (..., n_s, n_s)``."""
    theta = np.asarray(theta, dtype=complex)
    n = n_ports_from_d(theta.shape[-1])
    i, j = _tri_indices(n)
    s = np.zeros(theta.shape[:-1] + (n, n), dtype=complex)
    s[..., i, j] = theta
    s[..., j, i] = theta
    return s


def sym(theta) -> ScatteringMatrix:
    theta = np.asarray(theta, dtype=complex)
    if theta.ndim != 1:
        raise ValueError("theta must be a vector")
    return ScatteringMatrix(sym_array(theta))


def upper(s) -> np.ndarray:
    """Inverse of :func:`sym`: the column-wise upper triangle."""
    s = np.asarray(s.entries if isinstance(s, ScatteringMatrix) else s)
    i, j = _tri_indices(s.shape[-1])
    return s[..., i, j]


def _predict(st, s: np.ndarray, check: bool = False):
    """H_pred for DUT matrices ``s`` of shape ``(..., n, n)`` broadcast over realizations.

    Returns ``(h_pred, w)`` with ``w = (I - D S)^-1 B``.
    """
    s = s[..., None, :, :]  # broadcast over the realization axis
    n = s.shape[-1]
    m = np.eye(n) - st.ss @ s
    if check and m.size:
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(m)
        if not np.all(cond < DEFAULT_TOLERANCES.cond_cap):
            raise ResonantCascadeError("I - S_SS S_DUT is singular at this theta")
    w = np.linalg.solve(m, st.st)
    return st.rt + st.rs @ s @ w, w


def predict(theta, campaign: MeasurementCampaign) -> np.ndarray:
    """Predicted H for every realization, shape ``(p, n_r, n_t)``."""
    h, _ = _predict(campaign.stacked(), sym_array(theta), check=True)
    return h


def _denominator(campaign: MeasurementCampaign) -> float:
    st = campaign.stacked()
    den = float(np.sum(np.abs(st.h - st.rt)))
    if not den > 0:
        raise DegenerateCampaignError("no measurement differs from S_PF_RT; the DUT is invisible")
    return den


def loss(theta, campaign: MeasurementCampaign) -> float:
    """Relative element-wise l1 misfit between predicted and measured H."""
    den = _denominator(campaign)
    st = campaign.stacked()
    h = predict(theta, campaign)
    return float(np.sum(np.abs((h - st.rt) - (st.h - st.rt)))) / den


def _left_factor(st, s: np.ndarray) -> np.ndarray:
    """U = A (I - S D)^-1, shape ``(..., p, n_r, n)``."""
    s = s[..., None, :, :]
    n = s.shape[-1]
    m = np.eye(n) - s @ st.ss
    ut = np.linalg.solve(np.swapaxes(m, -1, -2), np.swapaxes(np.broadcast_to(st.rs, m.shape[:-2] + st.rs.shape[-2:]), -1, -2))
    return np.swapaxes(ut, -1, -2)


def analytic_jacobian(theta, campaign: MeasurementCampaign) -> np.ndarray:
    """Closed-form dH/dtheta, shape ``(m p, d)``.

    Column ``k`` of realization ``r`` is ``vec(U_r E_k W_r)`` with
    ``U = A (I - S D)^-1`` and ``W = (I - D S)^-1 B``; this is the usual
    ``A G S^-1 E_k S^-1 G B`` form with the DUT inverses pushed through.
    """
    st = campaign.stacked()
    s = sym_array(theta)
    _predict(st, s, check=True)
    u = _left_factor(st, s)  # (p, n_r, n)
    _, w = _predict(st, s)  # (p, n, n_t)
    i, j = _tri_indices(campaign.n_s)
    # d[r, a, b, k] = U[a, i_k] W[j_k, b] + (i_k != j_k) U[a, j_k] W[i_k, b]
    d = u[:, :, None, i] * np.swapaxes(w, -1, -2)[:, None, :, j]
    off = i != j
    d[..., off] += u[:, :, None, j[off]] * np.swapaxes(w, -1, -2)[:, None, :, i[off]]
    # column-major vec per realization: index a + b * n_r
    d = np.swapaxes(d, 1, 2)
    return d.reshape(-1, len(i))


def fd_jacobian(theta, campaign: MeasurementCampaign, step: float = 1e-6, direction: str = "real") -> np.ndarray:
    """Central finite differences of the stacked measurements, shape ``(m p, d)``.

    ``direction="real"`` perturbs Re(theta_k) and returns the complex
    derivative. ``direction="imag"`` perturbs Im(theta_k); for this
    holomorphic map the result equals ``1j`` times the real one.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if direction not in ("real", "imag"):
        raise ValueError("direction must be 'real' or 'imag'")
    theta = np.asarray(theta, dtype=complex)
    h = step if direction == "real" else 1j * step
    cols = []
    for k in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        yp = np.concatenate([x.ravel(order="F") for x in predict(tp, campaign)])
        ym = np.concatenate([x.ravel(order="F") for x in predict(tm, campaign)])
        cols.append((yp - ym) / (2 * step))
    return np.stack(cols, axis=1)


def loss_and_grad(theta: np.ndarray, campaign: MeasurementCampaign, den: float | None = None):
    """Loss and real-coordinate gradient for a batch ``theta`` of shape ``(R, d)``.

    The gradient is packed as ``dL/dRe + 1j dL/dIm`` which equals
    ``J^H (r / |r|) / den`` with ``r`` the residuals; exact zeros get
    subgradient 0.
    """
    st = campaign.stacked()
    den = _denominator(campaign) if den is None else den
    s = sym_array(theta)[:, None]  # (R, 1, n, n)
    n = s.shape[-1]
    # one inverse per realization; (I - S D)^-1 = I + S (I - D S)^-1 D
    minv = np.linalg.inv(np.eye(n) - st.ss @ s)  # (R, p, n, n)
    w = minv @ st.st  # (I - D S)^-1 B
    a_s = st.rs @ s
    r = st.rt + a_s @ w - st.h
    mag = np.abs(r)
    loss_val = mag.sum(axis=(-3, -2, -1)) / den
    phase = np.divide(r, mag, out=np.zeros_like(r), where=mag > 0)
    u = st.rs + a_s @ minv @ st.ss  # A (I - S D)^-1
    q = (np.swapaxes(u, -1, -2) @ phase.conj() @ np.swapaxes(w, -1, -2)).sum(axis=1)
    i, j = _tri_indices(campaign.n_s)
    g = q[..., i, j] + np.where(i != j, q[..., j, i], 0)
    return loss_val, np.conj(g) / den


@dataclass(frozen=True)
class EstimatorSettings:
    initial_step: float = 0.05
    decay: float = 0.999
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_iters: int = 20000
    loss_tolerance: float = 1e-10
    n_restarts: int = 8
    init_scale: float = 0.1
    seed: int = 0
    patience: int = 2000

    def __post_init__(self):
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")


@dataclass
class EstimateReport:
    theta_hat: np.ndarray
    s_dut_hat: ScatteringMatrix
    final_loss: float
    loss_trace: list[float]
    restart_losses: list[float]
    converged: bool
    best_restart: int = 0
    iterations: list[int] = field(default_factory=list)


def initial_thetas(d: int, settings: EstimatorSettings) -> np.ndarray:
    rng = np.random.default_rng(settings.seed)
    z = rng.standard_normal((settings.n_restarts, d)) + 1j * rng.standard_normal((settings.n_restarts, d))
    return settings.init_scale * z / np.sqrt(2)


def noise_floor(campaign: MeasurementCampaign) -> float | None:
    """Expected loss at the true DUT given only measurement noise, if known."""
    if not campaign.noise_sigma:
        return None
    # E|n| for circular complex Gaussian with variance sigma^2
    mean_abs = campaign.noise_sigma * math.sqrt(math.pi) / 2
    return campaign.m * campaign.p * mean_abs / _denominator(campaign)


def estimate(
    campaign: MeasurementCampaign,
    settings: EstimatorSettings = EstimatorSettings(),
    theta0: np.ndarray | None = None,
) -> EstimateReport:
    """Multi-start Adam minimization of :func:`loss`.

    Restarts run as one batch but never interact: each keeps its own Adam
    moments and stops on its own when its best loss improved by less than
    ``loss_tolerance`` over ``patience`` iterations. The step size is
    multiplied by ``decay`` after every iteration.
    """
    den = _denominator(campaign)
    d = campaign.d
    theta = initial_thetas(d, settings) if theta0 is None else np.atleast_2d(np.asarray(theta0, complex)).copy()
    n_r = theta.shape[0]

    b1, b2, eps = settings.adam_beta1, settings.adam_beta2, settings.adam_epsilon
    mom1 = np.zeros((n_r, 2 * d))
    mom2 = np.zeros((n_r, 2 * d))
    active = np.ones(n_r, dtype=bool)
    best_loss = np.full(n_r, np.inf)
    best_theta = theta.copy()
    traces: list[list[float]] = [[] for _ in range(n_r)]
    history = np.full((min(settings.patience, settings.max_iters) + 1, n_r), np.inf)
    iters = np.zeros(n_r, dtype=int)
    step = settings.initial_step

    for t in range(1, settings.max_iters + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        with np.errstate(all="ignore"):
            try:
                lv, g = loss_and_grad(theta[idx], campaign, den)
            except np.linalg.LinAlgError:
                lv, g = np.full(idx.size, np.nan), np.zeros((idx.size, d), complex)
        bad = ~np.isfinite(lv) | ~np.all(np.isfinite(g), axis=1)
        if bad.any():
            # a restart that hits a resonance is frozen at its best point
            active[idx[bad]] = False
            idx, lv, g = idx[~bad], lv[~bad], g[~bad]
        improved = lv < best_loss[idx]
        best_loss[idx[improved]] = lv[improved]
        best_theta[idx[improved]] = theta[idx[improved]]
        for k, v in zip(idx, lv):
            traces[k].append(float(v))
        iters[idx] = t
        # ring buffer: slot t holds the best loss after iteration t
        window = history.shape[0]
        history[t % window, idx] = best_loss[idx]
        if t > settings.patience:
            stalled = history[(t + 1) % window, idx] - best_loss[idx] < settings.loss_tolerance
            active[idx[stalled]] = False

        gr = np.concatenate([g.real, g.imag], axis=1)
        mom1[idx] = b1 * mom1[idx] + (1 - b1) * gr
        mom2[idx] = b2 * mom2[idx] + (1 - b2) * gr**2
        mhat = mom1[idx] / (1 - b1**t)
        vhat = mom2[idx] / (1 - b2**t)
        upd = step * mhat / (np.sqrt(vhat) + eps)
        theta[idx] -= upd[:, :d] + 1j * upd[:, d:]
        step *= settings.decay

    # deterministic reduction: lowest loss, ties to the lowest restart index
    k = int(np.argmin(best_loss))
    theta_hat = best_theta[k]
    s_hat = sym(theta_hat)
    final = float(best_loss[k])
    floor = noise_floor(campaign)
    converged = final < (10 * floor if floor is not None else settings.loss_tolerance)
    if spectral_norm(s_hat.entries) > 1:
        warnings.warn("estimated DUT is not passive (spectral norm > 1)", RuntimeWarning, stacklevel=2)
    logger.debug("estimate: best restart %d, loss %.3e, %d iterations", k, final, iters[k])
    return EstimateReport(
        theta_hat=theta_hat,
        s_dut_hat=s_hat,
        final_loss=final,
        loss_trace=traces[k],
        restart_losses=[float(x) for x in best_loss],
        converged=bool(converged),
        best_restart=k,
        iterations=[int(x) for x in iters],
    )
