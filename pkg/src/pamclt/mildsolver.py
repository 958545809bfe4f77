"""Exact-propagator integrator in self-similar (ray) coordinates.

The evolution form of the model writes the normalized field U(t, x) as a
unit-mean field driven along rays y ~ (s/t) x: noise influences U(t, x)
at speed x/t, which for boxes up to N ~ 10^3 is far beyond the numerical
domain of dependence of any explicit lattice step.  Substituting
rho = x / t turns the exact one-step transition kernel

    U_{k+1}(x) = int p_{dt t_k / t_{k+1}}(y - (t_k/t_{k+1}) x) U_k(y) (1 + W_k(y)) dy

into a plain stationary convolution

    V_{k+1} = blur(1/t_k - 1/t_{k+1}) [ V_k (1 + W~_k) ],   V_k(rho) = U(t_k, rho t_k),

which is evaluated spectrally on a periodic rho-lattice: exact heat
transport at any speed, unconditionally stable, and the noise slice W~_k
is stationary in rho with covariance dt f(t_k (rho - rho')), synthesized
with band-mass spectral weights.  The zero-noise dynamics fix V == 1 to
machine precision, which is the discrete form of the unit-mean property.

Replicas use counter-based per-replica streams and a fixed chunk layout,
so ensembles are bit-reproducible for any thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .kernels import CovarianceModel
from .simulate import BLOWUP_LIMIT, BlowUpError, GridError, NoiseSynthesizer, replica_rng

_FFT_WORKERS = max(1, min(2, os.cpu_count() or 1))
_DEFAULT_BATCH = {1: 256, 2: 64, 3: 8}


@dataclass(frozen=True)
class RayGrid:
    """Periodic rho-lattice for the self-similar integrator.

    The domain is [-pad_left, period - pad_left) with spacing `spacing`;
    the averaging boxes [0, N/t] must fit inside with a wrap margin.
    """

    dim: int
    spacing: float
    n: int
    dt: float
    horizon: float
    origin_index: int

    def __post_init__(self):
        if self.spacing <= 0 or self.dt <= 0 or self.horizon <= self.dt:
            raise GridError("ray grid needs positive spacing, dt, and horizon > dt")
        if not 0 <= self.origin_index < self.n:
            raise GridError("origin index outside the lattice")

    @property
    def period(self) -> float:
        return self.n * self.spacing

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt)) - 1

    @classmethod
    def plan(
        cls,
        dim: int,
        h: float,
        dt: float,
        horizon: float,
        n_list: Sequence[float],
        times: Sequence[float],
        period: Optional[float] = None,
    ) -> "RayGrid":
        """Size the rho-domain for given boxes and sample times.

        spacing = h / horizon gives x-resolution h at the final time and
        finer earlier.  The default period adds a transport margin of
        3 sqrt(1/dt - 1/T) (the total blur spread) plus padding; scaling
        studies of infrared-heavy kernels should pass a larger `period`.
        """
        if not times or min(times) <= 0:
            raise GridError("need positive sample times")
        spacing = h / horizon
        rbox = max(n_list) / min(times)
        margin = 3.0 * math.sqrt(max(1.0 / dt - 1.0 / horizon, 0.0)) + 8.0
        want = period if period is not None else 1.3 * rbox + 2.0 * margin
        if want < rbox + 2.0 * margin:
            raise GridError(
                f"ray period {want:.1f} too small for box {rbox:.1f} plus margins {margin:.1f}"
            )
        n = int(math.ceil(want / spacing / 32.0)) * 32
        left = 0.5 * (n * spacing - rbox)
        return cls(
            dim=dim,
            spacing=spacing,
            n=n,
            dt=dt,
            horizon=horizon,
            origin_index=int(round(left / spacing)),
        )


def _box_weights(grid: RayGrid, n_phys: float, t: float) -> np.ndarray:
    """Per-axis Riemann weights of the box [0, N/t) with a fractional end cell."""
    edge = n_phys / t / grid.spacing
    c = int(math.floor(edge))
    frac = edge - c
    if grid.origin_index + c + 1 >= grid.n:
        raise GridError(f"box N={n_phys} at t={t} leaves the ray domain")
    w = np.zeros(grid.n)
    w[grid.origin_index : grid.origin_index + c] = 1.0
    if frac > 0:
        w[grid.origin_index + c] = frac
    return w


@dataclass
class RayRunResult:
    """Ensemble of spatial averages from the ray integrator."""

    averages: np.ndarray          # (replicas, len(n_list), len(times))
    negativity: np.ndarray        # (replicas,) fraction of V < 0 at the horizon
    probes: Optional[np.ndarray]  # (replicas, len(times), len(probe_x)) or None


def _plan_steps(grid: RayGrid, model: CovarianceModel, zero_noise: bool):
    """Precompute per-step noise amplitudes and blur multipliers."""
    dim, n, dr, dt = grid.dim, grid.n, grid.spacing, grid.dt
    freqs = 2.0 * math.pi * np.fft.fftfreq(n, d=dr)
    rfreqs = 2.0 * math.pi * np.fft.rfftfreq(n, d=dr)
    if dim == 1:
        k2r = rfreqs**2
    else:
        axes = [freqs] * (dim - 1) + [rfreqs]
        grids = np.meshgrid(*axes, indexing="ij")
        k2r = sum(g * g for g in grids)
    amps = []
    blurs = []
    t = grid.dt
    for _ in range(grid.n_steps):
        if zero_noise:
            amps.append(None)
        else:
            synth = NoiseSynthesizer(model, dim, n, dr, dt, stretch=t)
            amps.append(synth)
        tn = t + dt
        blurs.append(np.exp(-k2r * (1.0 / t - 1.0 / tn) / 2.0))
        t = tn
    return amps, blurs


def simulate_averages(
    model: CovarianceModel,
    grid: RayGrid,
    n_list: Sequence[float],
    times: Sequence[float],
    replicas: int,
    master_seed: int,
    threads: int = 1,
    zero_noise: bool = False,
    batch: Optional[int] = None,
    probe_x: Optional[Sequence] = None,
) -> RayRunResult:
    """Run the ensemble and return S_{N,t} for every replica, box, and time.

    Deterministic in (model, grid, n_list, times, replicas, master_seed):
    the chunk layout is fixed by `batch` alone, and each replica owns a
    counter-based stream, so results do not depend on `threads`.
    """
    times = [float(t) for t in times]
    step_of = {}
    for t in times:
        k = round(t / grid.dt)
        if abs(t - k * grid.dt) > 1e-9 or not 1 <= k <= round(grid.horizon / grid.dt):
            raise GridError(f"sample time {t} is not a step multiple in (0, T]")
        step_of[t] = int(k)
    amps, blurs = _plan_steps(grid, model, zero_noise)
    weights = {
        (ni, t): [_box_weights(grid, n_phys, t) for _ in range(grid.dim)]
        for ni, n_phys in enumerate(n_list)
        for t in times
    }
    B = batch or _DEFAULT_BATCH[grid.dim]
    out = np.zeros((replicas, len(n_list), len(times)))
    neg = np.zeros(replicas)
    probes = None
    probe_idx = None
    if probe_x is not None:
        probe_idx = []
        for x in probe_x:
            pt = np.atleast_1d(np.asarray(x, dtype=float))
            probe_idx.append(pt)
        probes = np.zeros((replicas, len(times), len(probe_idx)))

    def run_chunk(b0: int):
        bm = min(B, replicas - b0)
        rngs = [replica_rng(master_seed, b0 + i) for i in range(bm)]
        shape = (bm,) + (grid.n,) * grid.dim
        V = np.ones(shape)
        fft_axes = tuple(range(1, grid.dim + 1))
        for ti, tv in enumerate(times):
            # at t0 = dt the field is identically one: averages vanish
            if step_of[tv] == 1 and probe_idx is not None:
                probes[b0 : b0 + bm, ti, :] = 1.0
        t = grid.dt
        for k in range(grid.n_steps):
            if not zero_noise:
                synth = amps[k]
                W = np.stack([synth.sample(r) for r in rngs])
                V = V * (1.0 + W)
            V = sfft.irfftn(
                sfft.rfftn(V, axes=fft_axes, workers=_FFT_WORKERS) * blurs[k],
                axes=fft_axes,
                s=(grid.n,) * grid.dim,
                workers=_FFT_WORKERS,
            )
            t += grid.dt
            kidx = k + 2  # state is now at time (k+2) * dt
            peak = float(np.max(np.abs(V)))
            if not peak < BLOWUP_LIMIT:
                site = np.unravel_index(int(np.argmax(np.abs(V))), V.shape)
                err = BlowUpError(t, site[1:], peak)
                err.replica = b0 + int(site[0])
                raise err
            for ti, tv in enumerate(times):
                if step_of[tv] != kidx:
                    continue
                for ni in range(len(n_list)):
                    w_axes = weights[(ni, tv)]
                    acc = V - 1.0
                    for ax, wvec in enumerate(w_axes):
                        acc = np.tensordot(acc, wvec, axes=([1], [0]))
                    scale = (grid.spacing * tv / n_list[ni]) ** grid.dim
                    out[b0 : b0 + bm, ni, ti] = acc * scale
                if probe_idx is not None:
                    for pi, pt in enumerate(probe_idx):
                        idx = tuple(
                            (int(round(c / tv / grid.spacing)) + grid.origin_index) % grid.n
                            for c in pt
                        )
                        probes[b0 : b0 + bm, ti, pi] = V[(slice(None),) + idx]
        neg[b0 : b0 + bm] = np.mean(V < 0.0, axis=fft_axes)

    starts = list(range(0, replicas, B))
    try:
        if threads <= 1:
            for b0 in starts:
                run_chunk(b0)
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run_chunk, starts))
    except BlowUpError as err:
        # completed chunks are left intact so callers can flush partials
        err.partial = RayRunResult(averages=out, negativity=neg, probes=probes)
        raise
    return RayRunResult(averages=out, negativity=neg, probes=probes)
