"""Resonance discovery and Rabi-rate extraction.

sweep_resonance evolves one scenario at a grid of modulation frequencies,
records the best population transfer into the two-photon target state at
each frequency, and locates the peak by quadratic interpolation through the
three highest neighboring samples, optionally refined by one 10x zoom.
fit_rabi pulls |Xi| out of a sampled population oscillation by fitting
A*cos(2|Xi| t + theta) + C.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .dispersive import two_photon_rate_closed_form
from .dynamics import DensityMatrix, Trajectory, evolve_lindblad, evolve_schrodinger
from .errors import (
    ConfigError,
    DomainError,
    FitError,
    NoResonanceError,
    NumericError,
    SweepBoundaryError,
)
from .hilbert import DISTINGUISHABLE, SpaceSpec, StateVector
from .model import DissipationRates, ModulationSchedule, SystemParams

# a peak must beat the median transfer by this factor to count as a resonance
BACKGROUND_FACTOR = 5.0
# below this absolute transfer nothing resonated, whatever the background says
TRANSFER_FLOOR = 1e-12
ZOOM_SHRINK = 10
POPULATION_SLACK = 1e-8


@dataclass(frozen=True)
class TransferScenario:
    """A sweepable experiment: everything fixed except the drive frequency.

    transition = (n, k) labels the targeted pair inside the n-excitation
    subspace; the transfer metric is the bare |k+2, n-k-2> population, the
    quantity these resonances actually move.

    sample_count and tol control each per-frequency evolution. When rates is
    given and nonzero the scenario evolves under the master equation.
    """

    space: SpaceSpec
    params: SystemParams
    schedules: tuple[ModulationSchedule, ...]
    psi0: StateVector
    transition: tuple[int, int]
    sample_count: int = 181
    tol: float = 1e-8
    rates: DissipationRates | None = None
    method: str = "auto"
    cutoff_policy: str = "warn"

    def __post_init__(self):
        if not self.schedules:
            raise ConfigError("a sweep scenario needs at least one modulation schedule")
        n, k = self.transition
        if k < 0 or n < 0:
            raise DomainError(f"transition labels (n={n}, k={k}) must be nonnegative")
        if k + 2 > self.params.n_qubits or n - k < 2:
            raise DomainError(
                f"pair (k={k}, k+2) does not exist for n={n}, N={self.params.n_qubits}"
            )
        if self.psi0.space != self.space:
            raise DomainError("initial state lives on a different space")
        if self.sample_count < 16:
            raise ConfigError("sample_count below 16 cannot resolve the transfer envelope")

    def target_indices(self) -> tuple[int, ...]:
        n, k = self.transition
        n_ph = n - k - 2
        if self.space.basis == DISTINGUISHABLE:
            return tuple(
                self.space.index(a, n_ph)
                for a in range(self.space.atom_dim)
                if self.space.excitations_of_atom_index(a) == k + 2
            )
        return (self.space.index(k + 2, n_ph),)


@dataclass
class SweepResult:
    """Grid, per-point transfer, and the interpolated peak of one sweep."""

    etas: np.ndarray
    transfer: np.ndarray
    peak_eta: float
    peak_width: float
    fit_diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.etas = np.asarray(self.etas, dtype=float)
        self.transfer = np.asarray(self.transfer, dtype=float)
        if self.etas.shape != self.transfer.shape:
            raise ConfigError("etas and transfer must have matching shapes")
        if not (self.etas[0] < self.peak_eta < self.etas[-1]):
            raise SweepBoundaryError(
                f"peak_eta={self.peak_eta:.9g} not inside "
                f"({self.etas[0]:.9g}, {self.etas[-1]:.9g})"
            )
        if np.any(self.transfer < 0.0) or np.any(self.transfer > 1.0):
            raise NumericError("transfer values escaped [0, 1]")


def _transfer_of(trajectory: Trajectory, indices: tuple[int, ...]) -> float:
    if trajectory.states is None:
        raise ConfigError("transfer needs a trajectory evolved with store_states=True")
    pops = np.zeros(len(trajectory.times))
    if isinstance(trajectory.states[0], StateVector):
        for i, st in enumerate(trajectory.states):
            amps = st.amplitudes
            pops[i] = sum(abs(amps[j]) ** 2 for j in indices)
    else:
        for i, st in enumerate(trajectory.states):
            pops[i] = sum(float(np.real(st.matrix[j, j])) for j in indices)
    top = float(np.max(pops))
    if top > 1.0 + POPULATION_SLACK:
        raise NumericError(f"target population {top:.6g} exceeds 1")
    return min(top, 1.0)


def _evolve_point(scenario: TransferScenario, eta: float, horizon: float) -> float:
    schedules = tuple(dataclasses.replace(s, eta=eta) for s in scenario.schedules)
    if scenario.rates is not None and not scenario.rates.all_zero:
        traj = evolve_lindblad(
            scenario.space,
            scenario.params,
            schedules,
            scenario.rates,
            DensityMatrix.from_state(scenario.psi0),
            (0.0, horizon),
            scenario.sample_count,
            tol=scenario.tol,
            method=scenario.method,
            store_states=True,
            cutoff_policy=scenario.cutoff_policy,
        )
    else:
        traj = evolve_schrodinger(
            scenario.space,
            scenario.params,
            schedules,
            scenario.psi0,
            (0.0, horizon),
            scenario.sample_count,
            tol=scenario.tol,
            method=scenario.method,
            store_states=True,
            cutoff_policy=scenario.cutoff_policy,
        )
    return _transfer_of(traj, scenario.target_indices())


def _evaluate(scenario, etas, horizon, workers) -> np.ndarray:
    if workers is not None and workers > 1 and len(etas) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(lambda e: _evolve_point(scenario, e, horizon), etas))
        return np.array(vals)
    return np.array([_evolve_point(scenario, e, horizon) for e in etas])


def _quad_vertex(x3, y3):
    """Vertex of the parabola through three samples.

    Returns (x_v, y_v, curvature, fell_back); falls back to the middle sample
    when the triple is not concave or the vertex escapes the triple's span.
    """
    coeffs = np.polyfit(x3, y3, 2)
    a, b, c = (float(v) for v in coeffs)
    if a >= 0.0:
        return float(x3[1]), float(y3[1]), a, True
    xv = -b / (2.0 * a)
    if not (x3[0] <= xv <= x3[2]):
        return float(x3[1]), float(y3[1]), a, True
    yv = c - b * b / (4.0 * a)
    return float(xv), float(yv), a, False


def _width_from_parabola(y_peak: float, curvature: float, fallback_width: float) -> float:
    # full width where the local parabola halves; a rough line-width proxy
    if curvature >= 0.0 or y_peak <= 0.0:
        return fallback_width
    return 2.0 * math.sqrt(y_peak / (-2.0 * curvature))


def sweep_resonance(
    scenario: TransferScenario,
    eta_range,
    grid_points: int,
    horizon: float | None = None,
    zoom: bool = True,
    workers: int | None = None,
) -> SweepResult:
    """Sweep the drive frequency and locate the transfer resonance.

    Every schedule in the scenario is driven at the same swept eta. horizon
    defaults to 1.2 * pi / |Xi_closed_form| of the scenario transition so a
    resonant point completes at least one full transfer. The peak is the
    vertex of the parabola through the three highest neighboring samples;
    with zoom=True the bracket around the coarse peak is resampled once on a
    10x finer grid and the vertex recomputed there.
    """
    lo, hi = float(eta_range[0]), float(eta_range[1])
    if not (lo < hi):
        raise ConfigError(f"eta_range ({lo}, {hi}) must be increasing")
    if lo <= 0.0:
        raise ConfigError("eta_range must be positive")
    if grid_points < 5:
        raise ConfigError("grid_points must be at least 5")

    n, k = scenario.transition
    if horizon is None:
        xi = two_photon_rate_closed_form(scenario.params, scenario.schedules, n, k)
        if abs(xi) == 0.0:
            raise ConfigError(
                "closed-form rate vanishes for this scenario; pass horizon explicitly"
            )
        horizon = 1.2 * math.pi / abs(xi)
    if horizon <= 0.0:
        raise ConfigError(f"horizon={horizon} must be positive")

    etas = np.linspace(lo, hi, grid_points)
    transfer = _evaluate(scenario, etas, horizon, workers)
    spacing = etas[1] - etas[0]

    i_star = int(np.argmax(transfer))
    background = float(np.median(transfer))
    peak_sample = float(transfer[i_star])
    if peak_sample < max(BACKGROUND_FACTOR * background, TRANSFER_FLOOR):
        raise NoResonanceError(
            f"best transfer {peak_sample:.3e} does not stand out of the "
            f"off-resonant background {background:.3e} (need {BACKGROUND_FACTOR}x)"
        )
    if i_star in (0, grid_points - 1):
        raise SweepBoundaryError(
            f"transfer peak sits at the sweep boundary eta={etas[i_star]:.9g}; "
            "widen eta_range"
        )

    coarse_x = etas[i_star - 1 : i_star + 2]
    coarse_y = transfer[i_star - 1 : i_star + 2]
    peak_eta, peak_val, curv, fell_back = _quad_vertex(coarse_x, coarse_y)
    diagnostics = {
        "horizon": horizon,
        "grid_spacing": float(spacing),
        "background": background,
        "coarse_peak_eta": peak_eta,
        "coarse_peak_transfer": peak_val,
        "vertex_fallback": fell_back,
        "zoom": False,
        "residuals": (coarse_y - np.polyval(np.polyfit(coarse_x, coarse_y, 2), coarse_x)),
    }
    width = _width_from_parabola(peak_val, curv, float(spacing))

    all_etas = etas
    all_transfer = transfer
    if zoom:
        z_etas = np.linspace(etas[i_star - 1], etas[i_star + 1], 2 * ZOOM_SHRINK + 1)
        known = {0: transfer[i_star - 1], ZOOM_SHRINK: transfer[i_star], 2 * ZOOM_SHRINK: transfer[i_star + 1]}
        new_j = [j for j in range(len(z_etas)) if j not in known]
        new_vals = _evaluate(scenario, z_etas[new_j], horizon, workers)
        z_transfer = np.empty(len(z_etas))
        for j, v in known.items():
            z_transfer[j] = v
        z_transfer[new_j] = new_vals

        j_star = int(np.argmax(z_transfer))
        diagnostics["zoom"] = True
        diagnostics["zoom_spacing"] = float(z_etas[1] - z_etas[0])
        if 0 < j_star < len(z_etas) - 1:
            zx = z_etas[j_star - 1 : j_star + 2]
            zy = z_transfer[j_star - 1 : j_star + 2]
            peak_eta, peak_val, curv, fell_back = _quad_vertex(zx, zy)
            width = _width_from_parabola(peak_val, curv, float(z_etas[1] - z_etas[0]))
            diagnostics["vertex_fallback"] = fell_back
            diagnostics["residuals"] = zy - np.polyval(np.polyfit(zx, zy, 2), zx)
        else:
            # zoomed maximum landed on the bracket edge; keep the coarse vertex
            diagnostics["zoom_edge"] = True

        order = np.argsort(np.concatenate([etas, z_etas[new_j]]))
        all_etas = np.concatenate([etas, z_etas[new_j]])[order]
        all_transfer = np.concatenate([transfer, new_vals])[order]

    diagnostics["peak_transfer"] = peak_val
    return SweepResult(
        etas=all_etas,
        transfer=np.clip(all_transfer, 0.0, 1.0),
        peak_eta=peak_eta,
        peak_width=width,
        fit_diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Rabi-rate fitting
# ---------------------------------------------------------------------------

@dataclass
class RabiFit:
    """Accepted cosine fit A*cos(2*rate*t + phase) + offset."""

    rate: float
    amplitude: float
    offset: float
    residual_rms: float
    phase: float = 0.0


def _select_observable(trajectory: Trajectory, selector) -> np.ndarray:
    if callable(selector):
        y = np.asarray(selector(trajectory), dtype=float)
    elif isinstance(selector, str):
        name, _, arg = selector.partition(":")
        if name == "n_ph":
            y = trajectory.n_ph
        elif name == "n_at":
            y = trajectory.n_at
        elif name in ("p_ph", "p_at"):
            if not arg:
                raise ConfigError(f"selector {selector!r} needs an index, e.g. '{name}:2'")
            idx = int(arg)
            y = trajectory.p_ph(idx) if name == "p_ph" else trajectory.p_at(idx)
        else:
            raise ConfigError(f"unknown observable selector {selector!r}")
    else:
        raise ConfigError("observable_selector must be a string or a callable")
    y = np.asarray(y, dtype=float)
    if y.shape != np.shape(trajectory.times):
        raise ConfigError("selected observable does not match the sample grid")
    return y


def _linear_cosine_rms(t, y, w):
    """Residual rms of the best A*cos(wt)+B*sin(wt)+C at fixed frequency."""
    design = np.column_stack([np.cos(w * t), np.sin(w * t), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return math.sqrt(float(np.mean(resid**2))), coef


def fit_rabi(trajectory: Trajectory, observable_selector) -> RabiFit:
    """Fit A*cos(2|Xi| t + theta) + C to one sampled observable.

    The frequency seed is the dominant line of the demeaned sample spectrum,
    refined on a local frequency grid before the nonlinear fit. The fit is
    rejected unless the data spans >= 1.5 fitted periods and the residual rms
    stays below 0.1x the fitted amplitude.
    """
    t = np.asarray(trajectory.times, dtype=float)
    y = _select_observable(trajectory, observable_selector)
    if len(t) < 16:
        raise ConfigError("need at least 16 samples to fit an oscillation")
    steps = np.diff(t)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(abs(t[-1]), 1.0):
        raise ConfigError("fit_rabi needs a uniform sample grid")
    dt = float(steps[0])

    yc = y - y.mean()
    if float(np.max(np.abs(yc))) == 0.0:
        raise FitError("observable is constant; nothing to fit")
    spectrum = np.abs(np.fft.rfft(yc))
    kbin = int(np.argmax(spectrum[1:])) + 1
    freqs = np.fft.rfftfreq(len(t), dt)
    w_seed = 2.0 * math.pi * float(freqs[kbin])

    # one-bin-wide local search keeps curve_fit inside the right basin
    w_lo = 2.0 * math.pi * float(freqs[max(kbin - 1, 1)])
    w_hi = 2.0 * math.pi * float(freqs[min(kbin + 1, len(freqs) - 1)])
    if w_hi <= w_lo:
        w_lo, w_hi = 0.5 * w_seed, 1.5 * w_seed
    best = (math.inf, w_seed, None)
    for w in np.linspace(w_lo, w_hi, 41):
        if w <= 0.0:
            continue
        rms, coef = _linear_cosine_rms(t, y, w)
        if rms < best[0]:
            best = (rms, w, coef)
    _, w0, coef0 = best
    a0 = math.hypot(float(coef0[0]), float(coef0[1]))
    th0 = math.atan2(-float(coef0[1]), float(coef0[0]))
    c0 = float(coef0[2])

    def model(tt, a, w, th, c):
        return a * np.cos(w * tt + th) + c

    try:
        popt, _ = curve_fit(model, t, y, p0=[a0, w0, th0, c0], maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"cosine fit did not converge: {exc}") from exc
    a, w, th, c = (float(v) for v in popt)
    if w < 0.0:
        w, th = -w, -th
    if a < 0.0:
        a, th = -a, th + math.pi
    th = (th + math.pi) % (2.0 * math.pi) - math.pi

    resid = y - model(t, a, w, th, c)
    residual_rms = math.sqrt(float(np.mean(resid**2)))
    if not (w > 0.0 and math.isfinite(w)):
        raise FitError(f"fitted frequency {w} is not a positive finite number")
    span_periods = (t[-1] - t[0]) * w / (2.0 * math.pi)
    if span_periods < 1.5:
        raise FitError(
            f"trajectory spans {span_periods:.2f} fitted periods; need >= 1.5"
        )
    if residual_rms >= 0.1 * a:
        raise FitError(
            f"residual rms {residual_rms:.3e} >= 0.1 x amplitude {a:.3e}; "
            "the observable is not a clean two-level oscillation"
        )
    return RabiFit(rate=w / 2.0, amplitude=a, offset=c, residual_rms=residual_rms, phase=th)
