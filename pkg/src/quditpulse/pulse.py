"""Carrier-wave/B-spline pulse parameterization.

A control pulse for qudit k is built from N_f carrier waves at fixed
rotating-frame frequencies, each with a slowly varying complex envelope
expanded in N_b uniform quadratic B-splines:

    p_k(t) = sum_{j,b} Re{ alpha_{k,j,b} e^{i Omega_{k,j} t} } S_b(t)
    q_k(t) = sum_{j,b} Im{ alpha_{k,j,b} e^{i Omega_{k,j} t} } S_b(t)

The real coefficient vector alpha is laid out with index
((k*N_f + j)*N_b + b)*2 + c, c=0 for the real and c=1 for the imaginary
part.  The first and last spline of every (k, j) channel are pinned to
zero so pulses start and end quietly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .model import TWO_PI, QuditSystem


class RefitError(RuntimeError):
    """Raised when the least-squares re-parameterization is degenerate."""


@dataclass(frozen=True)
class PulseParams:
    """A concrete control pulse: duration, carriers, and spline coefficients."""

    T: float
    num_controls: int
    carriers: tuple[tuple[float, ...], ...]
    N_b: int
    alpha: np.ndarray
    alpha_max: float

    def __post_init__(self) -> None:
        if self.T <= 0:
            raise ValueError(f"duration must be positive, got {self.T}")
        if self.N_b < 3:
            raise ValueError(f"need at least 3 splines, got {self.N_b}")
        if len(self.carriers) != self.num_controls:
            raise ValueError("one carrier list per control required")
        nf = len(self.carriers[0])
        if any(len(c) != nf for c in self.carriers):
            raise ValueError("all controls must carry the same number of carriers")
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (2 * self.num_controls * nf * self.N_b,):
            raise ValueError(
                f"alpha has length {alpha.size}, expected "
                f"{2 * self.num_controls * nf * self.N_b}"
            )
        if np.any(np.abs(alpha) > self.alpha_max * (1 + 1e-12)):
            raise ValueError("alpha exceeds the amplitude bound")
        if np.any(alpha[self.boundary_mask()] != 0.0):
            raise ValueError("boundary spline coefficients must be exactly zero")
        object.__setattr__(self, "alpha", alpha)

    @property
    def num_carriers(self) -> int:
        return len(self.carriers[0])

    def alpha_complex(self) -> np.ndarray:
        """Coefficients as a complex (K, N_f, N_b) array."""
        a = self.alpha.reshape(self.num_controls, self.num_carriers, self.N_b, 2)
        return a[..., 0] + 1j * a[..., 1]

    def boundary_mask(self) -> np.ndarray:
        """Flat boolean mask selecting the pinned first/last spline coefficients."""
        mask = np.zeros((self.num_controls, self.num_carriers, self.N_b, 2), dtype=bool)
        mask[:, :, 0, :] = True
        mask[:, :, self.N_b - 1, :] = True
        return mask.reshape(-1)

    def with_alpha(self, alpha: np.ndarray) -> "PulseParams":
        return replace(self, alpha=np.asarray(alpha, dtype=float))


def carrier_frequencies(
    sys: QuditSystem,
) -> tuple[list[list[float]], list[list[float]]]:
    """Lab and rotating-frame carrier frequencies.

    Lab carriers for qudit k sit at its transition resonances
    omega_k + j*xi_k, j = 0..d-2.  Each single-qudit control carries its
    own d-1 resonances; for two qudits every control carries the union of
    both qudits' resonances (2(d-1) carriers) to exploit cross-resonance
    driving.  Rotating-frame values are lab values minus omega_rot.
    """
    lab = [
        [sys.omega[k] + j * sys.xi[k] for j in range(sys.d - 1)]
        for k in range(sys.num_qudits)
    ]
    if sys.num_qudits == 1:
        shared = lab
    else:
        union = lab[0] + lab[1]
        shared = [list(union) for _ in range(sys.num_qudits)]
    rot = [[f - sys.omega_rot for f in ctrl] for ctrl in shared]
    return lab, rot


def rotating_frame_frequency(sys: QuditSystem) -> float:
    """Midpoint of the extreme lab carrier frequencies, in rad/ns."""
    lab, _ = carrier_frequencies(sys)
    flat = [f for ctrl in lab for f in ctrl]
    return 0.5 * (max(flat) + min(flat))


def num_bsplines(T: float) -> int:
    """Spline count keeping the envelope density near one spline per 10 ns.

    Clamped below at 3 (two pinned boundary splines plus one interior) so
    that very short durations stay representable.
    """
    if T <= 0:
        raise ValueError(f"duration must be positive, got {T}")
    # Nearest integer with half-up tie break.
    return max(3, int(math.floor(T / 10.0 + 0.5)) + 2)


def alpha_bound(num_carriers: int) -> float:
    """Per-coefficient bound (rad/ns) keeping lab-frame amplitudes <= 2*pi*40 MHz."""
    if num_carriers < 1:
        raise ValueError("need at least one carrier")
    return TWO_PI * 40.0 / (2.0 * math.sqrt(2.0) * num_carriers) * 1e-3


def _bspline_kernel(u: np.ndarray) -> np.ndarray:
    """Centered uniform quadratic B-spline, support |u| <= 1.5, peak 3/4."""
    au = np.abs(u)
    return np.where(
        au <= 0.5,
        0.75 - u * u,
        np.where(au <= 1.5, 0.5 * (1.5 - au) ** 2, 0.0),
    )


def basis_matrix(N_b: int, T: float, t: np.ndarray) -> np.ndarray:
    """Values of all N_b basis splines at times t, shape (len(t), N_b).

    Spline centers are equally spaced from 0 to T, so every basis function
    spans three inter-center intervals.
    """
    if N_b < 3:
        raise ValueError(f"need at least 3 splines, got {N_b}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < -1e-9) or np.any(t > T * (1 + 1e-12) + 1e-9):
        raise ValueError("evaluation time outside [0, T]")
    spacing = T / (N_b - 1)
    centers = spacing * np.arange(N_b)
    return _bspline_kernel((t[:, None] - centers[None, :]) / spacing)


def basis_values(N_b: int, T: float, t: float) -> np.ndarray:
    """Basis spline values at a single time, shape (N_b,)."""
    return basis_matrix(N_b, T, np.asarray([t]))[0]


def eval_controls(params: PulseParams, t) -> tuple[np.ndarray, np.ndarray]:
    """Rotating-frame control pair (p_k, q_k) at time(s) t, in rad/ns.

    Returns arrays of shape (K,) for scalar t and (K, len(t)) otherwise.
    """
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    tt = np.atleast_1d(t_arr)
    basis = basis_matrix(params.N_b, params.T, tt)  # (M, N_b)
    coeff = params.alpha_complex()  # (K, N_f, N_b)
    p = np.empty((params.num_controls, tt.size))
    q = np.empty_like(p)
    for k in range(params.num_controls):
        envelopes = coeff[k] @ basis.T  # (N_f, M)
        phases = np.exp(1j * np.outer(np.asarray(params.carriers[k]), tt))
        total = np.sum(envelopes * phases, axis=0)
        p[k] = total.real
        q[k] = total.imag
    if scalar:
        return p[:, 0], q[:, 0]
    return p, q


def lab_frame_control(params: PulseParams, omega_rot: float, t) -> np.ndarray:
    """Lab-frame drive amplitude f_k(t) = 2*Re{(p_k + i q_k) e^{i omega_rot t}}."""
    p, q = eval_controls(params, t)
    t_arr = np.asarray(t, dtype=float)
    return 2.0 * (p * np.cos(omega_rot * t_arr) - q * np.sin(omega_rot * t_arr))


def default_params(sys: QuditSystem, T: float) -> PulseParams:
    """Zero-amplitude pulse with the standard carriers, spline count and bound."""
    _, rot = carrier_frequencies(sys)
    carriers = tuple(tuple(ctrl) for ctrl in rot)
    n_b = num_bsplines(T)
    n_f = len(carriers[0])
    alpha = np.zeros(2 * sys.num_qudits * n_f * n_b)
    return PulseParams(T, sys.num_qudits, carriers, n_b, alpha, alpha_bound(n_f))


def random_guess(params: PulseParams, scale: float, rng) -> np.ndarray:
    """Uniform random coefficients in +-scale*alpha_max, boundary splines zero.

    ``rng`` is a numpy Generator or an integer seed.
    """
    if not 0.0 <= scale <= 1.0:
        raise ValueError(f"scale must lie in [0, 1], got {scale}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    bound = scale * params.alpha_max
    alpha = rng.uniform(-bound, bound, size=params.alpha.shape)
    alpha[params.boundary_mask()] = 0.0
    return alpha


# Oversampling factor of the least-squares grid relative to the spline spacing.
REFIT_SAMPLES_PER_INTERVAL = 8


def refit(params: PulseParams, T_new: float) -> PulseParams:
    """Re-parameterize a pulse for a new duration by least squares.

    The target waveform is the existing pulse on [0, min(T, T_new)],
    extended with zero amplitude beyond T when lengthening.  Each carrier's
    complex envelope is fitted independently on the new spline basis
    (the carrier factor is common to both sides, so fitting envelopes and
    fitting modulated waveforms are equivalent); results are clamped to
    the amplitude bound and the boundary splines are pinned back to zero.
    """
    if T_new <= 0:
        raise ValueError(f"new duration must be positive, got {T_new}")
    n_b_new = num_bsplines(T_new)
    n_samples = REFIT_SAMPLES_PER_INTERVAL * (n_b_new - 1) + 1
    ts = np.linspace(0.0, T_new, n_samples)

    coeff = params.alpha_complex()  # (K, N_f, N_b)
    k_ctrl, n_f = coeff.shape[0], coeff.shape[1]
    inside = ts <= params.T * (1 + 1e-12)
    targets = np.zeros((k_ctrl, n_f, n_samples), dtype=complex)
    if np.any(inside):
        basis_old = basis_matrix(params.N_b, params.T, ts[inside])
        targets[:, :, inside] = coeff @ basis_old.T

    design = basis_matrix(n_b_new, T_new, ts)[:, 1:-1]  # interior splines only
    rhs = targets.reshape(k_ctrl * n_f, n_samples).T
    rhs = np.concatenate([rhs.real, rhs.imag], axis=1)
    solution, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=None)
    if rank < n_b_new - 2:
        raise RefitError(
            f"rank-deficient refit ({rank} < {n_b_new - 2}); grid too coarse"
        )

    re_part = solution[:, : k_ctrl * n_f].T.reshape(k_ctrl, n_f, n_b_new - 2)
    im_part = solution[:, k_ctrl * n_f :].T.reshape(k_ctrl, n_f, n_b_new - 2)
    alpha = np.zeros((k_ctrl, n_f, n_b_new, 2))
    alpha[:, :, 1:-1, 0] = np.clip(re_part, -params.alpha_max, params.alpha_max)
    alpha[:, :, 1:-1, 1] = np.clip(im_part, -params.alpha_max, params.alpha_max)
    return PulseParams(
        T_new,
        params.num_controls,
        params.carriers,
        n_b_new,
        alpha.reshape(-1),
        params.alpha_max,
    )


def pulse_doc(sys: QuditSystem, params: PulseParams, fidelity: float,
              metadata: dict | None = None) -> dict:
    """JSON-serializable pulse document (floats round-trip exactly)."""
    return {
        "system": {
            "num_qudits": sys.num_qudits,
            "d": sys.d,
            "guard": sys.guard,
            "omega": list(sys.omega),
            "xi": list(sys.xi),
            "coupling_J": sys.coupling,
            "omega_rot": sys.omega_rot,
        },
        "T_ns": params.T,
        "carriers_rot": [list(c) for c in params.carriers],
        "N_b": params.N_b,
        "alpha": params.alpha.tolist(),
        "alpha_max": params.alpha_max,
        "fidelity": fidelity,
        "metadata": dict(metadata or {}, tool_version=__version__),
    }


def pulse_from_doc(doc: dict) -> tuple[QuditSystem, PulseParams, float, dict]:
    s = doc["system"]
    sys = QuditSystem(
        num_qudits=s["num_qudits"],
        d=s["d"],
        guard=s["guard"],
        omega=tuple(s["omega"]),
        xi=tuple(s["xi"]),
        coupling=s["coupling_J"],
        omega_rot=s["omega_rot"],
    )
    params = PulseParams(
        T=doc["T_ns"],
        num_controls=len(doc["carriers_rot"]),
        carriers=tuple(tuple(c) for c in doc["carriers_rot"]),
        N_b=doc["N_b"],
        alpha=np.asarray(doc["alpha"], dtype=float),
        alpha_max=doc["alpha_max"],
    )
    return sys, params, doc["fidelity"], doc["metadata"]


def save_pulse(path, sys: QuditSystem, params: PulseParams, fidelity: float,
               metadata: dict | None = None) -> None:
    """Write a pulse and its system to JSON."""
    with open(path, "w") as fh:
        json.dump(pulse_doc(sys, params, fidelity, metadata), fh, indent=2)
        fh.write("\n")


def load_pulse(path) -> tuple[QuditSystem, PulseParams, float, dict]:
    """Read a pulse JSON written by :func:`save_pulse`."""
    with open(path) as fh:
        return pulse_from_doc(json.load(fh))
