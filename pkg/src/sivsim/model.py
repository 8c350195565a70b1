"""Parametric model of the SiV- centre: levels, phonon rates, optical branching.

The ground (and lowest excited) manifold is modelled in the basis
``{e+, e-} x {up, down}`` with

    H = (lambda/2) Lz sz + strain_x tx + strain_y ty
        + q muB Bz Lz + (g/2) muB (B . s)

where ``Lz``/``tx``/``ty`` act on the orbital doublet and ``s`` are Pauli
matrices on the spin. All energies are in Hz.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import defaults
from .constants import MU_B_HZ_PER_G, boltzmann_exponent

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)

# Spin operators on the 4-dim orbital x spin space.
SPIN_OPS = tuple(np.kron(_I2, s) for s in (_SX, _SY, _SZ))

# Levels of the six-level optical graph.
LB_DOWN, LB_UP, UB_DOWN, UB_UP, EX_DOWN, EX_UP = range(6)
LEVEL_NAMES = ("LB_down", "LB_up", "UB_down", "UB_up", "EX_down", "EX_up")


@dataclass(frozen=True)
class SivParams:
    """Physical constants of one emitter.

    Frequencies in Hz, times in s, rates in 1/s. The ``*_es`` fields describe
    the lower excited branch (LB'); ``r_max``, ``offres_fraction`` and
    ``eta_collect`` set the optical drive ceiling, the off-resonant
    excitation of the undriven spin line, and the photon collection
    efficiency.
    """

    lambda_so: float = defaults.OPTICAL_EMITTER["lambda_so"]
    strain_x: float = defaults.OPTICAL_EMITTER["strain_x"]
    strain_y: float = defaults.OPTICAL_EMITTER["strain_y"]
    g_spin: float = defaults.OPTICAL_EMITTER["g_spin"]
    q_orbital: float = defaults.OPTICAL_EMITTER["q_orbital"]
    lambda_so_es: float = defaults.OPTICAL_EMITTER["lambda_so_es"]
    strain_x_es: float = defaults.OPTICAL_EMITTER["strain_x_es"]
    strain_y_es: float = defaults.OPTICAL_EMITTER["strain_y_es"]
    g_spin_es: float = defaults.OPTICAL_EMITTER["g_spin_es"]
    q_orbital_es: float = defaults.OPTICAL_EMITTER["q_orbital_es"]
    tau_optical: float = defaults.OPTICAL_EMITTER["tau_optical"]
    tau_ub: float = defaults.OPTICAL_EMITTER["tau_ub"]
    gamma0_phonon: float = defaults.OPTICAL_EMITTER["gamma0_phonon"]
    branch_ub: float = defaults.OPTICAL_EMITTER["branch_ub"]
    gamma_t1: float = defaults.OPTICAL_EMITTER["gamma_t1"]
    delta_g: float = defaults.OPTICAL_EMITTER["delta_g"]
    r_max: float = defaults.OPTICAL_EMITTER["r_max"]
    offres_fraction: float = defaults.OPTICAL_EMITTER["offres_fraction"]
    eta_collect: float = defaults.OPTICAL_EMITTER["eta_collect"]

    def __post_init__(self):
        for name in ("lambda_so", "lambda_so_es", "tau_optical", "tau_ub",
                     "gamma0_phonon", "gamma_t1", "r_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if not 0 <= self.branch_ub < 1:
            raise ValueError(f"branch_ub must lie in [0, 1), got {self.branch_ub!r}")
        for name in ("q_orbital", "q_orbital_es", "eta_collect"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {getattr(self, name)!r}")
        for name in ("delta_g", "offres_fraction"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def preset(cls, name: str = "optical", **overrides) -> "SivParams":
        """Named parameter set: ``"optical"`` or ``"mw"`` (strained)."""
        table = {"optical": defaults.OPTICAL_EMITTER, "mw": defaults.MW_EMITTER}
        try:
            base = table[name]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(table)}") from None
        return cls(**{**base, **overrides})

    def replace(self, **changes) -> "SivParams":
        return replace(self, **changes)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class FieldConfig:
    """Static magnetic field: magnitude in Gauss, angle to the SiV axis in degrees."""

    b_mag: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.b_mag < 0:
            raise ValueError(f"b_mag must be >= 0, got {self.b_mag!r}")
        if not 0 <= self.alpha <= 90:
            raise ValueError(f"alpha must lie in [0, 90] degrees, got {self.alpha!r}")

    @property
    def components(self):
        """(Bx, Bz) in Gauss."""
        a = np.radians(self.alpha)
        return self.b_mag * np.sin(a), self.b_mag * np.cos(a)


@dataclass(frozen=True)
class LevelDiagram:
    ground_energies: np.ndarray
    ground_vectors: np.ndarray  # columns ordered LB_down, LB_up, UB_down, UB_up
    excited_energies: np.ndarray
    excited_vectors: np.ndarray
    delta_gs: float
    f_qubit: float
    f_down: float
    f_up: float
    spin_overlap: float
    branching: np.ndarray  # rows: excited (down', up'); cols: ground (down, up)


@dataclass(frozen=True)
class RateSet:
    gamma_plus: float
    gamma_minus: float
    gamma_par: float
    gamma_perp: float
    r_scatter: float
    gamma_t1: float
    gamma_ub_branch: float = 0.0
    gamma_ub_decay: float = 0.0
    cyclicity_down: float = 1.0
    cyclicity_up: float = 1.0
    r_offres: float = 0.0
    t1_up: float = 0.0
    t1_down: float = 0.0
    transition: str = "down"

    @property
    def gamma_optical(self):
        return self.gamma_par + self.gamma_perp + self.gamma_ub_branch


def _siv_hamiltonian(lam, sx_, sy_, q, g, field_cfg):
    bx, bz = field_cfg.components
    lz = np.kron(_SZ, _I2)
    h = (0.5 * lam * np.kron(_SZ, _SZ)
         + sx_ * np.kron(_SX, _I2)
         + sy_ * np.kron(_SY, _I2)
         + q * MU_B_HZ_PER_G * bz * lz
         + 0.5 * g * MU_B_HZ_PER_G * (bx * SPIN_OPS[0] + bz * SPIN_OPS[2]))
    return h


def ground_hamiltonian(params: SivParams, field_cfg: FieldConfig) -> np.ndarray:
    """4x4 ground-state Hamiltonian in Hz."""
    return _siv_hamiltonian(params.lambda_so, params.strain_x, params.strain_y,
                            params.q_orbital, params.g_spin, field_cfg)


def excited_hamiltonian(params: SivParams, field_cfg: FieldConfig) -> np.ndarray:
    """4x4 Hamiltonian of the excited manifold (only its lower doublet is used)."""
    return _siv_hamiltonian(params.lambda_so_es, params.strain_x_es, params.strain_y_es,
                            params.q_orbital_es, params.g_spin_es, field_cfg)


def closed_form_delta_gs(params: SivParams) -> float:
    """Zero-field orbital splitting sqrt(lambda^2 + 4 |strain|^2)."""
    return float(np.sqrt(params.lambda_so ** 2
                         + 4 * (params.strain_x ** 2 + params.strain_y ** 2)))


def _fix_phase(vecs):
    out = vecs.copy()
    for k in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, k])))
        out[:, k] *= np.conj(out[i, k]) / abs(out[i, k])
    return out


def _spin_axis(field_cfg):
    if field_cfg.b_mag == 0:
        return SPIN_OPS[2]
    # unit vector from the angle; dividing components by a subnormal b_mag overflows
    a = np.radians(field_cfg.alpha)
    return np.sin(a) * SPIN_OPS[0] + np.cos(a) * SPIN_OPS[2]


def _sorted_branches(h, field_cfg):
    """Eigen-decompose and order columns (down, up) inside each branch."""
    evals, evecs = np.linalg.eigh(h)
    scale = max(np.max(np.abs(evals)), 1.0)
    axis = _spin_axis(field_cfg)
    vals, cols = [], []
    for lo in (0, 2):
        v = evecs[:, lo:lo + 2]
        e = evals[lo:lo + 2]
        if abs(e[1] - e[0]) < 1e-12 * scale:
            # degenerate doublet: resolve by the spin projection along the field
            proj = v.conj().T @ axis @ v
            w, u = np.linalg.eigh(proj)
            v = v @ u
            e = np.array([np.real(np.vdot(v[:, k], h @ v[:, k])) for k in range(2)])
        s = np.array([np.real(np.vdot(v[:, k], axis @ v[:, k])) for k in range(2)])
        order = np.argsort(s, kind="stable")  # spin down first
        vals.extend(e[order])
        cols.extend(v[:, order].T)
    return np.array(vals), _fix_phase(np.array(cols).T)


def _branching(gv, ev):
    # orbital-conserving dipole: weight = |<g_i|e_j>|^2
    w = np.abs(gv[:, :2].conj().T @ ev[:, :2]) ** 2  # [ground, excited]
    w = w.T  # rows excited, cols ground
    tot = w.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        br = np.where(tot > 0, w / tot, np.eye(2))
    return br


def level_diagram(params: SivParams, field_cfg: FieldConfig) -> LevelDiagram:
    ge, gv = _sorted_branches(ground_hamiltonian(params, field_cfg), field_cfg)
    ee, ev = _sorted_branches(excited_hamiltonian(params, field_cfg), field_cfg)
    zero = FieldConfig(0.0, 0.0)
    e_c0 = (np.linalg.eigvalsh(excited_hamiltonian(params, zero))[0]
            - np.linalg.eigvalsh(ground_hamiltonian(params, zero))[0])
    br = _branching(gv, ev)
    return LevelDiagram(
        ground_energies=ge,
        ground_vectors=gv,
        excited_energies=ee,
        excited_vectors=ev,
        delta_gs=float(0.5 * (ge[2] + ge[3]) - 0.5 * (ge[0] + ge[1])),
        f_qubit=float(abs(ge[1] - ge[0])),
        f_down=float(ee[0] - ge[0] - e_c0),
        f_up=float(ee[1] - ge[1] - e_c0),
        spin_overlap=float(br[0, 1]),
        branching=br,
    )


def bose_occupation(freq_hz, temperature):
    x = boltzmann_exponent(freq_hz, temperature)
    return np.exp(-x) / -np.expm1(-x)


def phonon_rates(params: SivParams, delta_gs: float, temperature: float):
    """Return (gamma_plus, gamma_minus, orbital_polarization)."""
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0 K, got {temperature!r}")
    n = bose_occupation(delta_gs, temperature)
    gamma_plus = params.gamma0_phonon * n
    gamma_minus = params.gamma0_phonon * (n + 1.0)
    polarization = 1.0 / (1.0 + np.exp(-boltzmann_exponent(delta_gs, temperature)))
    return float(gamma_plus), float(gamma_minus), float(polarization)


def ple_spectrum(params: SivParams, field_cfg: FieldConfig, temperature: float,
                 linewidth: float, detunings=None) -> np.ndarray:
    """PLE spectrum with lines C (at 0) and D (at -Delta_GS), normalised to I_C = 1.

    Returns an ``(n, 2)`` array of (detuning [Hz], intensity).
    """
    if not linewidth > 0:
        raise ValueError("linewidth must be > 0")
    if not temperature > 0:
        raise ValueError("temperature must be > 0 K")
    dgs = level_diagram(params, field_cfg).delta_gs
    if detunings is None:
        detunings = np.linspace(-1.5 * dgs, 0.5 * dgs, 4001)
    detunings = np.asarray(detunings, dtype=float)
    ratio = np.exp(-boltzmann_exponent(dgs, temperature))
    hw2 = (0.5 * linewidth) ** 2

    def lor(d0):
        return hw2 / ((detunings - d0) ** 2 + hw2)

    intensity = lor(0.0) + ratio * lor(-dgs)
    return np.column_stack([detunings, intensity])


def ple_peak_ratio(spectrum: np.ndarray, delta_gs: float) -> float:
    """I_D / I_C read off a spectrum at the two line centres."""
    d, i = spectrum[:, 0], spectrum[:, 1]
    i_c = np.interp(0.0, d, i)
    i_d = np.interp(-delta_gs, d, i)
    return float(i_d / i_c)


def ple_line_ratio(spectrum: np.ndarray, delta_gs: float, linewidth: float) -> float:
    """Amplitude ratio of line D to line C with the Lorentzian overlap of the two lines removed."""
    i_c = np.interp(0.0, spectrum[:, 0], spectrum[:, 1])
    i_d = np.interp(-delta_gs, spectrum[:, 0], spectrum[:, 1])
    hw2 = (0.5 * linewidth) ** 2
    x = hw2 / (delta_gs ** 2 + hw2)
    a_c, a_d = np.linalg.solve([[1.0, x], [x, 1.0]], [i_c, i_d])
    return float(a_d / a_c)


def cyclicity(params: SivParams, field_cfg: FieldConfig, transition: str = "down") -> float:
    """gamma_par / (gamma_par + gamma_perp) of the f_down (or f_up) transition."""
    br = level_diagram(params, field_cfg).branching
    k = {"down": 0, "up": 1}[transition]
    return float(br[k, k])


def rate_set(params: SivParams, field_cfg: FieldConfig, temperature: float,
             saturation: float, transition: str = "down") -> RateSet:
    if saturation < 0:
        raise ValueError("saturation must be >= 0")
    if transition not in ("down", "up"):
        raise ValueError(f"transition must be 'down' or 'up', got {transition!r}")
    diag = level_diagram(params, field_cfg)
    gp, gm, _ = phonon_rates(params, diag.delta_gs, temperature)
    gamma_opt = 1.0 / params.tau_optical
    to_lb = gamma_opt * (1.0 - params.branch_ub)
    eta_d, eta_u = float(diag.branching[0, 0]), float(diag.branching[1, 1])
    eta = eta_d if transition == "down" else eta_u
    r = params.r_max * saturation / (1.0 + saturation)
    if diag.f_qubit > 0:
        n = float(bose_occupation(diag.f_qubit, temperature))
    else:
        n = np.inf
    if np.isinf(n):
        up_frac = 0.5
    else:
        up_frac = n / (2 * n + 1)
    return RateSet(
        gamma_plus=gp,
        gamma_minus=gm,
        gamma_par=to_lb * eta,
        gamma_perp=to_lb * (1.0 - eta),
        r_scatter=r,
        gamma_t1=params.gamma_t1,
        gamma_ub_branch=gamma_opt * params.branch_ub,
        gamma_ub_decay=1.0 / params.tau_ub,
        cyclicity_down=eta_d,
        cyclicity_up=eta_u,
        r_offres=params.offres_fraction * r,
        t1_up=params.gamma_t1 * up_frac,
        t1_down=params.gamma_t1 * (1.0 - up_frac),
        transition=transition,
    )


def level_graph(rates: RateSet):
    """Six-level rate matrix ``Q[i, j]`` (rate i -> j) and radiative mask.

    Levels: LB_down, LB_up, UB_down, UB_up, EX_down, EX_up.
    """
    q = np.zeros((6, 6))
    radiative = np.zeros((6, 6), dtype=bool)
    to_lb = rates.gamma_par + rates.gamma_perp
    if rates.transition == "down":
        q[LB_DOWN, EX_DOWN], q[LB_UP, EX_UP] = rates.r_scatter, rates.r_offres
    else:
        q[LB_UP, EX_UP], q[LB_DOWN, EX_DOWN] = rates.r_scatter, rates.r_offres
    for ex, same, other, ub, eta in ((EX_DOWN, LB_DOWN, LB_UP, UB_DOWN, rates.cyclicity_down),
                                     (EX_UP, LB_UP, LB_DOWN, UB_UP, rates.cyclicity_up)):
        q[ex, same] = to_lb * eta
        q[ex, other] = to_lb * (1.0 - eta)
        q[ex, ub] = rates.gamma_ub_branch
        radiative[ex, [same, other, ub]] = True
    q[LB_DOWN, UB_DOWN] = q[LB_UP, UB_UP] = rates.gamma_plus
    q[UB_DOWN, LB_DOWN] = q[UB_UP, LB_UP] = rates.gamma_ub_decay
    q[LB_DOWN, LB_UP] = rates.t1_up
    q[LB_UP, LB_DOWN] = rates.t1_down
    radiative &= q > 0
    return q, radiative


def generator(q: np.ndarray) -> np.ndarray:
    """Master-equation generator ``G`` with dp/dt = p @ G for row vectors p."""
    g = q.copy()
    np.fill_diagonal(g, 0.0)
    g[np.diag_indices_from(g)] = -g.sum(axis=1)
    return g
