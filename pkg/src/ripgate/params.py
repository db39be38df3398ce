"""Device parameters and dispersive derived quantities.

All public values are cyclic frequencies in MHz (``nu = omega / 2 pi``) and
times in ns.  Anything suffixed ``_rad`` is an angular rate in rad/ns; convert
with :data:`MHZ`.

The qubit-pair basis is always ordered ``00, 01, 10, 11`` and quantities
indexed by it are length-4 numpy arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DegenerateDenominator, NotDispersive, ParameterError

#: rad/ns per cyclic MHz
MHZ = 2 * np.pi * 1e-3

BASIS = ("00", "01", "10", "11")
#: (-1)^(j+k) for each basis state
PARITY = np.array([1.0, -1.0, -1.0, 1.0])

DEFAULT_EPS = 1e-6

_JSON_KEYS = {
    "omega_1": "omega1_mhz",
    "omega_2": "omega2_mhz",
    "delta_1": "delta1_mhz",
    "delta_2": "delta2_mhz",
    "g_1": "g1_mhz",
    "g_2": "g2_mhz",
    "omega_r": "omegar_mhz",
    "kappa": "kappa_mhz",
}


def basis_index(label: str) -> int:
    return BASIS.index(label)


def _check_nonzero(name, value, eps):
    if abs(value) <= eps:
        raise DegenerateDenominator(f"denominator {name} = {value!r} MHz is within {eps} of zero")


@dataclass(frozen=True)
class DeviceParams:
    """Raw physical parameters of two transmons on a shared bus.

    Parameters
    ----------
    omega_1, omega_2 : float
        Qubit 0->1 transition frequencies (MHz).
    delta_1, delta_2 : float
        Anharmonicities (MHz, negative for transmons).
    g_1, g_2 : float
        Qubit-bus couplings (MHz).
    omega_r : float
        Bare bus frequency (MHz).
    kappa : float
        Bus photon loss rate (MHz).
    """

    omega_1: float
    omega_2: float
    delta_1: float
    delta_2: float
    g_1: float
    g_2: float
    omega_r: float
    kappa: float
    eps: float = field(default=DEFAULT_EPS, repr=False, compare=False)

    def __post_init__(self):
        for name in _JSON_KEYS:
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
        if self.kappa < 0:
            raise ParameterError(f"kappa must be >= 0, got {self.kappa}")
        self.check_denominators()
        for i, (w, g, d) in enumerate(
            [(self.omega_1, self.g_1, self.delta_1), (self.omega_2, self.g_2, self.delta_2)], 1
        ):
            detuning = abs(self.omega_r - w)
            if not (detuning > abs(g) and detuning > abs(d)):
                raise NotDispersive(
                    f"qubit {i}: |omega_r - omega_{i}| = {detuning} MHz must exceed "
                    f"|g_{i}| = {abs(g)} and |delta_{i}| = {abs(d)}"
                )

    def check_denominators(self):
        eps = self.eps
        _check_nonzero("omega_1 - omega_r", self.omega_1 - self.omega_r, eps)
        _check_nonzero("omega_2 - omega_r", self.omega_2 - self.omega_r, eps)
        _check_nonzero("omega_1 - omega_r + delta_1", self.omega_1 - self.omega_r + self.delta_1, eps)
        _check_nonzero("omega_2 - omega_r + delta_2", self.omega_2 - self.omega_r + self.delta_2, eps)
        _check_nonzero("delta_1 + omega_1 - omega_2", self.delta_1 + self.omega_1 - self.omega_2, eps)
        _check_nonzero("delta_2 - omega_1 + omega_2", self.delta_2 - self.omega_1 + self.omega_2, eps)

    def swapped(self) -> "DeviceParams":
        """The same device with the qubit labels exchanged."""
        return DeviceParams(
            self.omega_2, self.omega_1, self.delta_2, self.delta_1,
            self.g_2, self.g_1, self.omega_r, self.kappa, eps=self.eps,
        )

    def replace(self, **changes) -> "DeviceParams":
        values = {k: getattr(self, k) for k in _JSON_KEYS}
        values.update(changes)
        return DeviceParams(**values, eps=self.eps)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {key: float(getattr(self, name)) for name, key in _JSON_KEYS.items()}

    @classmethod
    def from_dict(cls, data: dict, eps: float = DEFAULT_EPS) -> "DeviceParams":
        missing = [key for key in _JSON_KEYS.values() if key not in data]
        if missing:
            raise ParameterError(f"device parameter file is missing keys: {missing}")
        unknown = sorted(set(data) - set(_JSON_KEYS.values()))
        if unknown:
            raise ParameterError(f"unknown device parameter keys: {unknown}")
        return cls(**{name: float(data[key]) for name, key in _JSON_KEYS.items()}, eps=eps)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "DeviceParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path: Union[str, Path]):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def preset(cls, name: str) -> "DeviceParams":
        """Load one of the shipped parameter sets, ``"low"`` or ``"high"``."""
        if name not in ("low", "high"):
            raise ParameterError(f"unknown preset {name!r}; expected 'low' or 'high'")
        text = resources.files("ripgate").joinpath("data", f"{name}.json").read_text()
        return cls.from_dict(json.loads(text))


def load_params(source: str) -> DeviceParams:
    """Resolve a preset name or a path to a JSON parameter file."""
    if source in ("low", "high"):
        return DeviceParams.preset(source)
    return DeviceParams.from_json(source)


# -- single-transmon dispersive helpers --------------------------------


def coupling_jk(dev: DeviceParams, j: int, k: int) -> float:
    """Exchange coupling between ``|j+1, k>`` and ``|j, k+1>`` (MHz), before the
    sqrt((j+1)(k+1)) matrix-element factor."""
    w1, w2, d1, d2 = dev.omega_1, dev.omega_2, dev.delta_1, dev.delta_2
    num = dev.g_1 * dev.g_2 * (w1 + w2 + j * d1 + k * d2 - 2 * dev.omega_r)
    den = 2 * (w1 + j * d1 - dev.omega_r) * (w2 + k * d2 - dev.omega_r)
    _check_nonzero(f"J_{j},{k} denominator", den, dev.eps)
    return num / den


def exchange_coupling(dev: DeviceParams) -> float:
    """Effective qubit-qubit exchange coupling J (MHz)."""
    return coupling_jk(dev, 0, 0)


def _qubit(dev: DeviceParams, which: int):
    if which == 1:
        return dev.omega_1, dev.delta_1, dev.g_1
    if which == 2:
        return dev.omega_2, dev.delta_2, dev.g_2
    raise ValueError("qubit index must be 1 or 2")


def level_shift(dev: DeviceParams, which: int, k: int) -> float:
    """Dispersive bus shift chi_{which:k} when transmon ``which`` is in level k (MHz)."""
    w, d, g = _qubit(dev, which)
    den = (w + k * d - dev.omega_r) * (w + (k - 1) * d - dev.omega_r)
    _check_nonzero(f"chi_{which}:{k} denominator", den, dev.eps)
    return g**2 * (d - w + dev.omega_r) / den


def dressed_level(dev: DeviceParams, which: int, k: int) -> float:
    """Lamb-shifted transmon level energy omega~_{which:k} (MHz)."""
    w, d, g = _qubit(dev, which)
    value = k * w + 0.5 * d * k * (k - 1)
    if k > 0:
        den = w + (k - 1) * d - dev.omega_r
        _check_nonzero(f"Lamb shift {which}:{k} denominator", den, dev.eps)
        value += k * g**2 / den
    return value


# -- derived parameters --------------------------------------------------


@dataclass(frozen=True)
class DerivedParams:
    """Dispersive quantities for a device driven at detuning ``Delta``.

    ``chi``, ``chibar`` are length-4 arrays over the basis ``00, 01, 10, 11``
    in MHz.  ``DeltaTilde`` is the complex decay/rotation rate of each bus
    branch in rad/ns.
    """

    chi: np.ndarray
    chibar: np.ndarray
    J: float
    zeta_0: float
    Xi0_1: float
    Xi0_2: float
    omega_d: float
    Delta: float
    kappa: float
    DeltaTilde: np.ndarray = field(repr=False)

    @property
    def chibar_rad(self) -> np.ndarray:
        return self.chibar * MHZ

    @property
    def zeta0_rad(self) -> float:
        return self.zeta_0 * MHZ

    @property
    def Delta_rad(self) -> float:
        return self.Delta * MHZ

    @property
    def kappa_rad(self) -> float:
        return self.kappa * MHZ

    def with_detuning(self, Delta: float) -> "DerivedParams":
        """Same device, different drive detuning (cyclic MHz)."""
        return _assemble(self.chi, self.J, self.zeta_0, self.Xi0_1, self.Xi0_2,
                         self.omega_d - self.Delta + Delta, Delta, self.kappa)

    def with_kappa(self, kappa: float) -> "DerivedParams":
        return _assemble(self.chi, self.J, self.zeta_0, self.Xi0_1, self.Xi0_2,
                         self.omega_d, self.Delta, kappa)

    def to_dict(self) -> dict:
        out = {}
        for i, label in enumerate(BASIS):
            out[f"chi{label}_mhz"] = float(self.chi[i])
        for i, label in enumerate(BASIS):
            out[f"chibar{label}_mhz"] = float(self.chibar[i])
        out.update(
            J_mhz=float(self.J),
            zeta0_mhz=float(self.zeta_0),
            Xi0_1_mhz=float(self.Xi0_1),
            Xi0_2_mhz=float(self.Xi0_2),
            omegad_mhz=float(self.omega_d),
            delta_mhz=float(self.Delta),
            kappa_mhz=float(self.kappa),
        )
        for i, label in enumerate(BASIS):
            out[f"DeltaTilde{label}_rad_per_ns"] = [float(self.DeltaTilde[i].real),
                                                    float(self.DeltaTilde[i].imag)]
        return out


def _assemble(chi, J, zeta_0, xi1, xi2, omega_d, Delta, kappa) -> DerivedParams:
    chi = np.asarray(chi, dtype=float)
    chibar = chi[0] - chi
    chibar[0] = 0.0
    delta_tilde = (-1j * (Delta + chibar) + kappa / 2) * MHZ
    return DerivedParams(
        chi=chi, chibar=chibar, J=float(J), zeta_0=float(zeta_0),
        Xi0_1=float(xi1), Xi0_2=float(xi2), omega_d=float(omega_d),
        Delta=float(Delta), kappa=float(kappa), DeltaTilde=delta_tilde,
    )


def resonator_shifts(dev: DeviceParams) -> np.ndarray:
    """Second-order bus shifts chi_jk for the four qubit states (MHz)."""
    a1 = dev.g_1**2 / (dev.omega_1 - dev.omega_r)
    a2 = dev.g_2**2 / (dev.omega_2 - dev.omega_r)
    b1 = 2 * dev.g_1**2 / (dev.omega_1 - dev.omega_r + dev.delta_1)
    b2 = 2 * dev.g_2**2 / (dev.omega_2 - dev.omega_r + dev.delta_2)
    return np.array([
        -a1 - a2,
        -a1 + a2 - b2,
        -a2 + a1 - b1,
        a1 - b1 + a2 - b2,
    ])


def static_zz(dev: DeviceParams) -> float:
    """Always-on ZZ rate zeta_0 with the Lamb shift neglected (MHz)."""
    J = exchange_coupling(dev)
    d1, d2, w1, w2 = dev.delta_1, dev.delta_2, dev.omega_1, dev.omega_2
    return -2 * J**2 * (d1 + d2) / ((d1 + w1 - w2) * (d2 - w1 + w2))


def derive_params(dev: DeviceParams, Delta: float) -> DerivedParams:
    """Compute the dispersive shifts, couplings and drive frame at detuning ``Delta``.

    Parameters
    ----------
    dev : DeviceParams
    Delta : float
        Drive detuning above the ground-state dressed bus frequency (MHz).

    Returns
    -------
    DerivedParams
    """
    dev.check_denominators()
    chi = resonator_shifts(dev)
    J = exchange_coupling(dev)
    zeta_0 = static_zz(dev)
    try:
        xi1, xi2, _ = static_coupling_at_photon_number(dev, 0)
    except DegenerateDenominator:
        # degenerate qubits: the J << |omega_1 - omega_2| expansion does not apply
        xi1 = xi2 = float("nan")
    omega_d = dev.omega_r + chi[0] + Delta
    return _assemble(chi, J, zeta_0, xi1, xi2, omega_d, Delta, dev.kappa)


def static_coupling_at_photon_number(dev: DeviceParams, m: int):
    """Second-order qubit shifts and ZZ rate with ``m`` photons in the bus.

    Evaluates the uncoupled energies E_jkm (Lamb shifts and level-dependent
    bus shifts included), adds the second-order exchange corrections and
    projects the 4x4 diagonal effective Hamiltonian onto Z1, Z2 and Z1Z2.

    Returns
    -------
    (Xi_m_1, Xi_m_2, zeta_m) : tuple of float, MHz
    """
    if m < 0 or int(m) != m:
        raise ParameterError(f"photon number must be a nonnegative integer, got {m!r}")
    J = exchange_coupling(dev)

    def energy(j, k):
        shift = level_shift(dev, 1, j) + level_shift(dev, 2, k)
        return shift * m + dressed_level(dev, 1, j) + dressed_level(dev, 2, k)

    E = {(j, k): energy(j, k) for j, k in [(0, 0), (0, 1), (1, 0), (1, 1), (0, 2), (2, 0)]}
    gap_01 = E[0, 1] - E[1, 0]
    gap_02 = E[1, 1] - E[0, 2]
    gap_20 = E[1, 1] - E[2, 0]
    _check_nonzero("E_01m - E_10m", gap_01, dev.eps)
    _check_nonzero("E_11m - E_02m", gap_02, dev.eps)
    _check_nonzero("E_11m - E_20m", gap_20, dev.eps)
    e01 = J**2 / gap_01
    e11 = 2 * J**2 / gap_02 + 2 * J**2 / gap_20
    H = np.array([E[0, 0], E[0, 1] + e01, E[1, 0] - e01, E[1, 1] + e11])
    z1 = np.array([1, 1, -1, -1])
    z2 = np.array([1, -1, 1, -1])
    return float(H @ z1), float(H @ z2), float(H @ (z1 * z2))
