"""Material parameters and the (T, p, q) <-> (xi, eta, gamma) change of variables.

The multiphysics variables are

    xi    = alpha*p + beta*T - lambda*q
    eta   = c0*p - b0*T + alpha*q
    gamma = a0*T - b0*p + beta*q

with q = div u.  The inverse map is linear with coefficients k1..k6 over a
common denominator M; see :func:`derive_coeffs`.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class ParameterError(ValueError):
    """Raised when a parameter set violates a modelling assumption."""


class RelaxedParameterWarning(UserWarning):
    """Emitted when validation is relaxed and an assumption is knowingly violated."""


def lame_from_young(E: float, nu: float) -> tuple[float, float]:
    """Plane-strain Lame parameters ``(mu, lambda)`` from Young's modulus and Poisson ratio."""
    if E <= 0:
        raise ParameterError(f"Young's modulus must be positive, got {E}")
    if not 0 <= nu < 0.5:
        raise ParameterError(f"Poisson ratio must lie in [0, 0.5), got {nu}")
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return mu, lam


def _as_tensor(value) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr * np.eye(2)
    if arr.shape != (2, 2):
        raise ParameterError(f"expected a 2x2 tensor, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PhysicalParams:
    a0: float
    b0: float
    c0: float
    alpha: float
    beta: float
    K: np.ndarray
    Theta: np.ndarray
    mu: float
    lam: float
    E: float | None = None
    nu: float | None = None
    # Set for parameter sets that knowingly break a0-b0>0 / c0-b0>0.
    relaxed: bool = field(default=False)

    def __post_init__(self):
        object.__setattr__(self, "K", _as_tensor(self.K))
        object.__setattr__(self, "Theta", _as_tensor(self.Theta))

    @classmethod
    def from_young(cls, *, a0, b0, c0, alpha, beta, K, Theta, E, nu, relaxed=False):
        mu, lam = lame_from_young(E, nu)
        return cls(a0=a0, b0=b0, c0=c0, alpha=alpha, beta=beta, K=K, Theta=Theta,
                   mu=mu, lam=lam, E=E, nu=nu, relaxed=relaxed)

    def replace(self, **changes) -> "PhysicalParams":
        data = {k: getattr(self, k) for k in
                ("a0", "b0", "c0", "alpha", "beta", "K", "Theta", "mu", "lam", "E", "nu", "relaxed")}
        data.update(changes)
        if ("E" in changes or "nu" in changes) and not ("mu" in changes or "lam" in changes):
            data["mu"], data["lam"] = lame_from_young(data["E"], data["nu"])
        return PhysicalParams(**data)

    def validate(self, relaxed: bool | None = None) -> None:
        """Check assumptions A1-A3 and the elastic moduli.

        With ``relaxed`` the storage assumption A3 only needs to hold in the
        weak sense (differences >= 0); the violation is reported as a
        :class:`RelaxedParameterWarning` instead of an error.
        """
        relaxed = self.relaxed if relaxed is None else relaxed
        for name, tensor in (("K", self.K), ("Theta", self.Theta)):
            if not np.allclose(tensor, tensor.T, rtol=0, atol=1e-14 * np.abs(tensor).max()):
                raise ParameterError(f"A1/A2 violated: {name} is not symmetric")
            if np.linalg.eigvalsh(tensor).min() <= 0:
                which = "A1" if name == "K" else "A2"
                raise ParameterError(f"{which} violated: {name} is not positive definite")
        for name in ("a0", "b0", "c0", "alpha", "beta"):
            if getattr(self, name) < 0:
                raise ParameterError(f"A3 violated: {name} must be nonnegative")
        gaps = {"a0 - b0": self.a0 - self.b0, "c0 - b0": self.c0 - self.b0}
        bad = [k for k, v in gaps.items() if v <= 0]
        if bad:
            if not relaxed or any(gaps[k] < 0 for k in bad):
                raise ParameterError(f"A3 violated: {', '.join(bad)} must be > 0")
            warnings.warn(f"relaxed validation: A3 violated ({', '.join(bad)} = 0)",
                          RelaxedParameterWarning, stacklevel=3)
        if self.mu <= 0:
            raise ParameterError("shear modulus mu must be positive")
        if self.lam < 0:
            raise ParameterError("Lame parameter lambda must be nonnegative")


@dataclass(frozen=True)
class DerivedCoeffs:
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float
    M: float

    @property
    def inverse_matrix(self) -> np.ndarray:
        """Rows give (T, p, q) as combinations of (xi, eta, gamma)."""
        return np.array([[self.k1, self.k2, self.k3],
                         [self.k4, self.k5, self.k2],
                         [-self.k6, self.k4, self.k1]])


def derive_coeffs(params: PhysicalParams, relaxed: bool | None = None) -> DerivedCoeffs:
    params.validate(relaxed)
    a0, b0, c0 = params.a0, params.b0, params.c0
    al, be, lam = params.alpha, params.beta, params.lam
    M = al * c0 * be**2 + 2 * al**2 * be * b0 + a0 * al**3 + (c0 * a0 * al - b0**2 * al) * lam
    if not M > 0:
        raise ParameterError(f"degenerate change of variables: M = {M} (alpha must be > 0)")
    return DerivedCoeffs(
        k1=(al * be * c0 + al**2 * b0) / M,
        k2=(al * b0 * lam - al**2 * be) / M,
        k3=(al**3 + al * c0 * lam) / M,
        k4=(a0 * al**2 + al * be * b0) / M,
        k5=(a0 * al * lam + al * be**2) / M,
        k6=(al * c0 * a0 - al * b0**2) / M,
        M=M,
    )


def to_multiphysics(params: PhysicalParams, T, p, q):
    """Map (T, p, q) to (xi, eta, gamma).  Works elementwise on arrays."""
    xi = params.alpha * p + params.beta * T - params.lam * q
    eta = params.c0 * p - params.b0 * T + params.alpha * q
    gamma = params.a0 * T - params.b0 * p + params.beta * q
    return xi, eta, gamma


def from_multiphysics(k: DerivedCoeffs, xi, eta, gamma):
    """Map (xi, eta, gamma) back to (T, p, q)."""
    T = k.k1 * xi + k.k2 * eta + k.k3 * gamma
    p = k.k4 * xi + k.k5 * eta + k.k2 * gamma
    q = -k.k6 * xi + k.k4 * eta + k.k1 * gamma
    return T, p, q


_CONFIG_KEYS = ("a0", "b0", "c0", "alpha", "beta", "E", "nu",
                "K11", "K12", "K22", "Theta11", "Theta12", "Theta22")


def load_params(path: str | Path, relaxed: bool = False) -> PhysicalParams:
    """Read a flat ``key = value`` file.  ``#`` starts a comment."""
    values: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = float(val)
    missing = [k for k in _CONFIG_KEYS if k not in values]
    if missing:
        raise ParameterError(f"{path}: missing keys {missing}")
    K = [[values["K11"], values["K12"]], [values["K12"], values["K22"]]]
    Theta = [[values["Theta11"], values["Theta12"]], [values["Theta12"], values["Theta22"]]]
    return PhysicalParams.from_young(
        a0=values["a0"], b0=values["b0"], c0=values["c0"], alpha=values["alpha"],
        beta=values["beta"], K=K, Theta=Theta, E=values["E"], nu=values["nu"], relaxed=relaxed)
