"""Ordinary-smooth noise catalog and numerical checks of the noise assumptions.

Every catalog coordinate is a symmetric difference of Gamma variables,
``eps = G - G'`` with ``G, G' ~ Gamma(k, theta)``, whose characteristic
function is ``(1 + theta**2 t**2) ** -k``:

* ``laplace(sigma)`` is the case ``k = 1, theta = sigma``;
* ``gamma(k, theta)`` is the general case;
* ``none`` is the degenerate ``k = 0`` (no noise, direct observations).

The smoothness order of a coordinate is ``lambda = 2 k``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb, gamma as gamma_fn, pi, sqrt
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError, UnsupportedModelError
from .structure import PartitionFamily

KINDS = ("laplace", "gamma", "none")

DEFAULT_PROBE_HALF_WIDTH = 64.0
DEFAULT_PROBE_POINTS = 4097


def _falling(k: float, a: int) -> float:
    out = 1.0
    for i in range(a):
        out *= k - i
    return out


@dataclass(frozen=True)
class NoiseComponent:
    """Noise law of a single coordinate."""

    kind: str
    scale: float = 1.0
    shape: float = 1.0

    def __post_init__(self):
        if self.kind == "centered-gamma-symmetric":
            object.__setattr__(self, "kind", "gamma")
        if self.kind not in KINDS:
            raise UnsupportedModelError(f"unknown noise kind {self.kind!r}")
        if self.kind != "none" and not self.scale > 0:
            raise InvalidArgumentError("noise scale must be > 0")
        if self.kind == "gamma" and not self.shape > 0:
            raise InvalidArgumentError("gamma shape must be > 0")
        if self.kind == "laplace":
            object.__setattr__(self, "shape", 1.0)

    @property
    def k(self) -> float:
        return 0.0 if self.kind == "none" else float(self.shape)

    @property
    def theta(self) -> float:
        return 0.0 if self.kind == "none" else float(self.scale)

    @property
    def lam(self) -> float:
        """Polynomial decay order of the characteristic function."""
        return 2.0 * self.k

    def cf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "none":
            return np.ones_like(t)
        return (1.0 + (self.theta * t) ** 2) ** (-self.k)

    def inv_cf_derivative(self, t, m: int):
        """m-th derivative of ``1 / cf`` evaluated in closed form.

        Uses ``(1 + theta^2 t^2)^k = (1 + i theta t)^k (1 - i theta t)^k``
        and the Leibniz rule.
        """
        t = np.asarray(t, dtype=float)
        k, th = self.k, self.theta
        if k == 0.0:
            return np.ones_like(t) if m == 0 else np.zeros_like(t)
        zp = 1.0 + 1j * th * t
        zm = 1.0 - 1j * th * t
        out = np.zeros(t.shape, dtype=complex)
        for a in range(m + 1):
            b = m - a
            ca = _falling(k, a) * (1j * th) ** a
            cb = _falling(k, b) * (-1j * th) ** b
            if ca == 0 or cb == 0:
                continue
            out += comb(m, a) * ca * cb * zp ** (k - a) * zm ** (k - b)
        return out.real

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "laplace":
            return rng.laplace(0.0, self.scale, size=n)
        return rng.gamma(self.k, self.theta, size=n) - rng.gamma(self.k, self.theta, size=n)

    @property
    def density_sup(self) -> float:
        """``sup q``; infinite when the density is unbounded or absent."""
        k, th = self.k, self.theta
        if self.kind == "none" or k <= 0.5:
            return float("inf")
        return gamma_fn(2 * k - 1) / (gamma_fn(k) ** 2 * th * 2 ** (2 * k - 1))

    @property
    def cf_l1(self) -> float:
        """``integral |cf(t)| dt``; infinite unless ``k > 1/2``."""
        k, th = self.k, self.theta
        if self.kind == "none" or k <= 0.5:
            return float("inf")
        return sqrt(pi) * gamma_fn(k - 0.5) / (gamma_fn(k) * th)

    def pdf(self, x):
        """Density, available for laplace only (used in tests and reports)."""
        if self.kind != "laplace":
            raise UnsupportedModelError("closed-form density only for laplace")
        x = np.asarray(x, dtype=float)
        return np.exp(-np.abs(x) / self.scale) / (2 * self.scale)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind != "none":
            d["scale"] = self.scale
        if self.kind == "gamma":
            d["shape"] = self.shape
        return d

    def __str__(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "laplace":
            return f"laplace:{self.scale:g}"
        return f"gamma:{self.scale:g}:{self.shape:g}"


@dataclass(frozen=True)
class NoiseModel:
    """Product noise law: coordinates are independent."""

    components: tuple[NoiseComponent, ...]
    A: float | None = None

    def __init__(self, components: Iterable[NoiseComponent], A: float | None = None):
        comps = tuple(components)
        if not comps:
            raise InvalidArgumentError("noise model needs at least one coordinate")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "A", A)

    @classmethod
    def parse(cls, text: str, d: int | None = None) -> "NoiseModel":
        """Parse ``"laplace:0.5"`` or ``"laplace:1,gamma:1:2,none"``.

        Each entry is ``kind[:scale[:shape]]``; a single entry is broadcast to
        ``d`` coordinates.
        """
        comps = []
        for item in text.split(","):
            parts = item.strip().split(":")
            kind = parts[0]
            scale = float(parts[1]) if len(parts) > 1 else 1.0
            shape = float(parts[2]) if len(parts) > 2 else 1.0
            comps.append(NoiseComponent(kind, scale, shape))
        if d is not None:
            if len(comps) == 1:
                comps = comps * d
            elif len(comps) != d:
                raise InvalidArgumentError(
                    f"noise spec has {len(comps)} coordinates, data has {d}"
                )
        return cls(comps)

    @classmethod
    def from_config(cls, spec) -> "NoiseModel":
        if isinstance(spec, str):
            return cls.parse(spec)
        return cls(NoiseComponent(**c) for c in spec)

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def lam(self) -> np.ndarray:
        return np.array([c.lam for c in self.components])

    @property
    def lam_max(self) -> float:
        return float(self.lam.max())

    def cf_axis(self, j: int, t):
        return self.components[j].cf(t)

    def cf(self, I: Sequence[int], t_I):
        """Characteristic function of the marginal on ``I``; ``t_I`` has shape (..., |I|)."""
        t_I = np.asarray(t_I, dtype=float)
        if t_I.ndim == 0:
            t_I = t_I[None]
        if t_I.shape[-1] != len(I):
            raise InvalidArgumentError("frequency vector does not match block size")
        out = np.ones(t_I.shape[:-1])
        for a, j in enumerate(I):
            out = out * self.components[j].cf(t_I[..., a])
        return out

    def sample(self, n: int, seed=None) -> np.ndarray:
        return sample_noise(self, n, seed)

    def density_sup(self, I: Sequence[int]) -> float:
        return float(np.prod([self.components[j].density_sup for j in I]))

    def cf_l1(self, I: Sequence[int]) -> float:
        return float(np.prod([self.components[j].cf_l1 for j in I]))

    def to_list(self) -> list[dict]:
        return [c.to_dict() for c in self.components]

    def __str__(self) -> str:
        return ",".join(str(c) for c in self.components)


def laplace(scale: float = 1.0, d: int = 1) -> NoiseModel:
    return NoiseModel([NoiseComponent("laplace", scale)] * d)


def symmetric_gamma(shape: float, scale: float = 1.0, d: int = 1) -> NoiseModel:
    return NoiseModel([NoiseComponent("gamma", scale, shape)] * d)


def no_noise(d: int = 1) -> NoiseModel:
    return NoiseModel([NoiseComponent("none")] * d)


def cf(model: NoiseModel, I: Sequence[int], t_I):
    return model.cf(I, t_I)


def sample_noise(model: NoiseModel, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` i.i.d. noise vectors as an ``(n, d)`` array."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return np.column_stack([c.sample(rng, n) for c in model.components])


def clause_for(p: float) -> str:
    if p == 2:
        return "N2(i)"
    if np.isinf(p):
        return "N2(iii)"
    if p > 1:
        return "N2(ii)"
    raise InvalidArgumentError("loss index p must be in (1, inf]")


@dataclass
class NoiseValidationReport:
    p: float
    clause: str
    block_ratios: dict = field(default_factory=dict)
    n1: dict = field(default_factory=dict)
    A_achieved: float = 1.0
    A_required: float | None = None
    nonvanishing: bool = True
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def A(self) -> float:
        return self.A_required if self.A_required is not None else self.A_achieved

    def to_dict(self) -> dict:
        return {
            "p": "inf" if np.isinf(self.p) else self.p,
            "clause": self.clause,
            "block_ratios": self.block_ratios,
            "n1": self.n1,
            "A_achieved": self.A_achieved,
            "A_required": self.A_required,
            "nonvanishing": self.nonvanishing,
            "passed": self.passed,
            "failures": self.failures,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, float) and not np.isfinite(o):
        return str(o)
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def _block_key(I) -> str:
    return "[" + ",".join(str(i + 1) for i in I) + "]"


def validate_assumptions(
    model: NoiseModel,
    p: float,
    family: PartitionFamily,
    probe=None,
    A: float | None = None,
) -> NoiseValidationReport:
    """Check the noise assumptions for loss ``p`` on every block of the diamond closure.

    The suprema over R^|I| are replaced by maxima over a per-axis probe grid
    (default ``[-64, 64]`` with 4097 points). Because the noise is a product,
    every ratio factorizes and the tensor-grid maximum is the product of
    per-axis maxima. ``A_achieved`` is the smallest constant passing on the
    probes; if ``A`` is given the check also requires ``A_achieved <= A``.
    """
    clause = clause_for(p)
    if probe is None:
        probe = np.linspace(-DEFAULT_PROBE_HALF_WIDTH, DEFAULT_PROBE_HALF_WIDTH,
                            DEFAULT_PROBE_POINTS)
    probe = np.asarray(probe, dtype=float)
    if family.d != model.d:
        raise InvalidArgumentError("family and noise model dimensions differ")
    report = NoiseValidationReport(p=p, clause=clause, A_required=A)
    blocks = family.closure()
    max_order = max(len(I) for I in blocks)

    # per-axis tables: sup_t |r^(m)(t) t^m| / w(t) and sup_t |r^(m)(t)| / w(t)
    with_power, plain = {}, {}
    for j, c in enumerate(model.components):
        q = c.cf(probe)
        if np.any(q == 0) or not np.all(np.isfinite(q)):
            report.nonvanishing = False
            report.failures.append(f"cf of coordinate {j + 1} vanishes on the probe grid")
        w = (1.0 + probe ** 2) ** (c.lam / 2)
        for m in range(max_order + 1):
            dr = c.inv_cf_derivative(probe, m)
            with_power[j, m] = float(np.max(np.abs(dr * probe ** m) / w))
            plain[j, m] = float(np.max(np.abs(dr) / w))

    achieved = 0.0
    for I in blocks:
        key = _block_key(I)
        if clause == "N2(i)":
            ratio = float(np.prod([plain[j, 0] for j in I]))
        elif clause == "N2(ii)":
            ratio = 0.0
            for alpha in itertools.product(range(len(I) + 1), repeat=len(I)):
                if sum(alpha) > len(I):
                    continue
                ratio = max(ratio, float(np.prod([with_power[j, a] for j, a in zip(I, alpha)])))
        else:
            ratio = 0.0
            base = [plain[j, 0] for j in I]
            for pos, k in enumerate(I):
                for a in (0, 1):
                    vals = list(base)
                    vals[pos] = plain[k, a]
                    ratio = max(ratio, float(np.prod(vals)))
        if not np.isfinite(ratio):
            report.failures.append(f"{clause} ratio is not finite on block {key}")
        report.block_ratios[key] = ratio
        achieved = max(achieved, ratio)

        if p == 2:
            val = model.cf_l1(I)
            report.n1[key] = {"clause": "N1(i)", "cf_l1": val, "ok": bool(np.isfinite(val))}
            if not np.isfinite(val):
                report.failures.append(f"N1(i): integral of |cf| is infinite on block {key}")
        elif p > 2:
            val = model.density_sup(I)
            report.n1[key] = {"clause": "N1(ii)", "density_sup": val, "ok": bool(np.isfinite(val))}
            if not np.isfinite(val):
                report.failures.append(f"N1(ii): noise density unbounded on block {key}")

    report.A_achieved = achieved
    if A is not None and achieved > A * (1 + 1e-12):
        report.failures.append(f"{clause}: achieved A={achieved:.6g} exceeds required A={A:.6g}")
    return report
