"""Synthetic targets, Monte Carlo risk, rate regression and structure-recovery statistics.

Targets are products of independent factors over their true partition. Each
factor has a closed-form density, characteristic function and sampler, so
``E f_h = K_h * f`` is exact in the frequency domain and the stochastic term
``f_h - K_h * f`` needs no nested simulation.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from math import factorial, pi
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.interpolate import BSpline
from scipy.special import eval_hermitenorm

from .errors import DeconError, InvalidArgumentError, InvalidDataError
from .noise import NoiseModel
from .selector import (
    EstimateCache,
    _product,
    prepare,
    rate_exponent_lp,
    run_selection,
)
from .spectral import (
    EvaluationGrid,
    GridFunction,
    KernelSpec,
    build_kernel,
    kernel_multiplier,
    lp_norm,
    spectral_residual,
    to_space,
)
from .structure import Partition, default_family

TRUNCATION_LIMIT = 1e-3
MAX_EXCLUDED_FRACTION = 0.05

_BSPLINE = BSpline.basis_element([-2.0, -1.0, 0.0, 1.0, 2.0], extrapolate=False)


# ---------------------------------------------------------------------------
# targets


@dataclass(frozen=True)
class Factor:
    """Density of one block of the true partition.

    ``kind`` is ``gaussian`` (``mean``, ``cov``), ``gaussian-mixture``
    (``weights``, ``means``, ``covs``) or ``spline-compact`` (``scale``: the
    coordinates are i.i.d. scaled cubic B-splines, support ``[-2s, 2s]``).
    """

    block: tuple[int, ...]
    kind: str
    params: dict

    def _components(self):
        if self.kind == "gaussian":
            yield 1.0, np.asarray(self.params["mean"], float), np.asarray(self.params["cov"], float)
        elif self.kind == "gaussian-mixture":
            for w, m, c in zip(self.params["weights"], self.params["means"], self.params["covs"]):
                yield float(w), np.asarray(m, float), np.asarray(c, float)
        else:
            raise InvalidArgumentError(f"{self.kind} has no Gaussian components")

    def _spline_scale(self, sub):
        s = np.broadcast_to(np.asarray(self.params.get("scale", 1.0), float), (len(self.block),))
        return s[list(sub)]

    def pdf(self, x, sub=None):
        """Density of the marginal on positions ``sub`` (default: the whole block)."""
        sub = list(range(len(self.block))) if sub is None else list(sub)
        x = np.asarray(x, float).reshape(-1, len(sub))
        if self.kind == "spline-compact":
            out = np.ones(x.shape[0])
            for a, s in enumerate(self._spline_scale(sub)):
                out *= np.nan_to_num(_BSPLINE(x[:, a] / s)) / s
            return out
        out = np.zeros(x.shape[0])
        for w, m, c in self._components():
            out += w * stats.multivariate_normal(m[sub], c[np.ix_(sub, sub)]).pdf(x).reshape(-1)
        return out

    def cf(self, t, sub=None):
        """Characteristic function of the marginal on ``sub``; ``t`` has shape (..., |sub|)."""
        sub = list(range(len(self.block))) if sub is None else list(sub)
        t = np.asarray(t, float)
        if self.kind == "spline-compact":
            out = np.ones(t.shape[:-1], dtype=complex)
            for a, s in enumerate(self._spline_scale(sub)):
                out = out * np.sinc(s * t[..., a] / (2 * pi)) ** 4
            return out
        out = np.zeros(t.shape[:-1], dtype=complex)
        for w, m, c in self._components():
            mm, cc = m[sub], c[np.ix_(sub, sub)]
            quad = np.einsum("...i,ij,...j->...", t, cc, t)
            out = out + w * np.exp(1j * t @ mm - 0.5 * quad)
        return out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        s = len(self.block)
        if self.kind == "spline-compact":
            u = rng.uniform(-0.5, 0.5, size=(n, s, 4)).sum(axis=2)
            return u * self._spline_scale(range(s))
        comps = list(self._components())
        w = np.array([c[0] for c in comps])
        labels = rng.choice(len(comps), size=n, p=w / w.sum()) if len(comps) > 1 else np.zeros(n, int)
        out = np.empty((n, s))
        for k, (_, m, c) in enumerate(comps):
            idx = np.nonzero(labels == k)[0]
            out[idx] = rng.multivariate_normal(m, c, size=idx.size, method="cholesky")
        return out

    def derivative(self, x, axis: int, m: int, sub=None):
        """``m``-th partial derivative along block position ``axis`` of the marginal on ``sub``."""
        sub = list(range(len(self.block))) if sub is None else list(sub)
        x = np.asarray(x, float).reshape(-1, len(sub))
        a = sub.index(axis)
        if self.kind == "spline-compact":
            out = np.ones(x.shape[0])
            for b, s in enumerate(self._spline_scale(sub)):
                if b == a:
                    f = _BSPLINE.derivative(m) if m else _BSPLINE
                    out *= np.nan_to_num(f(x[:, b] / s)) / s ** (m + 1)
                else:
                    out *= np.nan_to_num(_BSPLINE(x[:, b] / s)) / s
            return out
        out = np.zeros(x.shape[0])
        for w, mu, c in self._components():
            mm, cc = mu[sub], c[np.ix_(sub, sub)]
            prec = np.linalg.inv(cc)
            proj = (x - mm) @ prec[:, a]
            sd = np.sqrt(prec[a, a])
            g = stats.multivariate_normal(mm, cc).pdf(x).reshape(-1)
            out += w * g * (-sd) ** m * eval_hermitenorm(m, proj / sd)
        return out


@dataclass(frozen=True)
class TargetDensity:
    """Product of independent factors with documented smoothness metadata.

    ``beta``, ``L`` and ``r`` are per-coordinate smoothness parameters the
    catalog documents for its densities; they are spot-checked by
    :func:`nikolskii_probe`, not certified.
    """

    factors: tuple[Factor, ...]
    d: int
    beta: tuple[float, ...]
    L: tuple[float, ...]
    r: tuple[float, ...]
    name: str = ""

    @property
    def partition(self) -> Partition:
        return Partition([f.block for f in self.factors], self.d)

    def _split(self, I):
        """Pieces ``(factor, positions-in-factor, positions-in-I)`` of block ``I``."""
        I = list(I)
        for f in self.factors:
            inter = [j for j in I if j in f.block]
            if inter:
                yield f, [f.block.index(j) for j in inter], [I.index(j) for j in inter]

    def pdf(self, x, I=None) -> np.ndarray:
        I = list(range(self.d)) if I is None else list(I)
        x = np.asarray(x, float).reshape(-1, len(I))
        out = np.ones(x.shape[0])
        for f, sub, pos in self._split(I):
            out *= f.pdf(x[:, pos], sub)
        return out

    def cf(self, t, I=None) -> np.ndarray:
        I = list(range(self.d)) if I is None else list(I)
        t = np.asarray(t, float)
        out = np.ones(t.shape[:-1], dtype=complex)
        for f, sub, pos in self._split(I):
            out = out * f.cf(t[..., pos], sub)
        return out

    def on_grid(self, grid: EvaluationGrid, I=None) -> GridFunction:
        I = tuple(range(self.d)) if I is None else tuple(I)
        vals = self.pdf(grid.mesh().reshape(-1, grid.d), I).reshape(grid.shape)
        return GridFunction(I, grid, vals)

    def sample(self, n: int, seed=None) -> np.ndarray:
        return sample_target(self, n, seed)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "partition": str(self.partition),
            "factors": [{"block": [i + 1 for i in f.block], "kind": f.kind,
                         "params": _listify(f.params)} for f in self.factors],
            "beta": list(self.beta), "L": list(self.L), "r": [str(x) if np.isinf(x) else x for x in self.r],
        }


def _listify(o):
    if isinstance(o, dict):
        return {k: _listify(v) for k, v in o.items()}
    if isinstance(o, (list, tuple, np.ndarray)):
        return [_listify(v) for v in o]
    if isinstance(o, np.generic):
        return o.item()
    return o


def gaussian_product(d: int = 1, sigma=1.0, beta: float = 2.0, L: float | None = None) -> TargetDensity:
    """Independent ``N(0, sigma_j^2)`` coordinates; true partition = singletons.

    Gaussians are infinitely smooth; ``beta`` records the smoothness the
    experiment treats as binding (the kernel order). The default ``L`` is a
    valid constant for ``beta <= 3`` in the sup norm.
    """
    sig = np.broadcast_to(np.asarray(sigma, float), (d,))
    factors = tuple(Factor((j,), "gaussian", {"mean": [0.0], "cov": [[float(s) ** 2]]})
                    for j, s in enumerate(sig))
    if L is None:
        L = float(np.max(1.0 / sig ** 4))
    return TargetDensity(factors, d, (float(beta),) * d, (float(L),) * d, (np.inf,) * d,
                         f"gaussian-product(d={d})")


def gaussian_target(blocks: Sequence[Sequence[int]], means, covs, beta=2.0, L=10.0,
                    name="gaussian") -> TargetDensity:
    """Block-wise Gaussian target (coordinates 0-based)."""
    factors = tuple(Factor(tuple(b), "gaussian", {"mean": list(m), "cov": np.asarray(c).tolist()})
                    for b, m, c in zip(blocks, means, covs))
    d = sum(len(b) for b in blocks)
    return TargetDensity(factors, d, (float(beta),) * d, (float(L),) * d, (np.inf,) * d, name)


def gaussian_mixture(weights, means, covs, beta=2.0, L=10.0, name="gaussian-mixture") -> TargetDensity:
    """Single-block mixture of Gaussians in ``len(means[0])`` dimensions."""
    w = np.asarray(weights, float)
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0):
        raise InvalidArgumentError("mixture weights must be nonnegative and sum to 1")
    d = len(means[0])
    f = Factor(tuple(range(d)), "gaussian-mixture",
               {"weights": w.tolist(), "means": np.asarray(means, float).tolist(),
                "covs": np.asarray(covs, float).tolist()})
    return TargetDensity((f,), d, (float(beta),) * d, (float(L),) * d, (np.inf,) * d, name)


def spline_compact(d: int = 1, scale=1.0) -> TargetDensity:
    """Independent scaled cubic B-spline coordinates.

    The second derivative of the unit spline is piecewise linear with
    slopes up to 3 and values in ``[-2, 1]``, so for scale ``s`` the
    smoothness holds with ``beta = 3``, ``r = inf`` and
    ``L = max(3 / s^4, 2 / s^3, 2 / (3 s^2), 2 / (3 s))``.
    """
    s = np.broadcast_to(np.asarray(scale, float), (d,))
    factors = tuple(Factor((j,), "spline-compact", {"scale": float(v)}) for j, v in enumerate(s))
    L = float(np.max(np.maximum.reduce([3.0 / s ** 4, 2.0 / s ** 3, 2.0 / (3 * s ** 2), 2.0 / (3 * s)])))
    return TargetDensity(factors, d, (3.0,) * d, (L,) * d, (np.inf,) * d, f"spline-compact(d={d})")


def sample_target(t: TargetDensity, n: int, seed=None) -> np.ndarray:
    """``n`` i.i.d. draws; the factors are drawn independently of each other."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty((n, t.d))
    for f in t.factors:
        out[:, list(f.block)] = f.sample(rng, n)
    return out


# ---------------------------------------------------------------------------
# bias and smoothness probes


def _freq_cf(t: TargetDensity, I, grid: EvaluationGrid) -> np.ndarray:
    mesh = np.stack(np.meshgrid(*[a.freqs for a in grid.axes], indexing="ij"), axis=-1)
    return t.cf(mesh, I)


def smoothed_target(t: TargetDensity, K: KernelSpec, h_I, I, grid: EvaluationGrid) -> GridFunction:
    """``K_h * f_I`` on ``grid`` (exact spectrum, one inverse transform)."""
    S = _freq_cf(t, I, grid) * kernel_multiplier(K, h_I, grid)
    vals, imag = to_space(grid, S)
    return GridFunction(tuple(I), grid, vals, S, {"h": tuple(np.atleast_1d(h_I)), "imag_residual": imag})


def bias_decomposition(t: TargetDensity, K: KernelSpec, h_I, I, grid: EvaluationGrid):
    """Return ``(K_h * f_I - f_I, K_h * f_I)`` on ``grid``.

    ``K_h * f_I`` is the expectation of the deconvolution estimate at ``h``.
    """
    expected = smoothed_target(t, K, h_I, I, grid)
    truth = t.on_grid(grid, I)
    bias = GridFunction(tuple(I), grid, expected.values - truth.values, None, dict(expected.params))
    return bias, expected


def stochastic_norm(est: GridFunction, t: TargetDensity, K: KernelSpec, p: float) -> float:
    """``|| f_h - K_h * f ||_p`` for an estimate carrying its bandwidth in ``params``."""
    expected = smoothed_target(t, K, est.params["h"], est.block, est.grid)
    return lp_norm(est.values - expected.values, p, est.grid.cell_volume)


@dataclass
class ProbeResult:
    z: np.ndarray
    ratios: np.ndarray
    derivative_norms: np.ndarray
    L: float
    passed: bool

    @property
    def worst(self) -> float:
        return float(max(self.ratios.max(initial=0.0), self.derivative_norms.max(initial=0.0) / self.L))


def nikolskii_probe(t: TargetDensity, j: int, beta: float, r: float, grid: EvaluationGrid,
                    L: float | None = None, z=None, tol: float = 1e-3) -> ProbeResult:
    """Spot check of the smoothness conditions along coordinate ``j``.

    With ``m`` the largest integer strictly below ``beta``, reports
    ``||D^m f(.+z e_j) - D^m f||_r / (L |z|^(beta-m))`` over ``z`` and the
    norms ``||D^k f||_r``, ``k <= m``, for the factor that contains ``j``.
    ``grid`` spans that factor's coordinates.
    """
    f = next(f for f in t.factors if j in f.block)
    L = t.L[j] if L is None else L
    m = int(np.ceil(beta) - 1)
    if z is None:
        z = 2.0 ** np.linspace(-6, 0, 25)
    z = np.asarray(z, float)
    a = f.block.index(j)
    x = grid.mesh().reshape(-1, grid.d)
    vol = grid.cell_volume
    base = f.derivative(x, a, m)
    ratios = []
    for zz in z:
        xs = x.copy()
        xs[:, a] += zz
        diff = f.derivative(xs, a, m) - base
        nrm = lp_norm(diff, r, vol)
        ratios.append(0.0 if zz == 0 else nrm / (L * abs(zz) ** (beta - m)))
    dn = np.array([lp_norm(f.derivative(x, a, k), r, vol) for k in range(m + 1)])
    ratios = np.array(ratios)
    passed = bool(np.all(ratios <= 1 + tol) and np.all(dn <= L * (1 + tol)))
    return ProbeResult(z, ratios, dn, L, passed)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class Scenario:
    """One Monte Carlo configuration.

    ``bandwidth`` fixes ``(h, partition)`` instead of running the selection
    (oracle or fixed-bandwidth experiments); ``family`` is ``"all"``,
    ``"full"`` or a list of partition strings.
    """

    target: TargetDensity
    noise: NoiseModel
    p: float = 2.0
    n: int = 1024
    replications: int = 30
    seed: int = 0
    kappa_cal: float = 1.0
    family: object = "all"
    order: int = 2
    max_points: object = None
    grid_points: object = None
    h_max_policy: str = "unit"
    candidate_risks: bool = False
    bandwidth: tuple | None = None

    def family_obj(self):
        if isinstance(self.family, str):
            return default_family(self.target.d, self.family)
        return default_family(self.target.d, "explicit", list(self.family))

    def with_(self, **kw) -> "Scenario":
        d = dict(self.__dict__)
        d.update(kw)
        return Scenario(**d)


def replication_data(sc: Scenario, index: int):
    """Observations ``Y = X + eps`` of replication ``index`` (own seed stream)."""
    ss = np.random.SeedSequence(sc.seed).spawn(index + 1)[index]
    sx, se = ss.spawn(2)
    X = sample_target(sc.target, sc.n, np.random.default_rng(sx))
    eps = sc.noise.sample(sc.n, np.random.default_rng(se))
    return X + eps


def _fixed_estimate(sc: Scenario, Y, K):
    h, P = sc.bandwidth
    P = Partition.parse(P, sc.target.d) if isinstance(P, str) else P
    h = tuple(np.broadcast_to(np.asarray(h, float), (sc.target.d,)))
    grid = EvaluationGrid.for_data(Y, K, min(h), max(h), sc.noise, sc.grid_points, sc.max_points)
    cache = EstimateCache(Y, K, sc.noise, grid, sc.p)
    parts = [(I, cache.marginal(I, tuple(h[j] for j in I)).values) for I in P]
    vals = np.broadcast_to(_product(parts, sc.target.d), grid.shape)
    return GridFunction(tuple(range(sc.target.d)), grid, np.array(vals)), h, P


def run_replication(sc: Scenario, index: int) -> dict:
    """One replication; failures are returned as records, never raised."""
    K = build_kernel("gaussian", sc.order)
    try:
        Y = replication_data(sc, index)
        if sc.bandwidth is not None:
            est, h, P = _fixed_estimate(sc, Y, K)
            resid = spectral_residual(K, h, est.grid)
            cand_risks = None
        else:
            ctx = prepare(Y, sc.noise, sc.p, sc.family_obj(), sc.order, K, sc.kappa_cal,
                          grid_points=sc.grid_points, max_points=sc.max_points,
                          h_max_policy=sc.h_max_policy)
            res = run_selection(ctx)
            est, h, P = res.estimate, res.h, res.partition
            resid = res.diagnostics["selected_spectral_residual"]
            cand_risks = None
            if sc.candidate_risks:
                truth = sc.target.on_grid(res.grid).values
                cand_risks = []
                for c in ctx.candidates:
                    parts = [(I, ctx.cache.marginal(I, c.h_block(I)).values) for I in c.partition]
                    diff = np.broadcast_to(_product(parts, sc.target.d), res.grid.shape) - truth
                    cand_risks.append(lp_norm(diff, sc.p, res.grid.cell_volume))
        truth = sc.target.on_grid(est.grid).values
        loss = lp_norm(est.values - truth, sc.p, est.grid.cell_volume)
        return {
            "index": index,
            "loss": loss,
            "h": list(h),
            "partition": str(P),
            "spectral_residual": resid,
            "excluded": bool(resid > TRUNCATION_LIMIT),
            "failed": False,
            "candidate_losses": cand_risks,
        }
    except DeconError as exc:
        return {"index": index, "failed": True, "excluded": True, "error": f"{type(exc).__name__}: {exc}"}


@dataclass
class RiskReport:
    n: int
    p: float
    replications: int
    losses: np.ndarray
    risk: float
    std_error: float
    partitions: dict
    bandwidths: dict
    excluded: int
    failures: list
    records: list = field(repr=False, default_factory=list)
    theoretical_exponent: float | None = None
    scenario_ok: bool = True

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": "inf" if np.isinf(self.p) else self.p,
            "replications": self.replications,
            "risk": self.risk,
            "std_error": self.std_error,
            "partitions": self.partitions,
            "bandwidths": self.bandwidths,
            "excluded": self.excluded,
            "failures": self.failures,
            "theoretical_exponent": self.theoretical_exponent,
            "scenario_ok": self.scenario_ok,
            "losses": [float(x) for x in self.losses],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _workers(workers):
    if workers is None:
        return os.cpu_count() or 1
    return max(1, int(workers))


def mc_risk(sc: Scenario, workers: int | None = 1, theoretical_exponent: float | None = None) -> RiskReport:
    """Monte Carlo estimate of ``(E ||f_tilde - f||_p^p)^(1/p)``.

    Replications run on independent seed streams spawned from ``sc.seed``;
    results are merged in replication order, so any ``workers`` value gives
    the same report. The standard error is propagated from the mean of the
    ``p``-th powers by the delta method.
    """
    if sc.replications < 1:
        raise InvalidArgumentError("replications must be >= 1")
    w = _workers(workers)
    idx = list(range(sc.replications))
    if w > 1 and sc.replications > 1:
        with ProcessPoolExecutor(w) as ex:
            recs = list(ex.map(run_replication, [sc] * len(idx), idx))
    else:
        recs = [run_replication(sc, i) for i in idx]
    recs.sort(key=lambda r: r["index"])
    good = [r for r in recs if not r["excluded"]]
    failures = [r["error"] for r in recs if r.get("failed")]
    excluded = len(recs) - len(good)
    losses = np.array([r["loss"] for r in good])
    p = sc.p
    if losses.size == 0:
        risk, se = float("nan"), float("nan")
    elif np.isinf(p):
        risk = float(losses.mean())
        se = float(losses.std(ddof=1) / np.sqrt(losses.size)) if losses.size > 1 else float("nan")
    else:
        powers = losses ** p
        m = powers.mean()
        risk = float(m ** (1 / p))
        se_m = powers.std(ddof=1) / np.sqrt(losses.size) if losses.size > 1 else float("nan")
        se = float(se_m * m ** (1 / p - 1) / p)
    parts, bws = {}, {}
    for r in good:
        parts[r["partition"]] = parts.get(r["partition"], 0) + 1
        key = ",".join(f"{x:g}" for x in r["h"])
        bws[key] = bws.get(key, 0) + 1
    ok = excluded <= MAX_EXCLUDED_FRACTION * len(recs)
    return RiskReport(sc.n, p, sc.replications, losses, risk, se, parts, bws, excluded,
                      failures, recs, theoretical_exponent, ok)


@dataclass
class RateFit:
    slope: float
    intercept: float
    half_width: float
    n_values: list
    risks: list
    theoretical: float | None = None

    def contains(self, value: float, tol: float) -> bool:
        return abs(self.slope - value) <= tol

    def to_dict(self) -> dict:
        return asdict(self)


def rate_fit(reports, risks=None, level: float = 0.95, theoretical: float | None = None) -> RateFit:
    """Least-squares slope of log risk against log n.

    Accepts a list of :class:`RiskReport` or two arrays ``(n_values, risks)``.
    The half-width is the ``level`` t-interval from the residuals.
    """
    if risks is None:
        ns = np.array([r.n for r in reports], float)
        rs = np.array([r.risk for r in reports], float)
    else:
        ns, rs = np.asarray(reports, float), np.asarray(risks, float)
    if np.unique(ns).size < 4:
        raise InvalidArgumentError("rate fit needs at least 4 distinct n values")
    if np.any(~(rs > 0)):
        raise InvalidDataError("risks must be positive")
    x, y = np.log(ns), np.log(rs)
    res = stats.linregress(x, y)
    dof = x.size - 2
    half = float(stats.t.ppf(0.5 + level / 2, dof) * res.stderr) if dof > 0 else float("inf")
    return RateFit(float(res.slope), float(res.intercept), half, ns.tolist(), rs.tolist(), theoretical)


def theoretical_exponent(sc: Scenario) -> float:
    """``-tau / (2 tau + 1)`` for the scenario's documented smoothness and true structure."""
    _, ex = rate_exponent_lp(sc.target.beta, sc.noise.lam, sc.p, sc.target.partition)
    return -ex


def calibrate_kappa(sc: Scenario, pilot: int = 20, quantile: float = 0.9, seed_offset: int = 10_000) -> dict:
    """Data-driven choice of ``kappa_cal`` from pilot samples of the scenario.

    For each pilot sample (seed streams disjoint from the evaluation ones)
    computes ``max_(I, h_I) ||f_h_I - K_h * f_I||_p / (Lambda_p U_p(h_I))``
    over every penalized block of the candidate set: the multiplier at which
    the penalty dominates the stochastic term uniformly. Returns the
    ``quantile`` of these ratios together with the raw values.
    """
    pilot_sc = sc.with_(seed=sc.seed + seed_offset, replications=pilot)
    K = build_kernel("gaussian", sc.order)
    ratios = []
    for i in range(pilot):
        Y = replication_data(pilot_sc, i)
        ctx = prepare(Y, sc.noise, sc.p, sc.family_obj(), sc.order, K, 1.0,
                      grid_points=sc.grid_points, max_points=sc.max_points,
                      h_max_policy=sc.h_max_policy)
        worst = 0.0
        for (I, hI), u in ctx.U_block.items():
            xi = stochastic_norm(ctx.cache.marginal(I, hI), sc.target, K, sc.p)
            worst = max(worst, xi / (ctx.Lambda * u))
        ratios.append(worst)
    return {"kappa_cal": float(np.quantile(ratios, quantile)), "ratios": ratios,
            "quantile": quantile, "pilot": pilot}


def write_reports_csv(path, reports: Sequence[RiskReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "p", "replications", "risk", "std_error", "excluded"])
        for r in reports:
            w.writerow([r.n, r.p, r.replications, r.risk, r.std_error, r.excluded])
