"""Bandwidth candidates, penalties, the comparison criterion and the selection rule.

The pipeline entry point is :func:`estimate`. Lower-level pieces
(:func:`build_candidates`, :func:`penalty_U`, :func:`gamma_constant`,
:func:`g_bar`, :func:`delta_tilde`, :func:`select`) are usable on their own.
"""

from __future__ import annotations

import itertools
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import e, log, pi, sqrt
from typing import Sequence

import numpy as np

from .errors import (
    AssumptionViolationError,
    ConfigurationError,
    InvalidArgumentError,
    InvalidDataError,
    NumericalGuardError,
    ResourceGuardError,
)
from .noise import NoiseModel, validate_assumptions
from .spectral import (
    EvaluationGrid,
    GridFunction,
    KernelSpec,
    build_kernel,
    decon_kernel,
    edge_ratio,
    embed,
    empirical_cf,
    estimate_marginal,
    kernel_multiplier,
    lp_norm,
    spectral_residual,
    to_space,
)
from .structure import Block, Partition, PartitionFamily, default_family, diamond

#: Candidates whose kernel spectrum exceeds this beyond the grid cutoff are dropped.
RESOLUTION_TOL = 1e-3
#: Refuse candidate sets larger than this (the criterion is quadratic in it).
MAX_CANDIDATES = 4000
H_MAX_POLICIES = ("unit", "log")


def _check_p(p: float) -> float:
    p = float(p)
    if not p > 1:
        raise InvalidArgumentError(f"loss index p must be in (1, inf], got {p}")
    return p


def b_p(p: float) -> float:
    p = _check_p(p)
    return 0.5 if np.isinf(p) else min(0.5, 1.0 - 1.0 / p)


def c_p(p: float, lam_max: float) -> float:
    """Feasibility threshold for finite ``p`` (``nan`` for ``p = inf``)."""
    p = _check_p(p)
    if np.isinf(p):
        return float("nan")
    base = (p / e) * (1.0 + lam_max * max(2.0, p / (p - 1.0)))
    return min(1.0, base ** (-p * (b_p(p) + lam_max)))


def bandwidth_bounds(p: float, n: int, size: int, policy: str = "unit") -> tuple[float, float]:
    """``(h_min, h_max)`` for a block of ``size`` coordinates.

    ``policy="log"`` uses ``h_max = (ln n)^(-p/|I|)`` for finite ``p``;
    the default ``"unit"`` uses ``h_max = 1`` for every ``p`` (see README).
    """
    p = _check_p(p)
    if policy not in H_MAX_POLICIES:
        raise InvalidArgumentError(f"unknown h_max policy {policy!r}")
    if np.isinf(p):
        return 1.0 / n, 1.0
    h_min = float(n) ** (-max(1.0, p / size))
    h_max = log(n) ** (-p / size) if policy == "log" else 1.0
    return h_min, h_max


def feasible(h_I, lam_I, p: float, n: int, lam_max: float) -> bool:
    h_I = np.asarray(h_I, dtype=float)
    lhs = (n * np.prod(h_I)) ** b_p(p) * np.prod(h_I ** np.asarray(lam_I, dtype=float))
    rhs = sqrt(log(n)) if np.isinf(p) else c_p(p, lam_max)
    return bool(lhs >= rhs)


def _dyadic_exponents(h_min: float, h_max: float) -> list[int]:
    ks = []
    k = 1
    while 2.0 ** -k >= h_min:
        if 2.0 ** -k <= h_max:
            ks.append(k)
        k += 1
    return ks


def block_bandwidths(p, n, lam_I, lam_max, policy="unit", k_max=None):
    """Feasible dyadic multibandwidths for one block; also returns the dyadic grid size."""
    size = len(lam_I)
    h_min, h_max = bandwidth_bounds(p, n, size, policy)
    ks = _dyadic_exponents(h_min, h_max)
    if k_max is not None:
        ks = [k for k in ks if k <= k_max]
    out = []
    for kk in itertools.product(ks, repeat=size):
        h = tuple(2.0 ** -k for k in kk)
        if feasible(h, lam_I, p, n, lam_max):
            out.append(h)
    return out, len(ks)


@dataclass(frozen=True)
class Candidate:
    h: tuple[float, ...]
    partition: Partition

    def h_block(self, I: Sequence[int]) -> tuple[float, ...]:
        return tuple(self.h[j] for j in I)

    @property
    def volume(self) -> float:
        return float(np.prod(self.h))

    def label(self) -> str:
        ks = ",".join(str(int(round(-np.log2(x)))) for x in self.h)
        return f"{self.partition} k=({ks})"


@dataclass
class CandidateSet:
    """Admissible pairs ``(h, P)`` with per-block dyadic bandwidth lists."""

    p: float
    n: int
    d: int
    lam: tuple[float, ...]
    family: PartitionFamily
    b: float
    c: float
    lam_max: float
    policy: str
    per_block: dict
    candidates: list

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def restrict(self, keep) -> "CandidateSet":
        """Copy holding only candidates for which ``keep(candidate)`` is true."""
        cands = [c for c in self.candidates if keep(c)]
        used = {(I, c.h_block(I)) for c in cands for I in c.partition}
        per_block = {I: [h for h in hs if (I, h) in used] for I, hs in self.per_block.items()}
        return CandidateSet(self.p, self.n, self.d, self.lam, self.family, self.b, self.c,
                            self.lam_max, self.policy, per_block, cands)

    def h_range(self) -> tuple[np.ndarray, np.ndarray]:
        H = np.array([c.h for c in self.candidates])
        return H.min(axis=0), H.max(axis=0)


def build_candidates(p, n, d, lam, family: PartitionFamily | None = None,
                     policy: str = "unit", k_max: int | None = None) -> CandidateSet:
    """Dyadic multibandwidths filtered by the feasibility constraint, for every member."""
    p = _check_p(p)
    if n < 3:
        raise InvalidArgumentError("need n >= 3 observations")
    lam = tuple(float(x) for x in np.broadcast_to(np.asarray(lam, dtype=float), (d,)))
    lam_max = max(lam)
    if family is None:
        family = default_family(d, "all" if d <= 4 else "full")
    if family.d != d:
        raise InvalidArgumentError("family dimension does not match d")
    per_block, problems = {}, []
    for P in family:
        for I in P:
            if I in per_block:
                continue
            hs, n_dyadic = block_bandwidths(p, n, [lam[j] for j in I], lam_max, policy, k_max)
            per_block[I] = hs
            if not hs:
                h_min, h_max = bandwidth_bounds(p, n, len(I), policy)
                if n_dyadic == 0:
                    problems.append(f"block {[i + 1 for i in I]}: no dyadic bandwidth 2^-k, k>=1, "
                                    f"in [h_min, h_max] = [{h_min:.3g}, {h_max:.3g}]")
                else:
                    problems.append(f"block {[i + 1 for i in I]}: feasibility constraint "
                                    f"(n V_h)^b prod h^lambda >= threshold removes all "
                                    f"{n_dyadic}^{len(I)} dyadic bandwidths")
    cands = []
    for P in family:
        lists = [per_block[I] for I in P]
        if any(not x for x in lists):
            continue
        for combo in itertools.product(*lists):
            h = [0.0] * d
            for I, hI in zip(P, combo):
                for j, v in zip(I, hI):
                    h[j] = v
            cands.append(Candidate(tuple(h), P))
    if not cands:
        raise ConfigurationError("empty candidate set: " + "; ".join(problems))
    if len(cands) > MAX_CANDIDATES:
        raise ResourceGuardError(
            f"{len(cands)} candidates exceed the limit {MAX_CANDIDATES}; "
            "restrict the family or pass k_max"
        )
    b = b_p(p)
    return CandidateSet(p, int(n), d, lam, family, b, c_p(p, lam_max), lam_max, policy,
                        per_block, cands)


# ---------------------------------------------------------------------------
# penalties and constants


def kernel_norm_index(p: float) -> float | None:
    """Which norm of ``L_(h)`` the penalty needs (``None`` when closed form)."""
    p = _check_p(p)
    if p < 2:
        return p
    if 2 < p < np.inf:
        return 2 * p / (p + 2)
    return None


def penalty_U(p, n, h_I, lam_I, L_norm: float | None = None) -> float:
    """Penalty ``U_p(h_I)``; ``L_norm`` is the kernel norm from :func:`kernel_norm_index`."""
    p = _check_p(p)
    h_I = np.asarray(h_I, dtype=float)
    lam_I = np.asarray(lam_I, dtype=float)
    poly = float(np.prod(h_I ** (-lam_I - 0.5)))
    if p < 2:
        if L_norm is None:
            raise InvalidArgumentError("p in (1,2) needs the L_p norm of the kernel")
        return n ** (1.0 / p - 1.0) * L_norm
    if p == 2:
        return poly / sqrt(n)
    if np.isinf(p):
        return sqrt(log(n)) * poly / sqrt(n)
    if L_norm is None:
        raise InvalidArgumentError("p in (2,inf) needs the L_{2p/(p+2)} norm of the kernel")
    return (poly + sqrt(log(n)) * L_norm) / sqrt(n)


def kernel_lp_norm(K: KernelSpec, h_I, q: NoiseModel, I: Sequence[int], r: float) -> float:
    """``||L_(h_I)||_r`` on a grid that resolves the kernel fully."""
    L = decon_kernel(K, h_I, q, EvaluationGrid.for_kernel(K, h_I, q, I), I)
    return lp_norm(L, r)


def _axis_table(K: KernelSpec, lam: float, m: int = 40001):
    """Fine 1D tables of ``|K_hat(t) (1+t^2)^(lam/2)|`` and its derivative on ``[0, T]``."""
    T = 3.0 * K.cutoff
    t = np.linspace(0.0, T, m)
    g = (1.0 + t ** 2) ** (lam / 2)
    f = K.ft(t) * g
    df = K.ft_derivative(t) * g + K.ft(t) * lam * t * (1.0 + t ** 2) ** (lam / 2 - 1)
    return t, f, df


def _trap(y, t):
    return float(np.trapezoid(y, t)) if hasattr(np, "trapezoid") else float(np.trapz(y, t))


def _cumtrap(y, t):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


@dataclass
class BlockConstants:
    """Auxiliary norms and constants of one block."""

    block: Block
    Kg_l1: float
    Kg_l2: float
    Kg_inf: float
    DKg_l1: float
    Kphi_l1: float
    Kphi_l2: float
    q_sup: float
    qhat_l1: float
    A: float

    @property
    def C_I(self) -> float:
        return self.A * (2 * pi) ** (-len(self.block) / 2) * max(self.Kg_l2, self.Kg_l1)

    @property
    def C_IKq(self) -> float:
        return self.A * (2 * pi) ** (-len(self.block) / 2) * max(
            self.Kg_l2, self.Kg_l1, self.DKg_l1, self.Kphi_l2, self.Kphi_l1
        )

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "block"}
        out["block"] = [i + 1 for i in self.block]
        out["C_I"] = self.C_I
        out["C_I_Kq"] = self.C_IKq
        return {k: (str(v) if isinstance(v, float) and not np.isfinite(v) else v) for k, v in out.items()}


def block_constants(K: KernelSpec, q: NoiseModel, I: Sequence[int], A: float) -> BlockConstants:
    """Norms of ``K_hat_I g_I``, its first derivatives and ``K_hat_I phi_I``.

    All factors are products over coordinates, so the integrals reduce to
    one-dimensional ones. For ``phi_I = max_j |t_j| g_I`` we use
    ``int max_j|t_j| prod w_j = int_0^inf [prod W_j(inf) - prod W_j(s)] ds``
    with ``W_j(s)`` the mass of ``w_j`` on ``[-s, s]``.
    """
    I = tuple(I)
    l1, l2sq, sup, dl1 = [], [], [], []
    W1, W2, t = [], [], None
    for j in I:
        t, f, df = _axis_table(K, q.components[j].lam)
        af = np.abs(f)
        l1.append(2 * _trap(af, t))
        l2sq.append(2 * _trap(af ** 2, t))
        sup.append(float(af.max()))
        dl1.append(2 * _trap(np.abs(df), t))
        W1.append(2 * _cumtrap(af, t))
        W2.append(2 * _cumtrap(af ** 2, t))
    Kg_l1 = float(np.prod(l1))
    Kg_l2 = sqrt(float(np.prod(l2sq)))
    Kg_inf = float(np.prod(sup))
    DKg_l1 = max(dl1[a] * float(np.prod(l1[:a] + l1[a + 1:])) for a in range(len(I)))
    tot1 = float(np.prod(l1))
    tot2 = float(np.prod(l2sq))
    cum1 = np.prod(np.stack(W1), axis=0)
    cum2 = np.prod(np.stack(W2), axis=0)
    Kphi_l1 = _trap(tot1 - cum1, t)
    Kphi_l2 = sqrt(_trap(2 * t * (tot2 - cum2), t))
    return BlockConstants(I, Kg_l1, Kg_l2, Kg_inf, DKg_l1, Kphi_l1, Kphi_l2,
                          q.density_sup(I), q.cf_l1(I), float(A))


def c_of_p(p: float) -> float:
    return 15.0 * p / log(p)


def gamma_constant(p, I, r, K: KernelSpec, q: NoiseModel, A: float = 1.0,
                   consts: BlockConstants | None = None) -> float:
    """``gamma_{p,I}(r)`` from the explicit four-case formula."""
    p = _check_p(p)
    if r < 1:
        raise InvalidArgumentError("r must be >= 1")
    I = tuple(I)
    if 1 < p < 2:
        return 4.0 + sqrt(37.0 / e * p * r / (2.0 - p))
    if consts is None:
        consts = block_constants(K, q, I, A)
    s = len(I)
    if p == 2:
        if not np.isfinite(consts.qhat_l1):
            raise AssumptionViolationError(
                f"N1(i): integral of |cf| is infinite on block {[i + 1 for i in I]}; p=2 constant undefined"
            )
        return (7.0 * consts.C_I
                + 3.0 * consts.A * (2 * pi) ** (-s / 2) * consts.Kg_inf * sqrt(consts.qhat_l1)) * r
    if not np.isfinite(consts.q_sup):
        raise AssumptionViolationError(
            f"N1(ii): noise density unbounded on block {[i + 1 for i in I]}"
        )
    if np.isinf(p):
        return (6.0 * consts.C_IKq * sqrt(max(1.0, consts.q_sup))
                * (93.0 * s * log(s) + 69.0 * r))
    lam_max = q.lam_max
    return ((46.0 * c_of_p(p) * max(p, e) / (3.0 * e))
            * c_p(p, lam_max) ** (1.0 / p - 0.5)
            * max(1.0, consts.C_I) * max(1.0, consts.q_sup) ** 0.75 * r)


def r_k(p: float, k: int) -> float:
    return float(k) if np.isinf(p) else k * float(p)


def gamma_p(p, family: PartitionFamily, K: KernelSpec, q: NoiseModel, A: float = 1.0):
    """Aggregate ``gamma_p`` and the per-block table of ``gamma_{p,I}(r_k)``, k in {1,2,4}."""
    blocks = family.closure()
    table, consts = {}, {}
    for I in blocks:
        c = None if 1 < p < 2 else block_constants(K, q, I, A)
        consts[I] = c
        table[I] = {k: gamma_constant(p, I, r_k(p, k), K, q, A, c) for k in (1, 2, 4)}
    if family.is_full_only():
        full = tuple(range(family.d))
        return table[full][1], table, consts
    return max(t[4] for t in table.values()), table, consts


def g_bar(norms, K: KernelSpec, d: int) -> float:
    """``1 v ||K||_1^d sup ||f_h_I||_p`` over the supplied estimate norms."""
    norms = list(norms)
    top = max(norms) if norms else 0.0
    return max(1.0, K.l1_norm ** d * top)


def lambda_p(gamma: float, G: float, dfrak: int) -> float:
    return dfrak * gamma * G ** (dfrak * (dfrak - 1))


# ---------------------------------------------------------------------------
# rates


def _beta_lam(beta, lam, d=None):
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    lam = np.broadcast_to(np.asarray(lam, dtype=float), beta.shape)
    if np.any(beta <= 0):
        raise InvalidArgumentError("smoothness beta must be > 0")
    return beta, lam


def rate_exponent_lp(beta, lam, p, P: Partition | None = None) -> tuple[float, float]:
    """``(tau, tau / (2 tau + 1))`` for the L_p loss under structure ``P``."""
    beta, lam = _beta_lam(beta, lam)
    b = b_p(p)
    if P is None:
        P = Partition.full(beta.size)
    tau = min(1.0 / float(np.sum((lam[list(I)] / b + 1.0) / beta[list(I)])) for I in P)
    return tau, tau / (2 * tau + 1)


def rate_exponent_sup(beta, r, lam, P: Partition | None = None) -> tuple[float, float, bool]:
    """``(Upsilon, Upsilon / (2 Upsilon + 1), consistent)`` for the sup-norm loss.

    ``consistent`` is False when ``1 - sum 1/(beta_j r_j) <= 0`` on some block;
    Upsilon and the exponent are then reported as 0.
    """
    beta, lam = _beta_lam(beta, lam)
    r = np.broadcast_to(np.asarray(r, dtype=float), beta.shape)
    if np.any(r < 1):
        raise InvalidArgumentError("r must be in [1, inf]")
    if P is None:
        P = Partition.full(beta.size)
    ups, ok = np.inf, True
    for I in P:
        b, lm, rr = beta[list(I)], lam[list(I)], r[list(I)]
        inv_br = np.where(np.isinf(rr), 0.0, 1.0 / (b * rr))
        tau = 1.0 / float(np.sum((2 * lm + 1) / b))
        inv_omega = float(np.sum((2 * lm + 1) * inv_br))
        kappa = (1.0 - float(np.sum(inv_br))) / float(np.sum(1.0 / b))
        if kappa <= 0:
            ok = False
            continue
        ups = min(ups, 1.0 / (1.0 / tau + inv_omega / kappa))
    if not ok:
        return 0.0, 0.0, False
    return ups, ups / (2 * ups + 1), True


# ---------------------------------------------------------------------------
# criterion and selection


class EstimateCache:
    """Write-once caches of marginal estimates keyed by ``(I, h_I)``."""

    def __init__(self, Y, K: KernelSpec, q: NoiseModel, grid: EvaluationGrid, p: float):
        self.Y, self.K, self.q, self.grid, self.p = Y, K, q, grid, p
        self._ecf, self._est, self._norm, self._smooth = {}, {}, {}, {}

    def ecf(self, I: Block):
        if I not in self._ecf:
            self._ecf[I] = empirical_cf(self.Y, I, self.grid.sub(I))
        return self._ecf[I]

    def marginal(self, I: Block, h_I) -> GridFunction:
        key = (I, tuple(h_I))
        if key not in self._est:
            self._est[key] = estimate_marginal(self.Y, I, h_I, self.K, self.q,
                                               self.grid.sub(I), ecf=self.ecf(I))
        return self._est[key]

    def norm(self, I: Block, h_I) -> float:
        key = (I, tuple(h_I))
        if key not in self._norm:
            self._norm[key] = lp_norm(self.marginal(I, h_I), self.p)
        return self._norm[key]

    def smoothed(self, I: Block, h_I, eta_I) -> np.ndarray:
        """Values of ``K_eta * f_h`` on block ``I`` (symmetric in ``h`` and ``eta``)."""
        a, b = tuple(h_I), tuple(eta_I)
        key = (I, min(a, b), max(a, b))
        if key in self._smooth:
            return self._smooth[key]
        est = self.marginal(I, key[1])
        S = est.spectrum * kernel_multiplier(self.K, key[2], est.grid)
        vals, _ = to_space(est.grid, S)
        if len(I) < self.grid.d:
            self._smooth[key] = vals
        return vals

    @property
    def estimates(self) -> dict:
        return dict(self._est)


def _product(parts, d):
    out = None
    for I, vals in parts:
        shape = [1] * d
        for a, j in enumerate(I):
            shape[j] = vals.shape[a]
        v = vals.reshape(shape)
        out = v if out is None else out * v
    return out


def _norm_full(a, p, vol):
    a = np.abs(a)
    if np.isinf(p):
        return float(a.max())
    if p == 2:
        return float(np.sqrt(np.vdot(a, a).real * vol))
    return float((np.sum(a ** p) * vol) ** (1.0 / p))


def comparison_norm(cache: EstimateCache, cand: Candidate, other: Candidate) -> float:
    """``|| prod_{J in P<>P'} f_{h_J, eta_J} - prod_{J' in P'} f_{eta_J'} ||_p`` on the full grid."""
    d = cache.grid.d
    PP = diamond(cand.partition, other.partition)
    left = [(J, cache.smoothed(J, cand.h_block(J), other.h_block(J))) for J in PP]
    right = [(J, cache.marginal(J, other.h_block(J)).values) for J in other.partition]
    diff = np.broadcast_to(_product(left, d), cache.grid.shape) - _product(right, d)
    return _norm_full(diff, cache.p, cache.grid.cell_volume)


def delta_tilde(cache: EstimateCache, cand: Candidate, others: Sequence[Candidate],
                penalties: Sequence[float]) -> float:
    """``sup_(eta, P') [ comparison_norm - penalty(eta, P') ]_+``."""
    best = 0.0
    for other, pen in zip(others, penalties):
        best = max(best, comparison_norm(cache, cand, other) - pen)
    return best


def _partition_key(P: Partition):
    return P.blocks


def select(cands: Sequence[Candidate], deltas: Sequence[float], penalties: Sequence[float],
           rtol: float = 1e-12):
    """Argmin of ``delta + penalty`` with a deterministic tie-break.

    Ties (objectives within ``rtol`` of the minimum) go to the larger
    bandwidth volume, then the lexicographically earlier partition, then the
    larger bandwidth vector.
    """
    if len(cands) == 0:
        raise ConfigurationError("empty candidate set")
    obj = np.asarray(deltas, dtype=float) + np.asarray(penalties, dtype=float)
    best = float(obj.min())
    tied = [i for i in range(len(cands)) if obj[i] <= best + rtol * max(abs(best), 1e-300)]
    tied.sort(key=lambda i: (-cands[i].volume, _partition_key(cands[i].partition),
                             tuple(-x for x in cands[i].h)))
    note = "unique minimum" if len(tied) == 1 else (
        f"{len(tied)} candidates tied; chose larger volume, then earlier partition")
    return tied[0], note


@dataclass
class SelectionResult:
    h: tuple[float, ...]
    partition: Partition
    estimate: GridFunction
    table: list
    constants: dict
    diagnostics: dict
    tie_break: str
    grid: EvaluationGrid
    candidates: CandidateSet
    noise_report: object = None
    cache: EstimateCache | None = field(default=None, repr=False)
    index: int = 0

    @property
    def selected(self) -> Candidate:
        return self.candidates.candidates[self.index]

    def marginals(self) -> list[GridFunction]:
        return [self.cache.marginal(I, self.selected.h_block(I)) for I in self.partition]

    def to_dict(self, timestamp: bool = True) -> dict:
        out = {
            "selected": {"h": list(self.h), "partition": str(self.partition)},
            "tie_break": self.tie_break,
            "constants": self.constants,
            "candidates": self.table,
            "diagnostics": self.diagnostics,
            "grid": [{"start": a.start, "step": a.step, "size": a.size} for a in self.grid.axes],
        }
        if self.noise_report is not None:
            out["noise_validation"] = self.noise_report.to_dict()
        if timestamp:
            out["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        return out

    def to_json(self, timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(timestamp), indent=2, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, float):
        return str(o)
    raise TypeError(type(o))


def _check_data(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] == 0:
        raise InvalidDataError("data must be a nonempty (n, d) array")
    if not np.all(np.isfinite(Y)):
        raise InvalidDataError("data contain non-finite values")
    if Y.shape[0] < 3:
        raise InvalidArgumentError(f"need n >= 3 observations, got {Y.shape[0]}")
    return Y


@dataclass
class SelectionContext:
    """Everything the criterion needs, computed before any comparison."""

    Y: np.ndarray
    kernel: KernelSpec
    noise: NoiseModel
    family: PartitionFamily
    report: object
    candidates: CandidateSet
    grid: EvaluationGrid
    cache: EstimateCache
    G_bar: float
    gamma: float
    gamma_table: dict
    block_consts: dict
    dfrak: int
    Lambda: float
    U_block: dict
    U: list
    A: float
    kappa_cal: float
    h_max_policy: str
    dropped: list = field(default_factory=list)

    @property
    def penalties(self) -> list:
        return [self.kappa_cal * self.Lambda * u for u in self.U]


def prepare(Y, noise: NoiseModel, p: float = 2, family: PartitionFamily | None = None,
            order: int = 2, kernel: KernelSpec | None = None, kappa_cal: float = 1.0,
            grid: EvaluationGrid | None = None, grid_points=None, max_points=None,
            h_max_policy: str = "unit", k_max: int | None = None,
            A: float | None = None, resolution_tol: float = RESOLUTION_TOL) -> SelectionContext:
    """Validate inputs and compute estimates, ``G_bar``, ``Lambda_p`` and penalties."""
    Y = _check_data(Y)
    n, d = Y.shape
    p = _check_p(p)
    if noise.d != d:
        raise InvalidArgumentError(f"noise model has {noise.d} coordinates, data has {d}")
    if not kappa_cal > 0:
        raise InvalidArgumentError("kappa_cal must be > 0")
    K = kernel if kernel is not None else build_kernel("gaussian", order)
    if family is None:
        family = default_family(d, "all" if d <= 4 else "full")

    report = validate_assumptions(noise, p, family, A=A)
    if not report.passed:
        raise AssumptionViolationError("; ".join(report.failures))
    A_used = noise.A if noise.A is not None else report.A

    cs = build_candidates(p, n, d, noise.lam, family, h_max_policy, k_max)
    if grid is None:
        hmin, hmax = cs.h_range()
        grid = EvaluationGrid.for_data(Y, K, hmin, hmax, noise, grid_points, max_points)
    dropped = [c for c in cs if spectral_residual(K, c.h, grid) > resolution_tol]
    if len(dropped) == len(cs):
        raise NumericalGuardError(
            f"evaluation grid {grid.shape} resolves none of the {len(cs)} candidates; "
            "raise grid_points or max_points"
        )
    if dropped:
        cs = cs.restrict(lambda c: spectral_residual(K, c.h, grid) <= resolution_tol)
    cache = EstimateCache(Y, K, noise, grid, p)

    # every marginal estimate the criterion and G_bar need
    needed = set()
    for c in cs:
        for P2 in family:
            for J in diamond(c.partition, P2):
                needed.add((J, c.h_block(J)))
    for J, hJ in sorted(needed):
        cache.marginal(J, hJ)
    G = g_bar((cache.norm(J, hJ) for J, hJ in needed), K, d)
    gam, gam_table, consts = gamma_p(p, family, K, noise, A_used)
    dfrak = family.max_blocks
    Lam = lambda_p(gam, G, dfrak)

    norm_idx = kernel_norm_index(p)
    U_block = {}
    for c in cs:
        for I in c.partition:
            key = (I, c.h_block(I))
            if key not in U_block:
                Ln = None if norm_idx is None else kernel_lp_norm(K, key[1], noise, I, norm_idx)
                U_block[key] = penalty_U(p, n, key[1], [noise.lam[j] for j in I], Ln)
    U = [max(U_block[(I, c.h_block(I))] for I in c.partition) for c in cs]
    return SelectionContext(Y, K, noise, family, report, cs, grid, cache, G, gam, gam_table,
                            consts, dfrak, Lam, U_block, U, A_used, kappa_cal, h_max_policy,
                            [{"h": list(c.h), "partition": str(c.partition)} for c in dropped])


def estimate(Y, noise: NoiseModel, p: float = 2, family: PartitionFamily | None = None,
             order: int = 2, kernel: KernelSpec | None = None, kappa_cal: float = 1.0,
             grid: EvaluationGrid | None = None, grid_points=None, max_points=None,
             h_max_policy: str = "unit", k_max: int | None = None, A: float | None = None,
             threads: int = 1, resolution_tol: float = RESOLUTION_TOL) -> SelectionResult:
    """Run the full data-driven procedure on observations ``Y`` (n x d).

    Order of computation: candidate set, all required marginal estimates,
    ``G_bar`` and ``Lambda_p``, penalties, the criterion for every candidate,
    and finally the argmin. ``kappa_cal`` multiplies ``Lambda_p U_p``.
    """
    ctx = prepare(Y, noise, p, family, order, kernel, kappa_cal, grid, grid_points,
                  max_points, h_max_policy, k_max, A, resolution_tol)
    return run_selection(ctx, threads)


def run_selection(ctx: SelectionContext, threads: int = 1) -> SelectionResult:
    cache, cs, grid, K = ctx.cache, ctx.candidates, ctx.grid, ctx.kernel
    d = grid.d
    p = cs.p
    cands = cs.candidates
    pen = ctx.penalties
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            deltas = list(ex.map(lambda c: delta_tilde(cache, c, cands, pen), cands))
    else:
        deltas = [delta_tilde(cache, c, cands, pen) for c in cands]
    idx, note = select(cands, deltas, pen)
    chosen = cands[idx]

    factors = [cache.marginal(I, chosen.h_block(I)) for I in chosen.partition]
    vals = np.broadcast_to(_product([(f.block, f.values) for f in factors], d), grid.shape)
    est = GridFunction(tuple(range(d)), grid, np.array(vals), None,
                       {"h": chosen.h, "partition": str(chosen.partition)})

    table = []
    for c, u, pn, dl in zip(cands, ctx.U, pen, deltas):
        table.append({
            "h": list(c.h),
            "partition": str(c.partition),
            "U": u,
            "penalty": pn,
            "delta": dl,
            "objective": dl + pn,
            "spectral_residual": spectral_residual(K, c.h, grid),
        })
    imag = max(f.params.get("imag_residual", 0.0) for f in cache.estimates.values())
    diagnostics = {
        "selected_spectral_residual": spectral_residual(K, chosen.h, grid),
        "max_spectral_residual": max(r["spectral_residual"] for r in table),
        "max_imag_residual": imag,
        "imag_residual_ok": bool(imag < 1e-8 * max(1.0, float(np.abs(est.values).max()))),
        "edge_ratio": edge_ratio(est),
        "n": int(ctx.Y.shape[0]),
        "d": d,
        "n_candidates": len(cands),
        "unresolved_dropped": ctx.dropped,
    }
    constants = {
        "p": "inf" if np.isinf(p) else p,
        "gamma_p": ctx.gamma,
        "Lambda_p": ctx.Lambda,
        "G_bar": ctx.G_bar,
        "kappa_cal": ctx.kappa_cal,
        "dfrak": ctx.dfrak,
        "A": ctx.A,
        "b_p": cs.b,
        "c_p": cs.c,
        "kernel_order": K.order,
        "kernel_l1": K.l1_norm,
        "h_max_policy": ctx.h_max_policy,
        "gamma_table": {str([i + 1 for i in I]): {f"r{k}": v for k, v in t.items()}
                        for I, t in ctx.gamma_table.items()},
        "block_constants": [c.to_dict() for c in ctx.block_consts.values() if c is not None],
    }
    return SelectionResult(chosen.h, chosen.partition, est, table, constants, diagnostics,
                           note, grid, cs, ctx.report, cache, idx)
