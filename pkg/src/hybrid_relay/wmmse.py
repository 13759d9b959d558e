"""Joint baseband source/relay design by weighted-MMSE alternation.

Mutual information after the RF stage, ``I = log2 det(E^{-1})``, is maximized
by alternating four closed-form steps: the MMSE receiver, the weight
``V = E^{-1} / ln 2``, the relay filter and the source precoder. The last two
are constrained least-squares problems whose Lagrange multipliers are found
by bisection.

Shapes used throughout (``Nrf`` RF chains, ``Ns`` streams):

* ``h1_eff``, ``h2_eff``, ``gr_bb``: ``Nrf x Nrf``
* ``ft_bb``: ``Nrf x Ns``; ``wd_mmse``: ``Ns x Nrf``
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize

from ._linalg import (
    LN2,
    NumericalError,
    Pencil,
    ctrace,
    hermitian_part,
    hsolve,
    logdet2_pd,
)
from .rf_design import EffectiveChannels, RfStage

logger = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "BisectionStats",
    "BasebandSolution",
    "ConvergenceWarning",
    "composite_channel",
    "noise_cov_effective",
    "mmse_receiver",
    "emmse",
    "emmse_expanded",
    "mutual_information",
    "update_weight",
    "relay_tx_power",
    "source_tx_power",
    "solve_relay_filter",
    "solve_source_precoder",
    "wmmse_design",
]

# a free constraint may exceed its budget by this much before a
# single-multiplier case is declared failed
FREE_CONSTRAINT_RTOL = 1e-6
# eigenvalues below this fraction of the largest span the null space of a Gram matrix
SUBSPACE_RTOL = 1e-10


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Budgets, noise levels and solver tolerances.

    ``bisect_tol`` is relative to the initial multiplier bracket. With
    ``root_method="bisection"`` a search also stops once the active
    constraint is met from the feasible side to ``power_rtol`` relative
    accuracy; ``"brent"`` runs Brent's method on the same bracket.
    """

    power_source: float
    power_relay: float
    sigma1: float
    sigma2: float
    outer_tol: float = 1e-4
    bisect_tol: float = 1e-12
    power_rtol: float = 1e-10
    max_outer_iters: int = 200
    lambda_init_max: float = 1.0
    max_doublings: int = 60
    root_method: str = "brent"

    def __post_init__(self):
        for name in ("power_source", "power_relay", "outer_tol", "bisect_tol",
                     "power_rtol", "lambda_init_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sigma1 < 0 or self.sigma2 <= 0:
            raise ValueError("noise levels must be positive (sigma1 >= 0, sigma2 > 0)")
        if self.root_method not in ("brent", "bisection"):
            raise ValueError(f"root_method must be 'brent' or 'bisection', got {self.root_method!r}")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")


@dataclass(frozen=True)
class BisectionStats:
    layer: str
    iterations: int
    bracket: float
    tol: float

    @property
    def bound(self):
        """``ceil(log2(bracket / tol))``; zero when no search was needed."""
        if self.bracket <= 0:
            return 0
        return math.ceil(math.log2(self.bracket / self.tol))


@dataclass
class BasebandSolution:
    ft_bb: np.ndarray
    gr_bb: np.ndarray
    wd_mmse: np.ndarray
    e_mmse: np.ndarray
    weight: np.ndarray
    mutual_info_trace: List[float]
    lambdas: Tuple[float, float, float]
    surrogate_trace: List[float] = field(default_factory=list)
    power_trace: List[Tuple[float, float]] = field(default_factory=list)
    lambda_trace: List[Tuple[float, float, float]] = field(default_factory=list)
    bisections: List[List[BisectionStats]] = field(default_factory=list)
    converged: bool = True
    iterations: int = 0

    @property
    def mutual_information(self):
        return self.mutual_info_trace[-1]


# ---------------------------------------------------------------------------
# closed-form pieces


def composite_channel(h1_eff, h2_eff, ft_bb, gr_bb):
    """``H2 G H1 F``: the cascaded ``Nrf x Ns`` signal matrix."""
    return h2_eff @ gr_bb @ h1_eff @ ft_bb


def noise_cov_effective(h2_eff, gr_bb, wr_rf, wd_rf, sigma1, sigma2):
    """Covariance of the forwarded relay noise plus destination noise.

    ``sigma1^2 (H2 G Wr)(H2 G Wr)^H + sigma2^2 Wd Wd^H``, with ``Wr``/``Wd``
    the relay/destination RF combiners.
    """
    hg = h2_eff @ gr_bb @ wr_rf
    return hermitian_part(sigma1 ** 2 * (hg @ hg.conj().T) + sigma2 ** 2 * (wd_rf @ wd_rf.conj().T))


def mmse_receiver(h1_eff, h2_eff, ft_bb, gr_bb, r_n):
    """``G^H (G G^H + R)^{-1}`` for the composite ``G``."""
    g = composite_channel(h1_eff, h2_eff, ft_bb, gr_bb)
    c = hermitian_part(g @ g.conj().T + r_n)
    return hsolve(c, g, "receive covariance").conj().T


def _information_matrix(g, r_n):
    """``I + G^H R^{-1} G``."""
    ns = g.shape[1]
    return hermitian_part(np.eye(ns) + g.conj().T @ hsolve(r_n, g, "noise covariance"))


def emmse(h1_eff, h2_eff, ft_bb, gr_bb, r_n):
    """MMSE matrix ``(I + G^H R^{-1} G)^{-1}``."""
    g = composite_channel(h1_eff, h2_eff, ft_bb, gr_bb)
    m = _information_matrix(g, r_n)
    return hermitian_part(hsolve(m, np.eye(m.shape[0]), "information matrix"))


def emmse_expanded(h1_eff, h2_eff, ft_bb, gr_bb, r_n, wd):
    """Error covariance ``(I - W G)(I - W G)^H + W R W^H`` of an arbitrary receiver."""
    g = composite_channel(h1_eff, h2_eff, ft_bb, gr_bb)
    d = np.eye(g.shape[1]) - wd @ g
    return d @ d.conj().T + wd @ r_n @ wd.conj().T


def mutual_information(e_mmse) -> float:
    """``log2 det(E^{-1})`` in bits."""
    return -logdet2_pd(e_mmse, "E_MMSE")


def update_weight(e_mmse):
    """``V = E^{-1} / ln 2``."""
    e = hermitian_part(np.asarray(e_mmse, dtype=complex))
    try:
        np.linalg.cholesky(e)
    except np.linalg.LinAlgError as exc:
        raise ValueError("E_MMSE is not positive definite") from exc
    return hermitian_part(hsolve(e, np.eye(e.shape[0]))) / LN2


def relay_tx_power(gr_bb, fr_rf, h1_eff, ft_bb, wr_rf, sigma1) -> float:
    """``||Fr G H1 F||^2 + sigma1^2 ||Fr G Wr||^2`` (unit-power symbols)."""
    a = fr_rf @ gr_bb
    sig = a @ h1_eff @ ft_bb
    noi = a @ wr_rf
    return float(np.vdot(sig, sig).real + sigma1 ** 2 * np.vdot(noi, noi).real)


def source_tx_power(ft_rf, ft_bb) -> float:
    x = ft_rf @ ft_bb
    return float(np.vdot(x, x).real)


# ---------------------------------------------------------------------------
# multiplier searches


def _bracket(power, budget, cfg, layer):
    lo, hi = 0.0, cfg.lambda_init_max
    doublings = 0
    while power(hi) > budget:
        lo, hi = hi, 2.0 * hi
        doublings += 1
        if doublings > cfg.max_doublings:
            raise NumericalError(
                f"{layer}: multiplier bracket not found after {cfg.max_doublings} doublings "
                f"(power {power(hi):.6g} > budget {budget:.6g})"
            )
    return lo, hi


def _bisect(power, budget, cfg, layer):
    """Smallest multiplier meeting ``power(lam) <= budget`` (power is nonincreasing).

    The bracket ``[0, lambda_init_max]`` is doubled until its right end is
    feasible and then shrunk to a width of ``bisect_tol`` times its initial
    width, either by plain halving or by Brent's method
    (``cfg.root_method``). The returned multiplier is always on the feasible
    side. Returns ``(lam, stats)``; ``lam == 0`` when the constraint is
    inactive.
    """
    if power(0.0) <= budget:
        return 0.0, BisectionStats(layer, 0, 0.0, 0.0)
    lo, hi = _bracket(power, budget, cfg, layer)
    bracket = hi - lo
    tol = cfg.bisect_tol * bracket
    if cfg.root_method == "brent":
        if power(hi) == budget:
            return hi, BisectionStats(layer, 0, bracket, tol)
        lam, res = optimize.brentq(
            lambda x: power(x) - budget, lo, hi, xtol=tol, full_output=True, disp=False
        )
        iters = res.iterations
        # brentq returns a point within tol of the root, possibly on the infeasible side
        step = tol
        while lam < hi and power(lam) > budget:
            lam = min(hi, lam + step)
            step *= 2.0
        return lam, BisectionStats(layer, iters, bracket, tol)
    floor = budget * (1.0 - cfg.power_rtol)
    iters = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        iters += 1
        p = power(mid)
        if p <= budget:
            hi = mid
            if p >= floor:
                break
        else:
            lo = mid
    return hi, BisectionStats(layer, iters, bracket, tol)


def _relay_update(k1, b, q, n_r, budget, cfg):
    """Minimize ``Tr(K1 G Q G^H) - 2 Re Tr(B^H K1 ...)`` style relay subproblem.

    The stationary point is ``G(lam) = (K1 + lam N)^{-1} B`` with ``B`` the
    right-hand side already multiplied by ``Q^{-1}``; power is
    ``Tr(N G Q G^H)``.
    """
    pencil = Pencil(k1, n_r, b, "relay RF Gram matrix")
    s = pencil.coef @ q @ pencil.coef.conj().T
    w = np.real(np.diag(s)).copy()

    def power(lam):
        return pencil.norm2(lam, w)

    lam, stats = _bisect(power, budget, cfg, "relay")
    return pencil.solution(lam), lam, [stats]


def _reduce_source_problem(t1, t2, n1, r):
    """Restrict the precoder problem to the subspace seen by ``T1`` and ``T2``.

    The objective and the relay power only see ``F`` through
    ``range(T1 + T2)``; the complementary component is fixed by minimizing
    source power, which turns ``N1`` into its Schur complement on that
    subspace. Returns ``(T1s, T2s, N1s, rs, M)`` with ``F = M @ Y``.
    """
    scale1 = max(np.linalg.norm(t1), 1e-300)
    scale2 = max(np.linalg.norm(t2), 1e-300)
    mu, u = np.linalg.eigh(hermitian_part(t1 / scale1 + t2 / scale2))
    keep = mu > SUBSPACE_RTOL * max(mu[-1], 0.0)
    if keep.all():
        return t1, t2, n1, r, None
    qs, qp = u[:, keep], u[:, ~keep]
    n_ps = qp.conj().T @ n1 @ qs
    z = hsolve(qp.conj().T @ n1 @ qp, n_ps, "source RF Gram block")
    m = qs - qp @ z
    n1s = hermitian_part(qs.conj().T @ n1 @ qs - n_ps.conj().T @ z)
    return (
        hermitian_part(qs.conj().T @ t1 @ qs),
        hermitian_part(qs.conj().T @ t2 @ qs),
        n1s,
        qs.conj().T @ r,
        m,
    )


def _source_update(t1, r, n1, t2, c0, budget_t, budget_r, cfg):
    """Four-case multiplier search for the source precoder.

    The precoder is ``(T1 + l1 N1 + l2 T2)^{-1} r`` with source power
    ``Tr(F^H N1 F)`` and relay power ``Tr(F^H T2 F) + c0``. Cases are tried in
    order: both multipliers zero; relay multiplier only; source multiplier
    only; two-layer search over both.
    """
    relay_budget = budget_r - c0
    if relay_budget <= 0:
        raise NumericalError(
            f"relay noise power {c0:.6g} alone exceeds the relay budget {budget_r:.6g}"
        )
    t1s, t2s, n1s, rs, m = _reduce_source_problem(t1, t2, n1, r)

    def lift(y):
        return y if m is None else m @ y

    slack_t = budget_t * (1.0 + FREE_CONSTRAINT_RTOL)
    slack_r = relay_budget + budget_r * FREE_CONSTRAINT_RTOL

    p_src = Pencil(t1s, n1s, rs, "source RF Gram matrix")
    s_src = p_src.coef @ p_src.coef.conj().T
    w_src = p_src.row_norms()
    p_src_relay = p_src.transformed(t2s)

    # (i) both multipliers zero
    if p_src.norm2(0.0, w_src) <= budget_t and p_src.quad(0.0, p_src_relay, s_src) <= relay_budget:
        return lift(p_src.solution(0.0)), 0.0, 0.0, []

    # (ii) source multiplier zero, search the relay multiplier
    p_rel = Pencil(t1s, t2s, rs, "relay-power Gram matrix")
    s_rel = p_rel.coef @ p_rel.coef.conj().T
    w_rel = p_rel.row_norms()
    lam2, st = _bisect(lambda l: p_rel.norm2(l, w_rel), relay_budget, cfg, "source/relay")
    if p_rel.quad(lam2, p_rel.transformed(n1s), s_rel) <= slack_t:
        return lift(p_rel.solution(lam2)), 0.0, lam2, [st]

    # (iii) relay multiplier zero, search the source multiplier
    lam1, st = _bisect(lambda l: p_src.norm2(l, w_src), budget_t, cfg, "source/source")
    if p_src.quad(lam1, p_src_relay, s_src) <= slack_r:
        return lift(p_src.solution(lam1)), lam1, 0.0, [st]

    # (iv) two-layer search: inner relay multiplier for every outer source multiplier
    inner_log = []
    make = Pencil.family(t1s, n1s, t2s, rs, "relay-power Gram matrix")

    def inner(lam1):
        p = make(lam1)
        s = p.coef @ p.coef.conj().T
        w = p.row_norms()
        lam2, st2 = _bisect(lambda l: p.norm2(l, w), relay_budget, cfg, "two-layer/inner")
        inner_log.append(st2)
        return p, s, lam2

    def outer_power(lam1):
        p, s, lam2 = inner(lam1)
        return p.quad(lam2, p.transformed(n1s), s)

    lam1, st_outer = _bisect(outer_power, budget_t, cfg, "two-layer/outer")
    p, s, lam2 = inner(lam1)
    src = p.quad(lam2, p.transformed(n1s), s)
    rel = p.norm2(lam2, p.row_norms())
    if src > slack_t or rel > slack_r:
        raise NumericalError(
            "no feasible source multipliers: source residual "
            f"{src - budget_t:.3g}, relay residual {rel - relay_budget:.3g}"
        )
    return lift(p.solution(lam2)), lam1, lam2, [st_outer] + inner_log


# ---------------------------------------------------------------------------
# problem definition shared with the robust variant


class RelayProblem:
    """Nominal (perfect-CSI) baseband problem on effective channels."""

    def __init__(self, h1_eff, h2_eff, stage: RfStage, cfg: SolverConfig):
        self.h1 = np.asarray(h1_eff)
        self.h2 = np.asarray(h2_eff)
        self.stage = stage
        self.cfg = cfg
        self.s1 = cfg.sigma1 ** 2
        self.s2 = cfg.sigma2 ** 2
        self.n_src = hermitian_part(stage.ft_rf.conj().T @ stage.ft_rf)
        self.n_rel = hermitian_part(stage.fr_rf.conj().T @ stage.fr_rf)
        self.wrwr = hermitian_part(stage.wr_rf @ stage.wr_rf.conj().T)
        self.wdwd = hermitian_part(stage.wd_rf @ stage.wd_rf.conj().T)

    # covariance at the relay input (signal + forwarded noise), given F
    def relay_input_cov(self, f):
        x = self.h1 @ f
        return hermitian_part(x @ x.conj().T + self.s1 * self.wrwr)

    def noise_cov(self, g):
        hg = self.h2 @ g
        return hermitian_part(self.s1 * (hg @ self.wrwr @ hg.conj().T) + self.s2 * self.wdwd)

    def total_noise(self, f, g):
        """Covariance of everything at the destination except the useful signal."""
        return self.noise_cov(g)

    def receiver(self, f, g):
        """Return ``(W, E, objective_bits)``."""
        gc = self.h2 @ g @ self.h1 @ f
        r = self.total_noise(f, g)
        w = hsolve(hermitian_part(gc @ gc.conj().T + r), gc, "receive covariance").conj().T
        m = _information_matrix(gc, r)
        e = hermitian_part(hsolve(m, np.eye(m.shape[0]), "information matrix"))
        return w, e, logdet2_pd(m, "information matrix")

    def powers(self, f, g):
        return source_tx_power(self.stage.ft_rf, f), float(
            np.real(ctrace(self.n_rel @ g, self.relay_input_cov(f) @ g.conj().T))
        )

    def relay_terms(self, v, w, f):
        a = w @ self.h2
        k1 = hermitian_part(a.conj().T @ v @ a)
        return k1, a

    def relay_step(self, v, w, f):
        k1, a = self.relay_terms(v, w, f)
        q = self.relay_input_cov(f)
        b = hsolve(q, self.h1 @ f @ v @ a, "relay input covariance").conj().T
        return _relay_update(k1, b, q, self.n_rel, self.cfg.power_relay, self.cfg)

    def source_terms(self, v, w, g):
        c = w @ self.h2 @ g @ self.h1
        t1 = hermitian_part(c.conj().T @ v @ c)
        pg = g.conj().T @ self.n_rel @ g
        t2 = hermitian_part(self.h1.conj().T @ pg @ self.h1)
        return t1, c, t2

    def source_step(self, v, w, g):
        t1, c, t2 = self.source_terms(v, w, g)
        r = c.conj().T @ v
        c0 = self.s1 * float(np.real(ctrace(self.n_rel @ g, self.wrwr @ g.conj().T)))
        return _source_update(
            t1, r, self.n_src, t2, c0, self.cfg.power_source, self.cfg.power_relay, self.cfg
        )

    def initial(self, ns):
        nrf = self.h1.shape[0]
        p = np.eye(nrf, ns, dtype=complex)
        f = np.sqrt(self.cfg.power_source / source_tx_power(self.stage.ft_rf, p)) * p
        g = np.eye(nrf, dtype=complex)
        _, pr = self.powers(f, g)
        return f, np.sqrt(self.cfg.power_relay / pr) * g


def surrogate(v, e) -> float:
    """``Tr(V E) - log2 det V``; minimized over ``V`` at ``V = E^{-1} / ln 2``."""
    return float(np.real(ctrace(v, e))) - logdet2_pd(v, "weight")


def run_alternation(problem, ns, weighting="wmmse", initial=None) -> BasebandSolution:
    """Alternate receiver, weight, relay filter and source precoder updates.

    ``weighting="mmse"`` freezes ``V = I`` (plain sum-MSE minimization).
    """
    cfg = problem.cfg
    if weighting not in ("wmmse", "mmse"):
        raise ValueError(f"unknown weighting {weighting!r}")
    f, g = problem.initial(ns) if initial is None else initial
    w, e, info = problem.receiver(f, g)
    trace = [info]
    sol = BasebandSolution(f, g, w, e, update_weight(e), trace, (0.0, 0.0, 0.0))
    sol.power_trace.append(problem.powers(f, g))
    best = (info, f, g, w, e, (0.0, 0.0, 0.0))
    converged = False
    k = 0
    for k in range(1, cfg.max_outer_iters + 1):
        v = update_weight(e) if weighting == "wmmse" else np.eye(ns, dtype=complex)
        sol.surrogate_trace.append(surrogate(v, e))
        g, lam_r, st_r = problem.relay_step(v, w, f)
        f, lam1, lam2, st_f = problem.source_step(v, w, g)
        w, e, info = problem.receiver(f, g)
        trace.append(info)
        sol.power_trace.append(problem.powers(f, g))
        sol.lambda_trace.append((lam_r, lam1, lam2))
        sol.bisections.append(st_r + st_f)
        if info > best[0]:
            best = (info, f, g, w, e, sol.lambda_trace[-1])
        if abs(trace[-1] - trace[-2]) <= cfg.outer_tol:
            converged = True
            break
    sol.iterations = k
    sol.converged = converged
    if not converged:
        warnings.warn(
            f"baseband design did not converge in {cfg.max_outer_iters} iterations; "
            "returning the best iterate",
            ConvergenceWarning,
            stacklevel=2,
        )
        _, f, g, w, e, lambdas = best
    else:
        lambdas = sol.lambda_trace[-1] if sol.lambda_trace else (0.0, 0.0, 0.0)
    sol.ft_bb, sol.gr_bb, sol.wd_mmse, sol.e_mmse = f, g, w, e
    sol.weight = update_weight(e)
    # multipliers of the iteration that produced the returned filters
    sol.lambdas = lambdas
    return sol


# ---------------------------------------------------------------------------
# public solver entry points


def _stage_from(fr_rf, wr_rf, ft_rf=None):
    nrf = fr_rf.shape[1]
    ft = ft_rf if ft_rf is not None else np.eye(nrf, dtype=complex)
    return RfStage(ft_rf=ft, wr_rf=wr_rf, fr_rf=fr_rf, wd_rf=np.eye(nrf, dtype=complex))


def solve_relay_filter(weight, ft_bb, h1_eff, h2_eff, wd_mmse, fr_rf, wr_rf, cfg: SolverConfig):
    """Relay baseband filter for fixed weight, precoder and receiver.

    Returns ``(gr_bb, lambda_r)``.
    """
    problem = RelayProblem(h1_eff, h2_eff, _stage_from(fr_rf, wr_rf), cfg)
    g, lam, _ = problem.relay_step(weight, wd_mmse, ft_bb)
    return g, lam


def solve_source_precoder(weight, gr_bb, h1_eff, h2_eff, wd_mmse, ft_rf, fr_rf, wr_rf,
                          cfg: SolverConfig):
    """Source baseband precoder under both power constraints.

    Returns ``(ft_bb, lambda_t1, lambda_t2)``.
    """
    problem = RelayProblem(h1_eff, h2_eff, _stage_from(fr_rf, wr_rf, ft_rf), cfg)
    f, lam1, lam2, _ = problem.source_step(weight, wd_mmse, gr_bb)
    return f, lam1, lam2


def wmmse_design(eff: EffectiveChannels, stage: RfStage, ns: int, cfg: SolverConfig,
                 weighting: str = "wmmse") -> BasebandSolution:
    """Jointly design ``F_t^BB`` and ``G_r^BB`` for ``ns`` streams."""
    nrf = stage.n_rf
    if not 1 <= ns <= nrf:
        raise ValueError(f"need 1 <= ns <= n_rf, got ns={ns}, n_rf={nrf}")
    problem = RelayProblem(eff.h1_eff, eff.h2_eff, stage, cfg)
    return run_alternation(problem, ns, weighting)
