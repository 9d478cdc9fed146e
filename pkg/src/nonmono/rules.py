"""Admissible stepsize and relaxation windows.

Two independent routes produce a plan (gamma, tau, lambda):

* plan_from_oblique consumes the four oblique parameters directly and
  applies the general window and relaxation formulas.
* plan_from_moduli consumes scalar moduli for A and B, classifies them
  into one of four structured cases, and applies the specialized table
  together with the matching relaxation bound.

Both routes agree wherever the scalar structure applies; the second is
kept literal rather than delegating to the first, so the agreement is a
theorem the tests can actually exercise.

Window conventions: gamma ranges over an open interval, tau over a
half-open one whose upper endpoint tau = 1/(gamma |L|^2) is admissible
(the semidefinite mode). Unbounded endpoints are math.inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .numlin import GroupedSvd
from .semimono import ObliqueParams, ScalarModuli, neg, parallel_sum_scalar, pos

MARGIN_TOL = 1e-6   # required slack of lambda inside (0, 2 eta_bar)
EQ_TOL = 1e-12      # relative tolerance deciding gamma tau |L|^2 == 1


class ExistenceViolated(Exception):
    """The oblique parameters admit no stepsize window at all."""


class RequestedOutOfWindow(Exception):
    """An explicitly requested stepsize or relaxation leaves its window."""


class EmptyWindow(Exception):
    """The derived window is empty."""


class StepsizeOutOfRange(Exception):
    """gamma tau |L|^2 exceeds one; no relaxation bound applies."""


class CaseViolated(Exception):
    """Scalar moduli fit none of the structured cases."""


def stepsize_delta(beta_P: float, beta_D: float, normL: float, sigma_d: float) -> float:
    """delta = 1 - [beta_P beta_D]_- (|L|^2 - sigma_d^2), so delta <= 1.

    Only a mixed-sign pair discounts delta below one; it is exactly the
    gamma coefficient in the window quadratic at tau = 1/(gamma |L|^2).
    """
    return 1.0 - neg(beta_P * beta_D) * (normL ** 2 - sigma_d ** 2)


def _discriminant(beta_P: float, beta_D: float, normL: float, delta: float) -> float:
    val = delta * delta - 4.0 * beta_P * beta_D * normL ** 2
    assert val >= 0.0, "window discriminant must be nonnegative inside the existence region"
    return math.sqrt(val)


def quadratic_window(beta_P: float, beta_D: float, normL: float, sigma_d: float):
    """Existence flag and the open gamma interval (gamma_min, gamma_max).

    The window is nonempty iff [beta_P]_- [beta_D]_- < 1/(4 |L|^2).
    gamma_min is 0 when beta_P >= 0 and gamma_max is math.inf when
    beta_D >= 0.
    """
    assert normL > 0.0 and 0.0 < sigma_d <= normL * (1.0 + 1e-12)
    if neg(beta_P) * neg(beta_D) >= 1.0 / (4.0 * normL ** 2):
        return False, 0.0, 0.0
    if beta_P >= 0.0 and beta_D >= 0.0:
        return True, 0.0, math.inf
    delta = stepsize_delta(beta_P, beta_D, normL, sigma_d)
    disc = _discriminant(beta_P, beta_D, normL, delta)
    gamma_min = 0.0 if beta_P >= 0.0 else 2.0 * neg(beta_P) / (delta + disc)
    gamma_max = math.inf if beta_D >= 0.0 else (delta + disc) / (2.0 * neg(beta_D) * normL ** 2)
    return True, gamma_min, gamma_max


def tau_window(beta_P: float, beta_D: float, delta: float, normL: float,
               gamma: float, beta_Dp: float = 0.0):
    """Half-open tau interval (tau_lo, tau_hi] at the given gamma.

    tau_lo is the larger of the rule value
    [-beta_D]_+ (gamma + beta_P) / (gamma (delta - beta_P beta_D |L|^2) + beta_P)
    and the kernel clamp [-beta_D']_+. tau_hi = 1/(gamma |L|^2).
    """
    assert gamma > 0.0
    tau_hi = 1.0 / (gamma * normL ** 2)
    if neg(beta_D) == 0.0:
        tau_rule = 0.0
    else:
        den = gamma * (delta - beta_P * beta_D * normL ** 2) + beta_P
        assert den > 0.0, "tau lower-bound denominator must be positive inside the gamma window"
        tau_rule = neg(beta_D) * (gamma + beta_P) / den
    tau_lo = max(tau_rule, pos(-beta_Dp))
    if tau_lo >= tau_hi * (1.0 + EQ_TOL):
        raise EmptyWindow(f"tau window ({tau_lo}, {tau_hi}] is empty at gamma={gamma}")
    return tau_lo, tau_hi


def theta(beta_P: float, beta_D: float, gamma: float, tau: float, sigma: float) -> float:
    """theta = sqrt((beta_P/2gamma - beta_D/2tau)^2 + beta_P beta_D sigma^2)."""
    a = beta_P / (2.0 * gamma) - beta_D / (2.0 * tau)
    val = a * a + beta_P * beta_D * sigma * sigma
    # the radicand is nonnegative whenever gamma tau sigma^2 <= 1; clamp roundoff
    return math.sqrt(max(val, 0.0))


def _mode(gamma: float, tau: float, normL: float) -> str:
    s = gamma * tau * normL ** 2
    if abs(s - 1.0) <= EQ_TOL:
        return "semidefinite"
    if s < 1.0:
        return "definite"
    raise StepsizeOutOfRange(f"gamma tau |L|^2 = {s} exceeds one")


def _eta_prime(beta_Pp: float, beta_Dp: float, svd: GroupedSvd,
               gamma: float, tau: float) -> float:
    vals = []
    if not svd.full_column_rank:
        vals.append(1.0 + beta_Pp / gamma)
    if not svd.full_row_rank:
        vals.append(1.0 + beta_Dp / tau)
    return min(vals) if vals else math.inf


def eta_bound(params: ObliqueParams, svd: GroupedSvd, gamma: float, tau: float):
    """Relaxation bounds (eta, eta_prime, eta_bar) at one stepsize pair.

    eta covers the range directions and splits on the sign of
    beta_P beta_D and on whether gamma tau |L|^2 equals one; eta_prime
    covers the kernels and depends only on the rank pattern. The
    admissible relaxations are (0, 2 eta_bar) with eta_bar = min of the two.
    """
    bP, bPp, bD, bDp = params.as_tuple()
    normL, sd = svd.norm, svd.sigma_min
    half = 1.0 + bP / (2.0 * gamma) + bD / (2.0 * tau)
    mode = _mode(gamma, tau, normL)
    if mode == "definite":
        if bP * bD < 0.0:
            eta = half - theta(bP, bD, gamma, tau, sd)
        else:
            eta = half - theta(bP, bD, gamma, tau, normL)
    else:
        if svd.d == 1:
            eta = 1.0 + bP / gamma + bD / tau
        elif bP * bD < 0.0:
            eta = half - theta(bP, bD, gamma, tau, sd)
        elif min(bP, bD) >= 0.0:
            eta = half - theta(bP, bD, gamma, tau, float(svd.sigma[1]))
        else:
            eta = 1.0 + bP / gamma + bD / tau
    etap = _eta_prime(bPp, bDp, svd, gamma, tau)
    return eta, etap, min(eta, etap)


@dataclass(frozen=True)
class StepsizePlan:
    """A validated (gamma, tau, lambda) triple with its derivation.

    gamma_min / gamma_max is the raw quadratic window, gamma_lo / gamma_hi
    the effective one after the kernel clamps. mode records whether the
    preconditioner is definite or semidefinite at (gamma, tau).
    """

    gamma: float
    tau: float
    lam: float
    delta: float
    gamma_min: float
    gamma_max: float
    gamma_lo: float
    gamma_hi: float
    tau_lo: float
    tau_hi: float
    eta: float
    eta_prime: float
    eta_bar: float
    mode: str
    source: str

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "tau": self.tau,
            "lambda": self.lam,
            "delta": self.delta,
            "gamma_window": [self.gamma_lo, self.gamma_hi],
            "tau_window": [self.tau_lo, self.tau_hi],
            "eta": self.eta,
            "eta_prime": self.eta_prime,
            "eta_bar": self.eta_bar,
            "lambda_window": [0.0, 2.0 * self.eta_bar],
            "mode": self.mode,
            "source": self.source,
        }


def _default_gamma(lo: float, hi: float) -> float:
    if lo > 0.0 and math.isfinite(hi):
        return math.sqrt(lo * hi)
    if lo == 0.0 and math.isfinite(hi):
        return 0.5 * hi
    if lo > 0.0:
        return 2.0 * lo
    return 1.0


def _resolve_tau(tau, tau_lo: float, tau_hi: float) -> float:
    if tau is None or (isinstance(tau, str) and tau == "max"):
        return tau_hi
    tau = float(tau)
    if not (tau > tau_lo and tau <= tau_hi * (1.0 + EQ_TOL)):
        raise RequestedOutOfWindow(f"tau={tau} outside ({tau_lo}, {tau_hi}]")
    return tau


def _resolve_lambda(lam, eta_bar: float) -> float:
    if eta_bar <= 0.0:
        raise EmptyWindow(f"no positive relaxation: eta_bar = {eta_bar}")
    if lam is None:
        return eta_bar
    lam = float(lam)
    if not (0.0 < lam < 2.0 * eta_bar) or lam * (2.0 * eta_bar - lam) < MARGIN_TOL:
        raise RequestedOutOfWindow(
            f"lambda={lam} outside (0, {2.0 * eta_bar}) with margin {MARGIN_TOL}")
    return lam


def plan_from_oblique(params: ObliqueParams, svd: GroupedSvd,
                      gamma=None, tau=None, lam=None) -> StepsizePlan:
    """Build a plan from oblique parameters.

    Existence needs [beta_P]_- [beta_D]_- < 1/(4 |L|^2) and
    [beta_P']_- [beta_D']_- < 1/|L|^2, plus the kernel clamps
    [-beta_P']_+ < gamma_max and [-beta_D']_+ < 1/(gamma_min |L|^2).
    Defaults: gamma at the window midpoint (geometric when both ends are
    positive and finite), tau = tau_hi, lambda = eta_bar.
    """
    bP, bPp, bD, bDp = params.as_tuple()
    normL, sd = svd.norm, svd.sigma_min
    exists, gamma_min, gamma_max = quadratic_window(bP, bD, normL, sd)
    if not exists:
        raise ExistenceViolated("[beta_P]_- [beta_D]_- >= 1/(4 |L|^2)")
    if neg(bPp) * neg(bDp) >= 1.0 / normL ** 2:
        raise ExistenceViolated("[beta_P']_- [beta_D']_- >= 1/|L|^2")
    clamp_p = pos(-bPp)
    clamp_d = pos(-bDp)
    if clamp_p >= gamma_max:
        raise ExistenceViolated("[-beta_P']_+ >= gamma_max")
    if gamma_min > 0.0 and clamp_d >= 1.0 / (gamma_min * normL ** 2):
        raise ExistenceViolated("[-beta_D']_+ >= 1/(gamma_min |L|^2)")
    gamma_lo = max(gamma_min, clamp_p)
    gamma_hi = gamma_max if clamp_d == 0.0 else min(gamma_max, 1.0 / (clamp_d * normL ** 2))
    if gamma_lo >= gamma_hi:
        raise EmptyWindow(f"gamma window ({gamma_lo}, {gamma_hi}) is empty")

    if gamma is None:
        gamma = _default_gamma(gamma_lo, gamma_hi)
    else:
        gamma = float(gamma)
        if not (gamma_lo < gamma < gamma_hi):
            raise RequestedOutOfWindow(f"gamma={gamma} outside ({gamma_lo}, {gamma_hi})")

    delta = stepsize_delta(bP, bD, normL, sd)
    tau_lo, tau_hi = tau_window(bP, bD, delta, normL, gamma, beta_Dp=bDp)
    tau = _resolve_tau(tau, tau_lo, tau_hi)
    eta, etap, eta_bar = eta_bound(params, svd, gamma, tau)
    lam = _resolve_lambda(lam, eta_bar)
    return StepsizePlan(
        gamma=gamma, tau=tau, lam=lam, delta=delta,
        gamma_min=gamma_min, gamma_max=gamma_max,
        gamma_lo=gamma_lo, gamma_hi=gamma_hi,
        tau_lo=tau_lo, tau_hi=tau_hi,
        eta=eta, eta_prime=etap, eta_bar=eta_bar,
        mode=_mode(gamma, tau, normL), source="oblique",
    )


def classify_case(mod: ScalarModuli, svd: GroupedSvd) -> int:
    """Classify scalar moduli into structured case 1..4 or raise CaseViolated."""
    mu_zero = mod.mu_A == 0.0 and mod.mu_B == 0.0
    rho_zero = mod.rho_A == 0.0 and mod.rho_B == 0.0
    if mu_zero and rho_zero:
        return 1
    mu_sum = mod.mu_A + mod.mu_B
    rho_sum = mod.rho_A + mod.rho_B
    if rho_zero:
        if mu_sum > 0.0:
            return 2
        raise CaseViolated("mu_A + mu_B must be positive when the rho side vanishes")
    if mu_zero:
        if rho_sum > 0.0:
            return 3
        raise CaseViolated("rho_A + rho_B must be positive when the mu side vanishes")
    if mu_sum > 0.0 and rho_sum > 0.0:
        bP = parallel_sum_scalar(mod.rho_A, mod.rho_B)
        bD = parallel_sum_scalar(mod.mu_A, mod.mu_B)
        if neg(bD) * neg(bP) >= 1.0 / (4.0 * svd.norm ** 2):
            raise CaseViolated("[mu_A # mu_B]_- [rho_A # rho_B]_- >= 1/(4 |L|^2)")
        return 4
    raise CaseViolated("both moduli sums must be positive in the mixed case")


def theta_parsum(bP: float, bD: float, gamma: float, tau: float, sigma: float) -> float:
    """Relaxation radical for the scalar-moduli route.

    sqrt(Delta^2 - (bP bD / (gamma tau)) (1 - gamma tau sigma^2)) with
    Delta = bP/(2 gamma) + bD/(2 tau); algebraically this expands to the
    same quantity as theta, but it is kept in the sum form the moduli
    route is stated in.
    """
    delta_half = bP / (2.0 * gamma) + bD / (2.0 * tau)
    val = delta_half ** 2 - (bP * bD / (gamma * tau)) * (1.0 - gamma * tau * sigma * sigma)
    return math.sqrt(max(val, 0.0))


def plan_from_moduli(mod: ScalarModuli, svd: GroupedSvd,
                     gamma=None, tau=None, lam=None) -> StepsizePlan:
    """Build a plan from scalar moduli via the structured case table.

    The gamma window comes from the sign pattern of (mu_A mu_B,
    rho_A rho_B): mixed-sign rho bounds gamma away from zero, mixed-sign
    mu bounds it above, and the relaxation bound carries its own case
    split including the kernel term only where the structure requires it.
    """
    classify_case(mod, svd)
    normL, sd = svd.norm, svd.sigma_min
    bP = parallel_sum_scalar(mod.rho_A, mod.rho_B)
    bD = parallel_sum_scalar(mod.mu_A, mod.mu_B)
    mu_mixed = mod.mu_A * mod.mu_B < 0.0
    rho_mixed = mod.rho_A * mod.rho_B < 0.0
    delta = stepsize_delta(bP, bD, normL, sd)

    if rho_mixed or mu_mixed:
        disc = _discriminant(bP, bD, normL, delta)
    gamma_min = -2.0 * bP / (delta + disc) if rho_mixed else 0.0
    gamma_max = -(delta + disc) / (2.0 * bD * normL ** 2) if mu_mixed else math.inf

    if gamma is None:
        gamma = _default_gamma(gamma_min, gamma_max)
    else:
        gamma = float(gamma)
        if not (gamma_min < gamma < gamma_max):
            raise RequestedOutOfWindow(f"gamma={gamma} outside ({gamma_min}, {gamma_max})")

    tau_hi = 1.0 / (gamma * normL ** 2)
    if mu_mixed:
        den = gamma * (delta - bP * bD * normL ** 2) + bP
        assert den > 0.0
        tau_lo = -bD * (gamma + bP) / den
    else:
        tau_lo = 0.0
    if tau_lo >= tau_hi * (1.0 + EQ_TOL):
        raise EmptyWindow(f"tau window ({tau_lo}, {tau_hi}] is empty at gamma={gamma}")
    tau = _resolve_tau(tau, tau_lo, tau_hi)

    mumu = mod.mu_A * mod.mu_B
    rhorho = mod.rho_A * mod.rho_B
    beta_Pp = 0.0 if svd.full_column_rank else mod.rho_A
    beta_Dp = 0.0 if svd.full_row_rank else mod.mu_B
    etap = _eta_prime(beta_Pp, beta_Dp, svd, gamma, tau)
    half = bP / (2.0 * gamma) + bD / (2.0 * tau)
    mode = _mode(gamma, tau, normL)
    if mode == "definite":
        if mumu * rhorho >= 0.0:
            eta = 1.0 + half - theta_parsum(bP, bD, gamma, tau, normL)
            eta_bar = eta
        else:
            eta = 1.0 + half - theta_parsum(bP, bD, gamma, tau, sd)
            eta_bar = min(eta, etap)
    elif svd.d == 1:
        eta = 1.0 + 2.0 * half
        eta_bar = eta if max(mumu, rhorho) <= 0.0 else min(eta, etap)
    else:
        if max(mumu, rhorho) <= 0.0:
            eta = 1.0 + 2.0 * half
            eta_bar = eta
        elif min(mumu, rhorho) > 0.0:
            eta = 1.0 + half - theta_parsum(bP, bD, gamma, tau, float(svd.sigma[1]))
            eta_bar = eta
        else:
            eta = 1.0 + half - theta_parsum(bP, bD, gamma, tau, sd)
            eta_bar = min(eta, etap)

    lam = _resolve_lambda(lam, eta_bar)
    return StepsizePlan(
        gamma=gamma, tau=tau, lam=lam, delta=delta,
        gamma_min=gamma_min, gamma_max=gamma_max,
        gamma_lo=gamma_min, gamma_hi=gamma_max,
        tau_lo=tau_lo, tau_hi=tau_hi,
        eta=eta, eta_prime=etap, eta_bar=eta_bar,
        mode=mode, source="moduli",
    )
