"""Self-checks of the fractional operators, shared by the CLI and the tests."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx

from . import fracops


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.6g} (threshold {self.threshold:.6g})"


def leibniz_checks(alphas=(0.25, 0.5, 0.75), degrees=(0, 1, 2), times=(0.5, 1.0, 2.0)):
    worst = 0.0
    for a in alphas:
        for d in degrees:
            for t in times:
                lhs = t * t * d * fracops.power_rule(d - 1, a, t) if d else 0.0
                res = fracops.verify_leibniz_identity(d, a, t) / max(abs(lhs), 1.0)
                worst = max(worst, res)
    return Check("Leibniz identity relative residual", worst, 1e-12, worst <= 1e-12)


def random_signal(rng, n=40):
    grid = np.concatenate([[0.0], np.sort(rng.uniform(0.0, 1.0, n))])
    values = rng.standard_normal(n + 1) * (-1.0) ** np.arange(n + 1)
    return fracops.TimeSamples(grid, values)


def positivity_checks(n_signals=20, seed=0, alphas=(0.25, 0.5, 0.75)):
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(n_signals):
        sig = random_signal(rng)
        for a in alphas:
            worst = min(worst, fracops.positivity_check(sig, a))
    return Check("fractional-integral positivity (min)", worst, -1e-12, worst >= -1e-12)


def mittag_leffler_checks(n=401):
    x = np.linspace(0.0, 10.0, n)
    rel = np.abs(fracops.mittag_leffler(0.5, x) / erfcx(x) - 1.0)
    worst = float(rel.max())
    return Check("E_1/2(-x) vs exp(x^2) erfc(x) on [0,10]", worst, 1e-10, worst <= 1e-10)


def power_rule_checks(alpha=0.5, N=1024):
    """L1 Caputo and product-integration errors for smooth powers at t = 1."""
    out = []
    grid = np.linspace(0.0, 1.0, N + 1)
    lin = fracops.caputo_l1(fracops.TimeSamples(grid, grid), alpha).values[-1]
    err = abs(lin - fracops.caputo_power_rule(1.0, alpha, 1.0))
    out.append(Check(f"L1 Caputo of t, alpha={alpha}, N={N}", err, 1e-3, err <= 1e-3))
    errs = []
    for n in (N // 4, N // 2, N):
        g = np.linspace(0.0, 1.0, n + 1)
        val = fracops.caputo_l1(fracops.TimeSamples(g, g**2), alpha).values[-1]
        errs.append(abs(val - fracops.caputo_power_rule(2.0, alpha, 1.0)))
    order = math.log2(errs[-2] / errs[-1])
    out.append(Check(f"L1 Caputo of t^2 error at N={N}", errs[-1], 1e-3, errs[-1] <= 1e-3))
    out.append(Check(f"L1 Caputo observed order (>= 2 - alpha = {2 - alpha})", order,
                     2 - alpha, order >= 2 - alpha - 1e-9))
    errs = []
    for n in (N // 4, N // 2, N):
        g = np.linspace(0.0, 1.0, n + 1)
        val = fracops.rl_integral(fracops.TimeSamples(g, np.sqrt(g) ** 3), alpha).values[-1]
        errs.append(abs(val - fracops.power_rule(1.5, alpha, 1.0)))
    order = math.log2(errs[-2] / errs[-1])
    out.append(Check(f"RL integral of t^1.5 error at N={N}", errs[-1], 1e-3, errs[-1] <= 1e-3))
    out.append(Check(f"RL integral observed order (>= 2 - alpha = {2 - alpha})", order,
                     2 - alpha, order >= 2 - alpha - 1e-9))
    return out


def run_all():
    checks = [leibniz_checks(), positivity_checks(), mittag_leffler_checks()]
    for a in (0.25, 0.5, 0.75):
        checks += power_rule_checks(a)
    return checks
