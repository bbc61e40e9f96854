"""Market model inverting an estimated trade volume into prices and costs.

A strictly decreasing willingness-to-pay schedule over a market of N
prospective buyers, of whom q win a license by lottery, yields demand and
supply curves for licenses.  Buyers act when their valuation exceeds the
transaction price plus their half of the transaction cost; sellers when it
falls below the price minus their half.  Given an observed trade share s of
the quota, the marginal buyer and seller valuations are read off the schedule,
which pins down the price, the per-side cost wedge, and the gains from trade.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InfeasibleShareError, ValidationError


@dataclass(frozen=True)
class WtpCurve:
    """Piecewise-linear, strictly decreasing valuation schedule v(n).

    `volumes` runs from 0 to the market size N and `values` from the choke
    valuation down to exactly 0, so the implied valuation CDF is continuous
    and strictly increasing on [0, v_max] with an exact inverse.
    """

    volumes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        volumes = np.asarray(self.volumes, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "volumes", volumes)
        object.__setattr__(self, "values", values)
        if volumes.ndim != 1 or volumes.shape != values.shape or volumes.size < 2:
            raise ValidationError("curve needs at least two (volume, value) knots")
        if volumes[0] != 0.0:
            raise ValidationError("curve must start at volume 0")
        if np.any(np.diff(volumes) <= 0):
            raise ValidationError("volumes must be strictly increasing")
        if values[-1] != 0.0:
            raise ValidationError("valuation at the full market size must be 0")
        if np.any(values < 0):
            raise ValidationError("negative valuation")
        if np.any(np.diff(values) >= 0):
            raise ValidationError(
                "values must be strictly decreasing; load with strictify=True "
                "to perturb ties"
            )
        volumes.flags.writeable = False
        values.flags.writeable = False

    @property
    def market_size(self) -> float:
        return float(self.volumes[-1])

    @property
    def v_max(self) -> float:
        return float(self.values[0])

    @classmethod
    def from_knots(cls, knots, strictify: bool = False) -> "WtpCurve":
        vols = np.array([k[0] for k in knots], dtype=np.float64)
        vals = np.array([k[1] for k in knots], dtype=np.float64)
        if strictify and vals.size:
            eps = 1e-6 * float(np.max(vals))
            for i in range(vals.size - 2, -1, -1):
                if vals[i] <= vals[i + 1]:
                    vals[i] = vals[i + 1] + eps
        return cls(vols, vals)

    @classmethod
    def from_csv(cls, path, strictify: bool = False) -> "WtpCurve":
        """Load knots from a CSV with header `n,v` and ascending n."""
        knots = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip().lower() for h in next(reader, [])]
            if header[:2] != ["n", "v"]:
                raise ValidationError(f"{path}: expected header 'n,v', got {header}")
            for row in reader:
                if not row or all(not c.strip() for c in row):
                    continue
                knots.append((float(row[0]), float(row[1])))
        return cls.from_knots(knots, strictify=strictify)

    @classmethod
    def uniform(cls, market_size: float, v_max: float) -> "WtpCurve":
        """Linear schedule whose valuation CDF is uniform on [0, v_max]."""
        return cls(np.array([0.0, market_size]), np.array([float(v_max), 0.0]))

    def value_at(self, n) -> float:
        return float(np.interp(n, self.volumes, self.values))

    def cdf(self, v) -> float:
        """Share of the market valuing a license at most `v` (clamped outside)."""
        if v <= 0.0:
            return 0.0
        if v >= self.v_max:
            return 1.0
        inv = np.interp(v, self.values[::-1], self.volumes[::-1])
        return 1.0 - float(inv) / self.market_size

    def inverse_cdf(self, share: float) -> float:
        if not 0.0 <= share <= 1.0:
            raise ValidationError(f"share must be in [0, 1], got {share}")
        return self.value_at(self.market_size * (1.0 - share))

    def density(self, v: float) -> float:
        """Slope of the valuation CDF at `v` (piecewise constant, right-continuous)."""
        if not 0.0 <= v <= self.v_max:
            raise ValidationError(f"valuation {v} outside [0, {self.v_max}]")
        vals_asc = self.values[::-1]
        vols_desc = self.volumes[::-1]
        k = int(np.searchsorted(vals_asc, v, side="right"))
        k = min(max(k, 1), vals_asc.size - 1)
        dv = vals_asc[k] - vals_asc[k - 1]
        dn = vols_desc[k] - vols_desc[k - 1]
        return float(-dn / dv) / self.market_size


@dataclass(frozen=True)
class MarketConfig:
    """Market size, lottery quota, and speculator share of the quota."""

    N: int = 700_000
    q: int = 260_000
    z: float = 0.0

    def __post_init__(self):
        if self.N <= 0 or self.q <= 0:
            raise ValidationError("market size and quota must be positive")
        if self.q >= self.N:
            raise ValidationError("quota must be smaller than the market size")
        if not 0.0 <= self.z <= 1.0:
            raise ValidationError(f"speculator share must lie in [0, 1], got {self.z}")

    @property
    def s_notc(self) -> float:
        """Frictionless trade share of the quota; independent of the curve."""
        return (self.N - self.q) / self.N


@dataclass
class MarketSolution:
    """One inverted scenario: share, price, cost wedge, and gains accounting."""

    s: float
    p: float
    t: float
    v_seller: float
    v_buyer: float
    gross_gains: float = float("nan")
    tc_total: float = float("nan")
    net_gains: float = float("nan")
    tc_share: float = float("nan")
    meets_price_floor: bool | None = None


def demand(cfg: MarketConfig, curve: WtpCurve, p: float, t: float) -> float:
    """Buyers willing to pay the price plus their half of the transaction cost."""
    return (cfg.N - cfg.q * (1.0 - cfg.z)) * (1.0 - curve.cdf(p + t))


def supply(
    cfg: MarketConfig,
    curve: WtpCurve,
    p: float,
    t: float,
    s: float | None = None,
) -> float:
    """Winners willing to sell at the price net of their half of the cost.

    Speculators supply their whole allotment at any nonnegative net price, so
    with z > 0 the curve has a flat segment of height z*q; `s` scales the
    remaining winners' segment and is unused when z = 0.
    """
    if cfg.z == 0.0:
        return cfg.q * curve.cdf(p - t)
    if s is None or s <= 0.0:
        raise ConfigError("supply with speculators needs the trade share s > 0")
    if cfg.z > s:
        raise ConfigError(
            f"speculator share exceeds trade share: z={cfg.z} > s={s}"
        )
    return cfg.z * cfg.q + (s - cfg.z) / s * cfg.q * curve.cdf(p - t)


def solve_no_tc(cfg: MarketConfig, curve: WtpCurve) -> tuple[float, float]:
    """Frictionless equilibrium: price by bisection, share by the exact identity.

    With no cost wedge, demand equals supply where the valuation CDF hits
    (N - q) / N, so the share is curve-independent; the price is located to
    1e-6 RMB.
    """
    if cfg.z != 0.0:
        raise ConfigError("frictionless benchmark assumes no speculators")

    def gap(p):
        F = curve.cdf(p)
        return cfg.q * F - (cfg.N - cfg.q) * (1.0 - F)

    lo, hi = 0.0, curve.v_max
    for _ in range(200):
        if hi - lo <= 1e-6:
            break
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), cfg.s_notc


def invert_from_volume(cfg: MarketConfig, curve: WtpCurve, s: float) -> MarketSolution:
    """Recover price and cost wedge from a trade share of the quota.

    Clearing the market at volume s*q pins the marginal seller valuation at
    the s-quantile of the schedule (zero when the whole share is speculator
    supply) and the marginal buyer valuation at the matching demand quantile;
    price and cost are their midpoint and half-gap.
    """
    if s <= 0.0:
        raise ValidationError(f"trade share must be positive, got {s}")
    if s > cfg.s_notc:
        raise InfeasibleShareError(
            f"trade share {s} exceeds the frictionless maximum s_notc={cfg.s_notc!r}"
        )
    if cfg.z > s:
        raise ConfigError(f"speculator share exceeds trade share: z={cfg.z} > s={s}")

    if cfg.z > 0.0 and cfg.z == s:
        v_seller = 0.0
    else:
        v_seller = curve.inverse_cdf(s)
    pool = cfg.N - cfg.q * (1.0 - cfg.z)
    v_buyer = curve.inverse_cdf(1.0 - s * cfg.q / pool)
    sol = MarketSolution(
        s=s,
        p=0.5 * (v_seller + v_buyer),
        t=0.5 * (v_buyer - v_seller),
        v_seller=v_seller,
        v_buyer=v_buyer,
    )
    return gains_from_trade(cfg, curve, sol)


def gains_from_trade(
    cfg: MarketConfig,
    curve: WtpCurve,
    sol: MarketSolution,
    panels: int = 10_000,
) -> MarketSolution:
    """Fill the gains fields: surplus area, total cost burden, and their net.

    Gross gains integrate the gap between inverse demand and inverse supply up
    to the traded volume (composite trapezoid, halving-refined until the
    Richardson error check clears relative 1e-6); the cost burden is the full
    two-sided wedge on every trade.
    """
    sq = sol.s * cfg.q
    if sq <= 0.0:
        gross = 0.0
    else:
        pool = cfg.N - cfg.q * (1.0 - cfg.z)
        zq = cfg.z * cfg.q

        def gap(u):
            # Marginal buyer valuation at traded volume u.
            vb = np.interp(u * (cfg.N / pool), curve.volumes, curve.values)
            # Marginal seller valuation: zero along the speculators' flat
            # segment, then the winners' quantile of the schedule.
            if cfg.z == 0.0:
                shares = u / cfg.q
            elif sol.s > cfg.z:
                shares = np.clip(u - zq, 0.0, None) * (
                    sol.s / ((sol.s - cfg.z) * cfg.q)
                )
            else:
                shares = np.zeros_like(u)
            vs = np.interp(
                cfg.N * (1.0 - np.clip(shares, 0.0, 1.0)), curve.volumes, curve.values
            )
            if cfg.z > 0.0:
                vs = np.where(u <= zq, 0.0, vs)
            return vb - vs

        def trapezoid(k):
            u = np.linspace(0.0, sq, k + 1)
            return float(np.trapezoid(gap(u), u))

        coarse = trapezoid(panels)
        fine = trapezoid(2 * panels)
        for _ in range(6):
            if abs(fine - coarse) <= 1e-6 * max(1.0, abs(fine)):
                break
            panels *= 2
            coarse, fine = fine, trapezoid(2 * panels)
        else:
            raise RuntimeError("gains integral did not meet the refinement check")
        gross = fine

    sol.gross_gains = gross
    sol.tc_total = 2.0 * sol.t * sol.s * cfg.q
    sol.net_gains = gross - sol.tc_total
    sol.tc_share = sol.tc_total / gross if gross > 0.0 else 0.0
    return sol


def bounds_table(
    cfg: MarketConfig,
    curve: WtpCurve,
    s_values,
    price_floor: float | None = None,
) -> list[MarketSolution]:
    """Invert a range of trade shares; flag rows meeting a price floor if given."""
    out = []
    for s in s_values:
        sol = invert_from_volume(cfg, curve, float(s))
        if price_floor is not None:
            sol.meets_price_floor = sol.p >= price_floor
        out.append(sol)
    return out


def comparative_statics(
    cfg: MarketConfig, curve: WtpCurve, s: float
) -> tuple[float, float]:
    """Analytic derivatives of price and cost wedge in the trade share.

    The marginal valuations move along the schedule at rates set by the CDF
    density at each margin; the cost wedge always falls as the share rises.
    """
    sol = invert_from_volume(cfg, curve, s)
    pool = cfg.N - cfg.q * (1.0 - cfg.z)
    f_buyer = curve.density(sol.v_buyer)
    if f_buyer <= 0.0:
        raise ValidationError("zero density at the marginal buyer valuation")
    dv_buyer = -(cfg.q / pool) / f_buyer
    if cfg.z > 0.0 and cfg.z == s:
        dv_seller = 0.0
    else:
        f_seller = curve.density(sol.v_seller)
        if f_seller <= 0.0:
            raise ValidationError("zero density at the marginal seller valuation")
        dv_seller = 1.0 / f_seller
    return 0.5 * (dv_seller + dv_buyer), 0.5 * (dv_buyer - dv_seller)


def clear_share(cfg: MarketConfig, curve: WtpCurve, p: float, t: float) -> float:
    """Trade share implied by market clearing at the given price and wedge.

    Read off the demand side, which pins the share even with speculators
    (their supply segment scales with the share itself).
    """
    return demand(cfg, curve, p, t) / cfg.q


def solution_as_dict(sol: MarketSolution) -> dict:
    """JSON-friendly rendering in RMB plus RMB-thousand / billion displays."""
    out = {
        "s": sol.s,
        "p": sol.p,
        "t": sol.t,
        "v_seller": sol.v_seller,
        "v_buyer": sol.v_buyer,
        "gross_gains": sol.gross_gains,
        "tc_total": sol.tc_total,
        "net_gains": sol.net_gains,
        "tc_share": sol.tc_share,
        "display": {
            "p_thousand": sol.p / 1e3,
            "t_thousand": sol.t / 1e3,
            "gross_gains_billion": sol.gross_gains / 1e9,
            "tc_total_billion": sol.tc_total / 1e9,
            "net_gains_billion": sol.net_gains / 1e9,
        },
    }
    if sol.meets_price_floor is not None:
        out["meets_price_floor"] = sol.meets_price_floor
    return out
