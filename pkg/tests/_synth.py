"""Synthetic lottery market with a planted volume of license trading.

A population of buyers with known valuations all purchase in the pre period.
In the post period a uniform lottery rations q licenses; a planted fraction
sigma of them is reallocated to the highest-valuation buyers left without one.
Valuations map to purchase prices monotonically on a coarse RMB lattice, so
the planted trades produce a long-range distribution shift whose true size is
known by construction.
"""

from __future__ import annotations

import numpy as np

from diftrans.equilibrium import WtpCurve
from diftrans.pmf import PricePMF, SalesRecord

LATTICE = 1000


def synth_curve(market_size: int) -> WtpCurve:
    """Concave-ish decreasing schedule over [0, 280k] with a few kinks."""
    n = float(market_size)
    volumes = np.array([0.0, 0.1 * n, 0.3 * n, 0.6 * n, n])
    values = np.array([280_000.0, 180_000.0, 110_000.0, 50_000.0, 0.0])
    return WtpCurve(volumes, values)


def population_prices(n_buyers: int, curve: WtpCurve) -> np.ndarray:
    """Purchase prices by descending valuation; index 0 is the keenest buyer."""
    shares = (np.arange(n_buyers) + 0.5) / n_buyers
    valuations = np.interp(curve.market_size * shares, curve.volumes, curve.values)
    prices = 20_000.0 + 0.6 * valuations
    return (np.rint(prices / LATTICE) * LATTICE).astype(np.int64)


def grow(prices: np.ndarray, growth: float) -> np.ndarray:
    return (np.rint(prices * (1.0 + growth) / LATTICE) * LATTICE).astype(np.int64)


def pmf_of(prices: np.ndarray) -> PricePMF:
    support, counts = np.unique(prices, return_counts=True)
    return PricePMF.from_counts(support, counts)


def lottery_post_prices(
    prices: np.ndarray,
    q: int,
    sigma: float,
    seed: int,
    growth: float = 0.0,
) -> np.ndarray:
    """Post-period prices: q lottery winners, sigma*q of them replaced by the top.

    The winner set and the replacement order are functions of the seed only,
    so raising sigma grows the planted set monotonically.
    """
    rng = np.random.default_rng(seed)
    n = prices.size
    winners = rng.choice(n, size=q, replace=False)
    order = rng.permutation(q)
    k = int(round(sigma * q))
    keep = winners[order[k:]]
    in_winners = np.zeros(n, dtype=bool)
    in_winners[winners] = True
    top_nonwinners = np.flatnonzero(~in_winners)[:k]
    post = prices[np.concatenate([keep, top_nonwinners])]
    if growth:
        post = grow(post, growth)
    return post


def two_city_records(
    n_buyers: int,
    q: int,
    sigma: float,
    seed: int,
    growth: float = 0.0,
    treated: str = "metro",
    control: str = "coastal",
    pre_year: int = 2010,
    post_year: int = 2011,
) -> list[SalesRecord]:
    """Sales records for a treated city with a lottery and an untouched control."""
    curve = synth_curve(n_buyers)
    prices = population_prices(n_buyers, curve)
    rows = []
    rows += sales_rows(treated, pre_year, prices)
    rows += sales_rows(treated, post_year, lottery_post_prices(prices, q, sigma, seed, growth))
    rows += sales_rows(control, pre_year, prices)
    rows += sales_rows(control, post_year, grow(prices, growth) if growth else prices)
    return rows


def sales_rows(city: str, year: int, prices: np.ndarray) -> list[SalesRecord]:
    """Aggregate prices into city-month records, spreading units over months."""
    support, counts = np.unique(prices, return_counts=True)
    rows = []
    for price, count in zip(support.tolist(), counts.tolist()):
        base, extra = divmod(count, 12)
        for month in range(1, 13):
            qty = base + (1 if month <= extra else 0)
            if qty > 0:
                rows.append(SalesRecord(city, year, month, int(price), int(qty)))
    return rows


def write_csv(path, records: list[SalesRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("city,year,month,price,quantity\n")
        for r in records:
            fh.write(f"{r.city},{r.year},{r.month},{r.price},{r.quantity}\n")
