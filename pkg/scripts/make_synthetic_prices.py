"""Write the synthetic price and contribution CSVs shipped with the package.

These series are NOT market data. Daily prices follow a log-linear path
through approximate monthly Brent averages with seeded noise; each day's
return is split into demand, supply and residual contributions that add up
to the return exactly. Replace the files (or point STOCHLCP_DATA_DIR at a
directory holding real series in the same schema) for a faithful run.

    python scripts/make_synthetic_prices.py [out_dir]
"""

import csv
import sys
from pathlib import Path

import numpy as np

# approximate monthly average Brent spot, USD/bbl
ANCHORS = {
    "2018-12": 57.4,
    "2019-01": 59.4,
    "2019-02": 64.0,
    "2019-03": 66.1,
    "2019-04": 71.2,
    "2019-05": 71.3,
    "2019-06": 64.2,
    "2019-07": 63.9,
    "2019-08": 59.0,
    "2019-09": 62.8,
    "2019-10": 59.7,
    "2019-11": 63.2,
    "2019-12": 67.3,
    "2020-01": 63.7,
    "2020-02": 55.7,
    "2020-03": 32.0,
    "2020-04": 18.4,
    "2020-05": 29.4,
}
SEED = 20200531


def main(out_dir):
    out_dir = Path(out_dir)
    rng = np.random.default_rng(SEED)
    days = np.arange(np.datetime64("2018-12-03"), np.datetime64("2020-06-01"))
    days = days[np.is_busday(days)]
    months = days.astype("datetime64[M]").astype(str)

    mid = np.array([np.datetime64(m + "-15") for m in ANCHORS], dtype="datetime64[D]")
    level = np.interp(days.astype(float), mid.astype(float), np.log(list(ANCHORS.values())))
    vol = np.where(months >= "2020-03", 0.04, 0.012)
    noise = np.zeros(len(days))
    for t in range(1, len(days)):
        noise[t] = 0.8 * noise[t - 1] + vol[t] * rng.standard_normal()
    price = np.round(np.exp(level + noise), 2)

    ret = np.zeros(len(days))
    ret[1:] = price[1:] / price[:-1] - 1.0
    share = rng.dirichlet([4.0, 3.0, 2.0], size=len(days))
    d = np.round(ret * share[:, 0] + 0.002 * rng.standard_normal(len(days)), 6)
    s = np.round(ret * share[:, 1] + 0.002 * rng.standard_normal(len(days)), 6)
    r = ret - d - s

    with open(out_dir / "prices.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "price"])
        for day, p in zip(days, price):
            w.writerow([str(day), f"{p:.2f}"])
    with open(out_dir / "contributions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "demand_contrib", "supply_contrib", "residual_contrib"])
        # the first day has no prior price, so no decomposition
        for day, a, b, c in zip(days[1:], d[1:], s[1:], r[1:]):
            w.writerow([str(day), repr(float(a)), repr(float(b)), repr(float(c))])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/stochlcp/data")
