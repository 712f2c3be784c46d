"""Reference ADF/KPSS decisions from statsmodels for the dumped noise series.

Usage:
    cargo run -p stance-core --example dump_noise_series > /tmp/series.csv
    python3 tools/stationarity_reference.py /tmp/series.csv \
        > crates/cli/tests/fixtures/stationarity_reference.csv

The ADF regression uses a constant, a fixed lag of floor(12 (N/100)^(1/4))
and no automatic lag search; KPSS tests level stationarity with Bartlett
bandwidth floor(4 (N/100)^(1/4)). Decisions are at the 5% level.
"""

import csv
import math
import sys
import warnings

import numpy as np
from statsmodels.tools.sm_exceptions import InterpolationWarning
from statsmodels.tsa.stattools import adfuller, kpss


def main(path):
    warnings.simplefilter("ignore", InterpolationWarning)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["kind", "seed", "adf_statistic", "adf_reject", "kpss_statistic", "kpss_reject"])
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            x = np.array([float(v) for v in row["values"].split()])
            n = len(x)
            lag = int(math.floor(12 * (n / 100) ** 0.25))
            bandwidth = int(math.floor(4 * (n / 100) ** 0.25))
            adf = adfuller(x, maxlag=lag, regression="c", autolag=None)
            kp = kpss(x, regression="c", nlags=bandwidth)
            out.writerow([
                row["kind"],
                row["seed"],
                repr(float(adf[0])),
                int(adf[0] < adf[4]["5%"]),
                repr(float(kp[0])),
                int(kp[0] > kp[3]["5%"]),
            ])


if __name__ == "__main__":
    main(sys.argv[1])
