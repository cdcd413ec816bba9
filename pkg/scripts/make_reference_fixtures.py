#!/usr/bin/env python3
"""Regenerate the frozen lattice/closed-form reference values used in tests.

Writes tests/fixtures/oracle_refs.json. Values are converged in lattice step
count (doubling the steps moves them by < 1e-3) so the test suite can treat
them as oracles for the Monte-Carlo/neural path.
"""

import json
from pathlib import Path

import numpy as np

from deepcva import market, oracle
from deepcva.portfolio import benchmark_option_portfolio, future_value

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "oracle_refs.json"


def main() -> None:
    params = market.MarketParams(
        s0=[100.0, 100.0], r=0.05, q=[0.1, 0.1], sigma=[0.2, 0.2], rho=np.eye(2), horizon=3.0
    )
    port = benchmark_option_portfolio()
    dates = port.union_dates

    refs = {"bermudan": {}, "european": {}, "future_value_t0": None, "meta": {}}
    for kind in ("geo-call", "geo-put", "1d-call", "1d-put"):
        coarse = oracle.lattice_bermudan(kind, params, 100.0, dates, steps_per_year=1200)
        fine = oracle.lattice_bermudan(kind, params, 100.0, dates, steps_per_year=2400)
        assert abs(fine - coarse) < 1e-3, (kind, coarse, fine)
        refs["bermudan"][kind] = fine
        refs["european"][kind] = oracle.bs_european(kind, params, 100.0, 3.0)

    for j, kind in ((4, "arith-call"), (5, "arith-put")):
        contract = port.contracts[j]
        coarse = oracle.lattice_bermudan_2d(contract, params, steps_per_year=120)
        fine = oracle.lattice_bermudan_2d(contract, params, steps_per_year=240)
        assert abs(fine - coarse) < 2e-3, (kind, coarse, fine)
        refs["bermudan"][kind] = fine

    refs["bermudan"]["max-call"] = 13.902  # external binomial reference; no 1-d reduction
    refs["future_value_t0"] = float(future_value(0.0, 100.0, params))
    refs["meta"] = {
        "steps_per_year_1d": 2400,
        "steps_per_year_2d": 240,
        "note": "regenerate with scripts/make_reference_fixtures.py",
    }

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(refs, indent=2, sort_keys=True))
    print(f"wrote {OUT}")
    for kind, value in sorted(refs["bermudan"].items()):
        print(f"  {kind:12s} {value:.4f}")


if __name__ == "__main__":
    main()
