"""Machine-readable result files.

Floats are written with ``repr`` so payloads are reproducible byte for byte.
"""
from __future__ import annotations

import csv
import io
import json
import math

RISK_FIELDS = ["mechanism", "null", "n", "alpha", "gamma", "delta", "l1_distance",
               "type1", "type1_lo", "type1_hi", "type2", "type2_lo", "type2_hi", "reps", "seed"]
RATES_FIELDS = ["n", "alpha", "n_alpha2", "rho_hat", "censored"]


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _csv(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in fields])
    return buf.getvalue()


def risk_row(spec, risk, l1_distance: float) -> dict:
    lo1, hi1 = risk.type1.interval
    if risk.type2 is None:
        t2 = lo2 = hi2 = math.nan
    else:
        t2 = risk.type2.value
        lo2, hi2 = risk.type2.interval
    cfg = spec.config
    return {"mechanism": cfg.mechanism.value, "null": spec.null_spec, "n": cfg.n,
            "alpha": float(cfg.alpha), "gamma": float(cfg.gamma),
            "delta": math.nan if spec.delta is None else float(spec.delta),
            "l1_distance": float(l1_distance), "type1": risk.type1.value, "type1_lo": lo1,
            "type1_hi": hi1, "type2": t2, "type2_lo": lo2, "type2_hi": hi2,
            "reps": risk.reps, "seed": spec.master_seed}


def risk_csv(rows) -> str:
    return _csv(RISK_FIELDS, rows)


def rates_csv(results) -> str:
    rows = [{"n": r.n, "alpha": float(r.alpha), "n_alpha2": float(r.n * r.alpha ** 2),
             "rho_hat": float(r.l1_distance), "censored": r.censored} for r in results]
    return _csv(RATES_FIELDS, rows)


def radius_dict(r) -> dict:
    return {
        "label": r.label, "n": r.n, "alpha": r.alpha, "status": r.status,
        "delta": r.delta, "delta_max": r.delta_max, "rho_hat": r.l1_distance,
        "type1": r.type1.value, "type1_interval": list(r.type1.interval),
        "t1": r.t1, "t2": r.t2,
        "evaluations": [{"delta": d, "type2": t.value, "type2_interval": list(t.interval)}
                        for d, t in r.evaluations],
    }


def fit_dict(fit) -> dict:
    if fit is None:
        return {"error": "fewer than 4 uncensored grid points"}
    return {"n_alpha2": fit.n_alpha2, "rho_hat": fit.rho_hat, "slope": fit.slope,
            "slope_se": fit.slope_se, "intercept": fit.intercept,
            "theoretical_exponent": fit.theoretical_exponent, "gap": fit.gap}


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"
