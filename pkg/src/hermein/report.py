"""Machine-readable experiment reports (CSV or JSON)."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

__all__ = ["Row", "CONVENTION_LEDGER", "emit_report", "format_csv", "format_json", "CSV_HEADER"]

CSV_HEADER = ("n", "quantity", "value", "tolerance", "pass")


@dataclass(frozen=True)
class Row:
    """One reported quantity.

    ``n`` is None for rows aggregated over several twists.  ``tolerance`` is
    the allowed deviation, or for bound-type rows the bound itself; None
    marks purely informational rows.
    """

    n: int | None
    quantity: str
    value: float
    tolerance: float | None
    passed: bool

    def record(self) -> dict:
        return {
            "n": self.n,
            "quantity": self.quantity,
            "value": _json_float(self.value),
            "tolerance": None if self.tolerance is None else _json_float(self.tolerance),
            "pass": bool(self.passed),
        }


CONVENTION_LEDGER = {
    "volume_form": "omega = dA / (pi (1+|z|^2)^2), total mass 1",
    "curvature_sign": "Fubini-Study on O(k) has F = k / (1+|z|^2)^2 (positive for positive degree)",
    "mean_curvature": "Lambda F = F (1+|z|^2)^2; integral of tr(Lambda F) omega = deg E_n",
    "central_curvature": "K = pi * Lambda F; Hermite-Einstein constant pi * deg / r",
    "bergman": "B(z) = H A G^-1 A^H with G = L_n(h); FS value diag(d_i + n + 1); integral of tr B = p",
    "pi_convention": "global normalized omega; local pi factors of the flat-volume convention are absorbed",
    "donaldson_M": "dM/du = 1/2 integral tr(v (Lambda F - mu Id)) omega, v = h^-1 dh/du; c_R = 1/(2 pi), c_lambda = -mu/2",
    "kempf_ness": "KN = 1/2 ldet m - (chi / 2r) integral ln det(k0^-1 I_n(m)); minus sign",
    "reference_metric": "k0 = Fubini-Study product; det taken relative to k0, so det(k0) = 1",
    "torsion_variation": "T1 + T2 = integral tr(v (Lambda F - B + Id)) omega with alpha = -v",
    "recover_scale": "c matches the omega-average of ln det against the reference",
}


def _json_float(x: float):
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return repr(x)
    return x


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def format_csv(rows: Iterable[Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(r.n), r.quantity, _fmt(r.value), _fmt(r.tolerance), _fmt(r.passed)])
    return buf.getvalue()


def format_json(rows: Iterable[Row], experiment: str | None = None) -> str:
    doc = {
        "experiment": experiment,
        "convention_ledger": CONVENTION_LEDGER,
        "results": [r.record() for r in rows],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit_report(rows: Sequence[Row], fmt: str = "csv", path: str | Path | None = None, experiment: str | None = None) -> str:
    """Render rows and write them to ``path`` (stdout when None); returns the text."""
    if fmt == "csv":
        text = format_csv(rows)
    elif fmt == "json":
        text = format_json(rows, experiment)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
