#!/usr/bin/env python3
"""Smoke test for the qcurv_py extension module.

Builds expect: cargo build --release -p qcurv-py (or debug). The script
locates the cdylib, exposes it under the importable name qcurv_py, and
exercises the main surface: jet arithmetic, metric evaluation, lattice
integrals, and one verification suite.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_module():
    candidates = [
        REPO / "target" / "release" / "libqcurv_py.so",
        REPO / "target" / "debug" / "libqcurv_py.so",
        REPO / "target" / "release" / "libqcurv_py.dylib",
        REPO / "target" / "debug" / "libqcurv_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("build the extension first: cargo build --release -p qcurv-py")
    stage = Path(tempfile.mkdtemp(prefix="qcurv_py_"))
    shutil.copy2(built, stage / "qcurv_py.so")
    sys.path.insert(0, str(stage))
    import qcurv_py

    return qcurv_py


FAILURES = []


def check(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name} {detail}")
    if not ok:
        FAILURES.append(name)


def main():
    q = import_module()

    # jet arithmetic: sin² + cos² = 1 through the truncated series
    x = q.Jet.variable(0, 0.3, 2, 4)
    y = q.Jet.variable(1, -0.8, 2, 4)
    a = x * y.exp() + 0.25
    ident = a.sin() * a.sin() + a.cos() * a.cos()
    check(
        "jet sin²+cos² = 1",
        abs(ident.value() - 1.0) < 1e-12 and abs(ident.coeff([1, 0])) < 1e-12,
        f"value={ident.value()}",
    )

    # partials of exp(x1+x2) are all e^{x1+x2}
    e = q.eval_expression("exp(x1 + x2)", [0.2, 0.1], 4)
    expect = math.exp(0.3)
    check(
        "jet mixed partial",
        abs(e.partial([2, 1]) - expect) < 1e-10,
        f"∂²₁∂₂={e.partial([2, 1])} vs {expect}",
    )

    # unit round sphere: Q(S⁴) = 6 off the chart origin
    sphere = q.Metric.builtin("round_sphere", 4, {"radius": 1.0})
    rep = sphere.q_report([0.2, -0.1, 0.3, 0.05])
    check(
        "Q(S⁴) = 6 both routes",
        abs(rep["q_holographic"] - 6.0) < 1e-7 and abs(rep["q_direct"] - 6.0) < 1e-7,
        f"holographic={rep['q_holographic']:.12f}",
    )

    # flat chart: Q = 0 identically
    flat = q.Metric.builtin("flat", 6)
    rep = flat.q_report([0.0] * 6)
    check("Q(flat, n=6) = 0", rep["q_holographic"] == 0.0 and rep["q_direct"] == 0.0)

    # conformally flat two-torus: ∫Q dv = 0 (Gauss–Bonnet, χ = 0)
    torus = q.Metric.builtin("conf_flat_torus", 2, {"a": 0.3})
    t = torus.total_q(32)
    check(
        "∫Q dv = 0 on T²",
        abs(t["int_q"]) < 1e-8 * t["volume"],
        f"int_q={t['int_q']:.3e}, volume={t['volume']:.6f}",
    )

    # spec files round-trip through the TOML schema
    toml_text = """
dim = 2
kind = "conformally_flat"
phi = "a*sin(x1)*cos(x2)"
periods = [6.283185307179586, 6.283185307179586]

[params]
a = 0.25
"""
    m = q.Metric.from_toml(toml_text, "inline")
    rep = m.q_report([0.7, 0.2])
    check("TOML metric evaluates", abs(rep["q_holographic"] - rep["q_direct"]) < 1e-10)

    # verification suite pass-through
    checks = q.verify_suite("jets")
    bad = [c["name"] for c in checks if not c["pass"]]
    check("verify_suite('jets') all pass", not bad, f"{len(checks)} checks")

    print()
    if FAILURES:
        print(f"{len(FAILURES)} smoke checks failed: {FAILURES}")
        sys.exit(1)
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
