"""Regenerate the bundled 39-bus network file from MATPOWER's case39.

Loads are reset to the classic New England values (no load at buses 1 and 9,
7.5 MW at bus 12), the AC power flow is solved once with PYPOWER and the
branch-end flows are frozen into ``network.csv``. Dynamic data are the usual
classical-model constants on a 100 MVA base.

Requires ``pypower`` (``pip install pypower``); the package itself never
solves power flow.

    python scripts/build_case39.py [out.csv]
"""

import sys
from pathlib import Path

import numpy as np
from pypower.api import case39, ppoption, runpf

OUT = Path(__file__).resolve().parents[1] / "src/dtwisland/data/case39/network.csv"

# bus -> (H seconds, x'd p.u.), 100 MVA base
DYNAMIC = {
    30: (42.0, 0.031),
    31: (30.3, 0.0697),
    32: (35.8, 0.0531),
    33: (28.6, 0.0436),
    34: (26.0, 0.132),
    35: (34.8, 0.05),
    36: (26.4, 0.049),
    37: (24.3, 0.057),
    38: (34.5, 0.057),
    39: (500.0, 0.006),
}

LOAD_OVERRIDES = {1: (0.0, 0.0), 9: (0.0, 0.0), 12: (7.5, 88.0)}


def main(out=OUT):
    ppc = case39()
    bus = ppc["bus"]
    for b, (pd, qd) in LOAD_OVERRIDES.items():
        bus[b - 1, 2] = pd
        bus[b - 1, 3] = qd
    res, ok = runpf(ppc, ppoption(VERBOSE=0, OUT_ALL=0, PF_TOL=1e-10))
    if not ok:
        raise SystemExit("power flow did not converge")

    lines = ["#META key,value", f"base_mva,{res['baseMVA']:g}", "freq_hz,60", ""]
    lines.append("#BUS id,load_p_mw,load_q_mvar,vm_pu,va_deg,gs_mw,bs_mvar")
    for row in res["bus"]:
        lines.append(
            f"{int(row[0])},{row[2]:g},{row[3]:g},{row[7]:.10f},{row[8]:.10f},{row[4]:g},{row[5]:g}"
        )
    lines.append("")
    lines.append("#BRANCH from,to,circuit,p_from_mw,p_to_mw,breaker,r_pu,x_pu,b_pu,tap")
    seen = {}
    for row in res["branch"]:
        f, t = int(row[0]), int(row[1])
        key = (min(f, t), max(f, t))
        seen[key] = seen.get(key, 0) + 1
        tap = row[8] if row[8] != 0 else 1.0
        lines.append(
            f"{f},{t},{seen[key]},{row[13]:.6f},{row[15]:.6f},1,{row[2]:g},{row[3]:g},{row[4]:g},{tap:g}"
        )
    lines.append("")
    lines.append("#GEN gen_id,bus,p_cap_mw,q_min_mvar,q_max_mvar,h_s,xdp_pu,p_gen_mw,q_gen_mvar")
    # capacity column carries the pre-fault dispatch, which is what the island balance tables report
    for i, row in enumerate(res["gen"], start=1):
        b = int(row[0])
        h, xdp = DYNAMIC[b]
        lines.append(
            f"G{i},{b},{row[1]:.6f},{row[4]:g},{row[3]:g},{h:g},{xdp:g},{row[1]:.6f},{row[2]:.6f}"
        )
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    total_load = np.sum(res["bus"][:, 2])
    print(f"wrote {out}: load {total_load:.1f} MW, slack {res['gen'][1, 1]:.2f} MW")


if __name__ == "__main__":
    main(*sys.argv[1:])
