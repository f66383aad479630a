import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtwisland.ingest import (
    Branch,
    Bus,
    CaseFormatError,
    Generator,
    IntegrityError,
    NetworkCase,
    PmuRecord,
    PmuRecordSet,
    bundled_case_path,
    load_pmu_records,
    parse_network_case,
    parse_pmu_records,
    read_sections,
    write_network_case,
    write_pmu_records,
)

SMALL = """\
#BUS id,load_p_mw,load_q_mvar
1,0,0
2,50,10
3,25.5,-3
#BRANCH from,to,circuit,p_from_mw,p_to_mw,breaker
1,2,1,40,-39.5,1
2,3,1,10,-10,1
#GEN gen_id,bus,p_cap_mw,q_min_mvar,q_max_mvar,h_s,xdp_pu
G1,1,100,-50,50,5,0.3
"""


def test_bundled_case_counts(case39):
    assert len(case39.buses) == 39
    assert len(case39.branches) == 46
    assert len(case39.generators) == 10
    assert case39.gen_ids == [f"G{i}" for i in range(1, 11)]


def test_bundled_case_totals(case39):
    load = sum(b.load_p for b in case39.buses)
    gen = sum(g.dispatch for g in case39.generators)
    assert load == pytest.approx(6149.1, abs=1e-6)
    losses = sum(br.p_from + br.p_to for br in case39.branches)
    # generation covers load plus branch losses
    assert gen - load == pytest.approx(losses, abs=1e-4)


def test_branch_to_unknown_bus_names_it():
    text = SMALL.replace("2,3,1,10,-10,1", "2,99,1,10,-10,1")
    with pytest.raises(IntegrityError, match="99"):
        parse_network_case(text)


def test_generator_on_unknown_bus():
    with pytest.raises(IntegrityError, match="G1"):
        parse_network_case(SMALL.replace("G1,1,", "G1,7,"))


def test_empty_branch_section_passes_ingest():
    text = SMALL.split("#BRANCH")[0] + "#BRANCH from,to,circuit,p_from_mw,p_to_mw,breaker\n" + "#GEN" + SMALL.split("#GEN")[1]
    case = parse_network_case(text)
    assert case.branches == ()


def test_parse_error_carries_line_number():
    text = SMALL.replace("2,50,10", "2,fifty,10")
    with pytest.raises(CaseFormatError) as exc:
        parse_network_case(text)
    assert exc.value.errors[0][0] == 3


def test_duplicate_parallel_circuit_rejected():
    text = SMALL.replace("2,3,1,10,-10,1", "2,3,1,10,-10,1\n3,2,1,1,-1,1")
    with pytest.raises(IntegrityError, match="duplicate branch"):
        parse_network_case(text)


def test_parallel_circuits_allowed():
    case = parse_network_case(SMALL.replace("2,3,1,10,-10,1", "2,3,1,10,-10,1\n2,3,2,5,-5,0"))
    assert len(case.find_branches(3, 2)) == 2


def test_row_conservation():
    text = SMALL + "G2,3,oops,0,0,1,0.2\n4,5\n"
    records, errors, n_rows = read_sections(text)
    assert n_rows == sum(len(v) for v in records.values()) + len(errors)
    assert len(errors) == 2


def test_round_trip_bundled(case39, tmp_path):
    p = tmp_path / "net.csv"
    write_network_case(case39, p)
    again = parse_network_case(p.read_text())
    assert again == case39


_finite = st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False)


@given(
    loads=st.lists(st.tuples(_finite, _finite), min_size=2, max_size=6),
    flows=st.lists(st.tuples(_finite, _finite, st.booleans()), min_size=1, max_size=5),
    h=st.floats(0.1, 1000),
)
def test_round_trip_random(loads, flows, h):
    buses = tuple(Bus(i + 1, p, q) for i, (p, q) in enumerate(loads))
    n = len(buses)
    branches = tuple(Branch(1, 2 + (k % (n - 1)), 1 + k, pf, pt, on) for k, (pf, pt, on) in enumerate(flows))
    gens = (Generator("G1", 1, 10.0, -1.0, 1.0, h, 0.2),)
    case = NetworkCase(buses, branches, gens)
    assert parse_network_case(write_network_case(case)) == case


# --- PMU files --------------------------------------------------------------


def _angle_file(n_gen=10, seconds=9.0, rate=60.0, drop=None):
    lines = ["time_s,gen_id,angle_deg"]
    n = int(round(seconds * rate))
    for j in range(n):
        t = j / rate
        for g in range(1, n_gen + 1):
            gid = f"G{g}"
            if drop and gid in drop and j < drop[gid]:
                continue
            lines.append(f"{t!r},{gid},{10 * g + math.sin(t):.6f}")
    return "\n".join(lines) + "\n"


def test_pmu_counts():
    recs = parse_pmu_records(_angle_file())
    assert len(recs) == 10
    assert all(len(r) == 540 for r in recs)
    assert recs.gen_ids == [f"G{i}" for i in range(1, 11)]


def test_missing_prefix_accepted():
    recs = parse_pmu_records(_angle_file(drop={"G3": 100}))
    assert len(recs["G3"]) == 440
    assert recs["G3"].times[0] == pytest.approx(100 / 60)
    assert len(recs["G1"]) == 540


def test_duplicate_sample_rejected():
    text = "time_s,gen_id,angle_deg\n5.000,G1,1.0\n5.000,G1,2.0\n"
    with pytest.raises(CaseFormatError, match="duplicate"):
        parse_pmu_records(text)


def test_rows_sorted_by_time():
    text = "time_s,gen_id,angle_deg\n0.2,G1,2\n0.1,G1,1\n0.0,G1,0\n"
    rec = parse_pmu_records(text)["G1"]
    assert np.all(np.diff(rec.times) > 0)
    assert np.allclose(np.degrees(rec.angle), [0, 1, 2])


def test_angles_converted_to_radians():
    rec = parse_pmu_records("time_s,gen_id,angle_deg\n0,G1,180\n0.1,G1,90\n")["G1"]
    assert rec.angle[0] == pytest.approx(math.pi)


def test_phasor_file():
    text = "time_s,gen_id,vm_pu,va_deg,im_pu,ia_deg\n0,G1,1.0,30,0.5,0\n0.1,G1,1.0,31,0.5,1\n"
    rec = parse_pmu_records(text)["G1"]
    assert rec.kind == "phasor"
    assert rec.voltage[0] == pytest.approx(np.exp(1j * math.pi / 6))


def test_bad_header():
    with pytest.raises(CaseFormatError):
        parse_pmu_records("t,g,a\n0,G1,1\n")


def test_pmu_round_trip(tmp_path):
    recs = parse_pmu_records(_angle_file(n_gen=3, seconds=0.5, drop={"G2": 4}))
    p = tmp_path / "pmu.csv"
    write_pmu_records(recs, p)
    again = load_pmu_records(p)
    assert again == recs


def test_window_keeps_record_spans():
    recs = PmuRecordSet({"G1": PmuRecord("G1", np.arange(10.0), angle=np.zeros(10))})
    w = recs.window(2.0, 5.0)
    assert list(w["G1"].times) == [2.0, 3.0, 4.0, 5.0]


def test_bundled_scenarios_exist():
    for name in ("network.csv", "case1.json", "case2.json"):
        assert bundled_case_path(name).exists()
