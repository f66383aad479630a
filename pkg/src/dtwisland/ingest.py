"""CSV readers and writers for network cases and PMU recordings.

``network.csv`` is split into sections. A section starts with a line
``#NAME col1,col2,...`` that also carries the column header, followed by data
rows. Known sections are ``#META``, ``#BUS``, ``#BRANCH`` and ``#GEN``; blank
lines are ignored. Columns beyond the required ones are optional and feed the
transient simulator (impedances, solved voltages, dispatch).

``pmu.csv`` is a flat table, either ``time_s,gen_id,angle_deg`` or
``time_s,gen_id,vm_pu,va_deg,im_pu,ia_deg``.

Angles are stored in degrees on disk and radians in memory.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = [
    "Bus",
    "Branch",
    "Generator",
    "NetworkCase",
    "PmuRecord",
    "PmuRecordSet",
    "CaseFormatError",
    "IntegrityError",
    "load_network_case",
    "parse_network_case",
    "write_network_case",
    "load_pmu_records",
    "parse_pmu_records",
    "write_pmu_records",
    "bundled_case_path",
]


class CaseFormatError(ValueError):
    """Raised for malformed rows; ``errors`` holds one ``(line, message)`` per bad row."""

    def __init__(self, errors: list[tuple[int, str]], source: str = "<string>"):
        self.errors = list(errors)
        self.source = source
        head = "; ".join(f"line {ln}: {msg}" for ln, msg in self.errors[:5])
        more = f" (+{len(self.errors) - 5} more)" if len(self.errors) > 5 else ""
        super().__init__(f"{source}: {head}{more}")


class IntegrityError(ValueError):
    """A record references an id that does not exist, or ids collide."""


@dataclass(frozen=True)
class Bus:
    id: int
    load_p: float
    load_q: float
    vm: float = 1.0
    va_deg: float = 0.0
    gs: float = 0.0  # MW at 1 p.u.
    bs: float = 0.0  # MVAr at 1 p.u.


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    circuit: int
    p_from: float
    p_to: float
    breaker: bool = True
    r: float = 0.0
    x: float = 0.0
    b: float = 0.0
    tap: float = 1.0

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.from_bus, self.to_bus, self.circuit)

    @property
    def pair(self) -> tuple[int, int]:
        return (min(self.from_bus, self.to_bus), max(self.from_bus, self.to_bus))

    @property
    def mean_abs_flow(self) -> float:
        return (abs(self.p_from) + abs(self.p_to)) / 2.0

    def label(self) -> str:
        return f"{self.from_bus}-{self.to_bus}" + (f"#{self.circuit}" if self.circuit != 1 else "")


@dataclass(frozen=True)
class Generator:
    gen_id: str
    bus: int
    p_capacity: float
    q_min: float
    q_max: float
    inertia_h: float
    xd_prime: float
    p_gen: float | None = None
    q_gen: float | None = None
    damping: float | None = None

    @property
    def dispatch(self) -> float:
        return self.p_capacity if self.p_gen is None else self.p_gen


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0
    freq_hz: float = 60.0

    def __post_init__(self):
        validate_case(self)

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def generator(self, gen_id: str) -> Generator:
        for g in self.generators:
            if g.gen_id == gen_id:
                return g
        raise KeyError(gen_id)

    @property
    def gen_ids(self) -> list[str]:
        return [g.gen_id for g in self.generators]

    def find_branches(self, a: int, b: int) -> list[Branch]:
        pair = (min(a, b), max(a, b))
        return [br for br in self.branches if br.pair == pair]

    def with_open_branches(self, pairs: Iterable[tuple[int, int]]) -> "NetworkCase":
        """Copy of the case with every circuit between the given bus pairs opened."""
        wanted = {(min(a, b), max(a, b)) for a, b in pairs}
        known = {br.pair for br in self.branches}
        missing = wanted - known
        if missing:
            raise IntegrityError(f"no branch between buses {sorted(missing)}")
        branches = tuple(replace(br, breaker=False) if br.pair in wanted else br for br in self.branches)
        return replace(self, branches=branches)


def validate_case(case: NetworkCase) -> None:
    ids = [b.id for b in case.buses]
    seen: set[int] = set()
    for i in ids:
        if i in seen:
            raise IntegrityError(f"duplicate bus id {i}")
        seen.add(i)
    keys: set[tuple[int, int, int]] = set()
    for br in case.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in seen:
                raise IntegrityError(f"branch {br.from_bus}-{br.to_bus} references unknown bus {end}")
        if br.from_bus == br.to_bus:
            raise IntegrityError(f"branch {br.from_bus}-{br.to_bus} is a self loop")
        k = (*br.pair, br.circuit)
        if k in keys:
            raise IntegrityError(f"duplicate branch {br.from_bus}-{br.to_bus} circuit {br.circuit}")
        keys.add(k)
    gids: set[str] = set()
    for g in case.generators:
        if g.bus not in seen:
            raise IntegrityError(f"generator {g.gen_id} references unknown bus {g.bus}")
        if g.gen_id in gids:
            raise IntegrityError(f"duplicate generator id {g.gen_id}")
        gids.add(g.gen_id)


# --- network.csv -----------------------------------------------------------

_REQUIRED = {
    "BUS": ("id", "load_p_mw", "load_q_mvar"),
    "BRANCH": ("from", "to", "circuit", "p_from_mw", "p_to_mw", "breaker"),
    "GEN": ("gen_id", "bus", "p_cap_mw", "q_min_mvar", "q_max_mvar", "h_s", "xdp_pu"),
    "META": ("key", "value"),
}


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "closed", "yes", "y"):
        return True
    if v in ("0", "false", "open", "no", "n"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt(row: dict, key: str, default=None, conv=float):
    v = row.get(key)
    if v is None or v.strip() == "":
        return default
    return conv(v)


def _bus_from_row(row: dict) -> Bus:
    return Bus(
        id=int(row["id"]),
        load_p=float(row["load_p_mw"]),
        load_q=float(row["load_q_mvar"]),
        vm=_opt(row, "vm_pu", 1.0),
        va_deg=_opt(row, "va_deg", 0.0),
        gs=_opt(row, "gs_mw", 0.0),
        bs=_opt(row, "bs_mvar", 0.0),
    )


def _branch_from_row(row: dict) -> Branch:
    return Branch(
        from_bus=int(row["from"]),
        to_bus=int(row["to"]),
        circuit=int(row["circuit"]),
        p_from=float(row["p_from_mw"]),
        p_to=float(row["p_to_mw"]),
        breaker=_parse_bool(row["breaker"]),
        r=_opt(row, "r_pu", 0.0),
        x=_opt(row, "x_pu", 0.0),
        b=_opt(row, "b_pu", 0.0),
        tap=_opt(row, "tap", 1.0),
    )


def _gen_from_row(row: dict) -> Generator:
    return Generator(
        gen_id=row["gen_id"].strip(),
        bus=int(row["bus"]),
        p_capacity=float(row["p_cap_mw"]),
        q_min=float(row["q_min_mvar"]),
        q_max=float(row["q_max_mvar"]),
        inertia_h=float(row["h_s"]),
        xd_prime=float(row["xdp_pu"]),
        p_gen=_opt(row, "p_gen_mw"),
        q_gen=_opt(row, "q_gen_mvar"),
        damping=_opt(row, "damping_pu"),
    )


_BUILDERS = {"BUS": _bus_from_row, "BRANCH": _branch_from_row, "GEN": _gen_from_row}


def read_sections(text: str) -> tuple[dict[str, list], list[tuple[int, str]], int]:
    """Parse the sectioned format.

    Returns ``(records, errors, n_rows)`` where ``n_rows`` counts every data
    row seen, so that ``n_rows == sum(len(v) for v in records) + len(errors)``.
    """
    records: dict[str, list] = defaultdict(list)
    errors: list[tuple[int, str]] = []
    n_rows = 0
    section = None
    header: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            name, _, cols = line[1:].partition(" ")
            section = name.strip().upper()
            header = [c.strip() for c in cols.split(",")] if cols.strip() else []
            if section not in _REQUIRED:
                errors.append((lineno, f"unknown section #{section}"))
                section = None
                continue
            missing = [c for c in _REQUIRED[section] if c not in header]
            if missing:
                errors.append((lineno, f"section #{section} header lacks {missing}"))
                section = None
            continue
        n_rows += 1
        if section is None:
            errors.append((lineno, "data row outside a known section"))
            continue
        values = next(csv.reader([line]))
        if len(values) != len(header):
            errors.append((lineno, f"expected {len(header)} fields, got {len(values)}"))
            continue
        row = dict(zip(header, values))
        try:
            if section == "META":
                records["META"].append((row["key"].strip(), row["value"].strip()))
            else:
                records[section].append(_BUILDERS[section](row))
        except (ValueError, KeyError) as exc:
            errors.append((lineno, f"#{section}: {exc}"))
    return dict(records), errors, n_rows


def parse_network_case(text: str, source: str = "<string>") -> NetworkCase:
    records, errors, _ = read_sections(text)
    if errors:
        raise CaseFormatError(errors, source)
    meta = dict(records.get("META", []))
    return NetworkCase(
        buses=tuple(records.get("BUS", [])),
        branches=tuple(records.get("BRANCH", [])),
        generators=tuple(records.get("GEN", [])),
        base_mva=float(meta.get("base_mva", 100.0)),
        freq_hz=float(meta.get("freq_hz", 60.0)),
    )


def load_network_case(path) -> NetworkCase:
    path = Path(path)
    return parse_network_case(path.read_text(), source=str(path))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_network_case(case: NetworkCase, path=None) -> str:
    """Serialize ``case``; floats use ``repr`` so a reload is exact."""
    out = ["#META key,value", f"base_mva,{_fmt(case.base_mva)}", f"freq_hz,{_fmt(case.freq_hz)}", ""]
    out.append("#BUS id,load_p_mw,load_q_mvar,vm_pu,va_deg,gs_mw,bs_mvar")
    for b in case.buses:
        out.append(
            ",".join([str(b.id), _fmt(b.load_p), _fmt(b.load_q), _fmt(b.vm), _fmt(b.va_deg), _fmt(b.gs), _fmt(b.bs)])
        )
    out.append("")
    out.append("#BRANCH from,to,circuit,p_from_mw,p_to_mw,breaker,r_pu,x_pu,b_pu,tap")
    for br in case.branches:
        out.append(
            ",".join(
                [
                    str(br.from_bus),
                    str(br.to_bus),
                    str(br.circuit),
                    _fmt(br.p_from),
                    _fmt(br.p_to),
                    "1" if br.breaker else "0",
                    _fmt(br.r),
                    _fmt(br.x),
                    _fmt(br.b),
                    _fmt(br.tap),
                ]
            )
        )
    out.append("")
    out.append("#GEN gen_id,bus,p_cap_mw,q_min_mvar,q_max_mvar,h_s,xdp_pu,p_gen_mw,q_gen_mvar,damping_pu")
    for g in case.generators:
        opt = ["" if v is None else _fmt(v) for v in (g.p_gen, g.q_gen, g.damping)]
        out.append(
            ",".join(
                [g.gen_id, str(g.bus), _fmt(g.p_capacity), _fmt(g.q_min), _fmt(g.q_max), _fmt(g.inertia_h), _fmt(g.xd_prime), *opt]
            )
        )
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# --- pmu.csv -----------------------------------------------------------------


@dataclass(frozen=True)
class PmuRecord:
    """One generator's samples.

    ``angle`` holds rotor angles in radians when the file carried
    ``angle_deg``; otherwise ``voltage`` and ``current`` hold complex p.u.
    terminal phasors and ``angle`` is None.
    """

    gen_id: str
    times: np.ndarray
    angle: np.ndarray | None = None
    voltage: np.ndarray | None = None
    current: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def kind(self) -> str:
        return "angle" if self.angle is not None else "phasor"

    def slice(self, mask: np.ndarray) -> "PmuRecord":
        pick = lambda a: None if a is None else a[mask]  # noqa: E731
        return PmuRecord(self.gen_id, self.times[mask], pick(self.angle), pick(self.voltage), pick(self.current))

    def __eq__(self, other):
        if not isinstance(other, PmuRecord):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None


@dataclass(frozen=True)
class PmuRecordSet:
    records: dict[str, PmuRecord] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records.values())

    def __getitem__(self, gen_id: str) -> PmuRecord:
        return self.records[gen_id]

    @property
    def gen_ids(self) -> list[str]:
        return list(self.records)

    def window(self, t_start: float | None, t_end: float | None, eps: float = 1e-9) -> "PmuRecordSet":
        out = {}
        for gid, rec in self.records.items():
            m = np.ones(len(rec), dtype=bool)
            if t_start is not None:
                m &= rec.times >= t_start - eps
            if t_end is not None:
                m &= rec.times <= t_end + eps
            out[gid] = rec.slice(m)
        return PmuRecordSet(out)


_ANGLE_COLS = ("time_s", "gen_id", "angle_deg")
_PHASOR_COLS = ("time_s", "gen_id", "vm_pu", "va_deg", "im_pu", "ia_deg")


def _natural_key(gid: str):
    digits = "".join(ch for ch in gid if ch.isdigit())
    prefix = "".join(ch for ch in gid if not ch.isdigit())
    return (prefix, int(digits) if digits else -1, gid)


def parse_pmu_records(text: str, source: str = "<string>") -> PmuRecordSet:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise CaseFormatError([(1, "empty file")], source) from None
    if tuple(header[:3]) == _ANGLE_COLS and len(header) == 3:
        kind = "angle"
    elif tuple(header) == _PHASOR_COLS:
        kind = "phasor"
    else:
        raise CaseFormatError([(1, f"unrecognised header {header}")], source)

    rows: dict[str, list] = defaultdict(list)
    errors: list[tuple[int, str]] = []
    seen: dict[tuple[str, float], int] = {}
    for lineno, values in enumerate(reader, start=2):
        if not values or all(not v.strip() for v in values):
            continue
        if len(values) != len(header):
            errors.append((lineno, f"expected {len(header)} fields, got {len(values)}"))
            continue
        try:
            t = float(values[0])
            gid = values[1].strip()
            nums = [float(v) for v in values[2:]]
        except ValueError as exc:
            errors.append((lineno, str(exc)))
            continue
        if not math.isfinite(t) or not all(math.isfinite(v) for v in nums):
            errors.append((lineno, "non-finite value"))
            continue
        if (gid, t) in seen:
            errors.append((lineno, f"duplicate sample ({gid}, t={t}) first seen on line {seen[(gid, t)]}"))
            continue
        seen[(gid, t)] = lineno
        rows[gid].append((t, *nums))
    if errors:
        raise CaseFormatError(errors, source)

    records = {}
    for gid in sorted(rows, key=_natural_key):
        arr = np.array(sorted(rows[gid]), dtype=float)
        times = arr[:, 0]
        if kind == "angle":
            records[gid] = PmuRecord(gid, times, angle=np.radians(arr[:, 1]))
        else:
            v = arr[:, 1] * np.exp(1j * np.radians(arr[:, 2]))
            i = arr[:, 3] * np.exp(1j * np.radians(arr[:, 4]))
            records[gid] = PmuRecord(gid, times, voltage=v, current=i)
    return PmuRecordSet(records)


def load_pmu_records(path) -> PmuRecordSet:
    path = Path(path)
    return parse_pmu_records(path.read_text(), source=str(path))


def write_pmu_records(records: PmuRecordSet, path=None, decimals: int | None = None) -> str:
    """Write records in time-major order. ``decimals`` rounds values; None keeps repr."""

    def f(x):
        return repr(float(x)) if decimals is None else f"{x:.{decimals}f}"

    recs = list(records)
    kind = recs[0].kind if recs else "angle"
    lines = [",".join(_ANGLE_COLS if kind == "angle" else _PHASOR_COLS)]
    entries = []
    for rec in recs:
        for j, t in enumerate(rec.times):
            if kind == "angle":
                vals = [math.degrees(rec.angle[j])]
            else:
                v, i = rec.voltage[j], rec.current[j]
                vals = [abs(v), math.degrees(np.angle(v)), abs(i), math.degrees(np.angle(i))]
            entries.append((t, rec.gen_id, vals))
    order = {gid: n for n, gid in enumerate(records.gen_ids)}
    entries.sort(key=lambda e: (e[0], order[e[1]]))
    for t, gid, vals in entries:
        lines.append(",".join([repr(float(t)), gid, *map(f, vals)]))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def bundled_case_path(name: str = "network.csv") -> Path:
    """Path of a file shipped under ``dtwisland/data/case39``."""
    return Path(__file__).parent / "data" / "case39" / name
