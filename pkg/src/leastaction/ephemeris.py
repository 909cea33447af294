"""Planetary ephemeris tables in a canonical SI CSV format.

Canonical layout::

    # epoch=JD2459580.5            (optional)
    body,t_days,x_m,y_m,z_m,vx_ms,vy_ms,vz_ms,mass_kg
    Sun,0.0,...

Rows are grouped by timestamp, bodies in the same order at every timestamp,
coordinates relative to the solar-system barycenter. Floats are written with
``repr`` so a parse/serialize round trip reproduces canonical files exactly.
"""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Optional

import numpy as np

from .errors import ConfigError, EphemerisParseError
from .integrator import InitialState
from .path import Path
from .systems import BODY_MASSES_KG, G_SI, INNER_PLANETS, ephemeris_system

HEADER = ("body", "t_days", "x_m", "y_m", "z_m", "vx_ms", "vy_ms", "vz_ms", "mass_kg")
SECONDS_PER_DAY = 86400.0
DEFAULT_WINDOW_DAYS = 61
_EPOCH_RE = re.compile(r"^#\s*epoch=JD([0-9.+\-eE]+)\s*$")


@dataclass(frozen=True)
class EphemerisTable:
    bodies: tuple  # ((name, mass_kg), ...)
    t_days: np.ndarray  # (T,)
    states: np.ndarray  # (T, B, 6): x, y, z [m], vx, vy, vz [m/s]
    epoch_jd: Optional[float] = None

    @property
    def names(self):
        return tuple(name for name, _ in self.bodies)

    @property
    def masses(self):
        return np.array([m for _, m in self.bodies])

    @property
    def n_samples(self):
        return self.t_days.shape[0]

    @property
    def dt_seconds(self):
        return SECONDS_PER_DAY


def _float(text, lineno, column):
    try:
        value = float(text)
    except ValueError:
        raise EphemerisParseError(f"column {column!r}: not a number: {text!r}", line=lineno) from None
    if not np.isfinite(value):
        raise EphemerisParseError(f"column {column!r}: non-finite value", line=lineno)
    return value


def _check_header(fields, lineno):
    lowered = [f.strip().lower() for f in fields]
    if any("km" in f for f in lowered):
        raise EphemerisParseError(
            "header uses kilometre units; only SI columns (m, m/s, kg) are accepted", line=lineno
        )
    if tuple(f.strip() for f in fields) != HEADER:
        raise EphemerisParseError(f"expected header {','.join(HEADER)}", line=lineno)


def parse_ephemeris(content: str, known_bodies=INNER_PLANETS) -> EphemerisTable:
    """Parse canonical CSV text. ``known_bodies=None`` accepts any body name."""
    lines = content.splitlines()
    epoch = None
    pos = 0
    while pos < len(lines) and lines[pos].startswith("#"):
        m = _EPOCH_RE.match(lines[pos])
        if m:
            epoch = float(m.group(1))
        pos += 1
    if pos >= len(lines) or not lines[pos].strip():
        if not any(l.strip() for l in lines):
            raise EphemerisParseError("empty file", line=1)
        raise EphemerisParseError("missing header", line=pos + 1)
    header_line = pos + 1
    _check_header(next(csv.reader([lines[pos]])), header_line)

    rows = []
    for offset, fields in enumerate(csv.reader(lines[pos + 1 :])):
        lineno = header_line + 1 + offset
        if not fields or (len(fields) == 1 and not fields[0].strip()):
            continue
        if len(fields) != len(HEADER):
            raise EphemerisParseError(f"expected {len(HEADER)} fields, got {len(fields)}", line=lineno)
        name = fields[0].strip()
        if known_bodies is not None and name not in known_bodies:
            raise EphemerisParseError(f"unknown body {name!r}", line=lineno)
        values = [_float(f, lineno, col) for f, col in zip(fields[1:], HEADER[1:])]
        rows.append((lineno, name, values))
    if not rows:
        raise EphemerisParseError("no data rows", line=header_line)

    # first timestamp fixes the body order and masses
    t_first = rows[0][2][0]
    order = []
    masses = {}
    for lineno, name, values in rows:
        if values[0] != t_first:
            break
        if name in masses:
            raise EphemerisParseError(f"non-monotone time: t={t_first!r} repeated for {name!r}", line=lineno)
        if values[7] <= 0:
            raise EphemerisParseError(f"mass of {name!r} must be positive", line=lineno)
        order.append(name)
        masses[name] = values[7]
    n_bodies = len(order)
    if len(rows) % n_bodies:
        raise EphemerisParseError(
            f"ragged timestamps: {len(rows)} rows is not a multiple of {n_bodies} bodies", line=rows[-1][0]
        )

    n_t = len(rows) // n_bodies
    t = np.empty(n_t)
    states = np.empty((n_t, n_bodies, 6))
    for k in range(n_t):
        block = rows[k * n_bodies : (k + 1) * n_bodies]
        tk = block[0][2][0]
        for j, (lineno, name, values) in enumerate(block):
            if values[0] != tk:
                raise EphemerisParseError(f"ragged timestamps: expected t={tk!r}, got {values[0]!r}", line=lineno)
            if name != order[j]:
                raise EphemerisParseError(f"expected body {order[j]!r}, got {name!r}", line=lineno)
            if values[7] != masses[name]:
                raise EphemerisParseError(f"mass of {name!r} changed", line=lineno)
            states[k, j] = values[1:7]
        if k and not tk > t[k - 1]:
            raise EphemerisParseError(f"non-monotone time: {tk!r} after {t[k - 1]!r}", line=block[0][0])
        if k and tk - t[k - 1] != 1.0:
            raise EphemerisParseError(f"sampling must be 1 day, got a step of {tk - t[k - 1]!r}", line=block[0][0])
        t[k] = tk
    return EphemerisTable(tuple((n, masses[n]) for n in order), t, states, epoch)


def load_ephemeris(path, known_bodies=INNER_PLANETS) -> EphemerisTable:
    return parse_ephemeris(FsPath(path).read_text(), known_bodies)


def serialize_ephemeris(table: EphemerisTable) -> str:
    out = io.StringIO()
    if table.epoch_jd is not None:
        out.write(f"# epoch=JD{table.epoch_jd!r}\n")
    out.write(",".join(HEADER) + "\n")
    for k, t in enumerate(table.t_days):
        for j, (name, mass) in enumerate(table.bodies):
            vals = [float(t), *map(float, table.states[k, j]), float(mass)]
            out.write(name + "," + ",".join(repr(v) for v in vals) + "\n")
    return out.getvalue()


def to_experiment(table: EphemerisTable, window=(0, DEFAULT_WINDOW_DAYS), fixed=("Sun",)):
    """Planar reference path over the half-open day window ``[start, end)``.

    Returns ``(path, initial_state, system)``; coordinates are ``x, y`` per body
    in table order, and the bodies in ``fixed`` never move under optimization.
    """
    start, end = window
    t = table.t_days
    if start < t[0] or end > t[-1] + 1 or not start < end:
        raise ConfigError(f"window [{start}, {end}) outside table range [{t[0]!r}, {t[-1] + 1!r})")
    sel = (t >= start) & (t < end)
    n = int(sel.sum())
    if n < 3:
        raise ConfigError(f"window [{start}, {end}) holds {n} samples; at least 3 are needed")
    st = table.states[sel]
    coords = st[:, :, 0:2].reshape(n, -1)
    vel = st[:, :, 3:5].reshape(n, -1)
    path = Path(coords, SECONDS_PER_DAY, t0=float(t[sel][0]) * SECONDS_PER_DAY)
    system = ephemeris_system(masses=tuple(table.masses), names=table.names, fixed=fixed)
    return path, InitialState(coords[0], vel[0]), system


# --- synthetic fixture ---------------------------------------------------

AU = 1.495978707e11
JD_J2000 = 2451545.0
JD_2022 = 2459580.5  # 2022-01-01 00:00 TDB

# mean elements and rates per Julian century, J2000 ecliptic:
# a [au], e, I, L, long. perihelion, long. ascending node [deg]
_ELEMENTS = {
    "Mercury": ((0.38709927, 0.20563593, 7.00497902, 252.25032350, 77.45779628, 48.33076593),
                (0.00000037, 0.00001906, -0.00594749, 149472.67411175, 0.16047689, -0.12534081)),
    "Venus": ((0.72333566, 0.00677672, 3.39467605, 181.97909950, 131.60246718, 76.67984255),
              (0.00000390, -0.00004107, -0.00078890, 58517.81538729, 0.00268329, -0.27769418)),
    "Earth": ((1.00000261, 0.01671123, -0.00001531, 100.46457166, 102.93768193, 0.0),
              (0.00000562, -0.00004392, -0.01294668, 35999.37244981, 0.32327364, 0.0)),
    "Mars": ((1.52371034, 0.09339410, 1.84969142, -4.55343205, -23.94362959, 49.55953891),
             (0.00001847, 0.00007882, -0.00813131, 19140.30268499, 0.44441088, -0.29257343)),
}


def _kepler_state(elements, mu):
    a_au, e, inc, L, varpi, node = elements
    a = a_au * AU
    inc, L, varpi, node = np.radians([inc, L, varpi, node])
    omega = varpi - node
    M = np.remainder(L - varpi + np.pi, 2 * np.pi) - np.pi
    E = M
    for _ in range(50):
        E = E - (E - e * np.sin(E) - M) / (1 - e * np.cos(E))
    cE, sE = np.cos(E), np.sin(E)
    r_orb = a * np.array([cE - e, np.sqrt(1 - e * e) * sE, 0.0])
    n = np.sqrt(mu / a**3)
    v_orb = a * n / (1 - e * cE) * np.array([-sE, np.sqrt(1 - e * e) * cE, 0.0])

    def rot(angle, axis):
        c, s = np.cos(angle), np.sin(angle)
        if axis == "z":
            return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])

    R = rot(node, "z") @ rot(inc, "x") @ rot(omega, "z")
    return R @ r_orb, R @ v_orb


def synthetic_inner_planets(days=365, epoch_jd=JD_2022) -> EphemerisTable:
    """A year of Sun + inner-planet states at 1-day resolution.

    Starts from mean Keplerian elements at ``epoch_jd``, shifts to the
    barycenter of the five bodies and integrates their mutual Newtonian
    gravity. A stand-in for downloaded ephemerides; it is self-consistent but
    ignores the outer planets.
    """
    from scipy.integrate import solve_ivp

    names = INNER_PLANETS
    m = np.array([BODY_MASSES_KG[n] for n in names])
    T = (epoch_jd - JD_J2000) / 36525.0
    pos = np.zeros((len(names), 3))
    vel = np.zeros((len(names), 3))
    for i, name in enumerate(names[1:], start=1):
        base, rate = _ELEMENTS[name]
        el = np.array(base) + np.array(rate) * T
        pos[i], vel[i] = _kepler_state(el, G_SI * (m[0] + m[i]))
    pos -= (m[:, None] * pos).sum(0) / m.sum()
    vel -= (m[:, None] * vel).sum(0) / m.sum()

    def rhs(_, y):
        x = y[: 3 * len(m)].reshape(-1, 3)
        d = x[:, None, :] - x[None, :, :]
        r3 = np.sum(d * d, axis=-1) ** 1.5
        np.fill_diagonal(r3, np.inf)
        a = -G_SI * np.einsum("j,ijk->ik", m, d / r3[..., None])
        return np.concatenate([y[3 * len(m) :], a.ravel()])

    t_eval = np.arange(days) * SECONDS_PER_DAY
    sol = solve_ivp(rhs, (0.0, t_eval[-1]), np.concatenate([pos.ravel(), vel.ravel()]),
                    method="DOP853", t_eval=t_eval, rtol=1e-12, atol=1.0)
    y = sol.y.T.reshape(days, 2, len(m), 3)
    states = np.concatenate([y[:, 0], y[:, 1]], axis=-1)
    return EphemerisTable(tuple(zip(names, m.tolist())), np.arange(days, dtype=float), states, epoch_jd)


def default_data_path() -> FsPath:
    return FsPath(__file__).resolve().parent / "data" / "inner_planets_2022.csv"
