r"""Exact and finite-volume solutions of the inviscid Burgers equation

.. math::

    u_t + \tfrac12 (u^2)_x = 0

for piecewise-constant initial data.

Front tracking is exact: every rarefaction fan emanates from an initial jump
at ``t = 0``, and every front (shock or fan edge) then follows a curve of the
form ``x(t) = p + q*sqrt(t) + r*t``. Interaction times are roots of a
quadratic in ``sqrt(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from hptsi.field import Grid1D, SampledField

_POS_TOL = 1e-12
_STATE_TOL = 1e-12


@dataclass(frozen=True)
class PiecewiseConstantIC:
    breakpoints: tuple
    states: tuple

    def __post_init__(self):
        b = tuple(float(v) for v in self.breakpoints)
        s = tuple(float(v) for v in self.states)
        if len(s) != len(b) + 1:
            raise ValueError("need exactly one more state than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if not all(math.isfinite(v) for v in s + b):
            raise ValueError("states and breakpoints must be finite")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "states", s)

    def __call__(self, x):
        idx = np.searchsorted(np.asarray(self.breakpoints), x, side="right")
        return np.asarray(self.states)[idx]

    def antiderivative(self, x):
        """``int_{b_0}^x u_0`` (piecewise linear in ``x``)."""
        x = np.asarray(x, dtype=float)
        b = np.asarray(self.breakpoints)
        s = np.asarray(self.states)
        if b.size == 0:
            return s[0] * x
        # value of the integral at each breakpoint, measured from b[0]
        at_b = np.concatenate([[0.0], np.cumsum(s[1:-1] * np.diff(b))])
        idx = np.searchsorted(b, x, side="right")
        base_idx = np.clip(idx - 1, 0, b.size - 1)
        return at_b[base_idx] + s[idx] * (x - b[base_idx])


def two_shock_ic(mu: float) -> PiecewiseConstantIC:
    """States ``(mu, mu/2, 0)`` separated at ``x = 0`` and ``x = 1``."""
    return PiecewiseConstantIC((0.0, 1.0), (mu, 0.5 * mu, 0.0))


def shock_rarefaction_ic(mu: float) -> PiecewiseConstantIC:
    """States ``(1.5, 0, mu)`` separated at ``x = 0`` and ``x = 1``."""
    return PiecewiseConstantIC((0.0, 1.0), (1.5, 0.0, mu))


@dataclass(frozen=True)
class Segment:
    """One piece of a solution at fixed time.

    ``kind`` is ``"constant"`` (``value`` holds the state) or ``"fan"``
    (``value`` holds the fan origin on the x-axis, ``u = (x - value)/t``).
    """

    kind: str
    left: float
    right: float
    value: float

    def __call__(self, x, t):
        if self.kind == "constant":
            return np.full(np.shape(x), self.value, dtype=float)
        return (np.asarray(x, dtype=float) - self.value) / t


@dataclass(frozen=True)
class PiecewiseSolution:
    time: float
    segments: tuple
    shocks: tuple = ()

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([s.right for s in self.segments[:-1]])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right")
        out = np.empty(x.shape, dtype=float)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if np.any(mask):
                out[mask] = seg(x[mask], self.time)
        return out

    def shock_positions(self) -> List[float]:
        return [s[0] for s in self.shocks]


# {{{ front tracking internals

@dataclass
class _Piece:
    kind: str  # "constant" or "fan"
    value: float

    def at(self, x, t):
        if self.kind == "constant":
            return self.value
        return (x - self.value) / t


@dataclass
class _Front:
    kind: str  # "shock" or "edge"
    p: float
    q: float
    r: float

    def position(self, t):
        return self.p + self.q * math.sqrt(t) + self.r * t


def _meeting_time(f1: _Front, f2: _Front, t_now: float) -> Optional[float]:
    dp, dq, dr = f2.p - f1.p, f2.q - f1.q, f2.r - f1.r
    s0 = math.sqrt(t_now)
    gap = dp + dq * s0 + dr * s0 * s0
    rate = dq + 2.0 * dr * s0
    if gap <= _POS_TOL * max(1.0, abs(f1.position(t_now))):
        if rate < -1e-14 or (rate == 0.0 and dr < 0):
            return t_now
        if gap < 0 and rate <= 0:
            return t_now
    roots = []
    if abs(dr) < 1e-15:
        if abs(dq) > 1e-15:
            roots.append(-dp / dq)
    else:
        disc = dq * dq - 4.0 * dr * dp
        if disc >= 0:
            sq = math.sqrt(disc)
            # numerically stable pair
            qq = -0.5 * (dq + math.copysign(sq, dq))
            if qq != 0.0:
                roots.append(qq / dr)
                roots.append(dp / qq)
            else:
                roots.append(-dq / (2.0 * dr))
    eps = 1e-13 * max(1.0, s0)
    later = [s for s in roots if s > s0 + eps]
    if not later:
        return None
    return min(later) ** 2


def _new_front(left: _Piece, right: _Piece, x: float, t: float) -> Optional[_Front]:
    ul, ur = left.at(x, t), right.at(x, t)
    scale = max(1.0, abs(ul), abs(ur))
    if ul > ur + _STATE_TOL * scale:
        if left.kind == "constant" and right.kind == "constant":
            s = 0.5 * (ul + ur)
            return _Front("shock", x - s * t, 0.0, s)
        if left.kind == "fan" and right.kind == "fan":
            m = 0.5 * (left.value + right.value)
            return _Front("shock", m, 0.0, (x - m) / t)
        fan, const = (left, right) if left.kind == "fan" else (right, left)
        a, u = fan.value, const.value
        c = (x - a - u * t) / math.sqrt(t)
        return _Front("shock", a, c, u)
    if abs(ul - ur) <= _STATE_TOL * scale:
        if left.kind == "constant" and right.kind == "constant":
            return None
        if left.kind == "fan" and right.kind == "fan":
            raise RuntimeError("two distinct fans cannot meet continuously")
        fan, const = (left, right) if left.kind == "fan" else (right, left)
        return _Front("edge", fan.value, 0.0, const.value)
    raise RuntimeError(f"interaction produced an expansive jump ({ul} < {ur})")


def _initial_waves(ic: PiecewiseConstantIC):
    pieces = [_Piece("constant", ic.states[0])]
    fronts: List[_Front] = []
    for b, ur in zip(ic.breakpoints, ic.states[1:]):
        ul = pieces[-1].value
        if ul > ur:
            fronts.append(_Front("shock", b, 0.0, 0.5 * (ul + ur)))
            pieces.append(_Piece("constant", ur))
        elif ul < ur:
            fronts.append(_Front("edge", b, 0.0, ul))
            pieces.append(_Piece("fan", b))
            fronts.append(_Front("edge", b, 0.0, ur))
            pieces.append(_Piece("constant", ur))
    return pieces, fronts


def _advance(pieces, fronts, t_end: float, events=None):
    t_now = 0.0
    while True:
        best = None
        for i in range(len(fronts) - 1):
            tm = _meeting_time(fronts[i], fronts[i + 1], t_now)
            if tm is not None and tm <= t_end and (best is None or tm < best[0]):
                best = (tm, i)  # strict < keeps the leftmost pair on ties
        if best is None:
            return pieces, fronts
        t_now, i = best
        x = 0.5 * (fronts[i].position(t_now) + fronts[i + 1].position(t_now))
        if events is not None:
            events.append((t_now, x))
        left, right = pieces[i], pieces[i + 2]
        new = _new_front(left, right, x, t_now)
        if new is None:
            del fronts[i:i + 2]
            del pieces[i + 1:i + 3]
        else:
            fronts[i:i + 2] = [new]
            del pieces[i + 1]

# }}}


def solve_front_tracking(ic: PiecewiseConstantIC, t: float) -> PiecewiseSolution:
    """Exact entropy solution at time ``t`` for piecewise-constant data."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    pieces, fronts = _initial_waves(ic)
    pieces, fronts = _advance(pieces, fronts, t)
    pos = [f.position(t) for f in fronts]
    bounds = [-math.inf] + pos + [math.inf]
    segments = []
    for k, piece in enumerate(pieces):
        kind = "constant" if piece.kind == "constant" or t == 0.0 else "fan"
        if piece.kind == "fan" and t == 0.0:
            # zero-width fan at the initial time
            continue
        segments.append(Segment(kind, bounds[k], bounds[k + 1], piece.value))
    shocks = []
    for k, f in enumerate(fronts):
        if f.kind == "shock":
            xs = pos[k]
            shocks.append((xs, pieces[k].at(xs, t) if t > 0 else pieces[k].value,
                           pieces[k + 1].at(xs, t) if t > 0 else pieces[k + 1].value))
    return PiecewiseSolution(float(t), tuple(segments), tuple(shocks))


def interaction_events(ic: PiecewiseConstantIC, t: float):
    """Chronological ``(time, position)`` list of wave interactions up to ``t``."""
    pieces, fronts = _initial_waves(ic)
    events = []
    _advance(pieces, fronts, t, events)
    return events


def collision_time(ic: PiecewiseConstantIC) -> Optional[float]:
    """First meeting time of the two initial shocks, ``None`` if they diverge."""
    s = ic.states
    if len(ic.breakpoints) != 2 or not (s[0] > s[1] > s[2]):
        raise ValueError("collision_time requires exactly two entropy shocks")
    s1, s2 = 0.5 * (s[0] + s[1]), 0.5 * (s[1] + s[2])
    if s1 <= s2:
        return None
    return (ic.breakpoints[1] - ic.breakpoints[0]) / (s1 - s2)


def sample(sol: PiecewiseSolution, grid: Grid1D) -> SampledField:
    return SampledField(grid, sol(grid.x))


def _riemann_flux(ul: np.ndarray, ur: np.ndarray) -> np.ndarray:
    fl, fr = 0.5 * ul * ul, 0.5 * ur * ur
    s = 0.5 * (ul + ur)
    shock = np.where(s > 0, fl, fr)
    fan = np.where(ul >= 0, fl, np.where(ur <= 0, fr, 0.0))
    return np.where(ul > ur, shock, fan)


def godunov_solve(ic: PiecewiseConstantIC, t: float, grid: Grid1D,
                  cfl: float = 0.9) -> SampledField:
    """First-order Godunov scheme with exact Riemann fluxes and outflow boundaries.

    Grid nodes are cell centres; cells have width ``grid.h``.
    """
    if not 0 < cfl < 1:
        raise ValueError("cfl must lie in (0, 1)")
    if t < 0:
        raise ValueError("t must be nonnegative")
    h = grid.h
    x = grid.x
    u = (ic.antiderivative(x + 0.5 * h) - ic.antiderivative(x - 0.5 * h)) / h
    now = 0.0
    while now < t:
        speed = max(np.max(np.abs(u)), 1e-12)
        dt = min(cfl * h / speed, t - now)
        ext = np.concatenate([[u[0]], u, [u[-1]]])
        flux = _riemann_flux(ext[:-1], ext[1:])
        u = u - dt / h * np.diff(flux)
        now += dt
    return SampledField(grid, u)
