"""Metropolis sampler of the plaquette-interacting dimer measure.

The target measure on perfect matchings of the torus is

    p(M) proportional to (prod_b t_{r(b)}) * exp(lambda * F(M)),

where F(M) = sum_x f(tau_x M) counts aligned parallel dimer pairs; grouping
the pairs by faces, F(M) is exactly the number of flippable faces (faces
whose boundary carries two parallel dimers).  Per black site x the four
pair terms are the horizontal and vertical pairs of the even face at x and
of the odd face at x + (1,0); the type-1 edge at x is shared by the two
horizontal terms, giving seven distinct edges and per-site values in
{0, 1, 2}.

The move set is the standard face flip (rotate two parallel dimers by 90
degrees), which is irreducible within a winding sector and conserves the
winding numbers; chains therefore sample the measure conditioned on the
sector of the initial configuration.  The initial state is the aligned
brick wall (type 1 / type 3 on alternating physical rows): zero winding and
maximally flippable.

Randomness is a counter-based splitmix64 stream: draw i of stream ``key``
is mix64(key + i * GOLDEN).  Two draws are consumed per proposal whether or
not the face is flippable, so trajectories are reproducible from
(seed, chain index) alone.  The hot loop is JIT-compiled when numba is
available, with a bit-identical pure-Python fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import log, sqrt
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientSamples, NotFlippable, SizeLimitExceeded
from .free_dimer import Weights
from .lattice import (
    DimerConfig,
    Face,
    TorusGeometry,
    enumerate_matchings,
    winding_numbers,
)

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba present in normal installs
    _HAVE_NUMBA = False

__all__ = [
    "MCParams",
    "ChainState",
    "Estimate",
    "RngStream",
    "stream_key",
    "plaquette_f",
    "total_plaquette_count",
    "flippable_faces",
    "is_flippable",
    "flip",
    "log_flip_ratio",
    "initial_config",
    "init_state",
    "metropolis_sweep",
    "run_sweeps",
    "chain_energy",
    "recompute_caches",
    "exact_gibbs",
    "exact_gibbs_distribution",
    "series_estimate",
    "integrated_autocorrelation",
    "run_measurements",
    "measure_densities",
    "measure_pair",
    "height_step_rows",
    "measure_height_sq",
    "estimate_dimer_correlation",
    "estimate_height_variance",
    "estimate_height_variances",
    "fit_log_prefactor",
    "FitResult",
]

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = 0xFFFFFFFFFFFFFFFF


def _mix64_py(z: int) -> int:
    """splitmix64 finalizer on 64-bit ints (Python-int arithmetic)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def stream_key(seed: int, chain: int = 0) -> int:
    """Stream key for one chain: mix64(seed + (chain+1) * GOLDEN)."""
    return _mix64_py((seed + (chain + 1) * _GOLDEN) & _MASK)


@dataclass
class RngStream:
    """Counter-based stream: draw(i) = mix64(key + i * GOLDEN)."""

    key: int
    counter: int = 0

    def uniform(self) -> float:
        z = _mix64_py((self.key + self.counter * _GOLDEN) & _MASK)
        self.counter += 1
        return (z >> 11) * 2.0**-53


@dataclass(frozen=True)
class MCParams:
    """Run parameters; ``sweeps`` is the total sweep budget including the
    ``burn_in`` sweeps discarded before measurements start."""

    L: int
    weights: Weights
    lam: float
    sweeps: int
    burn_in: int = 0
    seed: int = 1
    measurement_stride: int = 1

    def __post_init__(self) -> None:
        if self.L < 2 or self.L % 2 != 0:
            raise ValueError("L must be an even integer >= 2")
        if not (self.sweeps > self.burn_in >= 0):
            raise ValueError("need sweeps > burn_in >= 0")
        if self.measurement_stride < 1:
            raise ValueError("measurement_stride must be >= 1")


@dataclass
class ChainState:
    """Configuration plus exactly-maintained caches.

    ``flip_count`` is the integer F(M); the interaction energy is
    lambda * flip_count (see ``chain_energy``), kept as an integer so the
    cache cannot drift.  ``log_weight`` accumulates sum_b log t_{r(b)}.
    """

    cfg: np.ndarray
    flip_count: int
    log_weight: float
    winding: tuple[int, int]

    def config(self) -> DimerConfig:
        return DimerConfig(self.cfg.shape[0], bytes(self.cfg.reshape(-1).tolist()))


def chain_energy(state: ChainState, params: MCParams) -> float:
    """Cached interaction energy lambda * F(M)."""
    return params.lam * state.flip_count


# ---------------------------------------------------------------------------
# plaquette interaction and face flips
# ---------------------------------------------------------------------------

def _pair_states(cfg: np.ndarray, face: Face) -> tuple[bool, bool]:
    """(horizontal pair occupied, vertical pair occupied) for one face."""
    L = cfg.shape[0]
    fl, (x1, x2) = face
    x1 %= L
    x2 %= L
    if fl == 0:
        y1, y2 = x1, (x2 + 1) % L
    else:
        y1, y2 = (x1 - 1) % L, x2
    a = cfg[x1, x2]
    b = cfg[y1, y2]
    if fl == 0:
        return (a == 1 and b == 3, a == 2 and b == 4)
    return (a == 3 and b == 1, a == 2 and b == 4)


def plaquette_f(cfg, x: tuple[int, int]) -> int:
    """Aligned-pair count attributed to black site x (values in {0,1,2}).

    The four terms are the H and V pairs of the even face at x and of the
    odd face at x + (1, 0); summing over x counts every face's pair exactly
    once, so sum_x plaquette_f = number of flippable faces.
    """
    arr = cfg.to_array() if isinstance(cfg, DimerConfig) else np.asarray(cfg)
    h0, v0 = _pair_states(arr, Face(0, x))
    h1, v1 = _pair_states(arr, Face(1, (x[0] + 1, x[1])))
    return int(h0) + int(v0) + int(h1) + int(v1)


def total_plaquette_count(cfg) -> int:
    """F(M) = number of faces carrying a parallel dimer pair (vectorized)."""
    arr = cfg.to_array() if isinstance(cfg, DimerConfig) else np.asarray(cfg)
    up = np.roll(arr, -1, axis=1)       # partner of even face x is x+(0,1)
    left = np.roll(arr, 1, axis=0)      # partner of odd face x is x-(1,0)
    even = ((arr == 1) & (up == 3)) | ((arr == 2) & (up == 4))
    odd = ((arr == 3) & (left == 1)) | ((arr == 2) & (left == 4))
    return int(np.count_nonzero(even) + np.count_nonzero(odd))


def is_flippable(cfg, face: Face) -> bool:
    arr = cfg.to_array() if isinstance(cfg, DimerConfig) else np.asarray(cfg)
    h, v = _pair_states(arr, face)
    return h or v


def flippable_faces(cfg) -> list[Face]:
    arr = cfg.to_array() if isinstance(cfg, DimerConfig) else np.asarray(cfg)
    L = arr.shape[0]
    out = []
    for fl in (0, 1):
        for x1 in range(L):
            for x2 in range(L):
                if is_flippable(arr, Face(fl, (x1, x2))):
                    out.append(Face(fl, (x1, x2)))
    return out


def _flip_array(arr: np.ndarray, face: Face) -> int:
    """Rotate the parallel pair on ``face`` in place; returns +1 for H->V,
    -1 for V->H.  Raises NotFlippable otherwise."""
    L = arr.shape[0]
    fl, (x1, x2) = face
    x1 %= L
    x2 %= L
    if fl == 0:
        y1, y2 = x1, (x2 + 1) % L
    else:
        y1, y2 = (x1 - 1) % L, x2
    a, b = arr[x1, x2], arr[y1, y2]
    if fl == 0 and a == 1 and b == 3 or fl == 1 and a == 3 and b == 1:
        arr[x1, x2] = 2
        arr[y1, y2] = 4
        return +1
    if a == 2 and b == 4:
        arr[x1, x2] = 1 if fl == 0 else 3
        arr[y1, y2] = 3 if fl == 0 else 1
        return -1
    raise NotFlippable(f"face {face} carries no parallel dimer pair")


def flip(cfg, face: Face):
    """Pure face flip; returns the same type it was given."""
    if isinstance(cfg, DimerConfig):
        arr = cfg.to_array()
        _flip_array(arr, face)
        return DimerConfig(cfg.L, bytes(arr.reshape(-1).tolist()))
    arr = np.array(cfg, copy=True)
    _flip_array(arr, face)
    return arr


def _neighbor_faces(face: Face) -> tuple[Face, Face, Face, Face]:
    """The four faces sharing an edge with ``face`` (E, N, W, S)."""
    fl, (x1, x2) = face
    if fl == 0:
        return (Face(1, (x1 + 1, x2 + 1)), Face(1, (x1, x2 + 1)),
                Face(1, (x1, x2)), Face(1, (x1 + 1, x2)))
    return (Face(0, (x1, x2)), Face(0, (x1 - 1, x2)),
            Face(0, (x1 - 1, x2 - 1)), Face(0, (x1, x2 - 1)))


def _log_t_ratio(w: Weights) -> float:
    """log of the H->V activity ratio t2 t4 / (t1 t3), exactly negatable."""
    return log(w.t2) - log(w.t1) - log(w.t3)


def log_flip_ratio(cfg, face: Face, params: MCParams) -> float:
    """log acceptance ratio of flipping ``face``: weight part plus
    lambda times the change of the flippable-face count."""
    arr = cfg.to_array() if isinstance(cfg, DimerConfig) else np.array(cfg, copy=True)
    nbrs = _neighbor_faces(face)
    before = sum(is_flippable(arr, f) for f in nbrs)
    direction = _flip_array(arr, face)
    after = sum(is_flippable(arr, f) for f in nbrs)
    return direction * _log_t_ratio(params.weights) + params.lam * (after - before)


def initial_config(L: int) -> np.ndarray:
    """Aligned brick wall: type 1 / type 3 on alternating physical rows.

    Zero winding with half of all faces flippable; the natural seed for
    sampling the dominant sector.
    """
    idx = np.add.outer(np.arange(L), np.arange(L))
    return np.where(idx % 2 == 0, 1, 3).astype(np.int8)


def recompute_caches(cfg: np.ndarray, w: Weights) -> tuple[int, float]:
    """(flip count, log weight) from scratch."""
    logs = {1: log(w.t1), 2: log(w.t2), 3: log(w.t3), 4: 0.0}
    lw = float(sum(logs[int(r)] for r in cfg.reshape(-1)))
    return total_plaquette_count(cfg), lw


def init_state(params: MCParams) -> ChainState:
    cfg = initial_config(params.L)
    fc, lw = recompute_caches(cfg, params.weights)
    geom = TorusGeometry(params.L)
    wind = winding_numbers(geom, DimerConfig(params.L, bytes(cfg.reshape(-1).tolist())))
    return ChainState(cfg, fc, lw, wind)


# ---------------------------------------------------------------------------
# the kernel (numba-compiled when available, with a pure-Python twin)
# ---------------------------------------------------------------------------

def _accept_table(lr_hv: float, lam: float) -> np.ndarray:
    """Acceptance thresholds exp(direction * lr_hv + lam * dstat), capped
    at 1; index = (0 if H->V else 9) + dstat + 4 for dstat in -4..4."""
    tab = np.empty(18)
    for j, direction in enumerate((1, -1)):
        for dstat in range(-4, 5):
            tab[9 * j + dstat + 4] = min(1.0, np.exp(direction * lr_hv + lam * dstat))
    return tab


def _kernel_source(jit: bool):
    """Build the sweep kernel; both variants perform identical arithmetic.

    Per proposal: two counter-based draws (face, acceptance), an early exit
    for non-flippable faces, the flippability change of the four adjacent
    faces, and a table lookup for the acceptance threshold.
    """

    if jit:
        u64 = np.uint64

        @njit(cache=True, nogil=True)
        def mix64(z):
            z = u64(z)
            z = (z ^ (z >> u64(30))) * u64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> u64(27))) * u64(0x94D049BB133111EB)
            return z ^ (z >> u64(31))

        @njit(cache=True, nogil=True)
        def run(rt, L, accept, n_sweeps, key, counter):
            golden = u64(0x9E3779B97F4A7C15)
            key = u64(key)
            counter = u64(counter)
            n_faces = 2 * L * L
            dflip = 0
            naccept_h = 0  # H->V acceptances minus V->H acceptances
            for _ in range(n_sweeps):
                for _ in range(L * L):
                    z1 = mix64(key + counter * golden)
                    counter += u64(1)
                    z2 = mix64(key + counter * golden)
                    counter += u64(1)
                    u1 = (z1 >> u64(11)) * 2.0**-53
                    face_id = int(u1 * n_faces)
                    fl = face_id & 1
                    idx = face_id >> 1
                    x1 = idx // L
                    x2 = idx - x1 * L
                    x1p = x1 + 1
                    if x1p == L:
                        x1p = 0
                    x1m = x1 - 1
                    if x1m < 0:
                        x1m = L - 1
                    x2p = x2 + 1
                    if x2p == L:
                        x2p = 0
                    x2m = x2 - 1
                    if x2m < 0:
                        x2m = L - 1
                    a = rt[x1, x2]
                    if fl == 0:
                        b = rt[x1, x2p]
                        if a == 1 and b == 3:
                            direction = 1
                        elif a == 2 and b == 4:
                            direction = -1
                        else:
                            continue
                        before = 0
                        # odd neighbors: (x1p,x2p),(x1,x2p),(x1,x2),(x1p,x2)
                        if (rt[x1p, x2p] == 3 and rt[x1, x2p] == 1) or \
                           (rt[x1p, x2p] == 2 and rt[x1, x2p] == 4):
                            before += 1
                        if (rt[x1, x2p] == 3 and rt[x1m, x2p] == 1) or \
                           (rt[x1, x2p] == 2 and rt[x1m, x2p] == 4):
                            before += 1
                        if (rt[x1, x2] == 3 and rt[x1m, x2] == 1) or \
                           (rt[x1, x2] == 2 and rt[x1m, x2] == 4):
                            before += 1
                        if (rt[x1p, x2] == 3 and rt[x1, x2] == 1) or \
                           (rt[x1p, x2] == 2 and rt[x1, x2] == 4):
                            before += 1
                        if direction == 1:
                            rt[x1, x2] = 2
                            rt[x1, x2p] = 4
                        else:
                            rt[x1, x2] = 1
                            rt[x1, x2p] = 3
                        after = 0
                        if (rt[x1p, x2p] == 3 and rt[x1, x2p] == 1) or \
                           (rt[x1p, x2p] == 2 and rt[x1, x2p] == 4):
                            after += 1
                        if (rt[x1, x2p] == 3 and rt[x1m, x2p] == 1) or \
                           (rt[x1, x2p] == 2 and rt[x1m, x2p] == 4):
                            after += 1
                        if (rt[x1, x2] == 3 and rt[x1m, x2] == 1) or \
                           (rt[x1, x2] == 2 and rt[x1m, x2] == 4):
                            after += 1
                        if (rt[x1p, x2] == 3 and rt[x1, x2] == 1) or \
                           (rt[x1p, x2] == 2 and rt[x1, x2] == 4):
                            after += 1
                    else:
                        b = rt[x1m, x2]
                        if a == 3 and b == 1:
                            direction = 1
                        elif a == 2 and b == 4:
                            direction = -1
                        else:
                            continue
                        before = 0
                        # even neighbors: (x1,x2),(x1m,x2),(x1m,x2m),(x1,x2m)
                        if (rt[x1, x2] == 1 and rt[x1, x2p] == 3) or \
                           (rt[x1, x2] == 2 and rt[x1, x2p] == 4):
                            before += 1
                        if (rt[x1m, x2] == 1 and rt[x1m, x2p] == 3) or \
                           (rt[x1m, x2] == 2 and rt[x1m, x2p] == 4):
                            before += 1
                        if (rt[x1m, x2m] == 1 and rt[x1m, x2] == 3) or \
                           (rt[x1m, x2m] == 2 and rt[x1m, x2] == 4):
                            before += 1
                        if (rt[x1, x2m] == 1 and rt[x1, x2] == 3) or \
                           (rt[x1, x2m] == 2 and rt[x1, x2] == 4):
                            before += 1
                        if direction == 1:
                            rt[x1, x2] = 2
                            rt[x1m, x2] = 4
                        else:
                            rt[x1, x2] = 3
                            rt[x1m, x2] = 1
                        after = 0
                        if (rt[x1, x2] == 1 and rt[x1, x2p] == 3) or \
                           (rt[x1, x2] == 2 and rt[x1, x2p] == 4):
                            after += 1
                        if (rt[x1m, x2] == 1 and rt[x1m, x2p] == 3) or \
                           (rt[x1m, x2] == 2 and rt[x1m, x2p] == 4):
                            after += 1
                        if (rt[x1m, x2m] == 1 and rt[x1m, x2] == 3) or \
                           (rt[x1m, x2m] == 2 and rt[x1m, x2] == 4):
                            after += 1
                        if (rt[x1, x2m] == 1 and rt[x1, x2] == 3) or \
                           (rt[x1, x2m] == 2 and rt[x1, x2] == 4):
                            after += 1
                    dstat = after - before
                    u2 = (z2 >> u64(11)) * 2.0**-53
                    acc_idx = dstat + 4 if direction == 1 else dstat + 13
                    if u2 < accept[acc_idx]:
                        dflip += dstat
                        naccept_h += direction
                    else:
                        if fl == 0:
                            if direction == 1:
                                rt[x1, x2] = 1
                                rt[x1, x2p] = 3
                            else:
                                rt[x1, x2] = 2
                                rt[x1, x2p] = 4
                        else:
                            if direction == 1:
                                rt[x1, x2] = 3
                                rt[x1m, x2] = 1
                            else:
                                rt[x1, x2] = 2
                                rt[x1m, x2] = 4
            return counter, dflip, naccept_h

        return run

    def stat_even(rt, L, x1, x2):
        a = rt[x1, x2]
        b = rt[x1, (x2 + 1) % L]
        return 1 if ((a == 1 and b == 3) or (a == 2 and b == 4)) else 0

    def stat_odd(rt, L, x1, x2):
        a = rt[x1, x2]
        b = rt[(x1 - 1) % L, x2]
        return 1 if ((a == 3 and b == 1) or (a == 2 and b == 4)) else 0

    def run(rt, L, accept, n_sweeps, key, counter):
        key = int(key)
        counter = int(counter)
        n_faces = 2 * L * L
        dflip = 0
        naccept_h = 0
        for _ in range(n_sweeps):
            for _ in range(L * L):
                z1 = _mix64_py(key + counter * _GOLDEN)
                counter += 1
                z2 = _mix64_py(key + counter * _GOLDEN)
                counter += 1
                u1 = (z1 >> 11) * 2.0**-53
                face_id = int(u1 * n_faces)
                fl = face_id & 1
                idx = face_id >> 1
                x1 = idx // L
                x2 = idx % L
                if fl == 0:
                    y1, y2 = x1, (x2 + 1) % L
                else:
                    y1, y2 = (x1 - 1) % L, x2
                a = rt[x1, x2]
                b = rt[y1, y2]
                if fl == 0:
                    if a == 1 and b == 3:
                        direction = 1
                    elif a == 2 and b == 4:
                        direction = -1
                    else:
                        continue
                    nbrs = (((x1 + 1) % L, (x2 + 1) % L), (x1, (x2 + 1) % L),
                            (x1, x2), ((x1 + 1) % L, x2))
                    stat = stat_odd
                else:
                    if a == 3 and b == 1:
                        direction = 1
                    elif a == 2 and b == 4:
                        direction = -1
                    else:
                        continue
                    nbrs = ((x1, x2), ((x1 - 1) % L, x2),
                            ((x1 - 1) % L, (x2 - 1) % L), (x1, (x2 - 1) % L))
                    stat = stat_even
                before = sum(stat(rt, L, *nb) for nb in nbrs)
                if direction == 1:
                    rt[x1, x2] = 2
                    rt[y1, y2] = 4
                else:
                    rt[x1, x2] = 1 if fl == 0 else 3
                    rt[y1, y2] = 3 if fl == 0 else 1
                after = sum(stat(rt, L, *nb) for nb in nbrs)
                dstat = after - before
                u2 = (z2 >> 11) * 2.0**-53
                acc_idx = dstat + 4 if direction == 1 else dstat + 13
                if u2 < accept[acc_idx]:
                    dflip += dstat
                    naccept_h += direction
                else:
                    if direction == 1:
                        rt[x1, x2] = 1 if fl == 0 else 3
                        rt[y1, y2] = 3 if fl == 0 else 1
                    else:
                        rt[x1, x2] = 2
                        rt[y1, y2] = 4
        return counter, dflip, naccept_h

    return run


_kernel_jit = _kernel_source(True) if _HAVE_NUMBA else None
_kernel_py = _kernel_source(False)


def run_sweeps(state: ChainState, params: MCParams, stream: RngStream,
               n_sweeps: int, use_numba: bool = True) -> ChainState:
    """Advance a chain by ``n_sweeps`` sweeps (L^2 proposals each), in place
    on the configuration array; returns the updated state (same array)."""
    kern = _kernel_jit if (use_numba and _kernel_jit is not None) else _kernel_py
    lr_hv = _log_t_ratio(params.weights)
    counter, dflip, naccept_h = kern(
        state.cfg, params.L, _accept_table(lr_hv, params.lam),
        n_sweeps, np.uint64(stream.key), np.uint64(stream.counter))
    stream.counter = int(counter)
    return replace(state, flip_count=state.flip_count + int(dflip),
                   log_weight=state.log_weight + int(naccept_h) * lr_hv)


def metropolis_sweep(state: ChainState, params: MCParams,
                     stream: RngStream) -> ChainState:
    """One sweep of L^2 uniformly proposed face flips with Metropolis
    acceptance min(1, activity ratio * exp(lambda * dF))."""
    new = ChainState(np.array(state.cfg, copy=True), state.flip_count,
                     state.log_weight, state.winding)
    return run_sweeps(new, params, stream, 1)


# ---------------------------------------------------------------------------
# exact Gibbs oracle on tiny tori
# ---------------------------------------------------------------------------

EXACT_MAX_L = 4


def exact_gibbs_distribution(L: int, w: Weights, lam: float,
                             sector: tuple[int, int] | None = None
                             ) -> tuple[list[DimerConfig], np.ndarray]:
    """All matchings (optionally one winding sector) with Gibbs weights."""
    if L > EXACT_MAX_L:
        raise SizeLimitExceeded(f"exact Gibbs supports L <= {EXACT_MAX_L}")
    geom = TorusGeometry(L)
    configs = enumerate_matchings(geom)
    if sector is not None:
        configs = [c for c in configs if winding_numbers(geom, c) == sector]
    logs = {1: log(w.t1), 2: log(w.t2), 3: log(w.t3), 4: 0.0}
    lw = np.array([
        sum(logs[r] for r in cfg.types) + lam * total_plaquette_count(cfg)
        for cfg in configs
    ])
    lw -= lw.max()
    p = np.exp(lw)
    p /= p.sum()
    return configs, p


def exact_gibbs(L: int, w: Weights, lam: float,
                observable: Callable[[DimerConfig], float],
                sector: tuple[int, int] | None = None) -> float:
    """Exact expectation of an observable under the interacting measure."""
    configs, p = exact_gibbs_distribution(L, w, lam, sector)
    vals = np.array([observable(cfg) for cfg in configs])
    return float(np.dot(p, vals))


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate with batch-means error and autocorrelation."""

    mean: float
    stderr: float
    tau_int: float
    n_samples: int


def integrated_autocorrelation(series: np.ndarray, c: float = 6.0) -> float:
    """Integrated autocorrelation time with automatic windowing.

    tau(W) = 1/2 + sum_{t<=W} rho(t), stopping at the smallest W >= c*tau(W).
    Raises ``InsufficientSamples`` when no window satisfies the criterion
    within the first third of the series.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 8:
        raise InsufficientSamples("series too short for autocorrelation")
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return 0.5
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[:n].real
    acf /= acf[0]
    tau = 0.5
    for t in range(1, n // 3):
        tau += acf[t]
        if t >= c * tau:
            return max(tau, 0.5)
    raise InsufficientSamples(
        "autocorrelation window did not close within n/3 samples")


def series_estimate(series: np.ndarray, n_batches: int = 50) -> Estimate:
    """Batch-means estimate of the mean of a (correlated) scalar series."""
    x = np.asarray(series, dtype=float)
    if x.size < 2 * n_batches:
        raise InsufficientSamples(
            f"need at least {2 * n_batches} samples for {n_batches} batches")
    m = x.size // n_batches
    batches = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    mean = float(batches.mean())
    stderr = float(batches.std(ddof=1) / sqrt(n_batches))
    tau = integrated_autocorrelation(x)
    return Estimate(mean, stderr, tau, int(x.size))


def _combined_estimate(batch_values: np.ndarray, tau: float, n: int) -> Estimate:
    mean = float(batch_values.mean())
    stderr = float(batch_values.std(ddof=1) / sqrt(batch_values.size))
    return Estimate(mean, stderr, tau, n)


def run_measurements(params: MCParams,
                     measure: Callable[[np.ndarray], np.ndarray],
                     n_obs: int,
                     n_chains: int = 1,
                     use_numba: bool = True,
                     progress: Callable[[str], None] | None = None
                     ) -> list[np.ndarray]:
    """Run chains and collect an observable vector every stride sweeps.

    Returns one (n_measurements, n_obs) array per chain.  Chains use
    independent counter-based streams derived from (seed, chain index) and
    are burnt in separately; results are reproducible from ``params`` and
    independent of scheduling (the compiled kernel releases the GIL, so
    multiple chains run on separate threads).
    """
    stride = params.measurement_stride
    n_meas = (params.sweeps - params.burn_in) // stride

    def one_chain(chain: int) -> np.ndarray:
        state = init_state(params)
        stream = RngStream(stream_key(params.seed, chain))
        if params.burn_in:
            state = run_sweeps(state, params, stream, params.burn_in,
                               use_numba=use_numba)
        rows = np.empty((n_meas, n_obs), dtype=float)
        for i in range(n_meas):
            state = run_sweeps(state, params, stream, stride,
                               use_numba=use_numba)
            rows[i] = measure(state.cfg)
            if progress is not None and (i + 1) % max(1, n_meas // 20) == 0:
                progress(f"chain {chain}: {i + 1}/{n_meas} measurements")
        return rows

    if n_chains == 1 or not (use_numba and _HAVE_NUMBA):
        return [one_chain(c) for c in range(n_chains)]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=n_chains) as pool:
        return list(pool.map(one_chain, range(n_chains)))


def measure_densities(cfg: np.ndarray) -> np.ndarray:
    """Mean occupation of each edge type over black sites: (d1, d2, d3, d4)."""
    n = cfg.size
    return np.array([np.count_nonzero(cfg == r) / n for r in (1, 2, 3, 4)])


def measure_pair(cfg: np.ndarray, x: tuple[int, int], r: int, rp: int
                 ) -> np.ndarray:
    """Translation-averaged (1_{b(y+x,r)} 1_{b(y,rp)}, 1_r, 1_rp)."""
    occ_r = (cfg == r)
    occ_rp = (cfg == rp)
    shifted = np.roll(np.roll(occ_r, -x[0], axis=0), -x[1], axis=1)
    return np.array([
        float(np.mean(shifted & occ_rp)),
        float(np.mean(occ_r)),
        float(np.mean(occ_rp)),
    ])


def height_step_rows(cfg: np.ndarray) -> np.ndarray:
    """Height increments along all horizontal dual lines.

    Row c (c = x1 - x2 mod L) holds the 2L East-step values
    sigma_b (1_b - 1/4) of the dual line through the even face (c, 0).
    Summing consecutive entries gives height differences at any horizontal
    separation; the full-line sum is the (conserved) horizontal winding.
    """
    L = cfg.shape[0]
    c = np.arange(L)[:, None]
    m = np.arange(L)[None, :]
    # even step 2m: edge ((c+m, m+1), 4), sigma +1
    occ4 = cfg[(c + m) % L, (m + 1) % L] == 4
    # odd step 2m+1: edge ((c+m+1, m+1), 2), sigma -1
    occ2 = cfg[(c + m + 1) % L, (m + 1) % L] == 2
    steps = np.empty((L, 2 * L))
    steps[:, 0::2] = occ4 - 0.25
    steps[:, 1::2] = -(occ2 - 0.25)
    return steps


def measure_height_sq(cfg: np.ndarray, Rs: Sequence[int]) -> np.ndarray:
    """Translation-averaged squared height differences at separations Rs.

    Uses all 2 L^2 start positions per separation (cyclic differences of
    the row prefix sums).
    """
    steps = height_step_rows(cfg)
    L2 = steps.shape[1]
    pref = np.concatenate([np.zeros((steps.shape[0], 1)), np.cumsum(steps, axis=1)],
                          axis=1)
    row_tot = pref[:, -1:]
    out = np.empty(len(Rs))
    for i, R in enumerate(Rs):
        j = np.arange(L2)
        jr = j + R
        wrap = jr >= L2
        diff = pref[:, jr % L2 + 0] - pref[:, j] + wrap * row_tot
        out[i] = float(np.mean(diff * diff))
    return out


def estimate_dimer_correlation(params: MCParams, x: tuple[int, int],
                               r: int, rp: int, n_chains: int = 1,
                               use_numba: bool = True,
                               n_batches: int = 50) -> Estimate:
    """Truncated correlation E[1_{b(x,r)}; 1_{b(0,rp)}] with batch errors."""
    if abs(x[0]) > params.L // 4 or abs(x[1]) > params.L // 4:
        raise ValueError("separation beyond L/4; wrap-around would contaminate")
    chains = run_measurements(
        params, lambda cfg: measure_pair(cfg, x, r, rp), 3,
        n_chains=n_chains, use_numba=use_numba)
    batch_vals = []
    taus = []
    n_tot = 0
    for rows in chains:
        n = rows.shape[0]
        m = n // n_batches
        if m < 1:
            raise InsufficientSamples("too few measurements per batch")
        trimmed = rows[: m * n_batches].reshape(n_batches, m, 3).mean(axis=1)
        batch_vals.append(trimmed[:, 0] - trimmed[:, 1] * trimmed[:, 2])
        taus.append(integrated_autocorrelation(rows[:, 0]))
        n_tot += n
    return _combined_estimate(np.concatenate(batch_vals), float(np.mean(taus)), n_tot)


def estimate_height_variance(params: MCParams, R: int, n_chains: int = 1,
                             use_numba: bool = True,
                             n_batches: int = 50) -> Estimate:
    """Var[h(f) - h(f')] at horizontal separation R (single separation)."""
    return estimate_height_variances(params, [R], n_chains=n_chains,
                                     use_numba=use_numba,
                                     n_batches=n_batches)[R]


def estimate_height_variances(params: MCParams, Rs: Sequence[int],
                              n_chains: int = 1, use_numba: bool = True,
                              n_batches: int = 50,
                              progress: Callable[[str], None] | None = None
                              ) -> dict[int, Estimate]:
    """Height-difference variances at several separations from one run.

    In the zero-winding sector the translation-averaged height difference
    vanishes identically, so the variance is the time average of the
    translation-averaged square; errors by batch means over the time
    series, pooled across chains.
    """
    Rs = [int(R) for R in Rs]
    for R in Rs:
        if R > params.L // 4:
            raise ValueError("separation beyond L/4; wrap-around would contaminate")
    chains = run_measurements(
        params, lambda cfg: measure_height_sq(cfg, Rs), len(Rs),
        n_chains=n_chains, use_numba=use_numba, progress=progress)
    out: dict[int, Estimate] = {}
    for i, R in enumerate(Rs):
        batch_vals = []
        taus = []
        n_tot = 0
        for rows in chains:
            n = rows.shape[0]
            m = n // n_batches
            if m < 1:
                raise InsufficientSamples("too few measurements per batch")
            trimmed = rows[: m * n_batches, i].reshape(n_batches, m).mean(axis=1)
            batch_vals.append(trimmed)
            taus.append(integrated_autocorrelation(rows[:, i]))
            n_tot += n
        out[R] = _combined_estimate(np.concatenate(batch_vals),
                                    float(np.mean(taus)), n_tot)
    return out


@dataclass(frozen=True)
class FitResult:
    """Weighted least-squares fit of Var against log R."""

    A_hat: float
    err: float
    chi2: float
    slope: float
    intercept: float


def fit_log_prefactor(points: Sequence[tuple[int, Estimate]]) -> FitResult:
    """Fit Var(R) = slope * log R + intercept; A_hat = pi^2 * slope.

    Weighted least squares with the estimates' stderr; the returned ``err``
    is pi^2 times the slope's standard error, ``chi2`` the weighted sum of
    squared residuals (len(points) - 2 degrees of freedom).
    """
    if len(points) < 2:
        raise ValueError("need at least two separations to fit")
    x = np.array([log(R) for R, _ in points])
    y = np.array([est.mean for _, est in points])
    s = np.array([max(est.stderr, 1e-15) for _, est in points])
    wgt = 1.0 / s**2
    W = wgt.sum()
    xb = (wgt * x).sum() / W
    yb = (wgt * y).sum() / W
    sxx = (wgt * (x - xb) ** 2).sum()
    slope = float((wgt * (x - xb) * (y - yb)).sum() / sxx)
    intercept = float(yb - slope * xb)
    slope_err = float(sqrt(1.0 / sxx))
    resid = y - slope * x - intercept
    chi2 = float((wgt * resid**2).sum())
    pi2 = float(np.pi**2)
    return FitResult(pi2 * slope, pi2 * slope_err, chi2, slope, intercept)
