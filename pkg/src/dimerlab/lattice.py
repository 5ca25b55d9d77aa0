"""Torus geometry, perfect matchings, faces, and the height function.

Coordinate convention
---------------------
Black and white sites each carry an index in (Z/LZ)^2.  The white endpoint
of the type-r edge at black site x is x + v_r with

    v_1 = (0, 0),  v_2 = (-1, 0),  v_3 = (-1, -1),  v_4 = (0, -1),

so that in the physical square-lattice embedding (black x at
(x1 + x2, x2 - x1), white w at (w1 + w2 + 1, w2 - w1)) the four edge types
at a black site point East (r=1, white on the right), North (r=2, white on
top), West (r=3, white on the left) and South (r=4, white on the bottom).
A torus of side L therefore has L^2 black sites, L^2 white sites and 2 L^2
faces.

Faces come in two flavors.  An *even* face, written (0, x), has black
corners at x (SW) and x+(0,1) (NE); its boundary edges are (x,1) bottom,
(x,2) left, (x+(0,1),3) top, (x+(0,1),4) right.  An *odd* face (1, x) has
black corners at x (SE) and x-(1,0) (NW); its boundary edges are (x,3)
bottom, (x,2) right, (x-(1,0),1) top, (x-(1,0),4) left.

Heights live on faces.  Crossing a bond b while walking the dual lattice
contributes sigma_b * (1_b - 1/4) to the height difference, with
sigma_b = +1 exactly when the white endpoint of b lies to the right of the
walking direction.  All height arithmetic is exact (``fractions.Fraction``
in quarters); path independence for contractible paths is equivalent to
the close-packing constraint.  Paths that wind around the torus are
allowed, but their height difference depends on the homotopy class, which
callers must manage themselves (see ``winding_numbers``).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import SizeLimitExceeded

__all__ = [
    "EDGE_OFFSETS",
    "make_edge_offsets",
    "TorusGeometry",
    "EdgeRef",
    "DimerConfig",
    "Face",
    "FacePath",
    "face_step",
    "face_edges",
    "face_center",
    "path_from_directions",
    "canonical_path",
    "height_difference",
    "height_profile",
    "winding_numbers",
    "is_perfect_matching",
    "enumerate_matchings",
    "matchings_to_text",
]

EDGE_OFFSETS: dict[int, tuple[int, int]] = {
    1: (0, 0),
    2: (-1, 0),
    3: (-1, -1),
    4: (0, -1),
}

ENUMERATION_MAX_L = 6


def make_edge_offsets() -> dict[int, tuple[int, int]]:
    """Map edge type r -> white-endpoint offset v_r."""
    return dict(EDGE_OFFSETS)


class EdgeRef(NamedTuple):
    """An edge named by its black endpoint and its type."""

    black: tuple[int, int]
    rtype: int


class Face(NamedTuple):
    """A face named by flavor (0 even, 1 odd) and its black anchor."""

    flavor: int
    x: tuple[int, int]


@dataclass(frozen=True)
class TorusGeometry:
    """Discrete torus of side L (L even); sites indexed by (Z/LZ)^2."""

    L: int

    def __post_init__(self) -> None:
        if self.L < 2 or self.L % 2 != 0:
            raise ValueError("torus side L must be an even integer >= 2")

    @property
    def n_black(self) -> int:
        return self.L * self.L

    def wrap(self, x: tuple[int, int]) -> tuple[int, int]:
        return (x[0] % self.L, x[1] % self.L)

    def black_sites(self) -> Iterator[tuple[int, int]]:
        """Black sites in scan order (lexicographic)."""
        for x1 in range(self.L):
            for x2 in range(self.L):
                yield (x1, x2)

    def white_endpoint(self, x: tuple[int, int], r: int) -> tuple[int, int]:
        v = EDGE_OFFSETS[r]
        return self.wrap((x[0] + v[0], x[1] + v[1]))

    def scan_index(self, x: tuple[int, int]) -> int:
        return x[0] * self.L + x[1]


@dataclass(frozen=True)
class DimerConfig:
    """A perfect matching: each black site names the edge type covering it."""

    L: int
    types: bytes  # rtype per black site, scan order

    @classmethod
    def from_assignment(cls, geom: TorusGeometry, assignment) -> "DimerConfig":
        """Build from a dict black->r or an (L, L) integer array."""
        arr = _assignment_array(geom, assignment)
        return cls(geom.L, bytes(arr.reshape(-1).tolist()))

    def rtype(self, x: tuple[int, int]) -> int:
        return self.types[(x[0] % self.L) * self.L + (x[1] % self.L)]

    def occupied(self, edge: EdgeRef) -> bool:
        return self.rtype(edge.black) == edge.rtype

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.types, dtype=np.uint8).reshape(self.L, self.L).astype(np.int8)

    def edges(self) -> Iterator[EdgeRef]:
        for x1 in range(self.L):
            for x2 in range(self.L):
                yield EdgeRef((x1, x2), self.types[x1 * self.L + x2])


def _assignment_array(geom: TorusGeometry, assignment) -> np.ndarray:
    L = geom.L
    if isinstance(assignment, DimerConfig):
        return assignment.to_array()
    if isinstance(assignment, dict):
        arr = np.zeros((L, L), dtype=np.int8)
        for x, r in assignment.items():
            arr[x[0] % L, x[1] % L] = r
        return arr
    arr = np.asarray(assignment, dtype=np.int8)
    if arr.shape != (L, L):
        raise ValueError(f"assignment must have shape ({L}, {L})")
    return arr


def is_perfect_matching(geom: TorusGeometry, assignment) -> bool:
    """True iff every white site is covered exactly once.

    Every black site is covered once by construction (it names one edge);
    the nontrivial constraint is injectivity on the white side.
    """
    arr = _assignment_array(geom, assignment)
    if not np.all((arr >= 1) & (arr <= 4)):
        return False
    covered = np.zeros((geom.L, geom.L), dtype=np.int64)
    for x1 in range(geom.L):
        for x2 in range(geom.L):
            w = geom.white_endpoint((x1, x2), int(arr[x1, x2]))
            covered[w] += 1
    return bool(np.all(covered == 1))


def enumerate_matchings(geom: TorusGeometry) -> list[DimerConfig]:
    """All perfect matchings, by backtracking over black sites in scan order.

    Guarded to L <= 6; the count grows exponentially with the area.
    """
    if geom.L > ENUMERATION_MAX_L:
        raise SizeLimitExceeded(
            f"enumeration supports L <= {ENUMERATION_MAX_L}, got L={geom.L}"
        )
    L = geom.L
    sites = [(x1, x2) for x1 in range(L) for x2 in range(L)]
    used = np.zeros((L, L), dtype=bool)
    chosen = np.zeros((L, L), dtype=np.int8)
    out: list[DimerConfig] = []

    def backtrack(i: int) -> None:
        if i == len(sites):
            out.append(DimerConfig(L, bytes(chosen.reshape(-1).tolist())))
            return
        x = sites[i]
        for r in (1, 2, 3, 4):
            w = geom.white_endpoint(x, r)
            if not used[w]:
                used[w] = True
                chosen[x] = r
                backtrack(i + 1)
                used[w] = False
        chosen[x] = 0

    backtrack(0)
    return out


def matchings_to_text(geom: TorusGeometry, configs: Sequence[DimerConfig]) -> str:
    """One matching per line as space-separated ``x1,x2:r`` in scan order."""
    lines = []
    for cfg in configs:
        parts = [f"{x1},{x2}:{cfg.types[x1 * geom.L + x2]}"
                 for x1 in range(geom.L) for x2 in range(geom.L)]
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# faces, dual-lattice steps, heights
# ---------------------------------------------------------------------------

_DIRECTIONS = ("E", "N", "W", "S")


def face_step(face: Face, direction: str) -> tuple[EdgeRef, int, Face]:
    """Crossed edge, its sigma, and the neighboring face, for one dual step.

    Coordinates are unwrapped; wrap the edge's black site (and the face)
    against a geometry when doing torus lookups.
    """
    fl, (x1, x2) = face
    if fl == 0:
        if direction == "E":
            return EdgeRef((x1, x2 + 1), 4), +1, Face(1, (x1 + 1, x2 + 1))
        if direction == "N":
            return EdgeRef((x1, x2 + 1), 3), -1, Face(1, (x1, x2 + 1))
        if direction == "W":
            return EdgeRef((x1, x2), 2), +1, Face(1, (x1, x2))
        if direction == "S":
            return EdgeRef((x1, x2), 1), -1, Face(1, (x1 + 1, x2))
    else:
        if direction == "E":
            return EdgeRef((x1, x2), 2), -1, Face(0, (x1, x2))
        if direction == "N":
            return EdgeRef((x1 - 1, x2), 1), +1, Face(0, (x1 - 1, x2))
        if direction == "W":
            return EdgeRef((x1 - 1, x2), 4), -1, Face(0, (x1 - 1, x2 - 1))
        if direction == "S":
            return EdgeRef((x1, x2), 3), +1, Face(0, (x1, x2 - 1))
    raise ValueError(f"direction must be one of {_DIRECTIONS}")


def face_edges(face: Face) -> tuple[EdgeRef, EdgeRef, EdgeRef, EdgeRef]:
    """Boundary edges of a face: (bottom, right, top, left)."""
    fl, (x1, x2) = face
    if fl == 0:
        return (EdgeRef((x1, x2), 1), EdgeRef((x1, x2 + 1), 4),
                EdgeRef((x1, x2 + 1), 3), EdgeRef((x1, x2), 2))
    return (EdgeRef((x1, x2), 3), EdgeRef((x1, x2), 2),
            EdgeRef((x1 - 1, x2), 1), EdgeRef((x1 - 1, x2), 4))


def face_center(face: Face) -> tuple[float, float]:
    """Physical center of a face in the embedded square lattice."""
    fl, (x1, x2) = face
    if fl == 0:
        return (x1 + x2 + 0.5, x2 - x1 + 0.5)
    return (x1 + x2 - 0.5, x2 - x1 + 0.5)


@dataclass(frozen=True)
class FacePath:
    """An ordered dual-lattice walk: crossed edges with their signs."""

    start: Face
    steps: tuple[tuple[EdgeRef, int], ...]
    end: Face

    def reversed(self) -> "FacePath":
        return FacePath(self.end,
                        tuple((e, -s) for (e, s) in reversed(self.steps)),
                        self.start)

    def net_displacement(self) -> tuple[float, float]:
        """Physical displacement from start to end (unwrapped)."""
        c0 = face_center(self.start)
        c1 = face_center(self.end)
        return (c1[0] - c0[0], c1[1] - c0[1])


def path_from_directions(start: Face, directions: str) -> FacePath:
    """Walk a direction string like ``"EENNW"`` from a starting face."""
    steps = []
    here = start
    for d in directions:
        edge, sigma, here = face_step(here, d)
        steps.append((edge, sigma))
    return FacePath(start, tuple(steps), here)


def _wrap_face(geom: TorusGeometry, face: Face) -> Face:
    return Face(face.flavor, geom.wrap(face.x))


def canonical_path(geom: TorusGeometry | None, f: Face, fp: Face) -> FacePath:
    """Deterministic L-shaped path (horizontal leg, then vertical leg).

    On a torus the displacement is reduced to the representative of
    minimal |da| + |db| (ties broken lexicographically), so the path never
    winds.  With ``geom=None`` the faces are taken on the infinite lattice.
    """
    c0 = face_center(f)
    c1 = face_center(fp)
    da = c1[0] - c0[0]
    db = c1[1] - c0[1]
    if geom is not None:
        L = geom.L
        # physical periods of the torus are L*(1,-1) and L*(1,1)
        best = None
        for m in range(-2, 3):
            for n in range(-2, 3):
                cand = (da + (m + n) * L, db + (n - m) * L)
                key = (abs(cand[0]) + abs(cand[1]), cand)
                if best is None or key < best[0]:
                    best = (key, cand)
        da, db = best[1]
    da = round(da)
    db = round(db)
    dirs = ("E" * da if da > 0 else "W" * (-da)) + ("N" * db if db > 0 else "S" * (-db))
    path = path_from_directions(f, dirs)
    if geom is not None:
        if _wrap_face(geom, path.end) != _wrap_face(geom, fp):
            raise AssertionError("canonical path does not terminate at target face")
    elif path.end != fp:
        raise AssertionError("canonical path does not terminate at target face")
    return path


_QUARTER = Fraction(1, 4)


def height_difference(cfg: DimerConfig, path: FacePath,
                      geom: TorusGeometry | None = None) -> Fraction:
    """h(end) - h(start) = sum over crossed bonds of sigma_b (1_b - 1/4).

    Exact rational arithmetic.  Contractible paths give a path-independent
    answer; winding paths give a homotopy-class-dependent one.
    """
    total = Fraction(0)
    for edge, sigma in path.steps:
        occ = cfg.occupied(edge)  # DimerConfig.rtype wraps mod L itself
        total += sigma * ((1 if occ else 0) - _QUARTER)
    return total


def height_profile(geom: TorusGeometry, cfg: DimerConfig,
                   base: Face = Face(0, (0, 0))) -> dict[Face, Fraction]:
    """Heights of every face relative to h(base) = 0, by BFS.

    Well defined within the chosen winding sector because every BFS tree
    path is contractible after wrapping.
    """
    base = _wrap_face(geom, base)
    heights: dict[Face, Fraction] = {base: Fraction(0)}
    frontier = [base]
    while frontier:
        nxt = []
        for face in frontier:
            for d in _DIRECTIONS:
                edge, sigma, nb = face_step(face, d)
                nb = _wrap_face(geom, nb)
                if nb in heights:
                    continue
                step = sigma * ((1 if cfg.occupied(edge) else 0) - _QUARTER)
                heights[nb] = heights[face] + step
                nxt.append(nb)
        frontier = nxt
    return heights


def winding_numbers(geom: TorusGeometry, cfg: DimerConfig) -> tuple[int, int]:
    """Signed dimer counts along the two fundamental dual loops.

    Each loop has 2L steps; the -1/4 offsets cancel in pairs, so the result
    is the integer sum of sigma_b * 1_b.  Face flips conserve both numbers.
    """
    out = []
    for d in ("E", "N"):
        here = Face(0, (0, 0))
        total = 0
        for _ in range(2 * geom.L):
            edge, sigma, here = face_step(here, d)
            if cfg.occupied(edge):
                total += sigma
        if _wrap_face(geom, here) != Face(0, (0, 0)):
            raise AssertionError("dual loop failed to close")
        out.append(total)
    return (out[0], out[1])
