"""Periodic grid backend: lattice fields, finite differences, seeding.

The grid lives on a flat torus with ``shape[a]`` sites and spacing
``h`` along each axis (axis length ``L_a = shape[a] * h``).  Fields are
stored as ``(*shape, n, n)`` arrays.  Spatial derivatives are central
finite differences of order 2 or 4 with periodic wrap; second
derivatives compose the first-derivative stencil with itself, so mixed
partials are exactly symmetric.

Seeded initial data conjugates the standard complex structure by a
trigonometric matrix polynomial sitewise and averages a random
symmetric field into a compatible metric, so the pointwise constraints
hold to machine precision at every site.  The same coefficients
evaluate to an exact 2-jet at any point, which the finite-difference
convergence tests compare against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .jets import (
    AdmissibilityError,
    JetRng,
    StructureJet,
    TJet,
    _assemble_structure,
    standard_complex_structure,
)
from .tensors import Tensor, COV, CON

MAGIC = "ahflow-grid-v1"


@dataclass
class GridState:
    """Time-evolving lattice of compatible (g, J) fields."""

    shape: tuple[int, ...]
    h: float
    stencil_order: int
    g: np.ndarray
    J: np.ndarray
    t: float = 0.0

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def sites(self) -> int:
        return int(np.prod(self.shape))

    def copy(self) -> "GridState":
        return replace(self, g=self.g.copy(), J=self.J.copy())

    def pointwise_defects(self) -> dict[str, float]:
        jj = np.einsum("...ib,...ba->...ia", self.J, self.J)
        compat = self.g - np.einsum(
            "...ia,...jb,...ab->...ij", self.J, self.J, self.g
        )
        return {
            "j_squared": float(np.max(np.abs(jj + np.eye(self.n)))),
            "compat": float(np.max(np.abs(compat))),
        }


def _shift(f: np.ndarray, k: int, axis: int) -> np.ndarray:
    return np.roll(f, -k, axis=axis)


def stencil_d1(f: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    """Central first-derivative stencil with periodic wrap."""
    if order == 2:
        return (_shift(f, 1, axis) - _shift(f, -1, axis)) / (2.0 * h)
    if order == 4:
        return (
            -_shift(f, 2, axis)
            + 8.0 * _shift(f, 1, axis)
            - 8.0 * _shift(f, -1, axis)
            + _shift(f, -2, axis)
        ) / (12.0 * h)
    raise ValueError(f"stencil order must be 2 or 4, got {order}")


def field_derivatives(
    f: np.ndarray, n: int, h: float, order: int
) -> tuple[np.ndarray, np.ndarray]:
    """First and second lattice derivatives of a ``(*shape, ...)`` field.

    Returns ``d`` with the direction axis prepended and ``dd`` with two
    (``dd`` is symmetric because stencils commute).
    """
    d = np.stack([stencil_d1(f, a, h, order) for a in range(n)])
    dd = np.empty((n,) + d.shape)
    for a in range(n):
        for b in range(a, n):
            dd[a, b] = stencil_d1(d[b], a + 1, h, order)
            if b > a:
                dd[b, a] = dd[a, b]
    return d, dd


def grid_tjets(state: GridState) -> tuple[TJet, TJet]:
    """Batched 2-jets of the grid fields (finite-difference partials)."""
    n = state.n
    b = state.sites
    out = []
    for f in (state.g, state.J):
        d, dd = field_derivatives(f, n, state.h, state.stencil_order)
        val = f.reshape(b, n, n)
        dflat = np.moveaxis(d, 0, -3).reshape(b, n, n, n)
        ddflat = np.moveaxis(dd, (0, 1), (-4, -3)).reshape(b, n, n, n, n)
        out.append(TJet(val, dflat, ddflat))
    return out[0], out[1]


def grid_partial(
    state: GridState, field: str, direction: int, site: tuple[int, ...] | None = None
):
    """Finite-difference first partial of g, J or the Kaehler form.

    With ``site`` returns the single-point :class:`Tensor`, otherwise
    the whole lattice derivative field.
    """
    if not 0 <= direction < state.n:
        raise IndexError(f"direction {direction} out of range")
    if field == "g":
        f, variance = state.g, (COV, COV)
    elif field == "J":
        f, variance = state.J, (COV, CON)
    elif field == "omega":
        f = np.einsum("...ia,...ja->...ij", state.J, state.g)
        variance = (COV, COV)
    else:
        raise ValueError(f"unknown field {field!r}")
    df = stencil_d1(f, direction, state.h, state.stencil_order)
    if site is None:
        return df
    return Tensor(df[tuple(site)], variance)


def grid_exterior_d2(state: GridState, w: np.ndarray) -> np.ndarray:
    """Lattice exterior derivative of a rank-2 skew field."""
    d = np.stack(
        [stencil_d1(w, a, state.h, state.stencil_order) for a in range(state.n)]
    )
    d = np.moveaxis(d, 0, -3)  # (*shape, i, j, k) = d_i w_jk
    return (
        d
        - np.moveaxis(d, -2, -3)
        + np.moveaxis(d, -1, -3)
    )


@dataclass(frozen=True)
class TorusSeed:
    """Coefficients of the trigonometric seeding fields.

    ``modes`` are integer wavevectors on the unit torus; the matrix
    fields are ``Id + amplitude * sum_m (c_m cos th_m + s_m sin th_m)``
    with ``th_m(x) = 2 pi <modes_m, x/L>``, so the same seed evaluates
    consistently on any lattice resolution of the same torus.
    """

    n: int
    amplitude: float
    modes: np.ndarray  # (M, n) integers
    cb: np.ndarray  # (M, n, n) conjugation cosine coefficients
    sb: np.ndarray
    ch: np.ndarray  # (M, n, n) symmetric-field coefficients
    sh: np.ndarray

    @staticmethod
    def random(n: int, rng: JetRng, amplitude: float) -> "TorusSeed":
        if n % 2 != 0 or n < 2:
            raise ValueError(f"dimension must be even and positive, got {n}")
        if not 0.0 <= amplitude <= 0.3:
            raise ValueError(f"amplitude must lie in [0, 0.3], got {amplitude}")
        gen = rng.generator()
        modes = np.vstack([np.eye(n, dtype=int), np.ones((1, n), dtype=int)])
        m = len(modes)
        coef = lambda: gen.uniform(-1.0, 1.0, (m, n, n)) / m
        cb, sb = coef(), coef()
        ch, sh = coef(), coef()
        ch = 0.5 * (ch + ch.swapaxes(-1, -2))
        sh = 0.5 * (sh + sh.swapaxes(-1, -2))
        return TorusSeed(n, amplitude, modes, cb, sb, ch, sh)

    def _field_jets(self, frac: np.ndarray, lengths: np.ndarray) -> tuple[TJet, TJet]:
        """Exact jets of the conjugation and symmetric fields.

        ``frac`` holds torus fractions x/L, one row per point.
        """
        b = frac.shape[0]
        n = self.n
        theta = 2.0 * np.pi * frac @ self.modes.T  # (B, M)
        freq = 2.0 * np.pi * self.modes / lengths  # (M, n) d theta / dx
        cos, sin = np.cos(theta), np.sin(theta)

        def assemble(c, s):
            val = np.eye(n) + self.amplitude * (
                np.einsum("bm,mij->bij", cos, c)
                + np.einsum("bm,mij->bij", sin, s)
            )
            d = self.amplitude * (
                np.einsum("bm,ma,mij->baij", -sin, freq, c)
                + np.einsum("bm,ma,mij->baij", cos, freq, s)
            )
            dd = self.amplitude * (
                np.einsum("bm,ma,mk,mij->bakij", -cos, freq, freq, c)
                + np.einsum("bm,ma,mk,mij->bakij", -sin, freq, freq, s)
            )
            return TJet(val, d, dd)

        return assemble(self.cb, self.sb), assemble(self.ch, self.sh)

    def jet_at(self, frac: np.ndarray, lengths: np.ndarray) -> StructureJet:
        """Exact 2-jet of the seeded structure at one torus point."""
        bjet, hjet = self._field_jets(np.asarray(frac, dtype=float)[None], lengths)
        return _assemble_structure(self.n, bjet, hjet)

    def state(
        self, shape: tuple[int, ...], h: float, stencil_order: int = 4
    ) -> GridState:
        """Evaluate the seeded fields on a lattice."""
        n = self.n
        if len(shape) != n:
            raise ValueError(f"shape {shape} does not match dimension {n}")
        idx = np.stack(
            np.meshgrid(*(np.arange(s) for s in shape), indexing="ij"), axis=-1
        ).reshape(-1, n)
        frac = idx / np.asarray(shape, dtype=float)
        lengths = np.asarray(shape, dtype=float) * h
        bjet, hjet = self._field_jets(frac, lengths)
        jstd = standard_complex_structure(n)
        binv = np.linalg.inv(bjet.val)
        jfield = np.einsum("bix,xy,bya->bia", binv, jstd, bjet.val)
        havg = np.einsum("bia,bjb,bab->bij", jfield, jfield, hjet.val)
        gfield = 0.5 * (hjet.val + havg)
        eig = np.linalg.eigvalsh(gfield)
        if eig.min() <= 1e-8:
            raise AdmissibilityError(
                "seeded metric not positive definite on the lattice; "
                f"reduce amplitude (min eigenvalue {eig.min():.3e})"
            )
        return GridState(
            tuple(shape),
            float(h),
            stencil_order,
            gfield.reshape(tuple(shape) + (n, n)),
            jfield.reshape(tuple(shape) + (n, n)),
        )


def seed_torus_grid(
    shape: tuple[int, ...],
    h: float,
    rng: JetRng,
    amplitude: float = 0.05,
    stencil_order: int = 4,
) -> GridState:
    """Periodic perturbation of the flat Kaehler torus.

    Zero amplitude gives the exactly flat structure; any amplitude keeps
    the pointwise constraints exact at every site by construction.
    """
    n = len(shape)
    seed = TorusSeed.random(n, rng, amplitude)
    return seed.state(tuple(shape), h, stencil_order)


def flat_torus_grid(
    shape: tuple[int, ...], h: float, stencil_order: int = 4
) -> GridState:
    n = len(shape)
    g = np.broadcast_to(np.eye(n), tuple(shape) + (n, n)).copy()
    J = np.broadcast_to(
        standard_complex_structure(n), tuple(shape) + (n, n)
    ).copy()
    return GridState(tuple(shape), float(h), stencil_order, g, J)


def save_grid(state: GridState, path: str) -> None:
    """Write a snapshot: one JSON header line, then raw float64 fields.

    Layout after the newline-terminated header: the g field then the J
    field, each C-order little-endian float64 of shape ``(*shape, n, n)``.
    """
    header = {
        "magic": MAGIC,
        "shape": list(state.shape),
        "n": state.n,
        "h": state.h,
        "stencil_order": state.stencil_order,
        "t": state.t,
        "dtype": "<f8",
        "fields": ["g", "J"],
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(state.g, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.J, dtype="<f8").tobytes())


def load_grid(path: str) -> GridState:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("magic") != MAGIC:
            raise ValueError(f"{path} is not a grid snapshot")
        shape = tuple(header["shape"])
        n = header["n"]
        count = int(np.prod(shape)) * n * n
        g = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape + (n, n))
        J = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape + (n, n))
    return GridState(
        shape,
        float(header["h"]),
        int(header["stencil_order"]),
        g.copy(),
        J.copy(),
        float(header["t"]),
    )
