"""Exact 2-jets of tensor fields and admissible random structures.

A :class:`TJet` carries the value and the first and second partial
derivatives of a tensor field at a batch of points.  All algebra
(contractions, inverses, transposes) propagates derivatives by the
Leibniz rule, so every quantity assembled from jets comes with its own
exact first partials for free.

Array layout (B = batch of points, n = space dimension, ``idx`` = index
slots of the tensor):

* ``val``: ``(B, *idx)``
* ``d``:   ``(B, n, *idx)``    with ``d[:, k] = ∂_k(field)``
* ``dd``:  ``(B, n, n, *idx)`` with ``dd[:, k, l] = ∂_k ∂_l(field)``,
  symmetric in ``(k, l)``

Einsum specs use lowercase letters only; ``X`` (batch) and ``Z``/``Y``
(derivative directions) are reserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors import Tensor, COV, CON

_RESERVED = set("XZY")


class AdmissibilityError(ValueError):
    """Randomized construction failed to produce an admissible structure."""


class TJet:
    """Value plus first/second partials of a tensor field at points."""

    __slots__ = ("val", "d", "dd")

    def __init__(self, val, d=None, dd=None):
        self.val = np.asarray(val, dtype=float)
        self.d = None if d is None else np.asarray(d, dtype=float)
        self.dd = None if dd is None else np.asarray(dd, dtype=float)

    @property
    def order(self) -> int:
        if self.dd is not None:
            return 2
        return 1 if self.d is not None else 0

    @property
    def batch(self) -> int:
        return self.val.shape[0]

    def __add__(self, other):
        if isinstance(other, TJet):
            order = min(self.order, other.order)
            return TJet(
                self.val + other.val,
                self.d + other.d if order >= 1 else None,
                self.dd + other.dd if order >= 2 else None,
            )
        return TJet(self.val + other, self.d, self.dd)  # constant shift

    __radd__ = __add__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-other if isinstance(other, TJet) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        c = float(c)
        return TJet(
            self.val * c,
            None if self.d is None else self.d * c,
            None if self.dd is None else self.dd * c,
        )

    __rmul__ = __mul__

    def transpose(self, perm) -> "TJet":
        """Permute the index slots (batch and derivative axes untouched)."""
        perm = tuple(perm)

        def tp(a, off):
            if a is None:
                return None
            return np.transpose(a, tuple(range(off)) + tuple(off + p for p in perm))

        return TJet(tp(self.val, 1), tp(self.d, 2), tp(self.dd, 3))

    def copy(self) -> "TJet":
        return TJet(
            self.val.copy(),
            None if self.d is None else self.d.copy(),
            None if self.dd is None else self.dd.copy(),
        )


def constant_jet(val, n: int, order: int = 2) -> TJet:
    """Jet of a field that is constant in space (all partials zero)."""
    val = np.asarray(val, dtype=float)
    d = np.zeros(val.shape[:1] + (n,) + val.shape[1:])
    dd = np.zeros(val.shape[:1] + (n, n) + val.shape[1:])
    return TJet(val, d if order >= 1 else None, dd if order >= 2 else None)


def partial_jet(t: TJet) -> TJet:
    """Jet of the gradient field, direction prepended as first index slot."""
    if t.order < 1:
        raise ValueError("need at least a 1-jet to differentiate")
    return TJet(t.d, t.dd, None)


def _split(spec: str):
    ins, out = spec.split("->")
    sa, sb = ins.split(",")
    if _RESERVED & set(sa + sb + out):
        raise ValueError(f"spec {spec!r} uses reserved labels X/Z/Y")
    return sa, sb, out


def jet_einsum(spec: str, a, b) -> TJet:
    """Binary einsum with Leibniz propagation of derivatives.

    Plain ndarray operands are treated as spatial constants (zero
    derivatives, no batch axis).  The result order is the smallest
    operand order; constants do not limit it.
    """
    sa, sb, out = _split(spec)
    ja, jb = isinstance(a, TJet), isinstance(b, TJet)
    if not (ja or jb):
        raise TypeError("at least one operand must be a TJet")
    av = a.val if ja else np.asarray(a, dtype=float)
    bv = b.val if jb else np.asarray(b, dtype=float)
    pa = "X" if ja else ""
    pb = "X" if jb else ""
    order = min(a.order if ja else 2, b.order if jb else 2)

    val = np.einsum(f"{pa}{sa},{pb}{sb}->X{out}", av, bv)
    d = dd = None
    if order >= 1:
        terms = []
        if ja:
            terms.append(np.einsum(f"XZ{sa},{pb}{sb}->XZ{out}", a.d, bv))
        if jb:
            terms.append(np.einsum(f"{pa}{sa},XZ{sb}->XZ{out}", av, b.d))
        d = sum(terms)
    if order >= 2:
        terms = []
        if ja:
            terms.append(np.einsum(f"XZY{sa},{pb}{sb}->XZY{out}", a.dd, bv))
        if jb:
            terms.append(np.einsum(f"{pa}{sa},XZY{sb}->XZY{out}", av, b.dd))
        if ja and jb:
            cross = np.einsum(f"XZ{sa},XY{sb}->XZY{out}", a.d, b.d)
            terms.append(cross + cross.swapaxes(1, 2))
        dd = sum(terms)
    return TJet(val, d, dd)


def jet_unary(spec: str, a: TJet) -> TJet:
    """Unary einsum (trace/reshuffle) applied through all jet orders."""
    sa, out = spec.split("->")
    if _RESERVED & set(sa + out):
        raise ValueError(f"spec {spec!r} uses reserved labels X/Z/Y")
    val = np.einsum(f"X{sa}->X{out}", a.val)
    d = None if a.order < 1 else np.einsum(f"XZ{sa}->XZ{out}", a.d)
    dd = None if a.order < 2 else np.einsum(f"XZY{sa}->XZY{out}", a.dd)
    return TJet(val, d, dd)


def jet_inv(a: TJet) -> TJet:
    """Jet of the matrix inverse of a rank-2 field."""
    b0 = np.linalg.inv(a.val)
    d = dd = None
    if a.order >= 1:
        d = -np.einsum("Xij,XZjk,Xkl->XZil", b0, a.d, b0)
    if a.order >= 2:
        t1 = np.einsum("Xij,XZYjk,Xkl->XZYil", b0, a.dd, b0)
        t2 = np.einsum("Xij,XZjk,Xkl,XYlm,Xmn->XZYin", b0, a.d, b0, a.d, b0)
        dd = -t1 + t2 + t2.swapaxes(1, 2)
    return TJet(b0, d, dd)


@dataclass(frozen=True)
class JetRng:
    """Deterministic random stream: same (seed, stream) -> same draws."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        )


def standard_complex_structure(n: int) -> np.ndarray:
    """Block rotation pairing coordinate directions (2k-1, 2k), ``[i, a]``."""
    if n % 2 != 0 or n <= 0:
        raise ValueError(f"dimension must be even and positive, got {n}")
    return np.kron(np.eye(n // 2), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True)
class StructureJet:
    """2-jet of a compatible metric / almost-complex-structure pair.

    ``dg[k] = ∂_k g`` and ``ddg[k, l] = ∂_k ∂_l g`` (symmetric in k, l);
    likewise for J.  J components are stored ``J[i, a] = J_i^a``.
    """

    n: int
    g0: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray
    J0: np.ndarray
    dJ: np.ndarray
    ddJ: np.ndarray

    def tjets(self) -> tuple[TJet, TJet]:
        """Batched (size-1) jets of g and J."""
        return (
            TJet(self.g0[None], self.dg[None], self.ddg[None]),
            TJet(self.J0[None], self.dJ[None], self.ddJ[None]),
        )

    def constraint_residuals(self) -> dict[str, float]:
        """Max-norm residuals of all admissibility constraints, by order."""
        gj, Jj = self.tjets()
        jj = jet_einsum("ib,ba->ia", Jj, Jj)
        u = jet_einsum("ia,ab->ib", Jj, gj)
        g2 = jet_einsum("ib,jb->ij", u, Jj)
        cmp_ = g2 - gj
        eye = np.eye(self.n)
        out = {
            "j_squared_0": float(np.max(np.abs(jj.val + eye))),
            "j_squared_1": float(np.max(np.abs(jj.d))),
            "j_squared_2": float(np.max(np.abs(jj.dd))),
            "compat_0": float(np.max(np.abs(cmp_.val))),
            "compat_1": float(np.max(np.abs(cmp_.d))),
            "compat_2": float(np.max(np.abs(cmp_.dd))),
            "g_symmetry": float(np.max(np.abs(self.g0 - self.g0.T))),
            "dd_symmetry": max(
                float(np.max(np.abs(self.ddg - self.ddg.transpose(1, 0, 2, 3)))),
                float(np.max(np.abs(self.ddJ - self.ddJ.transpose(1, 0, 2, 3)))),
            ),
        }
        out["g_positive"] = float(-min(np.linalg.eigvalsh(self.g0).min(), 0.0))
        return out

    def validate(self, tol: float = 1e-12) -> None:
        res = self.constraint_residuals()
        bad = {k: v for k, v in res.items() if v > tol}
        if bad:
            raise AdmissibilityError(f"structure jet violates constraints: {bad}")


def flat_structure_jet(n: int) -> StructureJet:
    """Flat structure: identity metric, standard J, all partials zero."""
    z3 = np.zeros((n, n, n))
    z4 = np.zeros((n, n, n, n))
    return StructureJet(
        n, np.eye(n), z3, z4, standard_complex_structure(n), z3, z4
    )


def _poly_jet(rng, n: int, amplitude: float, symmetric: bool) -> TJet:
    """Jet at x=0 of Id + amplitude * (degree-2 matrix polynomial)."""
    r0 = rng.uniform(-1.0, 1.0, (n, n))
    r1 = rng.uniform(-1.0, 1.0, (n, n, n))
    r2 = rng.uniform(-1.0, 1.0, (n, n, n, n))
    r2 = 0.5 * (r2 + r2.transpose(1, 0, 2, 3))
    if symmetric:
        r0 = 0.5 * (r0 + r0.T)
        r1 = 0.5 * (r1 + r1.transpose(0, 2, 1))
        r2 = 0.5 * (r2 + r2.transpose(0, 1, 3, 2))
    return TJet(
        (np.eye(n) + amplitude * r0)[None],
        (amplitude * r1)[None],
        (amplitude * r2)[None],
    )


def _assemble_structure(n: int, bjet: TJet, hjet: TJet) -> StructureJet:
    """Conjugate the standard J by b and average h into a compatible g."""
    jstd = standard_complex_structure(n)
    binv = jet_inv(bjet)
    jj = jet_einsum("ib,ba->ia", jet_einsum("ib,ba->ia", binv, jstd), bjet)
    u = jet_einsum("ia,ab->ib", jj, hjet)
    hj = jet_einsum("ib,jb->ij", u, jj)
    gj = 0.5 * (hjet + hj)
    return StructureJet(
        n, gj.val[0], gj.d[0], gj.dd[0], jj.val[0], jj.d[0], jj.dd[0]
    )


def random_structure_jet(
    n: int, rng: JetRng, amplitude: float = 0.1, max_draws: int = 100
) -> StructureJet:
    """Seeded random admissible 2-jet.

    J is a conjugate of the standard structure by a random degree-2
    matrix polynomial; g is the J-average of a random symmetric
    polynomial.  All constraints then hold to machine precision at every
    jet order by construction.  Draws are rejected until g is positive
    definite at the base point.
    """
    if n % 2 != 0 or not 2 <= n:
        raise ValueError(f"dimension must be even and positive, got {n}")
    if not 0.0 <= amplitude <= 0.3:
        raise ValueError(f"amplitude must lie in [0, 0.3], got {amplitude}")
    gen = rng.generator()
    for _ in range(max_draws):
        bjet = _poly_jet(gen, n, amplitude, symmetric=False)
        hjet = _poly_jet(gen, n, amplitude, symmetric=True)
        jet = _assemble_structure(n, bjet, hjet)
        if np.linalg.eigvalsh(jet.g0).min() > 1e-8:
            return jet
    raise AdmissibilityError(
        f"no positive definite metric in {max_draws} draws; "
        f"reduce amplitude (got {amplitude})"
    )


def random_structure_jet_pair(
    n: int, rng: JetRng, amplitude: float = 0.1, max_draws: int = 100
) -> tuple[StructureJet, StructureJet]:
    """Two admissible jets with identical value and first-partial data.

    Only the second-order polynomial coefficients are redrawn between
    the two, so the pair isolates second-derivative dependence.
    """
    gen = rng.generator()
    n_ = n
    for _ in range(max_draws):
        b = _poly_jet(gen, n_, amplitude, symmetric=False)
        h = _poly_jet(gen, n_, amplitude, symmetric=True)
        b2 = TJet(b.val, b.d, amplitude * _sym_dirs(gen.uniform(-1, 1, (n_, n_, n_, n_)))[None])
        h2 = TJet(
            h.val,
            h.d,
            amplitude * _sym_all(gen.uniform(-1, 1, (n_, n_, n_, n_)))[None],
        )
        ja = _assemble_structure(n_, b, h)
        jb = _assemble_structure(n_, b2, h2)
        if np.linalg.eigvalsh(ja.g0).min() > 1e-8:
            return ja, jb
    raise AdmissibilityError(
        f"no positive definite metric in {max_draws} draws (amplitude {amplitude})"
    )


def _sym_dirs(r2: np.ndarray) -> np.ndarray:
    return 0.5 * (r2 + r2.transpose(1, 0, 2, 3))


def _sym_all(r2: np.ndarray) -> np.ndarray:
    r2 = _sym_dirs(r2)
    return 0.5 * (r2 + r2.transpose(0, 1, 3, 2))


def jet_partial(jet: StructureJet, field: str, direction: int) -> Tensor:
    """Exact first partial of g, J or the Kaehler form at the base point."""
    if not 0 <= direction < jet.n:
        raise IndexError(f"direction {direction} out of range for n={jet.n}")
    if field == "g":
        return Tensor(jet.dg[direction], (COV, COV))
    if field == "J":
        return Tensor(jet.dJ[direction], (COV, CON))
    if field == "omega":
        gj, Jj = jet.tjets()
        w = jet_einsum("ia,ja->ij", Jj, gj)
        return Tensor(w.d[0, direction], (COV, COV))
    raise ValueError(f"unknown field {field!r}")
