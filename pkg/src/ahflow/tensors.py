"""Dense pointwise tensor algebra.

Conventions used across the package:

* A tensor component array stores index slots in the order they are
  written, e.g. an endomorphism-type tensor ``J_i^a`` (one covariant
  slot ``i``, one contravariant slot ``a``) is stored as ``arr[i, a]``.
* Free functions accept arrays with arbitrary leading batch axes; all
  index slots are the trailing axes.  The :class:`Tensor` wrapper is the
  strict single-point form carrying per-slot variance flags.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COV = "d"  # covariant (lower) slot
CON = "u"  # contravariant (upper) slot

INV = "j_inv"  # J-invariant, type (1,1)
ANTI = "j_anti"  # J-antiinvariant, type (2,0)+(0,2)
MIXED = "mixed"  # type (2,1)+(1,2)
PURE = "pure"  # type (3,0)+(0,3)


class VarianceError(ValueError):
    """Slot variance does not match the requested operation."""


@dataclass(frozen=True)
class Tensor:
    """Dense tensor at a point with per-slot variance flags.

    ``comps.shape == (dim,) * rank`` and ``variance`` holds one of
    ``'u'``/``'d'`` per slot.
    """

    comps: np.ndarray
    variance: tuple[str, ...]

    def __post_init__(self):
        comps = np.asarray(self.comps, dtype=float)
        object.__setattr__(self, "comps", comps)
        if comps.ndim != len(self.variance):
            raise ValueError(
                f"rank mismatch: array rank {comps.ndim}, "
                f"{len(self.variance)} variance flags"
            )
        if comps.ndim > 0:
            n = comps.shape[0]
            if comps.shape != (n,) * comps.ndim:
                raise ValueError(f"non-square component array {comps.shape}")
            if n % 2 != 0 or n <= 0:
                raise ValueError(f"dimension must be even and positive, got {n}")
        if any(v not in (COV, CON) for v in self.variance):
            raise ValueError(f"bad variance flags {self.variance}")

    @property
    def dim(self) -> int:
        return self.comps.shape[0] if self.comps.ndim else 0

    @property
    def rank(self) -> int:
        return self.comps.ndim


def contract(t: Tensor, slot_a: int, slot_b: int) -> Tensor:
    """Trace one contravariant slot against one covariant slot.

    The remaining slots keep their relative order.
    """
    r = t.rank
    if not (0 <= slot_a < r and 0 <= slot_b < r) or slot_a == slot_b:
        raise IndexError(f"invalid slot pair ({slot_a}, {slot_b}) for rank {r}")
    if {t.variance[slot_a], t.variance[slot_b]} != {COV, CON}:
        raise VarianceError(
            f"contraction needs one upper and one lower slot, got "
            f"{t.variance[slot_a]!r} and {t.variance[slot_b]!r}"
        )
    comps = np.trace(t.comps, axis1=slot_a, axis2=slot_b)
    variance = tuple(v for i, v in enumerate(t.variance) if i not in (slot_a, slot_b))
    return Tensor(comps, variance)


@dataclass(frozen=True)
class Metric:
    """Riemannian metric with cached inverse, both rank-2."""

    g: Tensor
    g_inv: Tensor = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        g = self.g
        if g.rank != 2 or g.variance != (COV, COV):
            raise ValueError("metric must be rank-2 covariant")
        arr = g.comps
        if np.max(np.abs(arr - arr.T)) > 1e-12 * max(1.0, np.max(np.abs(arr))):
            raise ValueError("metric is not symmetric")
        if np.linalg.eigvalsh(arr).min() <= 0:
            raise ValueError("metric is not positive definite")
        if self.g_inv is None:
            object.__setattr__(self, "g_inv", Tensor(np.linalg.inv(arr), (CON, CON)))
        resid = np.max(np.abs(self.g_inv.comps @ arr - np.eye(g.dim)))
        if resid > 1e-12:
            raise ValueError(f"g_inv is not the inverse of g (residual {resid:.2e})")


@dataclass(frozen=True)
class AlmostComplex:
    """Almost complex structure ``J_i^a`` stored ``[i, a]`` with J.J = -Id."""

    J: Tensor

    def __post_init__(self):
        J = self.J
        if J.rank != 2 or J.variance != (COV, CON):
            raise ValueError("almost complex structure must have variance (d, u)")
        resid = np.max(np.abs(J.comps @ J.comps + np.eye(J.dim)))
        if resid > 1e-12:
            raise ValueError(f"J.J != -Id (residual {resid:.2e})")


def raise_lower(t: Tensor, slot: int, m: Metric, direction: str) -> Tensor:
    """Raise or lower one slot with the metric.

    ``direction`` is ``'u'`` (raise a covariant slot) or ``'d'`` (lower a
    contravariant slot); the slot must currently have the opposite
    variance.  Raising then lowering the same slot is the identity.
    """
    if not 0 <= slot < t.rank:
        raise IndexError(f"slot {slot} out of range for rank {t.rank}")
    if direction not in (COV, CON):
        raise ValueError(f"direction must be 'u' or 'd', got {direction!r}")
    if t.variance[slot] == direction:
        raise VarianceError(
            f"slot {slot} already has variance {direction!r}"
        )
    mat = m.g_inv.comps if direction == CON else m.g.comps
    comps = np.moveaxis(
        np.tensordot(t.comps, mat, axes=([slot], [0])), -1, slot
    )
    variance = tuple(
        direction if i == slot else v for i, v in enumerate(t.variance)
    )
    return Tensor(comps, variance)


def _as_array(a) -> np.ndarray:
    return a.comps if isinstance(a, Tensor) else np.asarray(a, dtype=float)


def jtwist2(a, J) -> np.ndarray:
    """Twist both slots of a rank-2 covariant tensor: ``J_i^a J_j^b A_ab``."""
    a, J = _as_array(a), _as_array(J)
    return np.einsum("...ia,...jb,...ab->...ij", J, J, a)


def project2(a, part: str, J) -> np.ndarray:
    """Type projection of a rank-2 covariant tensor.

    ``'j_inv'`` returns the J-invariant part ``(A + twist A)/2`` and
    ``'j_anti'`` the J-antiinvariant part ``(A - twist A)/2``; the two
    parts sum back to ``A``.
    """
    a = _as_array(a)
    tw = jtwist2(a, J)
    if part == INV:
        return 0.5 * (a + tw)
    if part == ANTI:
        return 0.5 * (a - tw)
    raise ValueError(f"unknown rank-2 part {part!r}")


def project3(b, part: str, J) -> np.ndarray:
    """Type projection of a rank-3 covariant tensor.

    ``'mixed'`` is the (2,1)+(1,2) part, ``'pure'`` the (3,0)+(0,3)
    part; they sum back to ``b``.  On skew input in dimension 4 the pure
    part vanishes.
    """
    b, J = _as_array(b), _as_array(J)
    t12 = np.einsum("...ia,...jb,...abk->...ijk", J, J, b)
    t13 = np.einsum("...ia,...kc,...ajc->...ijk", J, J, b)
    t23 = np.einsum("...jb,...kc,...ibc->...ijk", J, J, b)
    if part == PURE:
        return 0.25 * (b - t12 - t13 - t23)
    if part == MIXED:
        return 0.75 * b + 0.25 * (t12 + t13 + t23)
    raise ValueError(f"unknown rank-3 part {part!r}")


def sym(a) -> np.ndarray:
    """Symmetric part ``(A_ij + A_ji)/2`` of the trailing two slots."""
    a = _as_array(a)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def skew(a) -> np.ndarray:
    """Skew part ``(A_ij - A_ji)/2`` of the trailing two slots."""
    a = _as_array(a)
    return 0.5 * (a - np.swapaxes(a, -1, -2))


def max_abs(a) -> float:
    """Max-norm of an array (0.0 for empty input)."""
    a = _as_array(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def rel_residual(lhs, rhs, *scales) -> float:
    """Max-norm difference of two arrays relative to their magnitudes.

    The denominator is the largest of 1, the two operand norms and any
    extra ``scales``, so identities between small tensors are not judged
    against an artificially tiny scale.
    """
    lhs, rhs = _as_array(lhs), _as_array(rhs)
    denom = max(1.0, max_abs(lhs), max_abs(rhs), *(float(s) for s in scales))
    return max_abs(lhs - rhs) / denom
