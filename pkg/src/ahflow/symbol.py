"""Principal-symbol extraction for the flow operators.

The leading second-order part of a linearization is computed by
perturbing only the second-derivative slot of an admissible 2-jet with
a plane-wave profile ``eps * K * (xi x xi)``, central-differencing in
``eps`` and Richardson-extrapolating two step sizes.  All operators are
affine in the second-derivative data, so the differencing is exact up
to roundoff; the extrapolation guards the claim rather than the
arithmetic.

Variations: a complex-structure variation ``K`` must anticommute with J
(this keeps the square constraint) and is drawn with its lowered form
skew, which also keeps compatibility at fixed g -- the tangent space of
admissible structures with the metric frozen.  A metric variation ``h``
is any symmetric 2-tensor.  The duality pairing used for the
triviality test is the full contraction with metric-raised slots,
``<S, H> = S_i^a H_j^b g^{ij} g_ab``.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

import numpy as np

from .chern import covariant_derivative, curvature_pack_from_jet
from .flow import (
    KappaSpec,
    ZERO_KAPPA,
    flow_rhs_at_jet,
    lee_hessian_operator,
    lie_derivative,
)
from .jets import StructureJet, jet_einsum, partial_jet
from .tensors import max_abs

OPS = ("D1", "D2", "A")


class VariationError(ValueError):
    """A symbol variation violates its admissibility constraints."""


def check_j_variation(K: np.ndarray, J0: np.ndarray, tol: float = 1e-10) -> None:
    anti = K @ J0 + J0 @ K
    if max_abs(anti) > tol * max(1.0, max_abs(K)):
        raise VariationError(
            f"complex-structure variation does not anticommute with J "
            f"(|KJ+JK| = {max_abs(anti):.3e})"
        )


def check_g_variation(h: np.ndarray, tol: float = 1e-10) -> None:
    if max_abs(h - h.T) > tol * max(1.0, max_abs(h)):
        raise VariationError("metric variation must be symmetric")


def random_j_variation(jet: StructureJet, rng: np.random.Generator) -> np.ndarray:
    """Tangent complex-structure variation: anticommuting, lowered-skew."""
    b = rng.uniform(-1.0, 1.0, (jet.n, jet.n))
    b = 0.5 * (b - b.T)
    tw = np.einsum("ia,jb,ab->ij", jet.J0, jet.J0, b)
    b = 0.5 * (b - tw)
    K = np.einsum("ij,ja->ia", b, np.linalg.inv(jet.g0))
    return K / max(max_abs(K), 1e-30)


def random_g_variation(jet: StructureJet, rng: np.random.Generator) -> np.ndarray:
    h = rng.uniform(-1.0, 1.0, (jet.n, jet.n))
    h = 0.5 * (h + h.T)
    return h / max_abs(h)


def random_unit_covector(jet: StructureJet, rng: np.random.Generator) -> np.ndarray:
    xi = rng.uniform(-1.0, 1.0, jet.n)
    gi = np.linalg.inv(jet.g0)
    return xi / np.sqrt(xi @ gi @ xi)


def perturb_second_order(
    jet: StructureJet, field: str, K: np.ndarray, xi: np.ndarray, eps: float
) -> StructureJet:
    """Add ``eps * K * (xi x xi)`` to the second-derivative slot only."""
    bump = eps * np.einsum("k,l,ia->klia", xi, xi, K)
    if field == "J":
        return replace(jet, ddJ=jet.ddJ + bump)
    if field == "g":
        return replace(jet, ddg=jet.ddg + bump)
    raise ValueError(f"unknown field {field!r}")


def core_j_operator(jet: StructureJet) -> np.ndarray:
    """Second-order core of the gauged complex-structure flow:
    the twisted Nijenhuis divergence minus the Lie derivative of J
    along the form trace of its own derivative."""
    cp = curvature_pack_from_jet(jet)
    sp = cp.sp
    cov_n = covariant_derivative(sp.nij_up, cp.ups.val, "ddu")
    t1 = -0.5 * np.einsum(
        "Xak,Xlb,Xblkc->Xac", sp.J.val, sp.ginv.val, cov_n
    )
    zjet = jet_einsum("kl,klp->p", sp.winv, partial_jet(sp.J))
    return (t1 - lie_derivative(sp.J, zjet, "du"))[0]


def _operator_value(
    op: str,
    jet: StructureJet,
    kappa: KappaSpec,
    background: Optional[np.ndarray],
) -> np.ndarray:
    if op == "D1":
        return flow_rhs_at_jet(
            jet, kappa=kappa, gauged=True, background=background
        ).dj_dt[0]
    if op == "D2":
        return flow_rhs_at_jet(
            jet, kappa=kappa, gauged=True, background=background
        ).dg_dt[0]
    if op == "A":
        return lee_hessian_operator(curvature_pack_from_jet(jet))[0]
    if op == "core":
        return core_j_operator(jet)
    raise ValueError(f"unknown operator {op!r}; expected one of {OPS}")


def principal_symbol(
    op: str,
    xi: np.ndarray,
    K: np.ndarray,
    jet: StructureJet,
    wrt: str = "J",
    kappa: KappaSpec = ZERO_KAPPA,
    background: Optional[np.ndarray] = None,
    eps: float = 1e-3,
) -> np.ndarray:
    """Principal symbol of ``op`` at ``jet`` in direction ``xi`` on ``K``.

    ``wrt`` selects which primitive field the variation perturbs.
    """
    xi = np.asarray(xi, dtype=float)
    K = np.asarray(K, dtype=float)
    if np.linalg.norm(xi) == 0.0:
        raise ValueError("covector xi must be nonzero")
    if wrt == "J":
        check_j_variation(K, jet.J0)
    elif wrt == "g":
        check_g_variation(K)
    else:
        raise ValueError(f"unknown variation field {wrt!r}")

    def central(e: float) -> np.ndarray:
        plus = _operator_value(
            op, perturb_second_order(jet, wrt, K, xi, +e), kappa, background
        )
        minus = _operator_value(
            op, perturb_second_order(jet, wrt, K, xi, -e), kappa, background
        )
        return (plus - minus) / (2.0 * e)

    d1 = central(eps)
    d2 = central(0.5 * eps)
    return (4.0 * d2 - d1) / 3.0


def xi_norm_squared(jet: StructureJet, xi: np.ndarray) -> float:
    return float(xi @ np.linalg.inv(jet.g0) @ xi)


def pairing(S: np.ndarray, H: np.ndarray, g0: np.ndarray) -> float:
    """Full contraction of two endomorphism-type tensors, slots raised
    and lowered by the metric."""
    gi = np.linalg.inv(g0)
    return float(np.einsum("ia,jb,ij,ab->", S, H, gi, g0))


def symbol_residuals(
    jet: StructureJet,
    rng: np.random.Generator,
    trials: int = 10,
    kappa: KappaSpec = ZERO_KAPPA,
    background: Optional[np.ndarray] = None,
    eps: float = 1e-3,
) -> dict[str, float]:
    """Worst-case residuals of the parabolicity claims over random
    directions and variations.

    * the gauged complex-structure operator acts on J-variations as
      multiplication by the squared covector norm,
    * the gauged metric operator acts the same way on metric variations
      and does not see J-variations at second order at all,
    * the Lee-Hessian operator has trivial symbol against the pairing.
    """
    out = {
        "symbol.d1_j_laplacian": 0.0,
        "symbol.core_j_laplacian": 0.0,
        "symbol.d2_g_laplacian": 0.0,
        "symbol.d2_j_zero": 0.0,
        "symbol.a_pairing_zero": 0.0,
    }
    for _ in range(trials):
        xi = random_unit_covector(jet, rng)
        K = random_j_variation(jet, rng)
        h = random_g_variation(jet, rng)
        H = random_j_variation(jet, rng)
        xsq = xi_norm_squared(jet, xi)

        s = principal_symbol("D1", xi, K, jet, "J", kappa, background, eps)
        out["symbol.d1_j_laplacian"] = max(
            out["symbol.d1_j_laplacian"], max_abs(s - xsq * K) / max_abs(xsq * K)
        )
        s = principal_symbol("core", xi, K, jet, "J", kappa, background, eps)
        out["symbol.core_j_laplacian"] = max(
            out["symbol.core_j_laplacian"],
            max_abs(s - xsq * K) / max_abs(xsq * K),
        )
        s = principal_symbol("D2", xi, h, jet, "g", kappa, background, eps)
        out["symbol.d2_g_laplacian"] = max(
            out["symbol.d2_g_laplacian"], max_abs(s - xsq * h) / max_abs(xsq * h)
        )
        s = principal_symbol("D2", xi, K, jet, "J", kappa, background, eps)
        out["symbol.d2_j_zero"] = max(out["symbol.d2_j_zero"], max_abs(s))
        s = principal_symbol("A", xi, K, jet, "J", kappa, background, eps)
        out["symbol.a_pairing_zero"] = max(
            out["symbol.a_pairing_zero"],
            abs(pairing(s, H, jet.g0)) / max(1.0, max_abs(s), max_abs(H)),
        )
    return out
