"""First-order almost Hermitian invariants.

Everything here is assembled in jet arithmetic, so each quantity carries
its own exact first partials; downstream curvature code reads them
directly instead of re-deriving Leibniz expansions.

Convention: the exterior derivative of a k-form is the signed sum of
partial derivatives with no combinatorial prefactor,
``(d eta)_{i0..ik} = sum_m (-1)^m d_{i_m} eta_{i0..^i_m..ik}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jets import StructureJet, TJet, jet_einsum, jet_inv, partial_jet
from .tensors import Tensor, COV, CON, max_abs


def kaehler_form(g: np.ndarray, J: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Kaehler form ``w_ij = J_i^a g_ja`` of a compatible pair.

    Raises if the pair is not compatible to ``tol``.
    """
    g = np.asarray(g, dtype=float)
    J = np.asarray(J, dtype=float)
    twisted = np.einsum("...ia,...jb,...ab->...ij", J, J, g)
    defect = np.max(np.abs(g - twisted))
    if defect > tol * max(1.0, np.max(np.abs(g))):
        raise ValueError(f"incompatible pair: |g - J^T g J| = {defect:.3e}")
    return np.einsum("...ia,...ja->...ij", J, g)


def kaehler_form_jet(gjet: TJet, Jjet: TJet) -> TJet:
    return jet_einsum("ia,ja->ij", Jjet, gjet)


def exterior_derivative_jet(eta: TJet, rank: int) -> TJet:
    """Jet of ``d eta`` for a rank-``rank`` skew field (order drops by one)."""
    grad = partial_jet(eta)  # slots: (direction, a1..ak)
    total = None
    for m in range(rank + 1):
        axes = list(range(1, m + 1)) + [0] + list(range(m + 1, rank + 1))
        term = grad.transpose(axes)
        if m % 2 == 1:
            term = -term
        total = term if total is None else total + term
    return total


def all_slot_twist_jet(eta: TJet, Jjet: TJet, rank: int) -> TJet:
    """Contract every slot of a covariant tensor with J."""
    letters = "abcdefgh"[:rank]
    out = eta
    for m in range(rank):
        src = letters[m]
        inner = letters[:m] + "z" + letters[m + 1 :]
        out = jet_einsum(f"{src}z,{inner}->{letters}", Jjet, out)
    return out


def dc_derivative_jet(eta: TJet, Jjet: TJet, rank: int) -> TJet:
    """Twisted exterior derivative: minus the all-slot J-twist of d eta."""
    return -all_slot_twist_jet(exterior_derivative_jet(eta, rank), Jjet, rank + 1)


def project2_jet(a: TJet, part: str, Jjet: TJet) -> TJet:
    tw = jet_einsum("jb,ib->ij", Jjet, jet_einsum("ia,ab->ib", Jjet, a))
    if part == "j_inv":
        return 0.5 * (a + tw)
    if part == "j_anti":
        return 0.5 * (a - tw)
    raise ValueError(f"unknown rank-2 part {part!r}")


def project3_jet(b: TJet, part: str, Jjet: TJet) -> TJet:
    t12 = jet_einsum("jb,ibk->ijk", Jjet, jet_einsum("ia,abk->ibk", Jjet, b))
    t13 = jet_einsum("kc,ijc->ijk", Jjet, jet_einsum("ia,ajc->ijc", Jjet, b))
    t23 = jet_einsum("kc,ijc->ijk", Jjet, jet_einsum("jb,ibc->ijc", Jjet, b))
    if part == "pure":
        return 0.25 * (b - t12 - t13 - t23)
    if part == "mixed":
        return 0.75 * b + 0.25 * (t12 + t13 + t23)
    raise ValueError(f"unknown rank-3 part {part!r}")


def nijenhuis_jet(Jjet: TJet) -> TJet:
    """Nijenhuis tensor ``N_jk^i`` stored ``[j, k, i]`` (skew in j, k)."""
    dJ = partial_jet(Jjet)  # [p, k, i] = d_p J_k^i
    t1 = jet_einsum("jp,pki->jki", Jjet, dJ)
    t3 = jet_einsum("pi,jkp->jki", Jjet, dJ)
    nij = t1 - t1.transpose((1, 0, 2)) - t3 + t3.transpose((1, 0, 2))
    return 2.0 * nij


@dataclass
class StructurePack:
    """First-order invariants of one structure, all with exact partials.

    ``nij`` is the lowered Nijenhuis tensor ``N_ijk = N_ij^l g_lk``;
    ``cform`` the average of dw with its three pairwise J-twists (the
    mixed-minus-pure type part of dw); ``cont`` the negative contorsion
    of the Chern connection, skew in its last two slots.
    """

    n: int
    g: TJet
    J: TJet
    ginv: TJet
    w: TJet
    winv: TJet
    dw: TJet
    nij_up: TJet
    nij: TJet
    lee: TJet
    cform: TJet
    cont: TJet


def structure_pack(
    gjet: TJet, Jjet: TJet, corrupt_dw_sign: bool = False
) -> StructurePack:
    """Assemble the first-order invariants from 2-jets of (g, J).

    ``corrupt_dw_sign`` is a test fixture: it feeds ``-dw`` into the
    contorsion chain (cform, cont) while leaving the Lee form intact,
    so convention-sensitive identity rows must fail.
    """
    n = gjet.val.shape[-1]
    ginv = jet_inv(gjet)
    w = kaehler_form_jet(gjet, Jjet)
    winv = jet_inv(w)
    dw = exterior_derivative_jet(w, 2)
    nij_up = nijenhuis_jet(Jjet)
    nij = jet_einsum("ijl,lk->ijk", nij_up, gjet)
    lee = 0.5 * jet_einsum("ji,ijk->k", winv, dw)

    dw_wire = -dw if corrupt_dw_sign else dw
    t23 = jet_einsum("kr,iqr->iqk", Jjet, dw_wire)
    t23 = jet_einsum("jq,iqk->ijk", Jjet, t23)
    t13 = jet_einsum("kr,qjr->qjk", Jjet, dw_wire)
    t13 = jet_einsum("iq,qjk->ijk", Jjet, t13)
    t12 = jet_einsum("ip,pqk->iqk", Jjet, dw_wire)
    t12 = jet_einsum("jq,iqk->ijk", Jjet, t12)
    cform = 0.5 * (dw_wire + t23 + t13 + t12)

    cont = 0.125 * nij.transpose((2, 0, 1)) + 0.5 * jet_einsum(
        "ip,pjk->ijk", Jjet, cform
    )
    return StructurePack(
        n, gjet, Jjet, ginv, w, winv, dw, nij_up, nij, lee, cform, cont
    )


def pack_from_jet(jet: StructureJet, corrupt_dw_sign: bool = False) -> StructurePack:
    gjet, Jjet = jet.tjets()
    return structure_pack(gjet, Jjet, corrupt_dw_sign=corrupt_dw_sign)


# Point-level API used by tests and the CLI; all return plain arrays.


def nijenhuis_tensor(jet: StructureJet) -> Tensor:
    """Nijenhuis tensor ``N_jk^i`` at the base point, stored ``[j, k, i]``."""
    _, Jjet = jet.tjets()
    return Tensor(nijenhuis_jet(Jjet).val[0], (COV, COV, CON))


def lee_form(w: np.ndarray, dw: np.ndarray) -> np.ndarray:
    """Lee form ``0.5 * w^{ji} (dw)_ijk`` from the form and its differential."""
    winv = np.linalg.inv(w)
    return 0.5 * np.einsum("...ji,...ijk->...k", winv, dw)


def first_order_residuals(pack: StructurePack) -> dict[str, float]:
    """Max-norm residuals of the first-order identity suite.

    Keys are stable identifiers; each maps to exactly one identity.
    All residuals are relative to the larger side of the identity
    (floored at 1).
    """
    n = pack.n
    g = pack.g.val
    gi = pack.ginv.val
    J = pack.J.val
    w = pack.w.val
    wi = pack.winv.val
    dw = pack.dw.val
    nij = pack.nij.val
    lee = pack.lee.val
    cf = pack.cform.val
    ct = pack.cont.val
    eye = np.eye(n)

    def rel(lhs, rhs):
        denom = max(1.0, max_abs(lhs), max_abs(rhs))
        return float(np.max(np.abs(lhs - rhs))) / denom

    out = {}
    # raising / inverse identity chain for g, J, w
    out["kaehler.g_from_w"] = rel(g, np.einsum("Xis,Xjs->Xij", J, w))
    out["kaehler.winv_raised"] = rel(wi, np.einsum("Xsi,Xjs->Xij", J, gi))
    out["kaehler.j_from_winv"] = rel(J, np.einsum("Xjs,Xis->Xij", wi, g))
    out["kaehler.j_from_w"] = rel(J, np.einsum("Xis,Xjs->Xij", w, gi))
    out["kaehler.winv_inverse"] = rel(
        np.einsum("Xac,Xcb->Xab", wi, w), np.broadcast_to(eye, w.shape)
    )
    out["kaehler.w_skew"] = rel(w, -w.swapaxes(-1, -2))

    # Nijenhuis antiinvariance in both slot pairs (lowered form)
    tw12 = np.einsum("Xau,Xbv,Xuvc->Xabc", J, J, nij)
    tw23 = np.einsum("Xbv,Xcr,Xavr->Xabc", J, J, nij)
    out["nijenhuis.antiinv_12"] = rel(nij, -tw12)
    out["nijenhuis.antiinv_23"] = rel(nij, -tw23)

    # cyclic sum of N against the twisted differential and its expansion
    cyc = nij + np.einsum("Xjki->Xijk", nij) + np.einsum("Xkij->Xijk", nij)
    dcw = dc_derivative_from_arrays(pack)
    dcw_pure = _project3_arrays(dcw, "pure", J)
    out["nijenhuis.cyclic_dc"] = rel(cyc, 8.0 * dcw_pure)
    expand = 2.0 * (
        np.einsum("Xkr,Xijr->Xijk", J, dw)
        + np.einsum("Xip,Xpjk->Xijk", J, dw)
        + np.einsum("Xjq,Xiqk->Xijk", J, dw)
        - np.einsum("Xip,Xjq,Xkr,Xpqr->Xijk", J, J, J, dw)
    )
    out["nijenhuis.cyclic_expanded"] = rel(cyc, expand)

    # twisted-differential type-part expansions
    out["dc.pure_expansion"] = rel(
        dcw_pure,
        0.25
        * (
            -np.einsum("Xip,Xjq,Xkr,Xpqr->Xijk", J, J, J, dw)
            + np.einsum("Xkr,Xijr->Xijk", J, dw)
            + np.einsum("Xip,Xpjk->Xijk", J, dw)
            + np.einsum("Xjq,Xiqk->Xijk", J, dw)
        ),
    )
    out["dc.mixed_expansion"] = rel(
        _project3_arrays(dcw, "mixed", J),
        -0.75 * np.einsum("Xip,Xjq,Xkr,Xpqr->Xijk", J, J, J, dw)
        - 0.25
        * (
            np.einsum("Xip,Xpjk->Xijk", J, dw)
            + np.einsum("Xjq,Xiqk->Xijk", J, dw)
            + np.einsum("Xkr,Xijr->Xijk", J, dw)
        ),
    )

    # cform is fully skew and equals mixed part minus pure part of dw
    out["cform.skew"] = max(
        rel(cf, -cf.swapaxes(-1, -2)),
        rel(cf, -np.einsum("Xjik->Xijk", cf)),
    )
    out["cform.type_split"] = rel(
        cf, _project3_arrays(dw, "mixed", J) - _project3_arrays(dw, "pure", J)
    )
    if n == 4:
        out["cform.dim4_equals_dw"] = rel(cf, dw)

    # trace identities: cform against w and g
    out["trace.cform_w"] = rel(np.einsum("Xij,Xijk->Xk", wi, cf), -2.0 * lee)
    out["trace.cform_g"] = rel(np.einsum("Xij,Xijk->Xk", gi, cf), 0.0 * lee)

    # contorsion skew in last slots, trace identities against w and g
    out["contorsion.skew_23"] = rel(ct, -ct.swapaxes(-1, -2))
    out["trace.cont_w_12"] = rel(np.einsum("Xij,Xijk->Xk", wi, ct), 0.0 * lee)
    out["trace.cont_w_13"] = rel(np.einsum("Xik,Xijk->Xj", wi, ct), 0.0 * lee)
    out["trace.cont_w_23"] = rel(
        np.einsum("Xjk,Xijk->Xi", wi, ct), -np.einsum("Xip,Xp->Xi", J, lee)
    )
    out["trace.cont_g_12"] = rel(np.einsum("Xij,Xijk->Xk", gi, ct), -lee)
    out["trace.cont_g_13"] = rel(np.einsum("Xik,Xijk->Xj", gi, ct), lee)
    out["trace.cont_g_23"] = rel(np.einsum("Xjk,Xijk->Xi", gi, ct), 0.0 * lee)
    return out


def dc_derivative_from_arrays(pack: StructurePack) -> np.ndarray:
    """(d^c w) as arrays: minus the all-slot twist of dw."""
    J = pack.J.val
    return -np.einsum("Xia,Xjb,Xkc,Xabc->Xijk", J, J, J, pack.dw.val)


def _project3_arrays(b: np.ndarray, part: str, J: np.ndarray) -> np.ndarray:
    t12 = np.einsum("Xia,Xjb,Xabk->Xijk", J, J, b)
    t13 = np.einsum("Xia,Xkc,Xajc->Xijk", J, J, b)
    t23 = np.einsum("Xjb,Xkc,Xibc->Xijk", J, J, b)
    if part == "pure":
        return 0.25 * (b - t12 - t13 - t23)
    return 0.75 * b + 0.25 * (t12 + t13 + t23)
