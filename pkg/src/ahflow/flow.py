"""Right-hand sides of the coupled metric / complex-structure flow.

The metric flows by minus twice its Ricci tensor.  The complex
structure flows by the antiinvariant part of the Chern-Ricci /
twisted-Ricci combination plus a correction term that keeps the pair
compatible; an optional gauge modification adds Lie derivatives along
the connection-difference vector field, which makes the linearized
system strictly parabolic.

The correction term and the gauge Lie-derivative term are antiinvariant
as continuum identities; ``enforce_type=True`` (default) applies that
type projection explicitly so the discrete right-hand side preserves
the pointwise constraints algebraically even when spatial derivatives
carry truncation error.  On exact jets the projection is a no-op at
machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .chern import (
    ConventionError,
    CurvaturePack,
    covariant_derivative,
    curvature_pack,
)
from .jets import StructureJet, TJet, jet_einsum
from .structures import (
    StructurePack,
    pack_from_jet,
    project3_jet,
    structure_pack,
)
from .tensors import max_abs

_SLOT = "ijklpq"


@dataclass(frozen=True)
class KappaSpec:
    """Optional lower-order term in the complex-structure flow.

    ``fn(sp)`` receives the first-order pack and must return a batched
    rank-2 covariant array that is skew and J-antiinvariant; both
    properties are validated at every evaluation.
    """

    selector: str = "zero"
    fn: Optional[Callable[[StructurePack], np.ndarray]] = None

    def evaluate(self, sp: StructurePack, tol: float = 1e-12) -> np.ndarray:
        if self.selector == "zero":
            return np.zeros_like(sp.g.val)
        if self.selector != "custom" or self.fn is None:
            raise ValueError(f"bad kappa selector {self.selector!r}")
        k = np.asarray(self.fn(sp), dtype=float)
        scale = max(1.0, max_abs(k))
        if max_abs(k + k.swapaxes(-1, -2)) > tol * scale:
            raise ValueError("custom kappa is not skew-symmetric")
        tw = np.einsum("Xia,Xjb,Xab->Xij", sp.J.val, sp.J.val, k)
        if max_abs(k + tw) > tol * scale:
            raise ValueError("custom kappa is not J-antiinvariant")
        return k


ZERO_KAPPA = KappaSpec()


def lie_derivative(t: TJet, v: TJet, variance: str) -> np.ndarray:
    """Coordinate Lie derivative of a tensor field along a vector field.

    Needs the 1-jets of both arguments; returns a plain batched array.
    """
    if t.order < 1 or v.order < 1:
        raise ValueError("Lie derivative needs 1-jets of both arguments")
    letters = _SLOT[: len(variance)]
    out = np.einsum(f"Xs,Xs{letters}->X{letters}", v.val, t.d)
    for m, flag in enumerate(variance):
        src = letters[m]
        inner = letters[:m] + "s" + letters[m + 1 :]
        if flag == "d":
            out += np.einsum(f"X{src}s,X{inner}->X{letters}", v.d, t.val)
        else:
            out -= np.einsum(f"Xs{src},X{inner}->X{letters}", v.d, t.val)
    return out


def lee_vector(sp: StructurePack) -> TJet:
    """Lee form with its index raised by the metric (a 1-jet)."""
    return jet_einsum("k,ks->s", sp.lee, sp.ginv)


def _project_anti(a: np.ndarray, J: np.ndarray) -> np.ndarray:
    return 0.5 * (a - np.einsum("Xia,Xjb,Xab->Xij", J, J, a))


def _project_inv(a: np.ndarray, J: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.einsum("Xia,Xjb,Xab->Xij", J, J, a))


def lee_hessian_operator(cp: CurvaturePack) -> np.ndarray:
    """Symmetrized antiinvariant Hessian of the Lee form against the
    inverse Kaehler form; output stored ``[a, c]`` (one up slot c)."""
    sp = cp.sp
    s = 0.5 * (cp.cov_lee + cp.cov_lee.swapaxes(-1, -2))
    s = _project_anti(s, sp.J.val)
    return 4.0 * np.einsum("Xcy,Xya->Xac", sp.winv.val, s)


def pure_dw_jet(sp: StructurePack) -> TJet:
    """Pure-type part of dw as a jet (identically zero in dimension 4)."""
    return project3_jet(sp.dw, "pure", sp.J)


def _cov_pure_dw(cp: CurvaturePack) -> np.ndarray:
    """nabla_b of the pure part of dw, ``[b, i, j, k]``."""
    return covariant_derivative(pure_dw_jet(cp.sp), cp.ups.val, "ddd")


def pure_divergence_operator(cp: CurvaturePack) -> np.ndarray:
    """Divergence-type operator on the pure part of dw, ``[a, c]``.

    Identically zero in dimension 4 where the pure type is trivial.
    """
    sp = cp.sp
    gi = sp.ginv.val
    J = sp.J.val
    cov_dw = covariant_derivative(sp.dw, cp.ups.val, "ddd")
    t1 = np.einsum("Xeb,Xbjae->Xja", gi, cov_dw)
    t2 = np.einsum("Xak,Xer,Xeb,Xbjkr->Xja", J, J, gi, cov_dw)
    proj = _project_anti(t1 - t2, J)
    return 2.0 * np.einsum("Xjc,Xja->Xac", gi, proj)


def pure_divergence_manipulated(cp: CurvaturePack) -> np.ndarray:
    """Equivalent form of the divergence operator: project first, then
    differentiate (4 g^{jc} nabla^e of the pure part)."""
    sp = cp.sp
    cov_p = _cov_pure_dw(cp)
    return 4.0 * np.einsum(
        "Xjc,Xeb,Xbjae->Xac", sp.ginv.val, sp.ginv.val, cov_p
    )


def rhs_correction(
    cp: CurvaturePack,
    kappa: KappaSpec = ZERO_KAPPA,
    enforce_type: bool = True,
    skip_pure_term: Optional[bool] = None,
) -> np.ndarray:
    """Correction 2-tensor added to the lowered complex-structure flow.

    The sum of the optional lower-order term, the pure-type divergence
    of dw and the skew part of the lowered Lie derivative of J along
    the Lee vector field.  The Lie term enters with the sign for which
    the gauged second-order part collapses to the Laplacian normal
    form; the symbol suite pins that sign.  The result is
    skew-symmetric by construction and J-antiinvariant as a continuum
    identity; with ``enforce_type`` the antiinvariant projection is
    applied explicitly.  ``skip_pure_term`` defaults to skipping the
    pure-type divergence in dimension 4, where it vanishes identically.
    """
    sp = cp.sp
    J = sp.J.val
    if skip_pure_term is None:
        skip_pure_term = sp.n == 4
    out = kappa.evaluate(sp)
    if not skip_pure_term:
        cov_p = _cov_pure_dw(cp)
        out = out - 2.0 * np.einsum("Xeb,Xbvae->Xav", sp.ginv.val, cov_p)
    lt = lie_derivative(sp.J, lee_vector(sp), "du")
    m = np.einsum("Xam,Xmv->Xav", lt, sp.g.val)
    out = out + 0.5 * (m - m.swapaxes(-1, -2))
    if enforce_type:
        out = _project_anti(out, J)
    return out


@dataclass(frozen=True)
class GaugeFields:
    """Connection-difference vector field and its companions.

    ``x`` is the metric trace of (connection minus background); ``z``
    the form trace of the background derivative of J.  Converting the
    plain derivative to the parallel one and applying the contorsion
    trace identities gives ``z = -x - lee_vector`` (the sign of the Lee
    term is pinned by the raising identity ``w^{kl} J_l^u = g^{uk}``,
    itself a consequence of the verified identity chain); ``z_connection``
    is that second form.
    """

    x: TJet
    z: np.ndarray
    z_connection: np.ndarray
    background: np.ndarray


def gauge_fields(
    cp: CurvaturePack,
    background: Optional[np.ndarray] = None,
    check: bool = True,
    tol: float = 1e-10,
) -> GaugeFields:
    sp = cp.sp
    n = sp.n
    if background is None:
        background = np.zeros((n, n, n))
    else:
        background = np.asarray(background, dtype=float)
        if max_abs(background - background.swapaxes(0, 1)) > 1e-12:
            raise ValueError("background connection must be torsion-free")
    xjet = jet_einsum("kl,kls->s", sp.ginv, cp.gamma - background)
    nb_j = sp.J.d.copy()
    nb_j -= np.einsum("kls,Xsp->Xklp", background, sp.J.val)
    nb_j += np.einsum("ksp,Xls->Xklp", background, sp.J.val)
    z = np.einsum("Xkl,Xklp->Xp", sp.winv.val, nb_j)
    lee_up = jet_einsum("k,ks->s", sp.lee, sp.ginv).val
    z_conn = -np.einsum(
        "Xuk,Xkup->Xp", sp.ginv.val, cp.gamma.val - background
    ) - lee_up
    if check:
        resid = max_abs(z - z_conn) / max(1.0, max_abs(z), max_abs(z_conn))
        if resid > tol:
            raise ConventionError(
                f"gauge vector field disagreement {resid:.3e}; "
                "upstream convention bug"
            )
    return GaugeFields(xjet, z, z_conn, background)


@dataclass
class FlowRhs:
    """Time derivatives of (g, J) plus the symplectic-form correction.

    ``c_term`` is assembled so that the time derivative of the Kaehler
    form equals ``-chern_ricci + c_term`` exactly for these rates.
    """

    dg_dt: np.ndarray
    dj_dt: np.ndarray
    c_term: np.ndarray
    gauged: bool
    ricci: np.ndarray
    chern_ricci: np.ndarray


def flow_rhs(
    gjet: TJet,
    Jjet: TJet,
    kappa: KappaSpec = ZERO_KAPPA,
    gauged: bool = False,
    background: Optional[np.ndarray] = None,
    freeze_metric: bool = False,
    enforce_type: bool = True,
    cp: Optional[CurvaturePack] = None,
) -> FlowRhs:
    """Evaluate the flow right-hand side on batched 2-jets of (g, J)."""
    if cp is None:
        cp = curvature_pack(structure_pack(gjet, Jjet))
    sp = cp.sp
    J = sp.J.val
    g = sp.g.val
    gi = sp.ginv.val

    dg_dt = np.zeros_like(g) if freeze_metric else -2.0 * cp.ricci
    if freeze_metric:
        main = cp.chern_ricci
    else:
        main = cp.chern_ricci - 2.0 * np.einsum("Xay,Xyv->Xav", J, cp.ricci)
    k_low = -_project_anti(main, J) + rhs_correction(
        cp, kappa, enforce_type=enforce_type
    )
    if gauged:
        gf = gauge_fields(cp, background, check=False)
        lxj = lie_derivative(sp.J, gf.x, "du")
        lxj_low = np.einsum("Xam,Xmv->Xav", lxj, g)
        if enforce_type:
            lxj_low = _project_anti(lxj_low, J)
        k_low = k_low + lxj_low
        dg_dt = dg_dt + lie_derivative(sp.g, gf.x, "dd")
    dj_dt = np.einsum("Xav,Xvc->Xac", k_low, gi)
    c_term = (
        np.einsum("Xam,Xmb->Xab", dj_dt, g)
        + np.einsum("Xam,Xmb->Xab", J, dg_dt)
        + cp.chern_ricci
    )
    return FlowRhs(dg_dt, dj_dt, c_term, gauged, cp.ricci, cp.chern_ricci)


def flow_rhs_at_jet(jet: StructureJet, **kw) -> FlowRhs:
    gjet, Jjet = jet.tjets()
    return flow_rhs(gjet, Jjet, **kw)


def flow_identity_residuals(
    jet: StructureJet,
    kappa: KappaSpec = ZERO_KAPPA,
    background: Optional[np.ndarray] = None,
) -> dict[str, float]:
    """Residuals of the flow-construction identity suite (stable ids)."""
    sp = pack_from_jet(jet)
    cp = curvature_pack(sp)
    g = sp.g.val
    gi = sp.ginv.val
    J = sp.J.val
    wi = sp.winv.val
    nij = sp.nij.val
    lee_up = lee_vector(sp)

    def rel(lhs, rhs, *scales):
        denom = max(1.0, max_abs(lhs), max_abs(rhs), *scales)
        return max_abs(np.asarray(lhs) - np.asarray(rhs)) / denom

    out = {}

    # Hessian-of-Lee operator against its Lie-derivative classification
    aop = lee_hessian_operator(cp)
    lg = lie_derivative(sp.g, lee_up, "dd")
    lg_anti = _project_anti(lg, J)
    nsum = np.einsum("Xd,Xdya->Xya", lee_up.val, nij) + np.einsum(
        "Xd,Xday->Xya", lee_up.val, nij
    )
    rhs = np.einsum("Xcy,Xya->Xac", wi, lg_anti) - 0.125 * np.einsum(
        "Xcy,Xya->Xac", wi, nsum
    )
    out["aop.classification"] = rel(0.5 * aop, rhs)

    # divergence operator: definition vs project-first form; dimension-4
    # triviality of the pure type
    bop = pure_divergence_operator(cp)
    out["bop.manipulated"] = rel(bop, pure_divergence_manipulated(cp))
    if sp.n == 4:
        scale = max(1.0, max_abs(sp.dw.val))
        out["bop.dim4_zero"] = max_abs(bop) / scale
        out["proj3.pure_dim4_zero"] = max_abs(pure_dw_jet(sp).val) / scale

    # correction term: skew and antiinvariant from the raw formula
    mho_raw = rhs_correction(cp, kappa, enforce_type=False, skip_pure_term=False)
    scale = max(1.0, max_abs(mho_raw))
    out["mho.skew"] = max_abs(mho_raw + mho_raw.swapaxes(-1, -2)) / scale
    out["mho.antiinvariant"] = max_abs(_project_inv(mho_raw, J)) / scale

    # Lie-derivative exchange between g and J along the Lee vector field
    lj = lie_derivative(sp.J, lee_up, "du")
    lj_low = np.einsum("Xam,Xmv->Xav", lj, g)
    out["dai.identity"] = rel(
        lg_anti, np.einsum("Xjb,Xib->Xij", J, 0.5 * (lj_low + lj_low.swapaxes(-1, -2)))
    )
    out["dai.lie_decomposition"] = rel(
        lj,
        np.einsum("Xcj,Xaj->Xac", wi, lg_anti)
        + np.einsum(
            "Xav,Xvc->Xac", 0.5 * (lj_low - lj_low.swapaxes(-1, -2)), gi
        ),
    )

    # gauge vector fields: definition vs connection-difference form, and
    # the resulting linear relation between z, x and the Lee vector
    gf = gauge_fields(cp, background, check=False)
    out["gauge.z_agreement"] = rel(gf.z, gf.z_connection)
    out["gauge.z_plus_x_plus_lee"] = rel(gf.z + gf.x.val, -lee_up.val)

    # structure preservation of the right-hand side, ungauged and gauged
    for tag, gauged in (("ungauged", False), ("gauged", True)):
        rhs_ = flow_rhs(
            *jet.tjets(), kappa=kappa, gauged=gauged, background=background, cp=cp
        )
        anti = np.einsum("Xib,Xba->Xia", rhs_.dj_dt, J) + np.einsum(
            "Xib,Xba->Xia", J, rhs_.dj_dt
        )
        scale = max(1.0, max_abs(rhs_.dj_dt))
        out[f"rhs.anticommutator.{tag}"] = max_abs(anti) / scale
        dg = rhs_.dg_dt
        dj_low = np.einsum("Xap,Xpv->Xav", rhs_.dj_dt, g)
        compat_dt = (
            dg
            - np.einsum("Xpq,Xap,Xbq->Xab", dg, J, J)
            - np.einsum("Xaq,Xbq->Xab", dj_low, J)
            - np.einsum("Xap,Xbp->Xab", J, dj_low)
        )
        out[f"rhs.compat_derivative.{tag}"] = max_abs(compat_dt) / max(
            1.0, max_abs(dg), max_abs(dj_low)
        )
        out[f"rhs.lowered_type.{tag}"] = max_abs(
            _project_inv(dj_low, J)
        ) / max(1.0, max_abs(dj_low))

    # symplectic-form rate: assembled c-term against its displayed form
    # (the Lie-skew term carries the sign fixed by the symbol suite)
    rhs_ = flow_rhs(*jet.tjets(), kappa=kappa, cp=cp)
    jric = np.einsum("Xay,Xyb->Xab", J, cp.ricci)
    lj_skew = 0.5 * (lj_low - lj_low.swapaxes(-1, -2))
    display = (
        _project_inv(cp.chern_ricci, J)
        - 2.0 * _project_inv(jric, J)
        + lj_skew
        + kappa.evaluate(sp)
    )
    if sp.n > 4:
        cov_p = _cov_pure_dw(cp)
        display = display + 2.0 * np.einsum("Xeb,Xbeav->Xav", gi, cov_p)
    out["cterm.display"] = rel(rhs_.c_term, display)

    # frozen-metric reduction, term by term
    froz = flow_rhs(*jet.tjets(), kappa=kappa, freeze_metric=True, cp=cp)
    display = -_project_anti(cp.chern_ricci, J) + lj_skew + kappa.evaluate(sp)
    if sp.n > 4:
        display = display + 2.0 * np.einsum("Xeb,Xbeav->Xav", gi, _cov_pure_dw(cp))
    out["frozen.reduction"] = rel(
        np.einsum("Xap,Xpv->Xav", froz.dj_dt, g), display
    )
    out["frozen.metric_rate_zero"] = max_abs(froz.dg_dt)
    return out
