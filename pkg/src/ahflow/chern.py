"""Connections, curvature tensors and their identity suite.

Curvature sign convention, pinned by the identity suite below:
``R(e_i, e_j) e_k = R^s_ijk e_s`` with
``R^s_ijk = d_i C^s_jk - d_j C^s_ik + C^s_iu C^u_jk - C^s_ju C^u_ik``
for a connection ``nabla_i e_j = C^s_ij e_s`` (coefficients stored
``[i, j, s]``), lowered as ``R_ijkl = R^s_ijk g_sl``.  The Ricci tensor
is ``Rc_jk = g^il R_ijkl``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jets import StructureJet, TJet, jet_einsum, jet_unary
from .structures import StructurePack, pack_from_jet
from .tensors import max_abs

_SLOT = "ijklpq"


class ConventionError(RuntimeError):
    """A construction failed its defining residual check."""


def covariant_derivative(t: TJet, coeffs: np.ndarray, variance: str) -> np.ndarray:
    """Covariant derivative of a tensor field, direction axis first.

    ``coeffs[x, i, j, s]`` are the connection coefficients; ``variance``
    holds one ``'d'``/``'u'`` flag per index slot of ``t``.  Returns a
    plain array ``out[x, m, ...] = (nabla_m t)[...]``.
    """
    if t.order < 1:
        raise ValueError("covariant derivative needs at least a 1-jet")
    letters = _SLOT[: len(variance)]
    out = t.d.copy()
    for m, v in enumerate(variance):
        src = letters[m]
        inner = letters[:m] + "s" + letters[m + 1 :]
        if v == "d":
            out -= np.einsum(f"Xm{src}s,X{inner}->Xm{letters}", coeffs, t.val)
        else:
            out += np.einsum(f"Xms{src},X{inner}->Xm{letters}", coeffs, t.val)
    return out


def christoffel_jet(gjet: TJet, ginv: TJet) -> TJet:
    """Levi-Civita coefficients (1-jet), stored ``[i, j, s]``."""
    from .jets import partial_jet

    dg = partial_jet(gjet)  # [p, a, b] = d_p g_ab
    t1 = jet_unary("ilj->ijl", dg)  # d_i g_lj
    t2 = jet_unary("jli->ijl", dg)  # d_j g_li
    t3 = jet_unary("lij->ijl", dg)  # d_l g_ij
    return 0.5 * jet_einsum("sl,ijl->ijs", ginv, t1 + t2 - t3)


def chern_coeffs_jet(gamma: TJet, cont: TJet, ginv: TJet) -> TJet:
    """Chern coefficients: Levi-Civita minus the raised contorsion."""
    return gamma - jet_einsum("ijk,ks->ijs", cont, ginv)


def curvature_from_coeffs(coeffs: TJet, g: np.ndarray) -> np.ndarray:
    """Lowered curvature tensor R_ijkl of a connection (batched array)."""
    dc = coeffs.d  # [x, i, j, k, s] = d_i C^s_jk
    lin = dc - dc.transpose(0, 2, 1, 3, 4)
    quad = np.einsum("Xius,Xjku->Xijks", coeffs.val, coeffs.val)
    r_up = lin + quad - quad.transpose(0, 2, 1, 3, 4)
    return np.einsum("Xijks,Xsl->Xijkl", r_up, g)


@dataclass
class CurvaturePack:
    """Everything second-order for one structure.

    ``rm``/``om`` are the lowered Levi-Civita and Chern curvature
    tensors; ``ricci`` the Riemannian Ricci tensor, ``chern_ricci`` the
    Kaehler-form trace of ``om``, ``vtrace`` its first-slot metric trace
    and ``chern_scalar`` the form trace of ``chern_ricci``.  ``tau`` is
    the lowered Chern torsion.
    """

    sp: StructurePack
    gamma: TJet
    ups: TJet
    tau: TJet
    rm: np.ndarray
    om: np.ndarray
    ricci: np.ndarray
    chern_ricci: np.ndarray
    vtrace: np.ndarray
    chern_scalar: np.ndarray
    cov_cont: np.ndarray
    cov_lee: np.ndarray

    @property
    def cont_up(self) -> np.ndarray:
        return np.einsum("Xijl,Xls->Xijs", self.sp.cont.val, self.sp.ginv.val)

    @property
    def tau_up(self) -> np.ndarray:
        return np.einsum("Xijl,Xls->Xijs", self.tau.val, self.sp.ginv.val)


def curvature_pack(sp: StructurePack) -> CurvaturePack:
    gamma = christoffel_jet(sp.g, sp.ginv)
    ups = chern_coeffs_jet(gamma, sp.cont, sp.ginv)
    tau = jet_unary("jik->ijk", sp.cont) - sp.cont
    rm = curvature_from_coeffs(gamma, sp.g.val)
    om = curvature_from_coeffs(ups, sp.g.val)
    ricci = np.einsum("Xil,Xijkl->Xjk", sp.ginv.val, rm)
    chern_ricci = np.einsum("Xcd,Xabcd->Xab", sp.winv.val, om)
    vtrace = np.einsum("Xre,Xrjke->Xjk", sp.ginv.val, om)
    chern_scalar = np.einsum("Xba,Xab->X", sp.winv.val, chern_ricci)
    cov_cont = covariant_derivative(sp.cont, ups.val, "ddd")
    cov_lee = covariant_derivative(sp.lee, ups.val, "d")
    return CurvaturePack(
        sp, gamma, ups, tau, rm, om, ricci, chern_ricci, vtrace,
        chern_scalar, cov_cont, cov_lee,
    )


def curvature_pack_from_jet(jet: StructureJet, **kw) -> CurvaturePack:
    return curvature_pack(pack_from_jet(jet, **kw))


def _rel(lhs, rhs, *scales) -> float:
    denom = max(1.0, max_abs(lhs), max_abs(rhs), *scales)
    return max_abs(np.asarray(lhs) - np.asarray(rhs)) / denom


def characterization_residuals(cp: CurvaturePack) -> dict[str, float]:
    """Defining residuals of the Chern connection: metric and complex
    structure parallel, torsion with no (1,1) part."""
    sp = cp.sp
    scale = max(1.0, max_abs(cp.ups.val), max_abs(sp.g.d))
    cov_g = covariant_derivative(sp.g, cp.ups.val, "dd")
    cov_j = covariant_derivative(sp.J, cp.ups.val, "du")
    tau = cp.tau.val
    tau11 = 0.5 * (
        tau + np.einsum("Xia,Xjb,Xabk->Xijk", sp.J.val, sp.J.val, tau)
    )
    return {
        "chern.metric_parallel": max_abs(cov_g) / scale,
        "chern.complex_parallel": max_abs(cov_j) / scale,
        "chern.torsion_type11": max_abs(tau11) / scale,
    }


@dataclass(frozen=True)
class ConnectionCoeffs:
    """Point-level connection data: coefficients and their partials."""

    kind: str
    coeffs: np.ndarray  # [i, j, s]
    dcoeffs: np.ndarray  # [m, i, j, s] = d_m coeffs

    def as_tjet(self) -> TJet:
        return TJet(self.coeffs[None], self.dcoeffs[None])


def levi_civita_connection(jet: StructureJet) -> ConnectionCoeffs:
    sp = pack_from_jet(jet)
    gamma = christoffel_jet(sp.g, sp.ginv)
    return ConnectionCoeffs("levi_civita", gamma.val[0], gamma.d[0])


def chern_connection(
    jet: StructureJet, check: bool = True, tol: float = 1e-10
) -> ConnectionCoeffs:
    """Chern connection coefficients; validates its characterization."""
    cp = curvature_pack_from_jet(jet)
    if check:
        res = characterization_residuals(cp)
        worst = max(res.values())
        if worst > tol:
            raise ConventionError(
                f"Chern characterization violated ({res}); "
                "upstream convention bug"
            )
    return ConnectionCoeffs("chern", cp.ups.val[0], cp.ups.d[0])


def curvature_tensor(conn: ConnectionCoeffs, g0: np.ndarray) -> np.ndarray:
    """Lowered curvature of a point-level connection."""
    return curvature_from_coeffs(conn.as_tjet(), g0[None])[0]


def exchange_gap(om: np.ndarray) -> np.ndarray:
    """Asymmetry of the Chern curvature under swapping its index pairs."""
    return om - om.transpose(0, 3, 4, 1, 2)


def curvature_identity_residuals(cp: CurvaturePack) -> dict[str, float]:
    """Residuals of the curvature identity suite (stable row ids)."""
    sp = cp.sp
    g = sp.g.val
    gi = sp.ginv.val
    J = sp.J.val
    wi = sp.winv.val
    ct = sp.cont.val
    lee = sp.lee.val
    rm, om = cp.rm, cp.om
    tau = cp.tau.val
    ct_up = cp.cont_up
    tau_up = cp.tau_up
    cov_ct = cp.cov_cont  # [b, i, j, k] = nabla_b cont_ijk
    cov_lee = cp.cov_lee  # [b, k] = nabla_b lee_k

    out = {}
    out.update(characterization_residuals(cp))
    out["chern.torsion_from_contorsion"] = _rel(
        tau, np.einsum("Xjik->Xijk", ct) - ct
    )

    # Levi-Civita basics
    out["lc.metricity"] = max_abs(
        covariant_derivative(sp.g, cp.gamma.val, "dd")
    ) / max(1.0, max_abs(cp.gamma.val))
    out["lc.torsion_free"] = max_abs(
        cp.gamma.val - cp.gamma.val.transpose(0, 2, 1, 3)
    ) / max(1.0, max_abs(cp.gamma.val))

    # Riemann symmetries
    out["rm.skew_12"] = _rel(rm, -rm.transpose(0, 2, 1, 3, 4))
    out["rm.skew_34"] = _rel(rm, -rm.transpose(0, 1, 2, 4, 3))
    out["rm.pair_symmetry"] = _rel(rm, rm.transpose(0, 3, 4, 1, 2))
    out["rm.first_bianchi"] = _rel(
        rm + rm.transpose(0, 2, 3, 1, 4) + rm.transpose(0, 3, 1, 2, 4), 0.0 * rm
    )

    # Chern curvature symmetries
    out["om.skew_12"] = _rel(om, -om.transpose(0, 2, 1, 3, 4))
    out["om.skew_34"] = _rel(om, -om.transpose(0, 1, 2, 4, 3))
    out["om.j_invariance"] = _rel(
        om, np.einsum("Xijab,Xka,Xlb->Xijkl", om, J, J)
    )

    # Riemann vs Chern curvature with contorsion corrections;
    # cov_ct[x, i, j, k, l] = nabla_i cont_jkl
    dterm = cov_ct - cov_ct.transpose(0, 2, 1, 3, 4)
    q1 = np.einsum("Xisl,Xjks->Xijkl", ct, ct_up)
    q3 = np.einsum("Xijs,Xskl->Xijkl", tau_up, ct)
    rhs = om + dterm + q1 - q1.transpose(0, 2, 1, 3, 4) + q3
    out["rm.vs_chern"] = _rel(rm, rhs)

    # Ricci traces
    out["ricci.symmetric"] = _rel(cp.ricci, cp.ricci.swapaxes(-1, -2))
    out["chern_ricci.skew"] = _rel(cp.chern_ricci, -cp.chern_ricci.swapaxes(-1, -2))
    # twisting the traced slots leaves the form trace unchanged (the
    # last curvature symmetry combined with invariance of the inverse
    # Kaehler form); invariance in the FREE pair is false generically
    out["chern_ricci.trace_twist"] = _rel(
        cp.chern_ricci,
        np.einsum("Xcd,Xcu,Xdv,Xabuv->Xab", wi, J, J, om),
    )

    # Ricci against the first-slot Chern trace
    rhs = (
        cp.vtrace
        + np.einsum("Xil,Xijkl->Xjk", gi, cov_ct)
        - cov_lee
        + np.einsum("Xs,Xjks->Xjk", lee, ct_up)
        - np.einsum("Xijs,Xski->Xjk", ct_up, ct_up)
    )
    out["ricci.vs_vtrace"] = _rel(cp.ricci, rhs)

    # first Bianchi identity for the Chern connection with torsion terms
    cov_tau = covariant_derivative(cp.tau, cp.ups.val, "ddd")
    lhs = om + om.transpose(0, 2, 3, 1, 4) + om.transpose(0, 3, 1, 2, 4)
    rhs = (
        cov_tau
        + cov_tau.transpose(0, 2, 3, 1, 4)
        + cov_tau.transpose(0, 3, 1, 2, 4)
        + np.einsum("Xjks,Xsil->Xijkl", tau_up, tau)
        + np.einsum("Xkis,Xsjl->Xijkl", tau_up, tau)
        + np.einsum("Xijs,Xskl->Xijkl", tau_up, tau)
    )
    out["chern.first_bianchi_torsion"] = _rel(lhs, rhs)

    # pair-exchange gap of the Chern curvature vs its contorsion expansion
    tgap = exchange_gap(om)
    nab = cov_ct  # [x, a, b, c, d] = nabla_a cont_bcd
    expansion = (
        nab - nab.transpose(0, 2, 1, 3, 4)  # nabla_i Q_jkl - nabla_j Q_ikl
        - np.einsum("Xklij->Xijkl", nab)  # - nabla_k Q_lij
        + np.einsum("Xlkij->Xijkl", nab)  # + nabla_l Q_kij
        + np.einsum("Xisl,Xjks->Xijkl", ct, ct_up)
        - np.einsum("Xksj,Xlis->Xijkl", ct, ct_up)
        - np.einsum("Xjsl,Xiks->Xijkl", ct, ct_up)
        + np.einsum("Xlsj,Xkis->Xijkl", ct, ct_up)
        + np.einsum("Xijs,Xskl->Xijkl", tau_up, ct)
        - np.einsum("Xkls,Xsij->Xijkl", tau_up, ct)
    )
    out["exchange_gap.expansion"] = _rel(
        tgap.transpose(0, 3, 4, 1, 2), expansion
    )
    out["exchange_gap.skew_12"] = _rel(tgap, -tgap.transpose(0, 2, 1, 3, 4))
    out["exchange_gap.skew_34"] = _rel(tgap, -tgap.transpose(0, 1, 2, 4, 3))

    # first-slot trace against Kaehler-form trace of the Chern curvature
    d1 = ct_up - ct_up.transpose(0, 2, 1, 3)  # [a, r, s] -> Θ_ar^s - Θ_ra^s
    rhs = (
        0.5 * np.einsum("Xka,Xja->Xjk", J, cp.chern_ricci)
        + np.einsum("Xka,Xbr,Xbjar->Xjk", J, wi, cov_ct)
        + 0.5 * cov_lee
        + 0.5 * np.einsum("Xka,Xju,Xau->Xjk", J, J, cov_lee)
        + np.einsum("Xka,Xbr,Xars,Xjbs->Xjk", J, wi, d1, ct)
        + np.einsum("Xka,Xbr,Xjbs,Xsar->Xjk", J, wi, d1, ct)
        + 0.5 * np.einsum("Xka,Xsp,Xp,Xjas->Xjk", J, J, lee, d1)
    )
    out["vtrace.vs_chern_ricci"] = _rel(cp.vtrace, rhs)

    # full Ricci vs Chern-Ricci comparison
    rhs = (
        0.5 * np.einsum("Xka,Xja->Xjk", J, cp.chern_ricci)
        - 0.5 * cov_lee
        + 0.5 * np.einsum("Xka,Xju,Xau->Xjk", J, J, cov_lee)
        + np.einsum("Xil,Xijkl->Xjk", gi, cov_ct)
        + np.einsum("Xka,Xbr,Xbjar->Xjk", J, wi, cov_ct)
        + np.einsum("Xka,Xbr,Xars,Xjbs->Xjk", J, wi, d1, ct)
        + np.einsum("Xka,Xbr,Xjbs,Xsar->Xjk", J, wi, d1, ct)
        + 0.5 * np.einsum("Xka,Xsp,Xp,Xjas->Xjk", J, J, lee, d1)
        + np.einsum("Xs,Xjks->Xjk", lee, ct_up)
        - np.einsum("Xijs,Xski->Xjk", ct_up, ct_up)
    )
    out["ricci.vs_chern_ricci_full"] = _rel(cp.ricci, rhs)
    return out


def lower_order_remainder(cp: CurvaturePack) -> np.ndarray:
    """Difference between the Ricci / Chern-Ricci comparison and its
    second-derivative normal form.

    The result depends only on the value and first-partial data of
    (g, J): structures sharing that data give identical output.
    """
    sp = cp.sp
    gi = sp.ginv.val
    J = sp.J.val
    cov_nij = covariant_derivative(sp.nij, cp.ups.val, "ddd")
    m = jet_einsum("er,jkr->ejk", sp.J, sp.dw) + jet_einsum(
        "ka,jae->ejk", sp.J, sp.dw
    )
    cov_m = covariant_derivative(m, cp.ups.val, "ddd")
    second = (
        0.25 * np.einsum("Xlb,Xbklj->Xjk", gi, cov_nij)
        - 0.5 * cp.cov_lee
        + 0.5 * np.einsum("Xka,Xjy,Xay->Xjk", J, J, cp.cov_lee)
        - 0.5 * np.einsum("Xeb,Xbejk->Xjk", gi, cov_m)
    )
    lhs = cp.ricci - 0.5 * np.einsum("Xka,Xja->Xjk", J, cp.chern_ricci)
    return lhs - second


def second_order_isolation(
    jet_a: StructureJet, jet_b: StructureJet, tol_low: float = 1e-13
) -> float:
    """Relative difference of the lower-order remainder for two jets
    sharing value and first-partial data (error if they do not)."""
    for name in ("g0", "dg", "J0", "dJ"):
        da = getattr(jet_a, name)
        db = getattr(jet_b, name)
        if max_abs(da - db) > tol_low:
            raise ValueError(f"jets disagree at low order in {name}")
    ra = lower_order_remainder(curvature_pack_from_jet(jet_a))
    rb = lower_order_remainder(curvature_pack_from_jet(jet_b))
    return _rel(ra, rb)
