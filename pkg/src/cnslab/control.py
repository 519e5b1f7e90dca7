"""Moment-method synthesis of boundary controls with duality verification.

Null control of the truncated dynamics reduces to the moment equations

    w_ch * conj(B* Phi_n) * integral_0^T p(t) e^{conj(nu_n)(T-t)} dt
        = -e^{conj(nu_n) T} <U0, Phi_n>_w

one per (mode, branch) in the truncation, with ``(T-t)**j`` kernels added by
generalized chains.  The synthesized control is the minimum-L2-norm element
of the span of the conjugate kernels: writing ``p = sum_j x_j conj(k_j)``
turns the constraints into the Hermitian Gram system ``G x = m`` solved by
truncated SVD, so the parabolic ill-conditioning is explicit in the
discarded singular values rather than hidden in a black-box solver.

Verification replays the duality identity mode by mode in closed form,
inside and beyond the synthesis truncation (terminal spill-over).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any

import mpmath
import numpy as np

from .errors import DomainError, InfeasibleRow, RankDeficient
from .evolution import ObservationChannel, boundary_control_weight, channel_dim_ok, observation_value
from .fields import NormSpec, SpectralField
from .kernels import KernelTerm, kernel_inner, poly_exp_integral_mp
from .spectrum import SpectrumSlice


@dataclass
class MomentRow:
    """One moment equation: kernel terms, target, and provenance."""

    n: int
    cluster_index: int
    level: int
    rate: complex  # conj of the eigenvalue
    kernel: list[KernelTerm]
    target: complex
    observation: complex  # B* applied to the level's vector

    def kernel_scale(self) -> float:
        return max(abs(t.coef) for t in self.kernel) if self.kernel else 0.0


@dataclass
class MomentSystem:
    channel: ObservationChannel
    horizon: float
    truncation: int
    rows: list[MomentRow]
    weight: float
    below_critical_time: bool
    rank_deficiency_groups: list[tuple[int, int]] = field(default_factory=list)

    @property
    def targets(self) -> np.ndarray:
        return np.array([r.target for r in self.rows])


def _mode_inner_products(U0: SpectralField, vectors, n: int, norm_spec: NormSpec) -> list[complex]:
    """<U0, v e^{inx}>_w for each basis vector v of mode n."""
    c_n = U0.coeff(n)
    w = np.asarray(norm_spec.weights)
    return [complex(2.0 * np.pi * np.sum(w * c_n * np.conj(v))) for v in vectors]


def build_moment_system(
    U0: SpectralField,
    channel: ObservationChannel,
    T: float,
    slice_: SpectrumSlice,
    N: int,
) -> MomentSystem:
    """Assemble the moment equations for all modes ``1 <= |n| <= N``.

    Rows with a vanishing observation are infeasible when their target is
    nonzero (the constructive face of a unique-continuation failure) and are
    rejected; proportional kernels across distinct rows (coincident
    eigenvalues across modes) are recorded as rank-deficiency groups.
    """
    if T <= 0:
        raise DomainError("horizon must be positive")
    if N > slice_.N:
        raise DomainError(f"slice covers |n| <= {slice_.N} < requested truncation {N}")
    if not channel_dim_ok(channel, slice_.dim):
        raise DomainError("temperature channel requires the three-field system")
    if np.any(U0.coeffs[U0.N] != 0.0):
        raise DomainError("moment targets require a mean-zero initial state")
    params = slice_.params
    w_ch = boundary_control_weight(channel, params)
    norm_spec = NormSpec.weighted_l2(params)
    rows: list[MomentRow] = []
    for n in sorted(k for k in slice_.modes if abs(k) <= N):
        mode = slice_.mode(n)
        for ci, cluster in enumerate(mode.clusters):
            vectors = cluster.vectors
            is_chain = cluster.chain is not None
            inner = _mode_inner_products(U0, vectors, n, norm_spec)
            obs = [observation_value(channel, v, n, params) for v in vectors]
            nu_bar = np.conj(cluster.value)
            phase = np.exp(nu_bar * T)
            for j in range(len(vectors)):
                if is_chain:
                    kernel = [
                        KernelTerm(
                            coef=w_ch * np.conj(obs[j - k]) / math.factorial(k),
                            rate=nu_bar,
                            degree=k,
                        )
                        for k in range(j + 1)
                    ]
                    target = -phase * sum(
                        (T**k / math.factorial(k)) * inner[j - k] for k in range(j + 1)
                    )
                else:
                    kernel = [KernelTerm(coef=w_ch * np.conj(obs[j]), rate=nu_bar, degree=0)]
                    target = -phase * inner[j]
                row = MomentRow(
                    n=n,
                    cluster_index=ci,
                    level=j if is_chain else 0,
                    rate=nu_bar,
                    kernel=kernel,
                    target=complex(target),
                    observation=obs[j],
                )
                if row.kernel_scale() == 0.0 and abs(row.target) > 0.0:
                    raise InfeasibleRow(
                        f"mode {n}: zero observation with nonzero target "
                        "(unique continuation fails on this datum)"
                    )
                rows.append(row)

    groups = []
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            a, b = rows[i], rows[j]
            if a.n == b.n:
                continue
            if a.rate == b.rate and a.level == 0 and b.level == 0 and len(a.kernel) == 1 and len(b.kernel) == 1:
                groups.append((i, j))
    return MomentSystem(
        channel=channel,
        horizon=T,
        truncation=N,
        rows=rows,
        weight=w_ch,
        below_critical_time=(T <= 2.0 * np.pi / params.u_bar),
        rank_deficiency_groups=groups,
    )


@dataclass
class ControlSolution:
    """Minimum-norm control in the span of the conjugate moment kernels.

    Coefficients are carried in extended precision: the Gram matrix of an
    exponential family is exponentially ill conditioned (the condensation
    phenomenon), so the minimum-norm representation has large, delicately
    cancelling coefficients even though the control function itself is tame.
    All closed-form identities downstream consume the extended coefficients.
    """

    system: MomentSystem
    coefficients: np.ndarray
    coefficients_mp: list
    residual: float
    control_norm: float
    svd_threshold: float
    discarded_singular_values: int
    singular_values: np.ndarray
    below_critical_time: bool
    solve_dps: int

    def __call__(self, t) -> np.ndarray:
        """Evaluate p(t) = sum_j x_j conj(k_j(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros(t.shape, dtype=complex)
        with mpmath.workdps(self.solve_dps):
            for i, ti in enumerate(t):
                s = mpmath.mpf(self.system.horizon) - mpmath.mpf(float(ti))
                acc = mpmath.mpc(0)
                for x, row in zip(self.coefficients_mp, self.system.rows):
                    if x == 0:
                        continue
                    for term in row.kernel:
                        acc += x * mpmath.conj(mpmath.mpc(term.coef)) * s**term.degree * mpmath.exp(
                            mpmath.conj(mpmath.mpc(term.rate)) * s
                        )
                out[i] = complex(acc)
        return out

    def moment_integral(self, degree: int, rate: complex):
        """integral_0^T p(t) (T-t)**degree e^{rate (T-t)} dt at solver precision.

        Returns an mpmath complex; callers combine it with other closed-form
        quantities before casting down.
        """
        total = mpmath.mpc(0)
        T = self.system.horizon
        for x, row in zip(self.coefficients_mp, self.system.rows):
            if x == 0:
                continue
            row_total = mpmath.mpc(0)
            for term in row.kernel:
                z = mpmath.conj(mpmath.mpc(term.rate)) + mpmath.mpc(rate)
                row_total += mpmath.conj(mpmath.mpc(term.coef)) * poly_exp_integral_mp(
                    term.degree + degree, z, T
                )
            total += x * row_total
        return total


def gram_matrix(system: MomentSystem) -> np.ndarray:
    """Double-precision Gram of the moment kernels (diagnostic view)."""
    m = len(system.rows)
    G = np.zeros((m, m), dtype=complex)
    for i in range(m):
        for j in range(i, m):
            G[i, j] = kernel_inner(system.rows[i].kernel, system.rows[j].kernel, system.horizon)
            if j != i:
                G[j, i] = np.conj(G[i, j])
    return G


def _gram_mp(system: MomentSystem) -> "mpmath.matrix":
    m = len(system.rows)
    G = mpmath.matrix(m, m)
    T = system.horizon
    for i in range(m):
        for j in range(i, m):
            total = mpmath.mpc(0)
            for a in system.rows[i].kernel:
                for b in system.rows[j].kernel:
                    z = mpmath.mpc(a.rate) + mpmath.conj(mpmath.mpc(b.rate))
                    total += mpmath.mpc(a.coef) * mpmath.conj(mpmath.mpc(b.coef)) * poly_exp_integral_mp(
                        a.degree + b.degree, z, T
                    )
            G[i, j] = total
            if j != i:
                G[j, i] = mpmath.conj(total)
    return G


def _targets_mp(system: MomentSystem) -> list:
    """Double targets promoted as exact inputs of the extended solve."""
    return [mpmath.mpc(row.target) for row in system.rows]


def _duplicate_row_structure(system: MomentSystem) -> tuple[list[int], list[tuple[int, int]], list[tuple[int, int, complex]]]:
    """Split rows into kept and dropped-by-proportionality, with constants.

    Two single-term rows with equal rates have proportional kernels; the
    later one is redundant when its target matches the proportionality
    constant and contradictory otherwise.
    """
    keep: list[int] = []
    inconsistent: list[tuple[int, int]] = []
    dropped: list[tuple[int, int, complex]] = []
    for j, row in enumerate(system.rows):
        duplicate_of = None
        for i in keep:
            base = system.rows[i]
            if (
                len(base.kernel) == 1
                and len(row.kernel) == 1
                and abs(base.rate - row.rate) <= 1e-12 * max(1.0, abs(base.rate))
            ):
                duplicate_of = i
                break
        if duplicate_of is None:
            keep.append(j)
            continue
        base = system.rows[duplicate_of]
        c = row.kernel[0].coef / base.kernel[0].coef
        scale = max(abs(row.target), abs(base.target), 1e-300)
        if abs(row.target - c * base.target) <= 1e-8 * scale:
            dropped.append((j, duplicate_of, c))
        else:
            inconsistent.append((duplicate_of, j))
    return keep, inconsistent, dropped


def synthesize_control(system: MomentSystem, svd_threshold: float = 1e-12) -> ControlSolution:
    """Minimum-norm solve of the Gram-projected moment system.

    Structurally proportional rows are deduplicated first: contradictory
    targets on a shared kernel direction are exactly the unique-continuation
    obstruction and raise :class:`RankDeficient`.  The remaining Hermitian
    system is solved at adaptive extended precision (LU with iterated digit
    doubling) so that the reported residual reflects the moment equations,
    not the working precision; singular values below ``svd_threshold`` of
    the largest are reported, never silently inverted in double precision.
    """
    if len(system.rows) == 0:
        return ControlSolution(
            system=system,
            coefficients=np.zeros(0, dtype=complex),
            coefficients_mp=[],
            residual=0.0,
            control_norm=0.0,
            svd_threshold=svd_threshold,
            discarded_singular_values=0,
            singular_values=np.zeros(0),
            below_critical_time=system.below_critical_time,
            solve_dps=15,
        )
    keep, inconsistent, dropped = _duplicate_row_structure(system)
    if inconsistent:
        raise RankDeficient(
            "proportional moment kernels with contradictory targets "
            f"(unique continuation obstruction): row pairs {inconsistent}",
            rows=inconsistent,
        )

    G_d = gram_matrix(system)
    G_keep = G_d[np.ix_(keep, keep)]
    diag = np.sqrt(np.maximum(np.real(np.diag(G_keep)), 1e-300))
    svals = np.linalg.svd(G_keep / np.outer(diag, diag), compute_uv=False)
    n_below = int(np.sum(svals <= svd_threshold * svals[0]))

    m_all = system.targets
    target_norm = float(np.linalg.norm(m_all))
    if target_norm == 0.0:
        x = np.zeros(len(system.rows), dtype=complex)
        return ControlSolution(
            system=system,
            coefficients=x,
            coefficients_mp=[mpmath.mpc(0)] * len(system.rows),
            residual=0.0,
            control_norm=0.0,
            svd_threshold=svd_threshold,
            discarded_singular_values=n_below,
            singular_values=svals,
            below_critical_time=system.below_critical_time,
            solve_dps=15,
        )

    last = None
    for dps in (40, 80, 160, 320):
        with mpmath.workdps(dps):
            sub = MomentSystem(
                channel=system.channel,
                horizon=system.horizon,
                truncation=system.truncation,
                rows=[system.rows[i] for i in keep],
                weight=system.weight,
                below_critical_time=system.below_critical_time,
            )
            G = _gram_mp(sub)
            rhs = mpmath.matrix(_targets_mp(sub))
            try:
                x_mp = mpmath.lu_solve(G, rhs)
            except (ZeroDivisionError, ValueError):
                x_mp = None
            if x_mp is None:
                continue
            Gx = G * x_mp
            r = Gx - rhs
            rhs_norm = mpmath.norm(rhs)
            res = float(mpmath.norm(r) / rhs_norm) if rhs_norm > 0 else float(mpmath.norm(r))
            norm_sq = mpmath.re(mpmath.fsum(mpmath.conj(x_mp[i]) * Gx[i] for i in range(len(x_mp))))
            last = (dps, [mpmath.mpc(v) for v in x_mp], res, float(mpmath.sqrt(abs(norm_sq))))
            if res <= 1e-12:
                break
    if last is None:
        raise RankDeficient(
            f"Gram system unsolvable at extended precision; {n_below} singular values "
            f"below {svd_threshold:g} of the largest",
            rows=system.rank_deficiency_groups,
        )
    dps, x_keep_mp, residual, control_norm = last

    x_mp_full = [mpmath.mpc(0)] * len(system.rows)
    for idx, i in enumerate(keep):
        x_mp_full[i] = x_keep_mp[idx]
    # Redundant rows keep zero coefficients; their constraints are implied.
    x = np.array([complex(v) for v in x_mp_full])
    return ControlSolution(
        system=system,
        coefficients=x,
        coefficients_mp=x_mp_full,
        residual=residual,
        control_norm=control_norm,
        svd_threshold=svd_threshold,
        discarded_singular_values=n_below + len(dropped),
        singular_values=svals,
        below_critical_time=system.below_critical_time,
        solve_dps=dps,
    )


@dataclass
class VerificationRecord:
    in_truncation_residual: float
    spillover: dict[int, float]
    per_row_residuals: dict[tuple[int, int, int], float]
    control_norm: float
    rank: int
    discarded_singular_values: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "in_trunc_residual": self.in_truncation_residual,
            "spillover": {str(k): v for k, v in sorted(self.spillover.items())},
            "control_norm": self.control_norm,
            "rank": self.rank,
            "discarded_svals": self.discarded_singular_values,
        }


def verify_terminal(
    U0: SpectralField,
    solution: ControlSolution,
    system: MomentSystem,
    slice_: SpectrumSlice,
    N_verify: int,
) -> VerificationRecord:
    """Replay the duality identity on a strict superset of the truncation.

    For every basis element of every mode ``|n| <= N_verify`` the terminal
    pairing ``<U(T), Psi>`` is evaluated in closed form; rows inside the
    truncation contribute to the (relative) in-truncation residual, rows
    beyond it are reported as spill-over magnitudes.
    """
    if N_verify < system.truncation:
        raise DomainError("verification window must cover the synthesis truncation")
    if N_verify > slice_.N:
        raise DomainError(f"slice covers |n| <= {slice_.N} < requested window {N_verify}")
    params = slice_.params
    w_ch = system.weight
    norm_spec = NormSpec.weighted_l2(params)
    channel = system.channel
    T = system.horizon

    per_row: dict[tuple[int, int, int], float] = {}
    spill: dict[int, float] = {}
    in_trunc_sq = 0.0
    target_sq = 0.0
    with mpmath.workdps(solution.solve_dps):
        for n in sorted(k for k in slice_.modes if abs(k) <= N_verify):
            mode = slice_.mode(n)
            for ci, cluster in enumerate(mode.clusters):
                vectors = cluster.vectors
                is_chain = cluster.chain is not None
                inner = _mode_inner_products(U0, vectors, n, norm_spec)
                obs = [observation_value(channel, v, n, params) for v in vectors]
                nu_bar = np.conj(cluster.value)
                phase = np.exp(nu_bar * T)
                for j in range(len(vectors)):
                    if is_chain:
                        free = phase * sum((T**k / math.factorial(k)) * inner[j - k] for k in range(j + 1))
                        forced = mpmath.fsum(
                            mpmath.mpc(w_ch * np.conj(obs[j - k]) / math.factorial(k))
                            * solution.moment_integral(k, nu_bar)
                            for k in range(j + 1)
                        )
                    else:
                        free = phase * inner[j]
                        forced = mpmath.mpc(w_ch * np.conj(obs[j])) * solution.moment_integral(0, nu_bar)
                    terminal_pairing = complex(mpmath.mpc(free) + forced)
                    per_row[(n, ci, j)] = abs(terminal_pairing)
                    if abs(n) <= system.truncation:
                        in_trunc_sq += abs(terminal_pairing) ** 2
                        target_sq += abs(free) ** 2
                    else:
                        spill[n] = max(spill.get(n, 0.0), abs(terminal_pairing))

    scale = math.sqrt(target_sq) if target_sq > 0 else 1.0
    return VerificationRecord(
        in_truncation_residual=math.sqrt(in_trunc_sq) / scale,
        spillover=spill,
        per_row_residuals=per_row,
        control_norm=solution.control_norm,
        rank=len(system.rows) - solution.discarded_singular_values,
        discarded_singular_values=solution.discarded_singular_values,
    )


def export_control_csv(solution: ControlSolution, grid: np.ndarray, path) -> None:
    """Write ``t,p`` on a uniform grid; complex controls carry both parts."""
    values = solution(grid)
    imag_scale = float(np.max(np.abs(values.imag))) if len(grid) else 0.0
    real_scale = max(float(np.max(np.abs(values.real))) if len(grid) else 0.0, 1e-300)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if imag_scale <= 1e-12 * real_scale:
            writer.writerow(["t", "p"])
            for t, v in zip(grid, values):
                writer.writerow([format(float(t), ".17g"), format(v.real, ".17g")])
        else:
            writer.writerow(["t", "re_p", "im_p"])
            for t, v in zip(grid, values):
                writer.writerow([format(float(t), ".17g"), format(v.real, ".17g"), format(v.imag, ".17g")])
