"""Axisymmetric scalar finite-difference frequency-domain eigenmode solver
for whispering-gallery modes of a thin dielectric disk.

The field ansatz is psi(rho, z) * exp(i m phi). With the substitution
u = psi * sqrt(rho) the scalar Helmholtz equation becomes

    u_rr + u_zz + [k^2 n^2(rho, z) - (m^2 - 1/4) / rho^2] u = 0,

a 2D eigenproblem in k^2 solved on a uniform (rho, z) grid with a
quadratic-profile PML on the outer rho and z boundaries (complex
coordinate stretching) and a symmetry plane at z = 0 (even vertical
modes; the 250 nm stack is single-moded for the symmetric family).

TE-like modes (dominant in-plane E) use the plain scalar operator; the
scalar is exactly the tangential-continuity slab field in z. TM-like
modes (dominant E_z) use the flux-form vertical derivative
n^2 d/dz (1/n^2 du/dz), which reproduces the TM slab dispersion.

Radiation Q comes from the complex eigenfrequency, Q = Re k / (2 |Im k|),
trustworthy to order of magnitude above ~1e7 and clamped at a numerical
ceiling where PML/discretization noise dominates.
"""

from __future__ import annotations

import concurrent.futures
import csv
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.signal import find_peaks

from .core import C_VACUUM, DiskGeometry, MaterialStack, ModeId, Polarization, WavelengthBand
from . import slab

__all__ = [
    "ConvergenceError",
    "OutOfGridError",
    "ContractViolationError",
    "SolverOptions",
    "FieldMap",
    "ModeSolution",
    "RadiationQ",
    "solve_modes",
    "compute_veff",
    "surface_energy_fraction",
    "field_at",
    "radiation_q",
    "radiation_q_sweep",
    "evanescent_decay_length_nm",
    "write_field_csv",
    "write_field_binary",
    "read_field_binary",
]

# Numerical ceiling on radiation-Q extraction: beyond this the imaginary
# part of the eigenvalue is dominated by PML/discretization noise.
Q_CEILING = 1.0e10

FIELD_MAGIC = b"WG"
FIELD_VERSION = 1
_HEADER_STRUCT = struct.Struct("<2sHHHff")  # magic, version, n_rho, n_z, drho_nm, dz_nm


class ConvergenceError(RuntimeError):
    """Grid refinement failed to settle the resonance wavelength.

    Carries the last two wavelength estimates (nm) so callers can see how
    far apart the refinements still are.
    """

    def __init__(self, message: str, estimates_nm: tuple[float, float]):
        super().__init__(message)
        self.estimates_nm = estimates_nm


class OutOfGridError(ValueError):
    """Requested position lies outside the stored field map."""


class ContractViolationError(ValueError):
    """A precondition on a mode object was violated (e.g. unnormalized field)."""


@dataclass(frozen=True)
class SolverOptions:
    """Discretization and boundary parameters for the eigensolver.

    grid_step_nm is the uniform (rho, z) spacing. The cladding margin is
    the physical air gap retained around the disk before the PML starts;
    the public field map covers exactly disk + cladding margin.
    """

    grid_step_nm: float = 10.0
    cladding_margin_um: float = 2.0
    pml_thickness_um: float = 1.0
    pml_sigma_max: float = 4.0
    inner_margin_um: float = 2.5
    n_eigenvalues: int = 6
    verify_convergence: bool = True
    max_refinements: int = 1
    convergence_tol_nm: float = 0.1

    def __post_init__(self) -> None:
        if self.grid_step_nm <= 0:
            raise ValueError("grid step must be positive")
        if self.cladding_margin_um < 2.0:
            raise ValueError("cladding margin must be >= 2 um (field-map contract)")
        if self.pml_thickness_um < 0.5:
            raise ValueError("PML thinner than 0.5 um is unreliable")


@dataclass
class FieldMap:
    """Scalar mode field sampled on a regular (rho, z) lattice.

    values[i, j] is the complex field at rho = rho_start_m + i*drho_m,
    z = z_start_m + j*dz_m. n holds the refractive index on the same
    lattice. The map covers the disk plus the full cladding margin in
    both directions (PML region excluded). `normalized` asserts that
    max |values| == 1; consumers that integrate energy densities require
    it.
    """

    values: np.ndarray
    n: np.ndarray
    rho_start_m: float
    z_start_m: float
    drho_m: float
    dz_m: float
    normalized: bool = False

    @property
    def rho_m(self) -> np.ndarray:
        return self.rho_start_m + self.drho_m * np.arange(self.values.shape[0])

    @property
    def z_m(self) -> np.ndarray:
        return self.z_start_m + self.dz_m * np.arange(self.values.shape[1])


@dataclass
class ModeSolution:
    """One converged whispering-gallery eigenmode."""

    id: ModeId
    lambda0_nm: float
    q_rad: float
    q_rad_at_ceiling: bool
    field: FieldMap
    veff_m3: float
    veff_lambda_n3: float
    gamma_prime_per_nm: float
    geometry: DiskGeometry
    materials: MaterialStack
    eigen_k_per_m: complex = 0.0 + 0.0j
    grid_step_nm: float = 0.0

    def __str__(self) -> str:
        q = f">{self.q_rad:.1e}" if self.q_rad_at_ceiling else f"{self.q_rad:.2e}"
        return (
            f"{self.id}: lambda0 = {self.lambda0_nm:.3f} nm, Q_rad = {q}, "
            f"V_eff = {self.veff_lambda_n3:.1f} (lambda/n)^3, "
            f"Gamma' = {self.gamma_prime_per_nm:.2e} /nm"
        )


@dataclass(frozen=True)
class RadiationQ:
    """Radiation-limited Q, possibly clamped at the numerical ceiling."""

    value: float
    at_ceiling: bool
    ceiling: float = Q_CEILING


# ---------------------------------------------------------------------------
# Grid construction and operator assembly
# ---------------------------------------------------------------------------


@dataclass
class _Grid:
    h: float  # spacing (m)
    rho: np.ndarray  # node coordinates, rho[0] > 0
    z: np.ndarray  # node coordinates, z[0] = 0 (symmetry plane)
    eps: np.ndarray  # cell-averaged permittivity, shape (n_rho, n_z)
    pml_rho_start: float
    pml_z_start: float
    pml_l: float
    sigma_max: float

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rho.size, self.z.size)


def snapped_grid_step_m(geom: DiskGeometry, requested_nm: float) -> float:
    """Largest step <= requested that divides the half-thickness.

    Keeping the slab interface exactly on grid nodes at every resolution
    (including the halved verification grid) removes the sub-cell
    alignment noise that would otherwise dominate the grid-refinement
    Cauchy test. For integer-micron disks on standard film thicknesses
    the rim lands on a node too.
    """
    t2 = geom.thickness_m / 2.0
    n = max(1, math.ceil(t2 / (requested_nm * 1e-9) - 1e-9))
    return t2 / n


def _build_grid(geom: DiskGeometry, mat: MaterialStack, opts: SolverOptions) -> _Grid:
    h = snapped_grid_step_m(geom, opts.grid_step_nm)
    clad = opts.cladding_margin_um * 1e-6
    pml = opts.pml_thickness_um * 1e-6
    R = geom.radius_m
    t2 = geom.thickness_m / 2.0

    # rho_min sits an integer number of steps below R, so the rim is on a
    # node whenever it can be.
    k_in = int(min(R - h, opts.inner_margin_um * 1e-6) // h)
    k_in = max(k_in, 1)
    rho_min = R - k_in * h
    n_rho = k_in + int(math.ceil((clad + pml) / h)) + 1
    n_z = int(round(t2 / h)) + int(math.ceil((clad + pml) / h)) + 1
    rho = rho_min + h * np.arange(n_rho)
    z = h * np.arange(n_z)

    # Exact area-fraction permittivity averaging per cell: the disk is the
    # product region rho <= R, |z| <= t/2, so the in-disk fraction of a
    # cell factorizes into 1D overlaps.
    def frac_inside(coords: np.ndarray, hi: float) -> np.ndarray:
        lo_edge = coords - h / 2.0
        hi_edge = coords + h / 2.0
        overlap = np.clip(hi, lo_edge, hi_edge) - lo_edge
        return np.clip(overlap / h, 0.0, 1.0)

    f_rho = frac_inside(rho, R)
    f_z = frac_inside(z, t2)
    frac = np.outer(f_rho, f_z)
    eps = mat.n_clad**2 + (mat.n_disk**2 - mat.n_clad**2) * frac

    return _Grid(
        h=h,
        rho=rho,
        z=z,
        eps=eps,
        pml_rho_start=R + clad,
        pml_z_start=t2 + clad,
        pml_l=pml,
        sigma_max=opts.pml_sigma_max,
    )


def _stretch_factor(coords: np.ndarray, start: float, length: float, sigma_max: float) -> np.ndarray:
    """PML stretch s(x) = 1 + i sigma_max ((x - start)/L)^2 beyond `start`."""
    depth = np.clip((coords - start) / length, 0.0, None)
    return 1.0 + 1j * sigma_max * depth**2


def _stretched_coord(coords: np.ndarray, start: float, length: float, sigma_max: float) -> np.ndarray:
    """Complex coordinate rho~ = integral of s, analytic for the quadratic profile."""
    depth = np.clip((coords - start) / length, 0.0, None)
    return coords + 1j * sigma_max * length * depth**3 / 3.0


def _assemble(grid: _Grid, m: int, polarization: Polarization) -> sp.csr_matrix:
    """Assemble C = diag(1/eps) * (-Lap_pml + (m^2 - 1/4)/rho~^2) so that
    eigenvalues of C are k0^2."""
    n_rho, n_z = grid.shape
    h = grid.h
    N = n_rho * n_z

    s_rho = _stretch_factor(grid.rho, grid.pml_rho_start, grid.pml_l, grid.sigma_max)
    s_rho_half = _stretch_factor(
        grid.rho + h / 2.0, grid.pml_rho_start, grid.pml_l, grid.sigma_max
    )
    s_z = _stretch_factor(grid.z, grid.pml_z_start, grid.pml_l, grid.sigma_max)
    s_z_half = _stretch_factor(grid.z + h / 2.0, grid.pml_z_start, grid.pml_l, grid.sigma_max)
    rho_t = _stretched_coord(grid.rho, grid.pml_rho_start, grid.pml_l, grid.sigma_max)

    inv_h2 = 1.0 / h**2

    # rho-direction coefficients (same for TE and TM: in-plane scalar).
    # c_east[i] couples node i to i+1; flux form (1/s_i)d/drho((1/s)d/drho).
    ce_r = inv_h2 / (s_rho * s_rho_half)  # shape (n_rho,)
    cw_r = inv_h2 / (s_rho * np.roll(s_rho_half, 1))
    cw_r[0] = inv_h2 / (s_rho[0] * _stretch_factor(
        np.array([grid.rho[0] - h / 2.0]), grid.pml_rho_start, grid.pml_l, grid.sigma_max
    )[0])

    # z-direction: TE uses a = 1, TM uses flux coefficient a = 1/eps with
    # harmonic interface averaging, then multiplies by eps (dominant-field
    # continuity for E_z), applied row-wise below.
    if polarization is Polarization.TE:
        a_up = np.ones((n_rho, n_z))
        a_dn = np.ones((n_rho, n_z))
        row_scale = np.ones((n_rho, n_z))
    else:
        eps = grid.eps
        eps_up = np.empty_like(eps)
        eps_up[:, :-1] = 0.5 * (eps[:, :-1] + eps[:, 1:])
        eps_up[:, -1] = eps[:, -1]
        eps_dn = np.empty_like(eps)
        eps_dn[:, 1:] = eps_up[:, :-1]
        eps_dn[:, 0] = eps_up[:, 0]  # mirror symmetry at z = 0
        a_up = 1.0 / eps_up
        a_dn = 1.0 / eps_dn
        row_scale = eps

    cu = row_scale * a_up * inv_h2 / (s_z * s_z_half)[None, :]
    s_z_half_dn = np.roll(s_z_half, 1)
    s_z_half_dn[0] = s_z_half[0]  # mirror
    cd = row_scale * a_dn * inv_h2 / (s_z * s_z_half_dn)[None, :]

    ce = np.broadcast_to(ce_r[:, None], (n_rho, n_z)).copy()
    cw = np.broadcast_to(cw_r[:, None], (n_rho, n_z)).copy()

    centrifugal = (m**2 - 0.25) / rho_t**2  # shape (n_rho,), complex in PML
    diag = (
        ce + cw + cu + cd + np.broadcast_to(centrifugal[:, None], (n_rho, n_z))
    ).astype(complex)

    # Neumann (even symmetry) at z = 0: ghost u[-1] = u[+1] folds the down
    # coupling onto the up neighbor.
    cu = cu.astype(complex).copy()
    cu[:, 0] += cd[:, 0]

    idx = np.arange(N).reshape(n_rho, n_z)
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [diag.ravel()]

    # east (i+1): Dirichlet beyond the last node -> simply no entry
    rows.append(idx[:-1, :].ravel())
    cols.append(idx[1:, :].ravel())
    vals.append(-ce[:-1, :].ravel())
    # west (i-1)
    rows.append(idx[1:, :].ravel())
    cols.append(idx[:-1, :].ravel())
    vals.append(-cw[1:, :].ravel())
    # up (j+1)
    rows.append(idx[:, :-1].ravel())
    cols.append(idx[:, 1:].ravel())
    vals.append(-cu[:, :-1].ravel())
    # down (j-1)
    rows.append(idx[:, 1:].ravel())
    cols.append(idx[:, :-1].ravel())
    vals.append(-cd[:, 1:].ravel())

    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N),
        dtype=complex,
    ).tocsr()

    inv_eps = sp.diags(1.0 / grid.eps.ravel())
    return (inv_eps @ A).tocsr()


def _eigensolve(C: sp.csr_matrix, sigma: float, nev: int) -> tuple[np.ndarray, np.ndarray]:
    # Deterministic ARPACK start vector: byte-identical reruns.
    rng = np.random.default_rng(20240917)
    v0 = rng.standard_normal(C.shape[0])
    vals, vecs = spla.eigs(C, k=nev, sigma=sigma, which="LM", v0=v0)
    order = np.argsort(np.abs(vals - sigma))
    return vals[order], vecs[:, order]


# ---------------------------------------------------------------------------
# Raw candidate extraction
# ---------------------------------------------------------------------------


@dataclass
class _Candidate:
    m: int
    polarization: Polarization
    p: int
    lambda_nm: float
    k: complex
    psi: np.ndarray  # complex field on the solver grid (half-z)
    grid: _Grid


def _classify_and_filter(
    vals: np.ndarray,
    vecs: np.ndarray,
    grid: _Grid,
    geom: DiskGeometry,
    m: int,
    polarization: Polarization,
) -> list[_Candidate]:
    n_rho, n_z = grid.shape
    out: list[_Candidate] = []
    phys_rho = grid.rho <= grid.pml_rho_start
    phys_z = grid.z <= grid.pml_z_start
    for k2, vec in zip(vals, vecs.T):
        k = complex(np.sqrt(k2))
        if k.real <= 0:
            continue
        lam_nm = 2.0 * math.pi / k.real * 1e9
        u = vec.reshape(n_rho, n_z)
        psi = u / np.sqrt(grid.rho)[:, None]
        mag = np.abs(psi)
        # Physical-mode screen: energy must live outside the PML.
        total = float(np.sum(mag**2))
        phys = float(np.sum(mag[np.ix_(phys_rho, phys_z)] ** 2))
        if total == 0 or phys / total < 0.9:
            continue
        # Radial order p: antinodes of |psi| along z = 0 inside the disk
        # (plus a short evanescent skirt).
        imax_r = int(np.searchsorted(grid.rho, geom.radius_m + 3 * grid.h))
        profile = mag[:imax_r, 0]
        if profile.size < 5 or profile.max() == 0:
            continue
        peaks, _ = find_peaks(profile, prominence=0.05 * profile.max())
        p = int(len(peaks))
        if p < 1:
            continue
        # Vertical profile must be the fundamental (single antinode).
        i_peak = int(np.argmax(profile))
        jmax = int(np.searchsorted(grid.z, grid.pml_z_start))
        vprofile = mag[i_peak, :jmax]
        vpeaks, _ = find_peaks(
            np.concatenate([vprofile[::-1], vprofile[1:]]),
            prominence=0.05 * vprofile.max(),
        )
        if len(vpeaks) > 1:
            continue
        out.append(
            _Candidate(
                m=m, polarization=polarization, p=p, lambda_nm=lam_nm, k=k, psi=psi, grid=grid
            )
        )
    return out


def _solve_single_m(
    geom: DiskGeometry,
    mat: MaterialStack,
    m: int,
    polarization: Polarization,
    lambda_target_nm: float,
    opts: SolverOptions,
    nev: int | None = None,
) -> list[_Candidate]:
    grid = _build_grid(geom, mat, opts)
    C = _assemble(grid, m, polarization)
    sigma = (2.0 * math.pi / (lambda_target_nm * 1e-9)) ** 2
    vals, vecs = _eigensolve(C, sigma, nev or opts.n_eigenvalues)
    return _classify_and_filter(vals, vecs, grid, geom, m, polarization)


# ---------------------------------------------------------------------------
# Candidate -> public ModeSolution
# ---------------------------------------------------------------------------


def _public_field_map(cand: _Candidate, geom: DiskGeometry, mat: MaterialStack) -> FieldMap:
    """Unfold z-symmetry, trim the PML, and pad rho down to the axis."""
    grid = cand.grid
    h = grid.h
    i_hi = int(np.searchsorted(grid.rho, grid.pml_rho_start, side="right"))
    j_hi = int(np.searchsorted(grid.z, grid.pml_z_start, side="right"))
    psi = cand.psi[:i_hi, :j_hi]
    n_pad = int(round(grid.rho[0] / h))  # nodes from axis to rho[0]
    psi_full = np.zeros((n_pad + i_hi, 2 * j_hi - 1), dtype=complex)
    psi_full[n_pad:, j_hi - 1 :] = psi
    psi_full[n_pad:, : j_hi - 1] = psi[:, :0:-1]

    peak = np.abs(psi_full).max()
    psi_full /= psi_full.ravel()[np.argmax(np.abs(psi_full))]  # peak -> 1 + 0j

    rho = h * np.arange(n_pad + i_hi)
    z = -grid.z[j_hi - 1] + h * np.arange(2 * j_hi - 1)
    f_rho = np.clip((geom.radius_m - (rho - h / 2.0)) / h, 0.0, 1.0)
    t2 = geom.thickness_m / 2.0
    fz_hi = np.clip((t2 - (np.abs(z) - h / 2.0)) / h, 0.0, 1.0)
    frac = np.outer(f_rho, fz_hi)
    n_map = np.sqrt(mat.n_clad**2 + (mat.n_disk**2 - mat.n_clad**2) * frac)

    assert peak > 0
    return FieldMap(
        values=psi_full,
        n=n_map,
        rho_start_m=0.0,
        z_start_m=float(z[0]),
        drho_m=h,
        dz_m=h,
        normalized=True,
    )


def _radiation_q_from_k(k: complex) -> RadiationQ:
    im = abs(k.imag)
    if im == 0.0 or k.real / (2.0 * im) >= Q_CEILING:
        return RadiationQ(value=Q_CEILING, at_ceiling=True)
    return RadiationQ(value=k.real / (2.0 * im), at_ceiling=False)


def _finish_mode(cand: _Candidate, geom: DiskGeometry, mat: MaterialStack,
                 grid_step_nm: float) -> ModeSolution:
    fmap = _public_field_map(cand, geom, mat)
    q = _radiation_q_from_k(cand.k)
    mode = ModeSolution(
        id=ModeId(m=cand.m, p=cand.p, polarization=cand.polarization),
        lambda0_nm=cand.lambda_nm,
        q_rad=q.value,
        q_rad_at_ceiling=q.at_ceiling,
        field=fmap,
        veff_m3=0.0,
        veff_lambda_n3=0.0,
        gamma_prime_per_nm=0.0,
        geometry=geom,
        materials=mat,
        eigen_k_per_m=cand.k,
        grid_step_nm=grid_step_nm,
    )
    v_m3, v_ln3 = compute_veff(mode, mat)
    mode.veff_m3 = v_m3
    mode.veff_lambda_n3 = v_ln3
    mode.gamma_prime_per_nm = surface_energy_fraction(mode, mat)
    return mode


# ---------------------------------------------------------------------------
# Public solve
# ---------------------------------------------------------------------------


def _auto_m_range(
    geom: DiskGeometry,
    mat: MaterialStack,
    band: WavelengthBand,
    p_max: int,
    polarization: Polarization,
) -> range:
    m_hi = slab.estimate_m_for_wavelength(geom, mat, band.lambda_min_nm, p=1, polarization=polarization)
    m_lo = slab.estimate_m_for_wavelength(
        geom, mat, band.lambda_max_nm, p=min(p_max, 3), polarization=polarization
    )
    return range(min(m_lo, m_hi), max(m_lo, m_hi) + 1)


def _verify_candidate(
    cand: _Candidate,
    geom: DiskGeometry,
    mat: MaterialStack,
    opts: SolverOptions,
) -> _Candidate:
    """Re-solve at halved spacing until lambda0 settles below tolerance.

    Returns the finest-grid candidate. Raises ConvergenceError carrying
    the last two estimates if max_refinements is exhausted.
    """
    current = cand
    step = snapped_grid_step_m(geom, opts.grid_step_nm) * 1e9
    for _ in range(opts.max_refinements + 1):
        fine_opts = replace(
            opts, grid_step_nm=step / 2.0, verify_convergence=False, n_eigenvalues=4
        )
        fine = _solve_single_m(
            geom, mat, current.m, current.polarization, current.lambda_nm, fine_opts
        )
        match = [c for c in fine if c.p == current.p]
        if not match:
            raise ConvergenceError(
                f"mode {current.polarization},m={current.m},p={current.p} lost on refinement",
                (current.lambda_nm, math.nan),
            )
        best = min(match, key=lambda c: abs(c.lambda_nm - current.lambda_nm))
        if abs(best.lambda_nm - current.lambda_nm) < opts.convergence_tol_nm:
            return best
        current = best
        step /= 2.0
    raise ConvergenceError(
        f"lambda0 for {current.polarization},m={current.m},p={current.p} still moving "
        f"after {opts.max_refinements + 1} refinements",
        (cand.lambda_nm, current.lambda_nm),
    )


def solve_modes(
    geom: DiskGeometry,
    mat: MaterialStack,
    band: WavelengthBand,
    m_range: Iterable[int] | None = None,
    p_max: int = 2,
    polarization: Polarization | Sequence[Polarization] = Polarization.TE,
    options: SolverOptions | None = None,
    workers: int = 1,
) -> list[ModeSolution]:
    """Find all whispering-gallery modes with lambda0 inside `band`.

    Parameters
    ----------
    m_range : iterable of int, optional
        Azimuthal orders to solve. Default: chosen from the slab/Bessel
        oracle so the band (for all p <= p_max) is covered.
    p_max : int
        Highest radial order kept.
    polarization : Polarization or sequence
        Which polarization families to solve.
    options : SolverOptions
        Grid/PML/convergence settings. With verify_convergence on, each
        returned mode has been re-solved at half spacing and its lambda0
        moved by less than convergence_tol_nm (the finer solution is
        returned).
    workers : int
        Number of concurrent (m, polarization) solves. Solves share no
        mutable state.

    Returns
    -------
    list of ModeSolution, sorted by lambda0.
    """
    opts = options or SolverOptions()
    pols = [polarization] if isinstance(polarization, Polarization) else list(polarization)
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    target = band.center_nm

    jobs: list[tuple[int, Polarization]] = []
    for pol in pols:
        ms = m_range if m_range is not None else _auto_m_range(geom, mat, band, p_max, pol)
        jobs.extend((m, pol) for m in ms)
    if not jobs:
        return []

    def run(job: tuple[int, Polarization]) -> list[_Candidate]:
        m, pol = job
        return _solve_single_m(geom, mat, m, pol, target, opts)

    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
            per_job = list(ex.map(run, jobs))
    else:
        per_job = [run(j) for j in jobs]

    margin = 0.5  # nm, so border modes get verified before the band cut
    candidates = [
        c
        for cands in per_job
        for c in cands
        if c.p <= p_max
        and band.lambda_min_nm - margin <= c.lambda_nm <= band.lambda_max_nm + margin
    ]

    modes: list[ModeSolution] = []
    seen: set[tuple[int, int, str]] = set()
    for cand in candidates:
        key = (cand.m, cand.p, cand.polarization.value)
        if key in seen:
            continue
        seen.add(key)
        final = _verify_candidate(cand, geom, mat, opts) if opts.verify_convergence else cand
        if band.contains(final.lambda_nm):
            modes.append(
                _finish_mode(final, geom, mat, grid_step_nm=final.grid.h * 1e9)
            )
    modes.sort(key=lambda md: md.lambda0_nm)
    return modes


# ---------------------------------------------------------------------------
# Derived mode quantities
# ---------------------------------------------------------------------------


def compute_veff(
    mode: ModeSolution, mat: MaterialStack | None = None, convention: str = "standing"
) -> tuple[float, float]:
    """Effective mode volume: integral of n^2 |E|^2 over max(n^2 |E|^2).

    The default "standing" convention takes the azimuthal dependence as
    cos(m phi) (backscattering locks standing-wave doublets, and a single
    atom couples to an antinode), giving the pi*rho measure; "traveling"
    uses exp(i m phi) and the 2*pi*rho measure, exactly twice as large.

    Returns
    -------
    (veff_m3, veff_in_lambda_over_n_cubed)
    """
    mat = mat or mode.materials
    fmap = mode.field
    if not fmap.normalized:
        raise ContractViolationError("field map must be normalized (max |E| = 1)")
    if convention not in ("standing", "traveling"):
        raise ValueError(f"unknown V_eff convention {convention!r}")
    dens = fmap.n**2 * np.abs(fmap.values) ** 2
    rho = fmap.rho_m
    integral = float(np.trapz(np.trapz(dens * rho[:, None], dx=fmap.dz_m, axis=1), dx=fmap.drho_m))
    factor = math.pi if convention == "standing" else 2.0 * math.pi
    veff = factor * integral / float(dens.max())
    lam_over_n = mode.lambda0_nm * 1e-9 / mat.n_disk
    return veff, veff / lam_over_n**3


def _total_energy_integral(mode: ModeSolution) -> float:
    fmap = mode.field
    dens = fmap.n**2 * np.abs(fmap.values) ** 2
    rho = fmap.rho_m
    return float(np.trapz(np.trapz(dens * rho[:, None], dx=fmap.dz_m, axis=1), dx=fmap.drho_m))


def _interp_abs_sq(fmap: FieldMap, rho: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of |E|^2 at (rho, z) point arrays."""
    fi = (rho - fmap.rho_start_m) / fmap.drho_m
    fj = (z - fmap.z_start_m) / fmap.dz_m
    n_rho, n_z = fmap.values.shape
    if np.any(fi < 0) or np.any(fi > n_rho - 1) or np.any(fj < 0) or np.any(fj > n_z - 1):
        raise OutOfGridError("position outside the stored field map")
    i0 = np.clip(fi.astype(int), 0, n_rho - 2)
    j0 = np.clip(fj.astype(int), 0, n_z - 2)
    wi = fi - i0
    wj = fj - j0
    v = np.abs(fmap.values) ** 2
    return (
        v[i0, j0] * (1 - wi) * (1 - wj)
        + v[i0 + 1, j0] * wi * (1 - wj)
        + v[i0, j0 + 1] * (1 - wi) * wj
        + v[i0 + 1, j0 + 1] * wi * wj
    )


def surface_energy_fraction(
    mode: ModeSolution,
    mat: MaterialStack | None = None,
    probe_film_thickness_nm: float = 1.0,
) -> float:
    """Surface energy fraction density Gamma' (per nm).

    Gamma' * s is the fraction of modal energy inside a conformal shell of
    thickness s hugging the disk surface (top and bottom faces plus the
    rim wall), in the limit s -> 0. The shell energy density uses the
    interface-averaged permittivity (n_disk^2 + n_clad^2)/2 together with
    the grid-interpolated |E|^2 at the surface: the scalar field is
    continuous across the interface and the permittivity jump has no
    single-sided value on the surface itself.
    """
    mat = mat or mode.materials
    fmap = mode.field
    if not fmap.normalized:
        raise ContractViolationError("field map must be normalized (max |E| = 1)")
    s = probe_film_thickness_nm * 1e-9
    if s <= 0:
        raise ValueError("probe thickness must be positive")
    if s > min(fmap.drho_m, fmap.dz_m):
        raise ValueError(
            f"probe thickness {probe_film_thickness_nm} nm exceeds the grid spacing "
            f"guard band ({fmap.drho_m * 1e9:.1f} nm)"
        )
    R = mode.geometry.radius_m
    t2 = mode.geometry.thickness_m / 2.0
    eps_surface = 0.5 * (mat.n_disk**2 + mat.n_clad**2)

    # Midpoint sample at distance s/2 outside each face; at s << grid
    # spacing the interpolated field is constant across the shell.
    d = s / 2.0

    # Top and bottom faces (z = +/- t/2), rho in [0, R].
    n_samp = max(64, int(R / fmap.drho_m))
    rho_s = np.linspace(0.5 * fmap.drho_m, R, n_samp)
    e_top = _interp_abs_sq(fmap, rho_s, np.full_like(rho_s, t2 + d))
    e_bot = _interp_abs_sq(fmap, rho_s, np.full_like(rho_s, -(t2 + d)))
    face = np.trapz((e_top + e_bot) * rho_s, rho_s)

    # Rim wall (rho = R), z in [-t/2, t/2].
    n_z_samp = max(16, int(mode.geometry.thickness_m / fmap.dz_m) * 4)
    z_s = np.linspace(-t2, t2, n_z_samp)
    e_rim = _interp_abs_sq(fmap, np.full_like(z_s, R + d), z_s)
    rim = np.trapz(e_rim, z_s) * (R + d)

    shell_per_s = eps_surface * (face + rim)  # 2*pi cancels against the total below
    total = _total_energy_integral(mode)
    gamma_per_m = shell_per_s / total
    return float(gamma_per_m * 1e-9)  # per nm


def field_at(
    mode: ModeSolution,
    rho_m: float | None = None,
    z_m: float | None = None,
    distance_nm: float | None = None,
) -> float:
    """Normalized field magnitude psi = |E| / max|E| in [0, 1].

    Call with either (rho_m, z_m) or distance_nm, the outward
    surface-normal offset from the rim at the equatorial plane.
    """
    if distance_nm is not None:
        if rho_m is not None or z_m is not None:
            raise ValueError("give either (rho_m, z_m) or distance_nm, not both")
        rho_m = mode.geometry.radius_m + distance_nm * 1e-9
        z_m = 0.0
    if rho_m is None or z_m is None:
        raise ValueError("position required: (rho_m, z_m) or distance_nm")
    val = _interp_abs_sq(mode.field, np.asarray([rho_m]), np.asarray([z_m]))
    return float(np.sqrt(val[0]))


def radiation_q(mode: ModeSolution) -> RadiationQ:
    """Radiation-limited Q from the complex eigenfrequency."""
    return _radiation_q_from_k(mode.eigen_k_per_m)


def radiation_q_sweep(
    diameters_um: Sequence[float],
    thickness_nm: float,
    mat: MaterialStack,
    lambda_target_nm: float = 852.0,
    polarization: Polarization = Polarization.TE,
    options: SolverOptions | None = None,
) -> list[tuple[float, RadiationQ]]:
    """Radiation Q of the p=1 mode nearest lambda_target for each diameter.

    Convergence verification is skipped: the exponential Q trend is far
    coarser than grid error.
    """
    opts = options or SolverOptions(verify_convergence=False)
    out: list[tuple[float, RadiationQ]] = []
    for d_um in diameters_um:
        geom = DiskGeometry.from_microns(d_um, thickness_nm)
        m = slab.estimate_m_for_wavelength(geom, mat, lambda_target_nm, p=1, polarization=polarization)
        cands = _solve_single_m(geom, mat, m, polarization, lambda_target_nm, opts)
        p1 = [c for c in cands if c.p == 1]
        if not p1:
            raise ConvergenceError(
                f"no p=1 mode found for diameter {d_um} um", (math.nan, math.nan)
            )
        best = min(p1, key=lambda c: abs(c.lambda_nm - lambda_target_nm))
        out.append((d_um, _radiation_q_from_k(best.k)))
    return out


def evanescent_decay_length_nm(
    mode: ModeSolution, d_min_nm: float = 0.0, d_max_nm: float = 200.0, n_points: int = 41
) -> float:
    """1/e decay length of the field outside the rim at the equator,
    from a least-squares line through ln psi(d)."""
    d = np.linspace(d_min_nm, d_max_nm, n_points)
    psi = np.array([field_at(mode, distance_nm=float(x)) for x in d])
    if np.any(psi <= 0):
        raise ValueError("field vanishes in the fit window")
    slope = np.polyfit(d, np.log(psi), 1)[0]
    if slope >= 0:
        raise ValueError("field does not decay outside the rim")
    return -1.0 / slope


# ---------------------------------------------------------------------------
# Field map I/O
# ---------------------------------------------------------------------------


def write_field_csv(fmap: FieldMap, path: str | Path) -> None:
    """CSV export: rho_nm,z_nm,re_E,im_E,n — one row per grid node."""
    path = Path(path)
    rho_nm = fmap.rho_m * 1e9
    z_nm = fmap.z_m * 1e9
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho_nm", "z_nm", "re_E", "im_E", "n"])
        for i in range(fmap.values.shape[0]):
            for j in range(fmap.values.shape[1]):
                v = fmap.values[i, j]
                w.writerow(
                    [
                        f"{rho_nm[i]:.6f}",
                        f"{z_nm[j]:.6f}",
                        f"{v.real:.9e}",
                        f"{v.imag:.9e}",
                        f"{fmap.n[i, j]:.9f}",
                    ]
                )


def write_field_binary(fmap: FieldMap, path: str | Path) -> None:
    """Compact little-endian binary export.

    Layout: 16-byte header (magic 'WG', version u16, n_rho u16, n_z u16,
    drho_nm f32, dz_nm f32), then rho_start_nm and z_start_nm as f64,
    then n_rho*n_z complex64 field values in rho-major order.
    """
    path = Path(path)
    n_rho, n_z = fmap.values.shape
    if n_rho > 0xFFFF or n_z > 0xFFFF:
        raise ValueError("grid too large for the binary header format")
    header = _HEADER_STRUCT.pack(
        FIELD_MAGIC, FIELD_VERSION, n_rho, n_z, fmap.drho_m * 1e9, fmap.dz_m * 1e9
    )
    with path.open("wb") as fh:
        fh.write(header)
        fh.write(struct.pack("<dd", fmap.rho_start_m * 1e9, fmap.z_start_m * 1e9))
        fh.write(np.ascontiguousarray(fmap.values.astype(np.complex64)).tobytes())


def read_field_binary(path: str | Path) -> FieldMap:
    """Read a field map written by write_field_binary."""
    raw = Path(path).read_bytes()
    magic, version, n_rho, n_z, drho_nm, dz_nm = _HEADER_STRUCT.unpack_from(raw, 0)
    if magic != FIELD_MAGIC:
        raise ValueError(f"bad magic {magic!r}; not a field map file")
    if version != FIELD_VERSION:
        raise ValueError(f"unsupported field map version {version}")
    off = _HEADER_STRUCT.size
    rho_start_nm, z_start_nm = struct.unpack_from("<dd", raw, off)
    off += 16
    values = np.frombuffer(raw, dtype=np.complex64, count=n_rho * n_z, offset=off)
    values = values.reshape(n_rho, n_z).astype(complex)
    return FieldMap(
        values=values,
        n=np.ones((n_rho, n_z)),
        rho_start_m=rho_start_nm * 1e-9,
        z_start_m=z_start_nm * 1e-9,
        drho_m=drho_nm * 1e-9,
        dz_m=dz_nm * 1e-9,
        normalized=bool(np.isclose(np.abs(values).max(), 1.0, rtol=1e-3)),
    )
