"""Finite-difference verification backend.

Discretizes a divergence-form Hamiltonian on a product grid with
midpoint-flux coefficients, symmetrizes with the volume weights, and
extracts the lowest eigenvalues.  Spectra from different coordinate
systems of the same physics are clustered by degeneracy and compared.

Grid conventions per axis (nodes never sit on a coordinate singularity):

* ``dirichlet``: nodes at lo + d, ..., hi - d; the wavefunction vanishes
  at ghost nodes one spacing beyond each edge;
* ``periodic``: nodes at lo + d*k, k < n, with a wraparound coupling
  through the seam wall;
* ``singular``: nodes offset half a spacing from the lower edge; no flux
  crosses the singular wall (the volume factor vanishes there), and the
  outer edge is a Dirichlet wall.  ``log`` spacing implies this kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .coords import BUILTIN_CHARTS, CoordinateSystem
from .equivalence import DEFAULT_SEED
from .expr import (
    Expr,
    Func,
    ImaginaryUnit,
    KNOWN_CONSTANTS,
    ONE,
    Pow,
    Prod,
    Rat,
    Sum,
    Sym,
    ZERO,
    evaluate,
    free_symbols,
    func,
    mul,
    substitute,
    sym,
)
from .quantize import HamiltonOperator, hamilton_operator

DENSE_THRESHOLD = 1400
DEFAULT_CLUSTER_GAP = 0.01


class GridError(Exception):
    pass


class SingularPotentialError(GridError):
    """The potential is not finite at a grid node."""

    def __init__(self, node_index, point):
        self.node_index = node_index
        self.point = point
        super().__init__(
            f"potential is singular at node {node_index} (coordinates {point}); "
            "choose an offset or log grid that avoids the singular set"
        )


class ConvergenceError(Exception):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class StructuralMismatchError(Exception):
    pass


def compile_numpy(e: Expr):
    """Compile an expression to a vectorized function of an env of arrays."""

    def build(n):
        if isinstance(n, Rat):
            v = float(n.value)
            return lambda env: v
        if isinstance(n, Sym):
            if n.name in KNOWN_CONSTANTS:
                c = KNOWN_CONSTANTS[n.name]
                return lambda env: c
            nm = n.name
            return lambda env: env[nm]
        if isinstance(n, Sum):
            subs = [build(o) for o in n.ops]
            return lambda env: sum(f(env) for f in subs)
        if isinstance(n, Prod):
            subs = [build(o) for o in n.ops]

            def prod(env):
                out = subs[0](env)
                for f in subs[1:]:
                    out = out * f(env)
                return out

            return prod
        if isinstance(n, Pow):
            fb = build(n.base)
            p = float(n.exp.value)
            return lambda env: np.power(fb(env), p)
        if isinstance(n, Func):
            fa = build(n.arg)
            fn = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log}[n.kind]
            return lambda env: fn(fa(env))
        if isinstance(n, ImaginaryUnit):
            raise GridError("grid evaluation is real-valued; got the imaginary unit")
        raise GridError(f"cannot evaluate {n!r} on a grid")

    return build(e)


@dataclass(frozen=True)
class AxisSpec:
    name: str
    n: int
    lo: float
    hi: float
    spacing: str = "uniform"  # uniform | log
    boundary: str = "dirichlet"  # dirichlet | periodic | singular

    def __post_init__(self):
        if self.spacing not in ("uniform", "log"):
            raise GridError(f"unknown spacing {self.spacing!r}")
        if self.boundary not in ("dirichlet", "periodic", "singular"):
            raise GridError(f"unknown boundary {self.boundary!r}")
        if self.spacing == "log" and self.boundary != "singular":
            raise GridError("log spacing requires the singular boundary kind")
        if self.boundary == "periodic" and self.spacing != "uniform":
            raise GridError("periodic axes must be uniform")
        if self.n < 2:
            raise GridError("need at least two nodes per axis")
        if self.spacing == "log" and self.lo <= 0:
            raise GridError("log spacing needs a positive lower edge")


@dataclass(frozen=True)
class AxisGeometry:
    spec: AxisSpec
    nodes: np.ndarray
    walls: np.ndarray  # n+1 cell boundaries
    dist: np.ndarray  # n+1 node-to-node distances across each wall
    cell: np.ndarray  # n cell widths


def _build_axis(spec: AxisSpec) -> AxisGeometry:
    n = spec.n
    if spec.spacing == "log":
        nodes = np.exp(np.linspace(math.log(spec.lo), math.log(spec.hi), n))
        walls = np.empty(n + 1)
        walls[1:-1] = 0.5 * (nodes[:-1] + nodes[1:])
        walls[0] = max(nodes[0] - (walls[1] - nodes[0]), 0.0)
        walls[-1] = nodes[-1] + (nodes[-1] - walls[-2])
    elif spec.boundary == "dirichlet":
        d = (spec.hi - spec.lo) / (n + 1)
        nodes = spec.lo + d * np.arange(1, n + 1)
        walls = spec.lo + d * (np.arange(n + 1) + 0.5)
    elif spec.boundary == "periodic":
        d = (spec.hi - spec.lo) / n
        nodes = spec.lo + d * np.arange(n)
        walls = spec.lo + d * (np.arange(n + 1) - 0.5)
    else:  # singular offset
        d = (spec.hi - spec.lo) / n
        nodes = spec.lo + d * (np.arange(n) + 0.5)
        walls = spec.lo + d * np.arange(n + 1)
    dist = np.empty(n + 1)
    dist[1:-1] = nodes[1:] - nodes[:-1]
    dist[0] = 2.0 * (nodes[0] - walls[0])
    dist[-1] = 2.0 * (walls[-1] - nodes[-1])
    cell = walls[1:] - walls[:-1]
    return AxisGeometry(spec, nodes, walls, dist, cell)


@dataclass(frozen=True)
class Grid:
    cs: CoordinateSystem | None
    axes: tuple

    @property
    def shape(self):
        return tuple(ax.spec.n for ax in self.axes)

    @property
    def size(self):
        out = 1
        for n in self.shape:
            out *= n
        return out

    def node_mesh(self):
        return np.meshgrid(*[ax.nodes for ax in self.axes], indexing="ij")

    def metadata(self) -> dict:
        return {
            "system": self.cs.name if self.cs else "line",
            "axes": [
                {
                    "name": ax.spec.name,
                    "n": ax.spec.n,
                    "lo": ax.spec.lo,
                    "hi": ax.spec.hi,
                    "spacing": ax.spec.spacing,
                    "boundary": ax.spec.boundary,
                }
                for ax in self.axes
            ],
        }


def build_grid(cs: CoordinateSystem, specs) -> Grid:
    by_name = {s.name: s for s in specs}
    if set(by_name) != set(cs.names):
        raise GridError(
            f"grid axes {sorted(by_name)} do not match coordinates {list(cs.names)}"
        )
    return Grid(cs, tuple(_build_axis(by_name[n]) for n in cs.names))


@dataclass(frozen=True)
class DiscreteOperator:
    matrix: sp.csr_matrix
    grid: Grid
    units: dict
    weights: np.ndarray

    @property
    def dim(self):
        return self.matrix.shape[0]

    def symmetry_defect(self) -> float:
        d = self.matrix - self.matrix.T
        return 0.0 if d.nnz == 0 else float(np.abs(d.data).max())


def _env(names, arrays) -> dict:
    return dict(zip(names, arrays))


def discretize(op: HamiltonOperator, grid: Grid, hbar: float = 1.0, m: float = 1.0) -> DiscreteOperator:
    """Midpoint-flux discretization, symmetrized by the volume weights.

    Each kinetic term (1/J) d/du_i (J/h_i**2 d/du_i .) becomes a
    conductance a(wall)/dist across every interior wall; the similarity
    transform by the square root of the node weights J * cell volume makes
    the matrix symmetric entry by entry.
    """
    cs = op.cs
    names = list(cs.names)
    axes = grid.axes
    ndim = len(axes)
    shape = grid.shape
    size = grid.size
    mesh = grid.node_mesh()
    J, _ = cs.jacobians()
    jfun = compile_numpy(J)

    with np.errstate(divide="ignore", invalid="ignore"):
        jnodes = jfun(_env(names, mesh))
    cellvol = np.ones(shape)
    for k, ax in enumerate(axes):
        wshape = [1] * ndim
        wshape[k] = shape[k]
        cellvol = cellvol * ax.cell.reshape(wshape)
    weights = np.asarray(jnodes, dtype=float) * cellvol
    if not np.all(weights > 0):
        raise GridError("volume weights must be strictly positive on all nodes")

    vfun = compile_numpy(op.potential) if op.potential != ZERO else None
    with np.errstate(divide="ignore", invalid="ignore"):
        vvals = vfun(_env(names, mesh)) * np.ones(shape) if vfun else np.zeros(shape)
    if not np.all(np.isfinite(vvals)):
        flat = int(np.argmin(np.isfinite(vvals).ravel()))
        node = np.unravel_index(flat, shape)
        point = tuple(float(mesh[a][node]) for a in range(ndim))
        raise SingularPotentialError(node, point)

    pref = 0.5 * hbar * hbar / m
    diag = vvals.copy()
    rows, cols, vals = [], [], []
    idx = np.arange(size).reshape(shape)

    for k, ax in enumerate(axes):
        term = next(t for t in op.terms if t.axis == ax.spec.name)
        afun = compile_numpy(term.flux)
        wall_coords = []
        for j, other in enumerate(axes):
            wall_coords.append(ax.walls if j == k else other.nodes)
        wall_mesh = np.meshgrid(*wall_coords, indexing="ij")
        with np.errstate(divide="ignore", invalid="ignore"):
            awall = afun(_env(names, wall_mesh)) * np.ones(
                tuple(len(c) for c in wall_coords)
            )
        awall = np.where(np.isfinite(awall), awall, 0.0)

        dshape = [1] * ndim

        def wall_slice(w0, w1):
            sl = [slice(None)] * ndim
            sl[k] = slice(w0, w1)
            return tuple(sl)

        def node_slice(n0, n1):
            sl = [slice(None)] * ndim
            sl[k] = slice(n0, n1)
            return tuple(sl)

        n = ax.spec.n
        cshape = [1] * ndim
        cshape[k] = n
        trans = cellvol / ax.cell.reshape(cshape)  # transverse cell area
        # interior walls couple neighbors k-1, k
        dshape[k] = n - 1
        a_int = awall[wall_slice(1, n)]
        c_int = (
            pref
            * a_int
            * trans[node_slice(0, n - 1)]
            / ax.dist[1:n].reshape(dshape)
        )
        w_left = weights[node_slice(0, n - 1)]
        w_right = weights[node_slice(1, n)]
        diag[node_slice(0, n - 1)] += c_int / w_left
        diag[node_slice(1, n)] += c_int / w_right
        off = -c_int / np.sqrt(w_left * w_right)
        rows.append(idx[node_slice(0, n - 1)].ravel())
        cols.append(idx[node_slice(1, n)].ravel())
        vals.append(off.ravel())

        if ax.spec.boundary == "dirichlet":
            c0 = pref * awall[wall_slice(0, 1)] * trans[node_slice(0, 1)] / ax.dist[0]
            diag[node_slice(0, 1)] += c0 / weights[node_slice(0, 1)]
            cn = (
                pref
                * awall[wall_slice(n, n + 1)]
                * trans[node_slice(n - 1, n)]
                / ax.dist[n]
            )
            diag[node_slice(n - 1, n)] += cn / weights[node_slice(n - 1, n)]
        elif ax.spec.boundary == "periodic":
            c_seam = (
                pref
                * awall[wall_slice(n, n + 1)]
                * trans[node_slice(0, 1)]
                / ax.dist[0]
            )
            w_first = weights[node_slice(0, 1)]
            w_last = weights[node_slice(n - 1, n)]
            diag[node_slice(0, 1)] += c_seam / w_first
            diag[node_slice(n - 1, n)] += c_seam / w_last
            off = -c_seam / np.sqrt(w_first * w_last)
            rows.append(idx[node_slice(n - 1, n)].ravel())
            cols.append(idx[node_slice(0, 1)].ravel())
            vals.append(off.ravel())
        else:  # singular: no flux through the inner wall, Dirichlet outer
            cn = (
                pref
                * awall[wall_slice(n, n + 1)]
                * trans[node_slice(n - 1, n)]
                / ax.dist[n]
            )
            diag[node_slice(n - 1, n)] += cn / weights[node_slice(n - 1, n)]

    upper = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    ).tocsr()
    matrix = upper + upper.T + sp.diags(diag.ravel()).tocsr()
    return DiscreteOperator(
        matrix=matrix.tocsr(),
        grid=grid,
        units={"hbar": hbar, "m": m},
        weights=weights,
    )


@dataclass(frozen=True)
class Cluster:
    value: float
    multiplicity: int
    members: tuple


def cluster_eigenvalues(values, rel_gap: float = DEFAULT_CLUSTER_GAP):
    """Group sorted eigenvalues; split where the gap exceeds
    rel_gap * max(1, |E|)."""
    values = sorted(values)
    clusters = []
    current = [values[0]] if values else []
    for v in values[1:]:
        if v - current[-1] > rel_gap * max(1.0, abs(current[-1])):
            clusters.append(current)
            current = [v]
        else:
            current.append(v)
    if current:
        clusters.append(current)
    return tuple(
        Cluster(float(np.mean(c)), len(c), tuple(float(x) for x in c))
        for c in clusters
    )


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: tuple
    clusters: tuple
    grid_meta: dict
    deltas: tuple = ()

    def against(self, reference) -> "SpectrumReport":
        """Per-cluster relative deltas versus reference cluster values."""
        deltas = []
        for c, ref in zip(self.clusters, reference):
            deltas.append(
                {
                    "value": c.value,
                    "reference": float(ref),
                    "delta": abs(c.value - ref) / max(abs(ref), 1e-12),
                }
            )
        return SpectrumReport(self.eigenvalues, self.clusters, self.grid_meta, tuple(deltas))


def eigen_spectrum(
    A: DiscreteOperator,
    k: int,
    seed: int | None = None,
    rel_gap: float = DEFAULT_CLUSTER_GAP,
    dense_threshold: int = DENSE_THRESHOLD,
) -> SpectrumReport:
    """k smallest eigenvalues; Lanczos with a seeded start vector for
    large sparse matrices, dense for small ones."""
    n = A.dim
    if k > n:
        raise ValueError(f"requested {k} eigenvalues from a {n}x{n} operator")
    defect = A.symmetry_defect()
    if defect != 0.0:
        raise GridError(f"operator lost exact symmetry (defect {defect})")
    if n <= dense_threshold or k > n // 3:
        vals = np.linalg.eigvalsh(A.matrix.toarray())[:k]
    else:
        rng = np.random.default_rng(DEFAULT_SEED if seed is None else seed)
        v0 = rng.standard_normal(n)
        try:
            vals = eigsh(
                A.matrix,
                k=k,
                which="SA",
                return_eigenvectors=False,
                v0=v0,
                ncv=min(n - 1, max(2 * k + 17, 48)),
            )
        except ArpackNoConvergence as exc:
            raise ConvergenceError(
                f"eigensolver did not converge for k={k}: {exc}",
                residuals=getattr(exc, "eigenvalues", None),
            ) from exc
        vals = np.sort(vals)
    vals = tuple(float(v) for v in np.sort(vals))
    return SpectrumReport(vals, cluster_eigenvalues(vals, rel_gap), A.grid.metadata())


# ---------------------------------------------------------------------------
# one-dimensional flux problems (box / oscillator oracles, radial solves)


def _assemble_line(geometry: AxisGeometry, awalls, volume_nodes, vdiag, pref):
    """Symmetric matrix of -(pref) (1/vol) d/dx (a d/dx .) + V on one axis.

    ``awalls`` are flux coefficients at the n+1 walls, ``volume_nodes`` the
    volume factor at nodes (weight = volume * cell).  Returns (dense
    matrix, weights).
    """
    n = geometry.spec.n
    weights = volume_nodes * geometry.cell
    if not np.all(weights > 0):
        raise GridError("volume weights must be strictly positive on all nodes")
    diag = vdiag.astype(float).copy()
    c_int = pref * awalls[1:n] / geometry.dist[1:n]
    diag[:-1] += c_int / weights[:-1]
    diag[1:] += c_int / weights[1:]
    off = -c_int / np.sqrt(weights[:-1] * weights[1:])
    H = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    kind = geometry.spec.boundary
    if kind == "dirichlet":
        H[0, 0] += pref * awalls[0] / geometry.dist[0] / weights[0]
        H[-1, -1] += pref * awalls[n] / geometry.dist[n] / weights[-1]
    elif kind == "periodic":
        c_seam = pref * awalls[n] / geometry.dist[0]
        H[0, 0] += c_seam / weights[0]
        H[-1, -1] += c_seam / weights[-1]
        seam = -c_seam / math.sqrt(weights[0] * weights[-1])
        H[0, -1] += seam
        H[-1, 0] += seam
    else:  # singular: natural inner wall, Dirichlet outer
        H[-1, -1] += pref * awalls[n] / geometry.dist[n] / weights[-1]
    return H, weights


def line_operator(
    axis: AxisSpec,
    V: Expr = ZERO,
    flux: Expr = ONE,
    volume: Expr = ONE,
    hbar: float = 1.0,
    m: float = 1.0,
) -> DiscreteOperator:
    """One-dimensional flux-form operator
    -(hbar**2/2m) (1/volume) d/dx (flux d/dx .) + V."""
    geometry = _build_axis(axis)
    name = axis.name
    consts = {"hbar": hbar, "m": m}

    def ev(e, x):
        if e == ZERO:
            return np.zeros_like(x)
        fn = compile_numpy(e)
        with np.errstate(divide="ignore", invalid="ignore"):
            return fn({name: x, **consts}) * np.ones_like(x)

    awalls = ev(flux, geometry.walls)
    awalls = np.where(np.isfinite(awalls), awalls, 0.0)
    vol = ev(volume, geometry.nodes)
    vvals = ev(V, geometry.nodes)
    if not np.all(np.isfinite(vvals)):
        bad = int(np.argmin(np.isfinite(vvals)))
        raise SingularPotentialError((bad,), (float(geometry.nodes[bad]),))
    pref = 0.5 * hbar * hbar / m
    H, weights = _assemble_line(geometry, awalls, vol, vvals, pref)
    return DiscreteOperator(
        matrix=sp.csr_matrix(H),
        grid=Grid(None, (geometry,)),
        units={"hbar": hbar, "m": m},
        weights=weights,
    )


# ---------------------------------------------------------------------------
# spherical radial reduction


def radial_structure(cs: CoordinateSystem):
    """Return (radial, polar) names if the system has the spherical
    h = (1, r, r sin(theta)) structure, else None."""
    if cs.dim != 3:
        return None
    r, th, _ = cs.names
    rs = sym(r)
    h1, h2, h3 = cs.h
    if h1 != ONE or h2 != rs:
        return None
    if h3 != mul(rs, func("sin", sym(th))):
        return None
    return r, th


def radial_spectrum(
    cs: CoordinateSystem,
    V: Expr,
    k_levels: int,
    lmax: int,
    axis: AxisSpec,
    hbar: float = 1.0,
    m: float = 1.0,
    per_l: int | None = None,
    rel_gap: float = DEFAULT_CLUSTER_GAP,
) -> SpectrumReport:
    """Per-angular-momentum radial solves for a spherically structured
    system with a radial potential; eigenvalues carry 2l+1 multiplicity."""
    structure = radial_structure(cs)
    if structure is None:
        raise StructuralMismatchError(
            f"system {cs.name!r} does not have the radial-separable structure"
        )
    rname = structure[0]
    extra = free_symbols(V) - {rname}
    if extra - set(KNOWN_CONSTANTS):
        raise StructuralMismatchError(
            f"radial reduction needs a potential in {rname!r} only, got {sorted(extra)}"
        )
    per_l = per_l or max(k_levels, 2)
    geometry = _build_axis(axis)
    r = geometry.nodes
    aw = geometry.walls**2
    vol = r * r
    pref = 0.5 * hbar * hbar / m
    vfun = compile_numpy(V) if V != ZERO else None
    with np.errstate(divide="ignore", invalid="ignore"):
        vr = vfun({rname: r}) * np.ones_like(r) if vfun else np.zeros_like(r)
    if not np.all(np.isfinite(vr)):
        bad = int(np.argmin(np.isfinite(vr)))
        raise SingularPotentialError((bad,), (float(r[bad]),))
    levels = []
    for ell in range(lmax + 1):
        vdiag = vr + pref * ell * (ell + 1) / (r * r)
        H, _ = _assemble_line(geometry, aw, vol, vdiag, pref)
        for e in np.linalg.eigvalsh(H)[:per_l]:
            levels.extend([float(e)] * (2 * ell + 1))
    levels.sort()
    meta = {
        "system": cs.name,
        "mode": "radial-per-l",
        "lmax": lmax,
        "axes": [
            {
                "name": axis.name,
                "n": axis.n,
                "lo": axis.lo,
                "hi": axis.hi,
                "spacing": axis.spacing,
                "boundary": axis.boundary,
            }
        ],
    }
    return SpectrumReport(tuple(levels), cluster_eigenvalues(levels, rel_gap), meta)


# ---------------------------------------------------------------------------
# cross-system comparison


@dataclass(frozen=True)
class GridPlan:
    """How to solve one system: a product grid or the radial reduction."""

    mode: str  # product | radial
    axes: tuple = ()
    radial: AxisSpec | None = None
    lmax: int | None = None


@dataclass(frozen=True)
class ClusterDelta:
    value_a: float
    value_b: float
    mult_a: int
    mult_b: int
    delta: float
    passed: bool


@dataclass(frozen=True)
class CompareReport:
    system_a: str
    system_b: str
    spectrum_a: SpectrumReport
    spectrum_b: SpectrumReport
    aligned: tuple
    tol: float
    structural_mismatch: str | None = None

    @property
    def passed(self) -> bool:
        return self.structural_mismatch is None and all(c.passed for c in self.aligned)


def _complete_clusters(report: SpectrumReport, k: int):
    """First k clusters that cannot be truncated by the eigenvalue cutoff."""
    clusters = report.clusters
    if len(clusters) <= k:
        return None
    return clusters[:k]


def _solve_plan(
    cs: CoordinateSystem,
    V: Expr,
    k_levels: int,
    plan: GridPlan,
    seed,
    rel_gap: float,
) -> SpectrumReport:
    if plan.mode == "radial":
        lmax = plan.lmax if plan.lmax is not None else k_levels + 1
        return radial_spectrum(
            cs, V, k_levels, lmax, plan.radial, per_l=k_levels + 1, rel_gap=rel_gap
        )
    grid = build_grid(cs, plan.axes)
    op = hamilton_operator(cs, V)
    disc = discretize(op, grid)
    want = max(3 * k_levels + 12, 16)
    while True:
        want = min(want, disc.dim)
        report = eigen_spectrum(disc, want, seed=seed, rel_gap=rel_gap)
        if _complete_clusters(report, k_levels) is not None or want == disc.dim:
            return report
        want = int(want * 1.7) + 4


def compare_spectra(
    csA: CoordinateSystem,
    csB: CoordinateSystem,
    V_A: Expr,
    V_B: Expr,
    k: int,
    plans: dict,
    tol: float,
    seed: int | None = None,
    rel_gap: float = DEFAULT_CLUSTER_GAP,
) -> CompareReport:
    """Solve both systems, align the first k degeneracy clusters, and
    report per-cluster relative deltas against the tolerance."""
    ra = _solve_plan(csA, V_A, k, plans["a"], seed, rel_gap)
    rb = _solve_plan(csB, V_B, k, plans["b"], seed, rel_gap)
    ca = _complete_clusters(ra, k) or ra.clusters[:k]
    cb = _complete_clusters(rb, k) or rb.clusters[:k]
    mismatch = None
    if len(ca) < k or len(cb) < k:
        mismatch = (
            f"requested {k} clusters, resolved {len(ca)} in {csA.name} "
            f"and {len(cb)} in {csB.name}"
        )
    aligned = []
    for a, b in zip(ca, cb):
        delta = abs(a.value - b.value) / max(abs(a.value), abs(b.value), 1e-12)
        ok = delta < tol and a.multiplicity == b.multiplicity
        if a.multiplicity != b.multiplicity and mismatch is None:
            mismatch = (
                f"multiplicity mismatch at E≈{a.value:.6g}: "
                f"{a.multiplicity} vs {b.multiplicity}"
            )
        aligned.append(
            ClusterDelta(a.value, b.value, a.multiplicity, b.multiplicity, delta, ok)
        )
    return CompareReport(
        csA.name, csB.name, ra, rb, tuple(aligned), tol, structural_mismatch=mismatch
    )


# ---------------------------------------------------------------------------
# pointwise operator covariance


@dataclass(frozen=True)
class CovarianceReport:
    system_a: str
    system_b: str
    points_used: int
    resampled: int
    max_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol


def covariance_check(
    csA: CoordinateSystem,
    csB: CoordinateSystem,
    V_A: Expr,
    V_B: Expr,
    psi_A: Expr,
    n_points: int = 100,
    seed: int | None = None,
    tol: float = 1e-9,
) -> CovarianceReport:
    """Evaluate the operator applied to the same state in two systems.

    The state is given over system A; it is re-expressed over system B by
    substituting A's coordinates with their expressions in B's chart (via
    the shared embedding).  Both applications are then evaluated at random
    interior points; deviations are |vA - vB| / (1 + |vA|).
    """
    if csA.dim != csB.dim:
        raise StructuralMismatchError("systems have different dimensions")
    for cs in (csA, csB):
        if cs.name not in BUILTIN_CHARTS:
            raise StructuralMismatchError(
                f"no chart registered for system {cs.name!r}"
            )
    chartA = BUILTIN_CHARTS[csA.name]
    chartB = BUILTIN_CHARTS[csB.name]

    maps_b = dict(zip(("x", "y", "z")[: csB.dim], csB.map_exprs or ()))
    if csB.name == "cartesian":
        maps_b = {n: sym(n) for n in csB.names}
    # A-coordinates as expressions over B: partial inverse of A composed
    # with B's embedding map
    subs = {}
    for name in csA.names:
        inv = chartA.inverse_exprs.get(name)
        if inv is None:
            raise StructuralMismatchError(
                f"coordinate {name!r} of {csA.name!r} is not expressible "
                f"over {csB.name!r} with the kernel's function set"
            )
        subs[name] = substitute(inv, maps_b)
    psi_B = substitute(psi_A, subs)

    opA = hamilton_operator(csA, V_A)
    opB = hamilton_operator(csB, V_B)
    HpsiA = opA.apply(psi_A)
    HpsiB = opB.apply(psi_B)

    import random

    rng = random.Random(DEFAULT_SEED if seed is None else seed)
    used = 0
    resampled = 0
    worst = 0.0
    consts = {"hbar": 1.0, "m": 1.0}
    while used < n_points:
        pt = tuple(rng.uniform(-2.5, 2.5) for _ in range(csA.dim))
        if sum(x * x for x in pt) < 0.35**2:
            resampled += 1
            continue
        ca = chartA.from_cartesian_numeric(*pt)
        cb = chartB.from_cartesian_numeric(*pt)
        if ca is None or cb is None:
            resampled += 1
            continue
        if not _inside(csA, ca) or not _inside(csB, cb):
            resampled += 1
            continue
        envA = dict(zip(csA.names, ca))
        envA.update(consts)
        envB = dict(zip(csB.names, cb))
        envB.update(consts)
        try:
            vA = evaluate(HpsiA, envA)
            vB = evaluate(HpsiB, envB)
        except Exception:
            resampled += 1
            continue
        worst = max(worst, abs(vA - vB) / (1.0 + abs(vA)))
        used += 1
        if resampled > 50 * n_points:
            raise StructuralMismatchError("sampling could not stay inside both charts")
    return CovarianceReport(csA.name, csB.name, used, resampled, worst, tol)


def _inside(cs: CoordinateSystem, point, margin: float = 0.12) -> bool:
    for c, v in zip(cs.coords, point):
        if c.periodic:
            continue
        if not (c.lo + 0.0 < v < c.hi):
            return False
        # stay away from chart-boundary poles (e.g. the polar axis)
        lo = c.lo if c.lo != -math.inf else None
        hi = c.hi if c.hi != math.inf else None
        if lo is not None and v - lo < margin:
            return False
        if hi is not None and hi - v < margin:
            return False
    return True
