"""Factor-similarity graph over all samples and its Laplacian eigenbasis.

Auxiliary factors (demographics, genetics, environment scores) are z-scored
over the full cohort, connected by a mutual-kNN union rule with inverse
squared-distance edge weights, and the low-frequency eigenvectors of the
unnormalized graph Laplacian become the basis in which per-sample weights are
later parameterized. The graph covers training and testing samples alike; the
construction never looks at model inputs or labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .linalg import EigenDecomposition, as_square_matrix, fix_column_signs, symmetric_eigen

NULL_SPACE_TOL = 1e-8
M_SELECT_CAP = 50


@dataclass(frozen=True)
class FactorTable:
    """Per-sample auxiliary factor values, one row per sample."""

    values: np.ndarray
    factor_names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError(f"factor table must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("factor table contains missing or non-finite values")
        if len(self.factor_names) != values.shape[1]:
            raise DataError(
                f"{len(self.factor_names)} factor names for {values.shape[1]} columns"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "factor_names", tuple(self.factor_names))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_factors(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.factor_names.index(name)]


@dataclass(frozen=True)
class FactorGraph:
    """Symmetric kNN similarity graph with edge weights in [0, 1]."""

    adjacency: np.ndarray
    k_neighbors: int

    @property
    def n_samples(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


@dataclass(frozen=True)
class SpectralBasis:
    """First non-null Laplacian eigenvectors, column-orthonormal and zero-sum."""

    basis: np.ndarray        # (n_samples, m_count)
    eigenvalues: np.ndarray  # (m_count,) ascending, all above NULL_SPACE_TOL

    @property
    def n_samples(self) -> int:
        return self.basis.shape[0]

    @property
    def m_count(self) -> int:
        return self.basis.shape[1]

    @staticmethod
    def empty(n_samples: int) -> "SpectralBasis":
        return SpectralBasis(np.zeros((n_samples, 0)), np.zeros(0))


def standardize(raw: FactorTable) -> FactorTable:
    """Z-score each factor column over all samples (population variance).

    Computed over the full cohort in one pass, so the graph does not depend on
    any train/test split. Constant columns carry no similarity information and
    map to all zeros.
    """
    if raw.n_samples < 2:
        raise DataError("standardization needs at least 2 samples")
    values = raw.values
    mean = values.mean(axis=0)
    std = values.std(axis=0)  # ddof=0
    centered = values - mean
    out = np.divide(centered, std, out=np.zeros_like(centered), where=std > 0.0)
    return FactorTable(out, raw.factor_names)


def build_graph(factors: FactorTable, k: int) -> FactorGraph:
    """Mutual-union kNN graph with weights 1 / (squared distance + 1).

    An edge (i, j) exists when i is among j's k nearest neighbors or vice
    versa, nearness measured by squared Euclidean distance in standardized
    factor space. Neighbor ties break toward the lower sample index;
    self-edges are excluded.
    """
    n = factors.n_samples
    if n < 2:
        raise DataError("graph construction needs at least 2 samples")
    if not 1 <= k < n:
        raise DataError(f"k_neighbors must be in [1, {n - 1}], got {k}")
    x = factors.values
    diff = x[:, None, :] - x[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)

    ranked = d2.copy()
    np.fill_diagonal(ranked, np.inf)
    neighbor_of = np.zeros((n, n), dtype=bool)
    nearest = np.argsort(ranked, axis=1, kind="stable")[:, :k]
    neighbor_of[np.arange(n)[:, None], nearest] = True

    linked = neighbor_of | neighbor_of.T
    adjacency = np.where(linked, 1.0 / (d2 + 1.0), 0.0)
    np.fill_diagonal(adjacency, 0.0)
    return FactorGraph(adjacency, k)


def laplacian(g: FactorGraph) -> np.ndarray:
    """Unnormalized Laplacian L = Deg - A (symmetric PSD, L @ 1 = 0)."""
    return np.diag(g.degree) - g.adjacency


def connected_components(adjacency: np.ndarray) -> np.ndarray:
    """Component label per node from the nonzero pattern (BFS)."""
    a = as_square_matrix(adjacency)
    n = a.shape[0]
    labels = np.full(n, -1, dtype=int)
    current = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        stack = [start]
        labels[start] = current
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(a[i]):
                if labels[j] < 0:
                    labels[j] = current
                    stack.append(int(j))
        current += 1
    return labels


def _component_null_basis(lap: np.ndarray) -> np.ndarray:
    """Orthonormal indicator basis of the Laplacian's exact null space."""
    off = lap.copy()
    np.fill_diagonal(off, 0.0)
    labels = connected_components(off != 0.0)
    n_comp = labels.max() + 1
    u0 = np.zeros((lap.shape[0], n_comp))
    for comp in range(n_comp):
        members = labels == comp
        u0[members, comp] = 1.0 / np.sqrt(members.sum())
    return u0


def spectral_basis(lap: np.ndarray, m: int | str = "auto", eig: EigenDecomposition | None = None) -> SpectralBasis:
    """First m eigenvectors of the Laplacian after dropping the null space.

    Eigenpairs with eigenvalue <= NULL_SPACE_TOL (one per connected component)
    are discarded before counting m. The retained columns are projected
    against the exact component-indicator null space: Jacobi keeps them nearly
    orthogonal to it already, but the deflation pins the zero-column-sum
    property down to rounding error regardless of how small the leading
    retained eigenvalue is. m="auto" applies select_m_changepoint.
    """
    lap = as_square_matrix(lap)
    eig = eig if eig is not None else symmetric_eigen(lap)
    nonnull = eig.eigenvalues > NULL_SPACE_TOL
    values = eig.eigenvalues[nonnull]
    vectors = eig.eigenvectors[:, nonnull]

    if m == "auto":
        m = select_m_changepoint(values)
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool):
        raise ValueError(f"m must be an integer or 'auto', got {m!r}")
    m = int(m)
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return SpectralBasis.empty(lap.shape[0])
    if m > values.shape[0]:
        raise ValueError(
            f"requested {m} eigenbases but only {values.shape[0]} non-null eigenpairs exist"
        )

    basis = vectors[:, :m].copy()
    u0 = _component_null_basis(lap)
    basis -= u0 @ (u0.T @ basis)
    basis /= np.linalg.norm(basis, axis=0)
    return SpectralBasis(fix_column_signs(basis), values[:m].copy())


def basis_from_factors(raw: FactorTable, k: int, m: int | str = "auto"):
    """Full chain raw factors -> standardized -> graph -> Laplacian -> basis.

    Returns (basis, info) where info carries the pieces reports need: the
    graph, the full eigenvalue spectrum, the component count, and the m that
    was actually used.
    """
    graph = build_graph(standardize(raw), k)
    lap = laplacian(graph)
    eig = symmetric_eigen(lap)
    n_null = int(np.sum(eig.eigenvalues <= NULL_SPACE_TOL))
    basis = spectral_basis(lap, m, eig=eig)
    info = {
        "graph": graph,
        "eigenvalues": eig.eigenvalues,
        "n_null": n_null,
        "m_used": basis.m_count,
        "laplacian": lap,
    }
    return basis, info


def select_m_changepoint(eigenvalues: np.ndarray) -> int:
    """Basis size at the dominant relative gap of the ascending spectrum.

    Scans ratios lam[k+1] / lam[k] over the first min(count, 50) non-null
    eigenvalues, takes the k of the largest ratio (ties toward smaller k) and
    clamps the result to [2, 50]. An explicitly configured m always overrides
    this heuristic.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.ndim != 1 or lam.shape[0] < 2:
        raise ValueError("change-point selection needs at least 2 non-null eigenvalues")
    if np.any(lam <= 0.0) or np.any(np.diff(lam) < 0.0):
        raise ValueError("eigenvalues must be positive and ascending")
    limit = min(lam.shape[0], M_SELECT_CAP)
    ratios = lam[1:limit] / lam[: limit - 1]
    best = int(np.argmax(ratios)) + 1
    return min(max(best, 2), M_SELECT_CAP, lam.shape[0])
