"""Dense-matrix certification of the relaxed-backprojector analysis.

A mismatched backprojector replaces the exact adjoint in the data-fidelity
update: the update becomes ``x - r R grad_f(x)`` for a matrix ``R`` near the
identity, and is in general no longer a proximal map.  On small dense
instances this module constructs the objects that restore a proximal
interpretation and verifies, numerically and hypothesis-first, the chain of
results that make the relaxed update legitimate:

* the closed-form update equals the resolvent ``(I + grad_f)^(-1)`` of the
  quadratic data term (two-forms check);
* a matrix ``r_tilde``, assembled per subspace on ``range(A^T)`` and
  ``null(A)``, turns the relaxed update into the resolvent
  ``(I + r_tilde grad_f)^(-1)``;
* a domain transform ``phi_transform`` converts the relaxed formulation
  into the standard update paired with a modified prior
  ``H o phi_transform``;
* equilibria transfer between matrix-weighted agents with plain averaging
  and plain agents with matrix-weighted averaging;
* Mann iteration converges for forward maps ``W x + q`` whose matrix is
  diagonalizable with eigenvalues in (0, 1], even when ``W`` is not
  symmetric.

Everything here is affine, so every resolvent is a dense linear solve and
every operator norm an exact singular value.  Each verification first
asserts its own hypotheses and refuses (raises
:class:`HypothesisViolation`) instead of silently passing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linops import block_sum, materialize
from .mace import MaceConfig, SolveReport, mace_solve

__all__ = [
    "HypothesisViolation",
    "AffineMap",
    "MatrixInstance",
    "MonotoneOperatorSpec",
    "DiagonalizableMap",
    "make_instance",
    "resolvent",
    "prox_two_forms_check",
    "build_resolvent_weight",
    "build_prior_transform",
    "PriorTransform",
    "verify_agent_weight_transfer",
    "verify_rap_prior_equivalence",
    "verify_mann_convergence",
    "lipschitz_inverse_check",
    "run_verification_suite",
    "VerificationRecord",
]

MAX_INSTANCE_DIM = 64


class HypothesisViolation(ValueError):
    """A verification's preconditions fail; the conclusion is not asserted."""


def _spectral_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, 2))


def _min_symmetric_eig(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (m + m.T)).min())


@dataclass(frozen=True)
class AffineMap:
    """``x -> matrix @ x + offset`` with exact norm and inverse helpers."""

    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x + self.offset

    @classmethod
    def identity(cls, n: int) -> "AffineMap":
        return cls(np.eye(n), np.zeros(n))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def lipschitz(self) -> float:
        """Exact Lipschitz constant: the largest singular value."""
        return _spectral_norm(self.matrix)

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """``self o inner``."""
        return AffineMap(
            self.matrix @ inner.matrix, self.matrix @ inner.offset + self.offset
        )

    def inverse(self) -> "AffineMap":
        inv = np.linalg.inv(self.matrix)
        return AffineMap(inv, -inv @ self.offset)

    def distance(self, other: "AffineMap") -> float:
        """Operator-norm gap between linear parts plus offset gap."""
        return _spectral_norm(self.matrix - other.matrix) + float(
            np.linalg.norm(self.offset - other.offset)
        )


@dataclass(frozen=True)
class MonotoneOperatorSpec:
    """An affine, Lipschitz, strongly monotone map ``phi(x) = P x + c``.

    ``P`` must be symmetric positive definite; ``lipschitz_k`` and
    ``strong_m`` are its extreme eigenvalues.
    """

    p: np.ndarray
    c: np.ndarray

    def __post_init__(self) -> None:
        if not np.allclose(self.p, self.p.T, atol=1e-12):
            raise ValueError("P must be symmetric")
        eigs = np.linalg.eigvalsh(self.p)
        if eigs.min() <= 0:
            raise ValueError("P must be positive definite (strong monotonicity)")

    @property
    def strong_m(self) -> float:
        return float(np.linalg.eigvalsh(self.p).min())

    @property
    def lipschitz_k(self) -> float:
        return float(np.linalg.eigvalsh(self.p).max())

    @property
    def map(self) -> AffineMap:
        return AffineMap(self.p, self.c)


def resolvent(phi: AffineMap | MonotoneOperatorSpec) -> AffineMap:
    """``(I + phi)^(-1)`` of an affine monotone map, as a dense affine map.

    Monotonicity (positive semidefinite symmetric part) is checked; the
    result is globally defined, single valued, and nonexpansive.
    """
    if isinstance(phi, MonotoneOperatorSpec):
        phi = phi.map
    if _min_symmetric_eig(phi.matrix) < -1e-10:
        raise HypothesisViolation("phi is not monotone (symmetric part indefinite)")
    n = phi.dim
    inv = np.linalg.inv(np.eye(n) + phi.matrix)
    return AffineMap(inv, -inv @ phi.offset)


# ---------------------------------------------------------------------------
# Dense instances of the data term
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatrixInstance:
    """A dense realization of the quadratic data term.

    With ``f(x) = (sigma2 / 2) ||y - A x||^2`` the pieces are
    ``grad_f(x) = W x - p``, ``W = sigma2 A^T A``, ``p = sigma2 A^T y`` and
    the contraction coefficient ``r = 1 / (1 + sigma2 L^2)``.

    Attributes:
        a_mat: dense ``(M, n)`` block-sum matrix with ``A A^T = L^2 I``.
        y: length-``M`` measurement vector.
        r_weight: the near-identity matrix ``R`` replacing the adjoint.
        sigma2: quadratic weight (> 0).
        factor: the scale ``L``.
    """

    a_mat: np.ndarray
    y: np.ndarray
    r_weight: np.ndarray
    sigma2: float
    factor: int

    def __post_init__(self) -> None:
        m, n = self.a_mat.shape
        if n > MAX_INSTANCE_DIM:
            raise HypothesisViolation(
                f"instance dimension {n} exceeds the dense guard {MAX_INSTANCE_DIM}"
            )
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        gram = self.a_mat @ self.a_mat.T
        if not np.allclose(gram, self.factor**2 * np.eye(m), atol=1e-10):
            raise ValueError("A A^T = L^2 I fails for the supplied matrix")
        if self.y.shape != (m,):
            raise ValueError(f"y must have shape ({m},), got {self.y.shape}")
        if self.r_weight.shape != (n, n):
            raise ValueError("R must be square of the HR dimension")

    @property
    def n(self) -> int:
        return self.a_mat.shape[1]

    @property
    def r(self) -> float:
        return 1.0 / (1.0 + self.sigma2 * self.factor**2)

    @property
    def w(self) -> np.ndarray:
        return self.sigma2 * self.a_mat.T @ self.a_mat

    @property
    def p(self) -> np.ndarray:
        return self.sigma2 * self.a_mat.T @ self.y

    @property
    def grad_f(self) -> AffineMap:
        return AffineMap(self.w, -self.p)

    @property
    def r_deviation(self) -> float:
        """Recorded distance ``||R - I||`` (operator norm)."""
        return _spectral_norm(self.r_weight - np.eye(self.n))

    @property
    def range_projector(self) -> np.ndarray:
        """Orthogonal projector onto ``range(A^T)`` (complement of
        ``null(A)``)."""
        return self.a_mat.T @ self.a_mat / self.factor**2


def make_instance(
    hr_shape: tuple[int, int] = (2, 4),
    factor: int = 2,
    sigma2: float | None = None,
    r_deviation: float = 0.05,
    seed: int = 0,
) -> MatrixInstance:
    """Random dense instance built from the real block-sum operator.

    ``sigma2`` defaults to half the convergence-hypothesis bound
    ``1 / L^2``; ``r_deviation`` sets ``||R - I||`` exactly.
    """
    rng = np.random.default_rng(seed)
    a_mat = materialize(lambda im: block_sum(im, factor), hr_shape)
    n = a_mat.shape[1]
    if sigma2 is None:
        sigma2 = 0.5 / factor**2
    y = rng.standard_normal(a_mat.shape[0])
    if r_deviation > 0:
        d = rng.standard_normal((n, n))
        r_weight = np.eye(n) + r_deviation * d / _spectral_norm(d)
    else:
        r_weight = np.eye(n)
    return MatrixInstance(
        a_mat=a_mat, y=y, r_weight=r_weight, sigma2=sigma2, factor=factor
    )


def prox_two_forms_check(instance: MatrixInstance) -> float:
    """Gap between the two closed forms of the data-fidelity update.

    Builds ``(I + grad_f)^(-1)`` and ``(I - r grad_f)`` as dense affine
    maps and returns their distance; the forms are equal because
    ``A A^T = L^2 I`` makes ``W`` a scaled projection.
    """
    implicit = resolvent(instance.grad_f)
    n = instance.n
    explicit = AffineMap(
        np.eye(n) - instance.r * instance.w, instance.r * instance.p
    )
    return implicit.distance(explicit)


# ---------------------------------------------------------------------------
# The subspace-assembled weight matrix
# ---------------------------------------------------------------------------


def build_resolvent_weight(instance: MatrixInstance) -> np.ndarray:
    """The matrix ``r_tilde`` that re-expresses the relaxed update as a
    resolvent.

    Acts as ``r R (I - r W R)^(-1)`` on ``range(A^T)`` and as ``R`` on
    ``null(A)``, extended by linearity; then
    ``(I - r R grad_f) = (I + r_tilde grad_f)^(-1)`` holds exactly.

    The quadratic form of ``r_tilde A^T A`` is zero on ``null(A)`` and
    positive on ``range(A^T)``; on mixed vectors the range/null cross term
    makes its full-space symmetric part dip to about ``-||R - I||**2``, so
    the reweighted gradient is monotone per subspace but not, in general,
    on all of R^n.

    Raises:
        HypothesisViolation: if ``sigma2 >= 1 / L^2`` or
            ``||r W R|| >= 1``.
    """
    if instance.sigma2 >= 1.0 / instance.factor**2:
        raise HypothesisViolation(
            f"sigma2 = {instance.sigma2} violates sigma2 < 1/L^2 "
            f"= {1.0 / instance.factor ** 2}"
        )
    r = instance.r
    w = instance.w
    rw_r = r * w @ instance.r_weight
    norm = _spectral_norm(rw_r)
    if norm >= 1.0:
        raise HypothesisViolation(
            f"||r W R|| = {norm:.6f} >= 1; (I - r W R) may be singular"
        )
    n = instance.n
    proj_range = instance.range_projector
    proj_null = np.eye(n) - proj_range
    on_range = r * instance.r_weight @ np.linalg.inv(np.eye(n) - rw_r)
    return on_range @ proj_range + instance.r_weight @ proj_null


@dataclass(frozen=True)
class PriorTransform:
    """The domain transform pairing a plain prior with the standard update.

    ``map`` satisfies ``(I + phi)^(-1) o map = (I + r_tilde^(-1) phi)^(-1)``;
    ``composition_residual`` is the measured gap and ``lip_deviation`` the
    exact ``Lip(map - I)``.
    """

    map: AffineMap
    lip_deviation: float
    composition_residual: float


def build_prior_transform(
    instance: MatrixInstance, phi: MonotoneOperatorSpec
) -> PriorTransform:
    """Construct ``phi_transform = (I + phi)(I + r_tilde^(-1) phi)^(-1)``.

    Requires ``r_tilde^(-1) phi`` to be (numerically, strictly) monotone;
    refuses otherwise so the equivalence is never asserted outside its
    hypotheses.
    """
    r_tilde = build_resolvent_weight(instance)
    r_tilde_inv = np.linalg.inv(r_tilde)
    reweighted = r_tilde_inv @ phi.p
    if _min_symmetric_eig(reweighted) <= 0:
        raise HypothesisViolation(
            "r_tilde^(-1) phi is not strongly monotone on this instance"
        )
    inner = resolvent(AffineMap(reweighted, r_tilde_inv @ phi.c))
    n = instance.n
    outer = AffineMap(np.eye(n) + phi.p, phi.c)
    transform = outer.compose(inner)

    lhs = resolvent(phi).compose(transform)
    rhs = inner
    residual = lhs.distance(rhs)
    lip_dev = _spectral_norm(transform.matrix - np.eye(n))
    return PriorTransform(
        map=transform, lip_deviation=lip_dev, composition_residual=residual
    )


# ---------------------------------------------------------------------------
# Equilibrium transfer between weighted agents and weighted averaging
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightTransferReport:
    """Comparison of the two matrix-weighted equilibrium formulations."""

    consensus_relaxed: np.ndarray
    consensus_weighted_average: np.ndarray
    consensus_difference: float
    stationarity_residual: float
    seed: int | None = None


def _solve_stacked(blocks: list[list[np.ndarray]], rhs: list[np.ndarray]) -> np.ndarray:
    system = np.block(blocks)
    try:
        return np.linalg.solve(system, np.concatenate(rhs))
    except np.linalg.LinAlgError as exc:
        raise HypothesisViolation(f"singular equilibrium system: {exc}") from exc


def verify_agent_weight_transfer(
    phis: Sequence[MonotoneOperatorSpec],
    weight_matrices: Sequence[np.ndarray],
    seed: int | None = None,
) -> WeightTransferReport:
    """Equilibria agree between two formulations of matrix-weighted consensus.

    Formulation 1 applies the reweighted resolvents
    ``(I + R_i phi_i)^(-1)`` with plain averaging; formulation 2 applies
    the plain resolvents ``(I + phi_i)^(-1)`` with the matrix-weighted
    average ``(sum R_i)^(-1) sum R_i v_i``.  Both stacked linear systems
    are solved directly and independently; the report carries the
    consensus gap and the stationarity residual
    ``||sum_i R_i phi_i(x*)||``.

    Raises:
        HypothesisViolation: if some ``R_i phi_i`` is not monotone or
            ``sum R_i`` is singular.
    """
    k = len(phis)
    if k != len(weight_matrices) or k < 2:
        raise ValueError("need matching phis and weights, at least two agents")
    n = phis[0].p.shape[0]
    eye = np.eye(n)

    for i, (phi, r_i) in enumerate(zip(phis, weight_matrices)):
        if _min_symmetric_eig(r_i @ phi.p) < -1e-12:
            raise HypothesisViolation(f"R_{i} phi_{i} is not monotone")
    r_sum = np.sum(weight_matrices, axis=0)
    if np.linalg.cond(r_sum) > 1e12:
        raise HypothesisViolation("sum of weight matrices is (near) singular")

    # formulation 1: reweighted agents, plain averaging
    blocks1: list[list[np.ndarray]] = []
    rhs1: list[np.ndarray] = []
    for i in range(k):
        f_i = np.linalg.inv(eye + weight_matrices[i] @ phis[i].p)
        row = [f_i - eye / k if j == i else -eye / k for j in range(k)]
        blocks1.append(row)
        rhs1.append(f_i @ weight_matrices[i] @ phis[i].c)
    v1 = _solve_stacked(blocks1, rhs1).reshape(k, n)
    x_star_1 = v1.mean(axis=0)

    # formulation 2: plain agents, matrix-weighted averaging
    r_sum_inv = np.linalg.inv(r_sum)
    blocks2: list[list[np.ndarray]] = []
    rhs2: list[np.ndarray] = []
    for i in range(k):
        f_i = np.linalg.inv(eye + phis[i].p)
        row = [
            f_i - r_sum_inv @ weight_matrices[j]
            if j == i
            else -r_sum_inv @ weight_matrices[j]
            for j in range(k)
        ]
        blocks2.append(row)
        rhs2.append(f_i @ phis[i].c)
    v2 = _solve_stacked(blocks2, rhs2).reshape(k, n)
    x_star_2 = r_sum_inv @ np.sum(
        [weight_matrices[j] @ v2[j] for j in range(k)], axis=0
    )

    stationarity = np.sum(
        [weight_matrices[i] @ (phis[i].p @ x_star_1 + phis[i].c) for i in range(k)],
        axis=0,
    )
    return WeightTransferReport(
        consensus_relaxed=x_star_1,
        consensus_weighted_average=x_star_2,
        consensus_difference=float(np.linalg.norm(x_star_1 - x_star_2)),
        stationarity_residual=float(np.linalg.norm(stationarity)),
        seed=seed,
    )


@dataclass(frozen=True)
class RapEquivalenceReport:
    """Consensus gap between the relaxed update and the modified prior."""

    consensus_relaxed_update: np.ndarray
    consensus_modified_prior: np.ndarray
    consensus_difference: float
    seed: int | None = None


def _two_agent_consensus(f1: AffineMap, f2: AffineMap) -> np.ndarray:
    """Direct linear solve of the two-agent equilibrium with equal weights."""
    n = f1.dim
    eye = np.eye(n)
    blocks = [
        [f1.matrix - 0.5 * eye, -0.5 * eye],
        [-0.5 * eye, f2.matrix - 0.5 * eye],
    ]
    rhs = [-f1.offset, -f2.offset]
    v = _solve_stacked(blocks, rhs).reshape(2, n)
    return 0.5 * (v[0] + v[1])


def verify_rap_prior_equivalence(
    instance: MatrixInstance, phi: MonotoneOperatorSpec, seed: int | None = None
) -> RapEquivalenceReport:
    """The relaxed update with prior ``H`` has the same consensus as the
    standard update with prior ``H o phi_transform``.

    Both two-agent equilibrium systems (equal weights) are assembled and
    solved independently; hypotheses are enforced by the constituent
    builders.
    """
    n = instance.n
    relaxed_forward = AffineMap(
        np.eye(n) - instance.r * instance.r_weight @ instance.w,
        instance.r * instance.r_weight @ instance.p,
    )
    denoiser = resolvent(phi)
    x_star_relaxed = _two_agent_consensus(relaxed_forward, denoiser)

    standard_forward = resolvent(instance.grad_f)
    transform = build_prior_transform(instance, phi)
    modified_prior = denoiser.compose(transform.map)
    x_star_standard = _two_agent_consensus(standard_forward, modified_prior)

    return RapEquivalenceReport(
        consensus_relaxed_update=x_star_relaxed,
        consensus_modified_prior=x_star_standard,
        consensus_difference=float(
            np.linalg.norm(x_star_relaxed - x_star_standard)
        ),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Mann convergence for diagonalizable, possibly non-symmetric forward maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagonalizableMap:
    """``F(x) = W x + q`` with ``W = V diag(eigenvalues) V^(-1)``."""

    v: np.ndarray
    eigenvalues: np.ndarray
    q: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return self.v @ np.diag(self.eigenvalues) @ np.linalg.inv(self.v)

    @property
    def map(self) -> AffineMap:
        return AffineMap(self.matrix, self.q)


@dataclass(frozen=True)
class MannConvergenceReport:
    """Outcome of the convergence run plus the hypothesis diagnostics."""

    solve: SolveReport
    final_error: float
    hatted_symmetric: bool
    hatted_eigenvalues: np.ndarray
    hatted_denoiser_norm: float
    seed: int | None = None


def verify_mann_convergence(
    forward: DiagonalizableMap,
    denoiser: AffineMap,
    x0: np.ndarray,
    config: MaceConfig | None = None,
    seed: int | None = None,
) -> MannConvergenceReport:
    """Mann iteration converges for a diagonalizable forward map.

    Hypotheses checked before running: the eigenvalues lie in (0, 1], the
    change of coordinates ``V^(-1) . V`` turns the forward map into a
    symmetric positive-definite one (so it is a proximal map in the hatted
    coordinates), and the hatted denoiser is nonexpansive.  Then the
    two-agent Mann iteration is run and its convergence trace reported.
    """
    eigs = np.asarray(forward.eigenvalues, dtype=np.float64)
    if np.any(eigs <= 0.0) or np.any(eigs > 1.0 + 1e-12):
        raise HypothesisViolation(
            f"eigenvalues must lie in (0, 1]; got range "
            f"[{eigs.min():.6f}, {eigs.max():.6f}]"
        )
    v_inv = np.linalg.inv(forward.v)
    hatted_forward = v_inv @ forward.matrix @ forward.v
    sym_gap = _spectral_norm(hatted_forward - hatted_forward.T)
    hatted_symmetric = sym_gap < 1e-8
    if not hatted_symmetric:
        raise HypothesisViolation(
            f"hatted forward map is not symmetric (gap {sym_gap:.3e})"
        )
    hatted_eigs = np.linalg.eigvalsh(0.5 * (hatted_forward + hatted_forward.T))
    if hatted_eigs.min() <= 0 or hatted_eigs.max() > 1.0 + 1e-10:
        raise HypothesisViolation(
            "hatted forward map eigenvalues leave (0, 1]"
        )
    hatted_denoiser_norm = _spectral_norm(v_inv @ denoiser.matrix @ forward.v)
    if hatted_denoiser_norm > 1.0 + 1e-12:
        raise HypothesisViolation(
            f"hatted denoiser is expansive (norm {hatted_denoiser_norm:.6f})"
        )

    if config is None:
        config = MaceConfig(rho=0.5, max_iters=1000, tol=1e-6, sigma_n=1.0)
    solve = mace_solve([forward.map, denoiser], x0, config)
    return MannConvergenceReport(
        solve=solve,
        final_error=solve.convergence_trace[-1],
        hatted_symmetric=hatted_symmetric,
        hatted_eigenvalues=hatted_eigs,
        hatted_denoiser_norm=hatted_denoiser_norm,
        seed=seed,
    )


@dataclass(frozen=True)
class LipschitzInverseReport:
    """Measured Lipschitz constants of ``(I + psi)^(-1)`` against bounds."""

    alpha: float
    lip_inverse: float
    lip_inverse_bound: float
    lip_identity_gap: float
    lip_identity_gap_bound: float

    @property
    def holds(self) -> bool:
        return (
            self.lip_inverse <= self.lip_inverse_bound + 1e-12
            and self.lip_identity_gap <= self.lip_identity_gap_bound + 1e-12
        )


def lipschitz_inverse_check(psi: AffineMap) -> LipschitzInverseReport:
    """Verify ``Lip((I+psi)^(-1)) <= 1/(1-a)`` and
    ``Lip(I - (I+psi)^(-1)) <= a/(1-a)`` for ``a = Lip(psi) < 1``."""
    alpha = psi.lipschitz
    if alpha >= 1.0:
        raise HypothesisViolation(f"Lip(psi) = {alpha:.6f} >= 1")
    n = psi.dim
    inv = np.linalg.inv(np.eye(n) + psi.matrix)
    return LipschitzInverseReport(
        alpha=alpha,
        lip_inverse=_spectral_norm(inv),
        lip_inverse_bound=1.0 / (1.0 - alpha),
        lip_identity_gap=_spectral_norm(np.eye(n) - inv),
        lip_identity_gap_bound=alpha / (1.0 - alpha),
    )


# ---------------------------------------------------------------------------
# Batch verification suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerificationRecord:
    """One named measurement with its pass threshold."""

    name: str
    value: float
    threshold: float
    passed: bool
    seed: int


def _make_phi(n: int, rng: np.random.Generator, scale: float = 1.0) -> MonotoneOperatorSpec:
    basis = rng.standard_normal((n, n))
    q, _ = np.linalg.qr(basis)
    eigs = rng.uniform(0.2, 1.0, size=n) * scale
    return MonotoneOperatorSpec(
        p=q @ np.diag(eigs) @ q.T, c=rng.standard_normal(n)
    )


def run_verification_suite(seed: int = 0) -> list[VerificationRecord]:
    """Run every dense certification once and collect records.

    Deterministic per seed; every record carries the seed it was generated
    from.  Intended for the command-line ``verify-theory`` report.
    """
    rng = np.random.default_rng(seed)
    records: list[VerificationRecord] = []

    def add(name: str, value: float, threshold: float) -> None:
        records.append(
            VerificationRecord(
                name=name,
                value=float(value),
                threshold=threshold,
                passed=bool(value < threshold),
                seed=seed,
            )
        )

    inst = make_instance(hr_shape=(2, 4), factor=2, seed=seed)
    add("two_forms_gap", prox_two_forms_check(inst), 1e-10)

    ident = make_instance(hr_shape=(2, 4), factor=2, r_deviation=0.0, seed=seed)
    r_tilde_ident = build_resolvent_weight(ident)
    add(
        "resolvent_weight_identity_gap",
        _spectral_norm(r_tilde_ident - np.eye(ident.n)),
        1e-10,
    )

    for dev in (0.01, 0.05, 0.1):
        inst_d = make_instance(
            hr_shape=(2, 4), factor=2, r_deviation=dev, seed=seed + 1
        )
        r_tilde = build_resolvent_weight(inst_d)
        n = inst_d.n
        relaxed = AffineMap(
            np.eye(n) - inst_d.r * inst_d.r_weight @ inst_d.w,
            inst_d.r * inst_d.r_weight @ inst_d.p,
        )
        res = AffineMap(
            np.eye(n) + r_tilde @ inst_d.w, -r_tilde @ inst_d.p
        ).inverse()
        add(f"relaxed_resolvent_identity_dev{dev:g}", relaxed.distance(res), 1e-8)
        # the reweighted gram form is PSD per subspace (zero on null(A),
        # positive on range(A^T)); the full-space form is not
        range_basis = np.linalg.qr(inst_d.a_mat.T)[0]
        on_range = range_basis.T @ r_tilde @ range_basis
        add(
            f"resolvent_weight_range_psd_violation_dev{dev:g}",
            max(0.0, -_min_symmetric_eig(on_range)),
            1e-10,
        )

    inst_t = make_instance(hr_shape=(2, 4), factor=2, r_deviation=0.02, seed=seed + 2)
    phi = _make_phi(inst_t.n, rng)
    transform = build_prior_transform(inst_t, phi)
    add("prior_transform_composition_gap", transform.composition_residual, 1e-8)

    n = 6
    phis = [_make_phi(n, rng) for _ in range(2)]
    weights = [
        np.eye(n) + 0.05 * rng.standard_normal((n, n)) for _ in range(2)
    ]
    transfer = verify_agent_weight_transfer(phis, weights, seed=seed)
    add("weight_transfer_consensus_gap", transfer.consensus_difference, 1e-8)
    add("weight_transfer_stationarity", transfer.stationarity_residual, 1e-8)

    equiv = verify_rap_prior_equivalence(inst_t, phi, seed=seed)
    add("rap_prior_consensus_gap", equiv.consensus_difference, 1e-8)

    dim = 8
    basis = rng.standard_normal((dim, dim))
    v = np.eye(dim) + 0.3 * basis / _spectral_norm(basis)
    eigs = rng.uniform(0.3, 1.0, size=dim)
    forward = DiagonalizableMap(v=v, eigenvalues=eigs, q=rng.standard_normal(dim))
    h_core = rng.standard_normal((dim, dim))
    h_hat = 0.8 * h_core / _spectral_norm(h_core)
    denoiser = AffineMap(v @ h_hat @ np.linalg.inv(v), rng.standard_normal(dim))
    mann = verify_mann_convergence(
        forward, denoiser, x0=rng.standard_normal(dim), seed=seed
    )
    add("mann_final_error", mann.final_error, 1e-6)

    psi_core = rng.standard_normal((5, 5))
    psi = AffineMap(0.8 * psi_core / _spectral_norm(psi_core), np.zeros(5))
    lip = lipschitz_inverse_check(psi)
    add("lipschitz_inverse_slack", lip.lip_inverse - lip.lip_inverse_bound, 1e-12)
    add(
        "lipschitz_identity_gap_slack",
        lip.lip_identity_gap - lip.lip_identity_gap_bound,
        1e-12,
    )
    return records
