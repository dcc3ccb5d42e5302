"""
Independent innovations from a positive joint density.

A random vector with an a.e. positive density on a box is mapped, one
coordinate at a time, through the conditional distribution function of that
coordinate given its predecessors.  The outputs are independent uniforms and
the first ``l`` outputs are functions of the first ``l`` inputs only, so the
generated filtration is unchanged.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, stats
from scipy.interpolate import RegularGridInterpolator

from cptdual.core.errors import ConfigurationError, DensitySupportError
from cptdual.util.parallel import parallel_map
from cptdual.util.rng import make_rng

logger = logging.getLogger(__name__)

DEFAULT_NODES = 513
DEFAULT_HALF_WIDTH = 8.0
MASS_TOLERANCE = 1e-3
DENOMINATOR_GUARD = 1e-300
BISECTION_STEPS = 60
BATCH_SIZE = 2048
MONOTONE_SATURATION = 1e-12
_ROW_CHUNK = 512
_VALIDATION_POINTS = 2_000_000
_MARGINAL_NODES = 65

Density = Callable[[np.ndarray], np.ndarray]


def _odd(n: int) -> int:
    return n if n % 2 == 1 else n + 1


def _integrate_box(values: np.ndarray, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Simpson integral of ``values`` over its trailing ``len(axes)`` axes."""
    for axis in reversed(axes):
        values = integrate.simpson(values, x=axis, axis=-1)
    return values


@dataclass
class JointDensity:
    """
    Probability density on a box.

    Parameters
    ----------
    dim : int
    f : callable
        Maps points of shape ``(..., dim)`` to density values of shape ``(...)``
    low, high : array-like
        Box bounds per axis; the box should carry all but ``1e-3`` of the mass
    nodes : int
        Quadrature nodes per axis along the integrated coordinate
    factorized : bool
        Declared product density; requires ``marginal_cdfs``.  Never inferred.
    marginal_cdfs : list of callables, optional
        Per-axis CDFs of a factorized density
    stage_densities : list of callables, optional
        ``stage_densities[l]`` is the density of ``(x_0, ..., x_l)``; computed
        by quadrature over the trailing axes when missing
    sampler : callable, optional
        ``sampler(rng, n)`` draws ``n`` points from the density; without it
        :func:`draw_samples` inverts the transform chain on uniforms
    name : str
    """

    dim: int
    f: Density
    low: np.ndarray
    high: np.ndarray
    nodes: int = DEFAULT_NODES
    factorized: bool = False
    marginal_cdfs: Optional[List[Callable]] = None
    stage_densities: Optional[List[Density]] = None
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    name: str = "custom"
    _stages: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.low = np.atleast_1d(np.asarray(self.low, dtype=float))
        self.high = np.atleast_1d(np.asarray(self.high, dtype=float))
        if self.dim < 1:
            raise ConfigurationError("dim must be at least 1")
        if self.low.shape != (self.dim,) or self.high.shape != (self.dim,):
            raise ConfigurationError(f"Box bounds must have length {self.dim}")
        if np.any(self.low >= self.high):
            raise ConfigurationError("Box needs low < high on every axis")
        if self.nodes < 3:
            raise ConfigurationError("nodes must be at least 3")
        self.nodes = _odd(int(self.nodes))
        if self.factorized and (self.marginal_cdfs is None or len(self.marginal_cdfs) != self.dim):
            raise ConfigurationError("A factorized density needs one marginal CDF per axis")
        if self.stage_densities is not None and len(self.stage_densities) != self.dim:
            raise ConfigurationError(f"Need {self.dim} stage densities, got {len(self.stage_densities)}")

    def __call__(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.reshape(self.f(points), points.shape[:-1])

    def axis(self, i: int, nodes: Optional[int] = None) -> np.ndarray:
        return np.linspace(self.low[i], self.high[i], nodes or self.nodes)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.all((points >= self.low - tol) & (points <= self.high + tol), axis=-1)

    def validate(self) -> "JointDensity":
        """
        Check positivity at the quadrature nodes and that the box holds the
        mass to within ``1e-3``.

        Raises
        ------
        DensitySupportError
        """
        per_axis = _odd(max(3, min(self.nodes, int(_VALIDATION_POINTS ** (1.0 / self.dim)))))
        axes = [self.axis(i, per_axis) for i in range(self.dim)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        values = self(grid)
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            bad = np.unravel_index(int(np.argmin(np.where(np.isfinite(values), values, -np.inf))), values.shape)
            raise DensitySupportError(f"Density {self.name!r} is not positive at node {grid[bad].tolist()}")
        mass = float(_integrate_box(values, axes))
        if abs(mass - 1.0) > MASS_TOLERANCE:
            raise DensitySupportError(f"Density {self.name!r} has box mass {mass:.6f}, outside 1 +/- {MASS_TOLERANCE}")
        logger.debug("density %s: box mass %.8f on %d nodes per axis", self.name, mass, per_axis)
        return self

    def marginal(self, l: int) -> Density:
        """Density of ``(x_0, ..., x_l)`` in natural coordinate order."""
        if self.stage_densities is not None:
            return self.stage_densities[l]
        if l == self.dim - 1:
            return self.f
        trailing = [self.axis(i, _MARGINAL_NODES) for i in range(l + 1, self.dim)]
        tail = np.stack(np.meshgrid(*trailing, indexing="ij"), axis=-1).reshape(-1, len(trailing))

        def g(points):
            points = np.asarray(points, dtype=float)
            lead = points.reshape(-1, l + 1)
            full = np.concatenate([np.repeat(lead[:, None, :], tail.shape[0], axis=1), np.broadcast_to(tail, (lead.shape[0],) + tail.shape)], axis=-1)
            values = self(full).reshape((lead.shape[0],) + (_MARGINAL_NODES,) * len(trailing))
            return _integrate_box(values, trailing).reshape(points.shape[:-1])

        return g

    def stage_density(self, l: int) -> "JointDensity":
        """
        Density of ``(x_l, x_0, ..., x_{l-1})``: the conditioned coordinate
        moved to the front, as :func:`conditional_cdf` expects.
        """
        if l not in self._stages:
            g = self.marginal(l)
            order = np.r_[l, np.arange(l)]
            restore = np.argsort(order)

            def f(points):
                return g(np.asarray(points, dtype=float)[..., restore])

            self._stages[l] = JointDensity(l + 1, f, self.low[order], self.high[order], nodes=self.nodes, name=f"{self.name}[stage {l}]")
        return self._stages[l]

    @classmethod
    def product_normal(cls, dim: int, half_width: float = DEFAULT_HALF_WIDTH, nodes: int = DEFAULT_NODES) -> "JointDensity":
        """Standard normal product density, declared factorized."""

        def f(points):
            return np.prod(stats.norm.pdf(points), axis=-1)

        return cls(
            dim,
            f,
            np.full(dim, -half_width),
            np.full(dim, half_width),
            nodes=nodes,
            factorized=True,
            marginal_cdfs=[stats.norm.cdf] * dim,
            stage_densities=[(lambda points, k=l + 1: np.prod(stats.norm.pdf(np.asarray(points)[..., :k]), axis=-1)) for l in range(dim)],
            sampler=lambda rng, n: rng.standard_normal((n, dim)),
            name="product_normal",
        )

    @classmethod
    def correlated_normal(cls, mean, cov, half_width: float = DEFAULT_HALF_WIDTH, nodes: int = DEFAULT_NODES) -> "JointDensity":
        """Gaussian density; the box is ``mean +/- half_width`` standard deviations."""
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        dim = mean.size
        if cov.shape != (dim, dim):
            raise ConfigurationError(f"Covariance must be {dim}x{dim}, got {cov.shape}")
        try:
            laws = [stats.multivariate_normal(mean[: l + 1], cov[: l + 1, : l + 1]) for l in range(dim)]
        except (ValueError, np.linalg.LinAlgError) as e:
            raise ConfigurationError(f"Covariance is not positive definite: {e}") from e

        def marginal(law, k):
            def g(points):
                points = np.asarray(points, dtype=float)
                return np.reshape(law.pdf(points[..., :k]), points.shape[:-1])

            return g

        stages = [marginal(law, l + 1) for l, law in enumerate(laws)]
        sd = np.sqrt(np.diag(cov))
        return cls(
            dim,
            stages[-1],
            mean - half_width * sd,
            mean + half_width * sd,
            nodes=nodes,
            stage_densities=stages,
            sampler=lambda rng, n: rng.multivariate_normal(mean, cov, size=n),
            name="correlated_normal",
        )

    @classmethod
    def from_grid(cls, values, low, high, nodes: int = DEFAULT_NODES, name: str = "grid") -> "JointDensity":
        """
        Density tabulated on a regular grid, linearly interpolated.  Stage
        densities integrate the table over trailing axes.
        """
        values = np.asarray(values, dtype=float)
        low = np.atleast_1d(np.asarray(low, dtype=float))
        high = np.atleast_1d(np.asarray(high, dtype=float))
        dim = values.ndim
        if low.size != dim or high.size != dim:
            raise ConfigurationError(f"Grid has {dim} axes but the box has {low.size}")
        axes = [np.linspace(low[i], high[i], values.shape[i]) for i in range(dim)]
        stages = []
        for l in range(dim):
            table = _integrate_box(values, axes[l + 1 :]) if l + 1 < dim else values
            interpolator = RegularGridInterpolator(axes[: l + 1], table, bounds_error=False, fill_value=None)
            stages.append(lambda points, k=l + 1, i=interpolator: np.maximum(i(np.asarray(points, dtype=float)[..., :k]), 0.0))
        return cls(dim, stages[-1], low, high, nodes=nodes, stage_densities=stages, name=name)


def _check_inside(density: JointDensity, points: np.ndarray):
    inside = density.contains(points)
    if not np.all(inside):
        bad = points[int(np.argmin(inside))]
        raise DensitySupportError(f"Point {bad.tolist()} lies outside the box of {density.name!r}")


@dataclass
class _Tables:
    z: np.ndarray
    values: np.ndarray
    cumulative: np.ndarray
    total: np.ndarray


def _tables(density: JointDensity, rest: np.ndarray) -> _Tables:
    """Values and running Simpson integrals along the leading axis, one row per conditioning point."""
    z = density.axis(0)
    rows = []
    for start in range(0, rest.shape[0], _ROW_CHUNK):
        chunk = rest[start : start + _ROW_CHUNK]
        grid = np.empty((chunk.shape[0], z.size, density.dim))
        grid[:, :, 0] = z
        grid[:, :, 1:] = chunk[:, None, :]
        rows.append(density(grid))
    values = np.concatenate(rows, axis=0)
    cumulative = integrate.cumulative_simpson(values, x=z, axis=-1, initial=0.0)
    total = cumulative[:, -1]
    if np.any(~(total >= DENOMINATOR_GUARD)):
        bad = rest[int(np.argmin(np.nan_to_num(total, nan=-np.inf)))]
        raise DensitySupportError(f"Conditional normalizer below {DENOMINATOR_GUARD} at {bad.tolist()}")
    return _Tables(z, values, cumulative, total)


def _conditioning(density: JointDensity, points: np.ndarray):
    """Unique conditioning rows and the index of each point's row."""
    rest = points[:, 1:]
    if rest.shape[1] == 0:
        return np.empty((1, 0)), np.zeros(points.shape[0], dtype=int)
    unique, inverse = np.unique(rest, axis=0, return_inverse=True)
    return unique, np.reshape(inverse, -1)


def _partial(density: JointDensity, left: np.ndarray, x: np.ndarray, rest: np.ndarray, f_left: np.ndarray) -> np.ndarray:
    """Simpson integral over ``[left, x]`` at fixed conditioning values."""
    mid = np.column_stack([(left + x) / 2.0, rest])
    end = np.column_stack([x, rest])
    return (x - left) / 6.0 * (f_left + 4.0 * density(mid) + density(end))


def conditional_cdf(density: JointDensity, point) -> np.ndarray:
    """
    ``F(x^1 | x^2, ..., x^{k+1})`` by quadrature along the first axis.

    ``point`` is one point of shape ``(dim,)`` or a batch ``(n, dim)``.
    Grid tables are built once per distinct conditioning value.

    Raises
    ------
    DensitySupportError
        For points outside the box or a vanishing normalizer.
    """
    point = np.asarray(point, dtype=float)
    single = point.ndim == 1
    points = np.atleast_2d(point)
    if points.shape[1] != density.dim:
        raise ConfigurationError(f"Expected points of dimension {density.dim}, got {points.shape[1]}")
    _check_inside(density, points)
    unique, inverse = _conditioning(density, points)
    tables = _tables(density, unique)
    x = points[:, 0]
    cell = np.clip(np.searchsorted(tables.z, x, side="right") - 1, 0, tables.z.size - 2)
    left = tables.z[cell]
    partial = _partial(density, left, x, points[:, 1:], tables.values[inverse, cell])
    cdf = np.clip((tables.cumulative[inverse, cell] + partial) / tables.total[inverse], 0.0, 1.0)
    return float(cdf[0]) if single else cdf


def _inverse_conditional(density: JointDensity, u: np.ndarray, rest: np.ndarray) -> np.ndarray:
    """Solve ``F(x | rest) = u`` for ``x``: locate the grid cell, then bisect inside it."""
    points = np.column_stack([np.full(u.size, density.low[0]), rest])
    unique, inverse = _conditioning(density, points)
    tables = _tables(density, unique)
    target = np.clip(u, 0.0, 1.0) * tables.total[inverse]
    cumulative = tables.cumulative[inverse]
    cell = np.clip((cumulative <= target[:, None]).sum(axis=1) - 1, 0, tables.z.size - 2)
    lo = tables.z[cell].copy()
    hi = tables.z[cell + 1].copy()
    base = cumulative[np.arange(u.size), cell]
    f_left = tables.values[inverse, cell]
    left = tables.z[cell]
    for _ in range(BISECTION_STEPS):
        mid = (lo + hi) / 2.0
        below = base + _partial(density, left, mid, rest, f_left) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return (lo + hi) / 2.0


class TransformChain:
    """
    Ordered conditional-CDF maps ``g_l``; stage ``l`` sends ``x_l`` to its
    conditional CDF given ``x_0, ..., x_{l-1}`` and reads nothing else.
    """

    def __init__(self, density: JointDensity):
        self.density = density
        self.dim = density.dim

    @classmethod
    def from_density(cls, density: JointDensity, validate: bool = True) -> "TransformChain":
        if validate:
            density.validate()
        return cls(density)

    @property
    def factorized(self) -> bool:
        return self.density.factorized

    def reads(self, l: int) -> Tuple[int, ...]:
        """Input coordinates stage ``l`` depends on."""
        if not 0 <= l < self.dim:
            raise ConfigurationError(f"Stage {l} out of range for dimension {self.dim}")
        return (l,) if self.factorized else tuple(range(l + 1))

    def stage(self, l: int, samples: np.ndarray) -> np.ndarray:
        if self.factorized:
            return np.asarray(self.density.marginal_cdfs[l](samples[:, l]), dtype=float)
        order = np.r_[l, np.arange(l)]
        return conditional_cdf(self.density.stage_density(l), samples[:, order])

    def _forward_batch(self, samples: np.ndarray) -> np.ndarray:
        return np.column_stack([self.stage(l, samples) for l in range(self.dim)])

    def forward(self, samples, threads: int = 1, batch_size: int = BATCH_SIZE) -> np.ndarray:
        """Map samples of shape ``(n, dim)`` to independent uniforms."""
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[1] != self.dim:
            raise ConfigurationError(f"Expected samples of dimension {self.dim}, got {samples.shape[1]}")
        _check_inside(self.density, samples)
        batches = [samples[i : i + batch_size] for i in range(0, samples.shape[0], batch_size)]
        return np.concatenate(parallel_map(self._forward_batch, batches, threads=threads), axis=0)

    def inverse(self, uniforms) -> np.ndarray:
        """Map uniforms of shape ``(n, dim)`` back into the box."""
        u = np.atleast_2d(np.asarray(uniforms, dtype=float))
        if u.shape[1] != self.dim:
            raise ConfigurationError(f"Expected points of dimension {self.dim}, got {u.shape[1]}")
        x = np.empty_like(u)
        for l in range(self.dim):
            x[:, l] = _inverse_conditional(self.density.stage_density(l), u[:, l], x[:, :l])
        return x

    def check_monotone(self, points: int = 33, conditioning: int = 8, seed: int = 0) -> bool:
        """
        Whether every stage is strictly increasing in its own coordinate on a
        grid of interior points, at seeded conditioning values.  Outputs
        within ``MONOTONE_SATURATION`` of 0 or 1 only need to be
        nondecreasing, since double precision cannot separate them.
        """
        rng = make_rng(seed, "innovations", "monotone")
        low, high = self.density.low, self.density.high
        for l in range(self.dim):
            lead = np.linspace(low[l], high[l], points + 2)[1:-1]
            rest = rng.uniform(low[:l], high[:l], size=(conditioning, l))
            for row in rest:
                samples = np.empty((points, self.dim))
                samples[:] = (low + high) / 2.0
                samples[:, :l] = row
                samples[:, l] = lead
                values = self.stage(l, samples)
                steps = np.diff(values)
                resolved = (values[:-1] > MONOTONE_SATURATION) & (values[1:] < 1.0 - MONOTONE_SATURATION)
                if np.any(steps < 0) or np.any(steps[resolved] <= 0):
                    logger.warning("Stage %d is not strictly increasing at conditioning values %s", l, row.tolist())
                    return False
        return True


def draw_samples(density: JointDensity, n: int, seed: int = 0, chain: Optional[TransformChain] = None) -> np.ndarray:
    """
    ``n`` seeded draws inside the box.  Draws of the density's own sampler
    that leave the box are discarded and replaced.
    """
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    rng = make_rng(seed, "innovations", "samples")
    if density.sampler is None:
        chain = chain or TransformChain(density)
        return chain.inverse(rng.uniform(size=(n, density.dim)))
    kept = np.empty((0, density.dim))
    dropped = 0
    while kept.shape[0] < n:
        draws = np.reshape(density.sampler(rng, n), (n, density.dim))
        inside = density.contains(draws)
        dropped += int(np.count_nonzero(~inside))
        kept = np.concatenate([kept, draws[inside]], axis=0)
    if dropped:
        logger.info("Discarded %d draws outside the box of %s", dropped, density.name)
    return kept[:n]


def rosenblatt(chain: TransformChain, sample, threads: int = 1) -> np.ndarray:
    """
    Forward transform of one sample ``(dim,)`` or a batch ``(n, dim)``; the
    result has the input's shape.
    """
    sample = np.asarray(sample, dtype=float)
    out = chain.forward(sample, threads=threads)
    return out[0] if sample.ndim == 1 else out


def inverse_rosenblatt(chain: TransformChain, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = chain.inverse(u)
    return out[0] if u.ndim == 1 else out


def independentize(density: JointDensity, samples, T: int, N: int, threads: int = 1, chain: Optional[TransformChain] = None) -> np.ndarray:
    """
    Independent innovations ``(Z_1, ..., Z_T)`` from samples of
    ``(Z~_1, ..., Z~_T)``, each block in ``R^N``.

    ``samples`` has shape ``(n, T, N)`` or ``(n, T * N)``; the result has
    shape ``(n, T, N)``.  Coordinates are ordered block by block so block
    ``t`` of the output reads only blocks ``1..t`` of the input.

    Raises
    ------
    ConfigurationError
        When the density dimension is not ``T * N`` or the samples do not
        match the block structure.
    """
    if T < 1 or N < 1:
        raise ConfigurationError("T and N must be positive")
    if density.dim != T * N:
        raise ConfigurationError(f"Density dimension {density.dim} does not match T*N = {T * N}")
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 3:
        if samples.shape[1:] != (T, N):
            raise ConfigurationError(f"Samples have block shape {samples.shape[1:]}, expected {(T, N)}")
        samples = samples.reshape(samples.shape[0], T * N)
    elif samples.ndim != 2 or samples.shape[1] != T * N:
        raise ConfigurationError(f"Samples must have shape (n, {T}, {N}) or (n, {T * N})")
    chain = chain or TransformChain.from_density(density)
    return chain.forward(samples, threads=threads).reshape(-1, T, N)
