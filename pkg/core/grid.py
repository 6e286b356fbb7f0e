"""
Periodic grids, scalar fields and flat differential operators.

Spectral differentiation on the flat n-torus is the default; 4th-order
centered finite differences are available as an independent cross-check.
Quadrature is the periodic rectangle rule, which is exact for band-limited
integrands.
"""

from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from models.grid import DerivativeMethod, FieldDistances, GridSpec, ScalarField

__all__ = [
    "GridError",
    "make_grid",
    "make_field",
    "constant_field",
    "coordinates",
    "laplacian_flat",
    "gradient_flat",
    "grad_squared_flat",
    "grad_dot_flat",
    "integrate",
    "field_metrics",
    "dealias",
    "random_smooth_field",
    "bump_field",
    "check_same_grid",
]

MethodLike = Union[DerivativeMethod, str]


class GridError(Exception):
    """
    Exception raised for invalid grids and fields.

    Covers grid parameter validation, malformed or non-finite field
    values, nonpositive quadrature weights and grid mismatches.
    """

    pass


def make_grid(
    n: int,
    nodes_per_axis: Union[int, Sequence[int]],
    periods: Union[float, Sequence[float]],
) -> GridSpec:
    """
    Build a validated periodic grid.

    Scalars for ``nodes_per_axis`` or ``periods`` are repeated on every axis.

    Raises:
        GridError: If the dimension is below 3, an axis has too few nodes,
            or a period is not strictly positive.
    """
    if isinstance(nodes_per_axis, int):
        nodes_per_axis = [nodes_per_axis] * max(n, 0)
    if isinstance(periods, (int, float)):
        periods = [float(periods)] * max(n, 0)
    try:
        return GridSpec(
            dimension=n,
            nodes_per_axis=tuple(nodes_per_axis),
            periods=tuple(float(p) for p in periods),
        )
    except ValidationError as e:
        messages = [str(err.get("msg", "")).removeprefix("Value error, ") for err in e.errors()]
        raise GridError("; ".join(messages)) from e


def make_field(grid: GridSpec, values: np.ndarray) -> ScalarField:
    """
    Wrap node values into a ScalarField.

    Raises:
        GridError: If the value count does not match or values are not finite.
    """
    try:
        return ScalarField(grid, values)
    except ValueError as e:
        raise GridError(str(e)) from e


def constant_field(grid: GridSpec, value: float) -> ScalarField:
    """Field equal to ``value`` at every node."""
    return ScalarField(grid, np.full(grid.shape, float(value)))


def check_same_grid(*fields: ScalarField) -> GridSpec:
    """
    Return the common grid of the fields.

    Raises:
        GridError: If any two fields live on different grids.
    """
    grid = fields[0].grid
    for field in fields[1:]:
        if field.grid != grid:
            raise GridError("grid mismatch between fields")
    return grid


@lru_cache(maxsize=32)
def coordinates(grid: GridSpec) -> tuple[np.ndarray, ...]:
    """Node coordinates x_k = j·h_k, one read-only array per axis."""
    axes = [np.arange(m) * h for m, h in zip(grid.shape, grid.spacing)]
    mesh = np.meshgrid(*axes, indexing="ij")
    for array in mesh:
        array.setflags(write=False)
    return tuple(mesh)


@lru_cache(maxsize=32)
def _wavenumbers(grid: GridSpec) -> tuple[np.ndarray, ...]:
    """Angular wavenumbers in rfftn layout, broadcastable per axis."""
    last = grid.dimension - 1
    result = []
    for axis, (m, h) in enumerate(zip(grid.shape, grid.spacing)):
        freq = np.fft.rfftfreq(m, h) if axis == last else np.fft.fftfreq(m, h)
        shape = [1] * grid.dimension
        shape[axis] = freq.size
        result.append((2.0 * np.pi * freq).reshape(shape))
    return tuple(result)


@lru_cache(maxsize=32)
def _laplacian_symbol(grid: GridSpec) -> np.ndarray:
    return -sum(k**2 for k in _wavenumbers(grid))


@lru_cache(maxsize=32)
def _derivative_symbols(grid: GridSpec) -> tuple[np.ndarray, ...]:
    # The Nyquist mode of an even axis has no real-valued first derivative.
    symbols = []
    for axis, k in enumerate(_wavenumbers(grid)):
        k = k.copy()
        m = grid.shape[axis]
        if m % 2 == 0:
            index = [0] * grid.dimension
            index[axis] = m // 2
            k[tuple(index)] = 0.0
        symbols.append(1j * k)
    return tuple(symbols)


@lru_cache(maxsize=32)
def _dealias_mask(grid: GridSpec) -> np.ndarray:
    mask = np.ones(1)
    for axis, m in enumerate(grid.shape):
        last = axis == grid.dimension - 1
        index = np.fft.rfftfreq(m, 1.0 / m) if last else np.fft.fftfreq(m, 1.0 / m)
        shape = [1] * grid.dimension
        shape[axis] = index.size
        mask = mask * (np.abs(index) <= m / 3.0).reshape(shape)
    return mask


def _spectral_apply(grid: GridSpec, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    axes = tuple(range(grid.dimension))
    spectrum = np.fft.rfftn(values, axes=axes)
    return np.fft.irfftn(spectrum * symbol, s=grid.shape, axes=axes)


def _fd_second(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (
        -np.roll(values, -2, axis)
        + 16.0 * np.roll(values, -1, axis)
        - 30.0 * values
        + 16.0 * np.roll(values, 1, axis)
        - np.roll(values, 2, axis)
    ) / (12.0 * h * h)


def _fd_first(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (
        -np.roll(values, -2, axis)
        + 8.0 * np.roll(values, -1, axis)
        - 8.0 * np.roll(values, 1, axis)
        + np.roll(values, 2, axis)
    ) / (12.0 * h)


def laplacian_values(grid: GridSpec, values: np.ndarray, method: MethodLike = "spectral") -> np.ndarray:
    """Flat Laplacian of a raw node array."""
    if DerivativeMethod(method) is DerivativeMethod.FD:
        return sum(_fd_second(values, axis, h) for axis, h in enumerate(grid.spacing))
    return _spectral_apply(grid, values, _laplacian_symbol(grid))


def gradient_values(
    grid: GridSpec, values: np.ndarray, method: MethodLike = "spectral"
) -> tuple[np.ndarray, ...]:
    """Flat gradient components of a raw node array."""
    if DerivativeMethod(method) is DerivativeMethod.FD:
        return tuple(_fd_first(values, axis, h) for axis, h in enumerate(grid.spacing))
    return tuple(_spectral_apply(grid, values, s) for s in _derivative_symbols(grid))


def integrate_values(grid: GridSpec, values: np.ndarray) -> float:
    """Rectangle-rule integral of a raw node array against the flat measure."""
    # np.sum over a contiguous array is pairwise and order-stable.
    return float(np.sum(np.ascontiguousarray(values)) * grid.cell_volume)


def dealias_values(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """Apply the 2/3-rule spectral filter to a raw node array."""
    return _spectral_apply(grid, values, _dealias_mask(grid))


def helmholtz_solve_values(grid: GridSpec, rhs: np.ndarray, coeff: float) -> np.ndarray:
    """Solve (I - coeff·Δ_flat) x = rhs spectrally; coeff must be nonnegative."""
    return _spectral_apply(grid, rhs, 1.0 / (1.0 - coeff * _laplacian_symbol(grid)))


def laplacian_flat(f: ScalarField, method: MethodLike = "spectral") -> ScalarField:
    """
    Flat-torus Laplacian of a field.

    Args:
        f: Field to differentiate
        method: "spectral" (multiplier -|k|^2, exact for band-limited data)
            or "fd" (4th-order centered differences)

    Returns:
        ScalarField: Δ_flat f on the same grid
    """
    return f.with_values(laplacian_values(f.grid, f.values, method))


def gradient_flat(f: ScalarField, method: MethodLike = "spectral") -> tuple[ScalarField, ...]:
    """Flat gradient components of a field."""
    return tuple(f.with_values(c) for c in gradient_values(f.grid, f.values, method))


def grad_squared_flat(f: ScalarField, method: MethodLike = "spectral") -> ScalarField:
    """Pointwise |∇f|² with respect to the flat metric."""
    grad = gradient_values(f.grid, f.values, method)
    return f.with_values(sum(c * c for c in grad))


def grad_dot_flat(f: ScalarField, g: ScalarField, method: MethodLike = "spectral") -> ScalarField:
    """Pointwise flat inner product ⟨∇f, ∇g⟩."""
    grid = check_same_grid(f, g)
    grad_f = gradient_values(grid, f.values, method)
    grad_g = gradient_values(grid, g.values, method)
    return f.with_values(sum(a * b for a, b in zip(grad_f, grad_g)))


def integrate(f: ScalarField, weights: Optional[ScalarField] = None) -> float:
    """
    Quadrature Σ f·weights·h^n over the grid.

    Args:
        f: Integrand
        weights: Positive density against the flat measure; flat when omitted

    Returns:
        float: The integral

    Raises:
        GridError: If a weight is not positive or the grids differ.
    """
    if weights is None:
        return integrate_values(f.grid, f.values)
    grid = check_same_grid(f, weights)
    if weights.min <= 0.0:
        raise GridError("quadrature weights must be positive")
    return integrate_values(grid, f.values * weights.values)


def field_metrics(
    f: ScalarField,
    g: ScalarField,
    p: Optional[float] = None,
    weights: Optional[ScalarField] = None,
) -> FieldDistances:
    """
    Sup, L¹ and Lᵖ distances between two fields.

    Args:
        f: First field
        g: Second field
        p: Lᵖ exponent; defaults to 2n/(n-2)
        weights: Measure density (e.g. background volume weights); flat when omitted

    Raises:
        GridError: If the fields live on different grids.
    """
    grid = check_same_grid(f, g)
    if p is None:
        p = 2.0 * grid.dimension / (grid.dimension - 2)
    diff = f.with_values(np.abs(f.values - g.values))
    lp_integrand = diff.with_values(diff.values**p)
    return FieldDistances(
        sup_distance=diff.max,
        l1_distance=integrate(diff, weights),
        lp_distance=integrate(lp_integrand, weights) ** (1.0 / p),
        p=float(p),
    )


def dealias(f: ScalarField) -> ScalarField:
    """Zero every Fourier mode beyond two thirds of the resolvable band."""
    return f.with_values(dealias_values(f.grid, f.values))


def random_smooth_field(
    grid: GridSpec,
    rng: np.random.Generator,
    max_mode: int = 1,
    amplitude: float = 0.2,
    base: float = 1.0,
) -> ScalarField:
    """
    Random low-mode trigonometric field around ``base``.

    Every integer mode vector with entries in [-max_mode, max_mode] gets a
    random cosine with random phase; the sum is rescaled so its sup norm on
    the grid equals ``amplitude``. Deterministic for a seeded generator.
    """
    if 2 * max_mode >= min(grid.shape):
        raise GridError(f"max_mode {max_mode} is not resolved by the grid")
    coords = coordinates(grid)
    eta = np.zeros(grid.shape)
    modes = np.stack(
        np.meshgrid(*[np.arange(-max_mode, max_mode + 1)] * grid.dimension, indexing="ij"),
        axis=-1,
    ).reshape(-1, grid.dimension)
    for mode in modes:
        if not mode.any():
            continue
        phase = sum(
            2.0 * np.pi * k * x / period for k, x, period in zip(mode, coords, grid.periods)
        )
        eta += rng.normal() * np.cos(phase + rng.uniform(0.0, 2.0 * np.pi))
    peak = np.max(np.abs(eta))
    if peak > 0:
        eta *= amplitude / peak
    return ScalarField(grid, base + eta)


def bump_field(
    grid: GridSpec,
    radius: float,
    height: float = 1.0,
    center: Optional[Sequence[float]] = None,
) -> ScalarField:
    """
    Compactly supported bump height·(1 - ρ²/r²)⁴ on the torus.

    ρ is the periodic (minimum-image) distance to ``center``, which defaults
    to the node nearest the middle of the domain.
    """
    if radius <= 0:
        raise GridError("bump radius must be positive")
    if center is None:
        center = [(m // 2) * h for m, h in zip(grid.shape, grid.spacing)]
    rho_sq = np.zeros(grid.shape)
    for x, c, period in zip(coordinates(grid), center, grid.periods):
        d = np.abs(x - c) % period
        d = np.minimum(d, period - d)
        rho_sq += d * d
    profile = np.clip(1.0 - rho_sq / radius**2, 0.0, None) ** 4
    return ScalarField(grid, height * profile)
