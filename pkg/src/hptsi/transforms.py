"""Parametric spatial transforms ``phi(mu, eta)`` and their diagnostics.

A :class:`TransformSet` stores, for every source node ``eta``, the displacement

    phi(mu, eta)(x, p) - x = (mu - eta) * sum_k ell_k(mu) sum_m B_m(p) sum_j c[eta, k, m, j] psi_j(x)

where ``ell_k`` are the Lagrange polynomials of the source nodes, ``B_m`` a
tensor-product Lagrange basis in already processed parameter axes ``p`` (empty
for a plain 1D transform) and ``psi_j`` Legendre polynomials in ``x``. The
factor ``(mu - eta)`` makes ``phi(eta, eta)`` the identity for any
coefficients. Optionally the previously processed parameters are warped as
well, by an ``x``-independent displacement of the same form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import legendre
from scipy.integrate import solve_ivp

from hptsi.field import Grid1D
from hptsi.interp import NodeSet, lagrange_matrix


class FoldingTransformError(ValueError):
    """A transform is not monotone on the grid and would fold the domain."""


def spatial_basis(x, interval, degree: int) -> np.ndarray:
    """Legendre polynomials on ``interval``, shape ``(len(x), degree + 1)``."""
    a, b = interval
    s = (2.0 * np.asarray(x, dtype=float) - a - b) / (b - a)
    return legendre.legvander(s, degree)


def param_basis(node_sets: Sequence[NodeSet], params) -> np.ndarray:
    """Tensor-product Lagrange basis, shape ``(q, prod(len(ns)))``."""
    params = np.asarray(params, dtype=float)
    if params.ndim == 1:
        params = params[:, None] if len(node_sets) == 1 else params[None, :]
    q = params.shape[0]
    out = np.ones((q, 1))
    for axis, ns in enumerate(node_sets):
        la = lagrange_matrix(ns, params[:, axis])
        out = (out[:, :, None] * la[:, None, :]).reshape(q, -1)
    return out


@dataclass(frozen=True, eq=False)
class TransformSet:
    """Coefficients of the transforms attached to one set of source nodes."""

    source_nodes: NodeSet
    spatial_interval: tuple
    coeffs: np.ndarray
    param_node_sets: tuple = ()
    param_coeffs: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.source_nodes)
        m = int(np.prod([len(ns) for ns in self.param_node_sets])) if self.param_node_sets else 1
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 3:
            c = c[:, :, None, :]
        if c.shape[:3] != (n, n, m):
            raise ValueError(f"coefficient shape {c.shape} inconsistent with "
                             f"{n} nodes and {m} parameter basis functions")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "param_node_sets", tuple(self.param_node_sets))
        object.__setattr__(self, "spatial_interval", tuple(map(float, self.spatial_interval)))
        if self.param_coeffs is not None:
            pc = np.array(self.param_coeffs, dtype=float)
            if pc.shape != (n, n, m, len(self.param_node_sets)):
                raise ValueError(f"param_coeffs shape {pc.shape} is inconsistent")
            object.__setattr__(self, "param_coeffs", pc)

    @classmethod
    def identity(cls, source_nodes: NodeSet, spatial_interval, spatial_degree: int = 1,
                 param_node_sets=(), warp_params: bool = False) -> "TransformSet":
        n = len(source_nodes)
        m = int(np.prod([len(ns) for ns in param_node_sets])) if param_node_sets else 1
        pc = np.zeros((n, n, m, len(param_node_sets))) if warp_params else None
        return cls(source_nodes, spatial_interval, np.zeros((n, n, m, spatial_degree + 1)),
                   tuple(param_node_sets), pc)

    @property
    def spatial_degree(self) -> int:
        return self.coeffs.shape[-1] - 1

    @property
    def n_params(self) -> int:
        return len(self.param_node_sets)

    def with_coeffs(self, coeffs, param_coeffs=None) -> "TransformSet":
        return TransformSet(self.source_nodes, self.spatial_interval, coeffs,
                            self.param_node_sets,
                            self.param_coeffs if param_coeffs is None else param_coeffs)

    def source_index(self, eta: float) -> int:
        try:
            return self.source_nodes.index(eta)
        except KeyError:
            raise KeyError(f"unknown source node {eta!r}") from None

    def _param_values(self, params):
        if self.n_params == 0:
            return np.ones((1, 1)), None
        p = np.asarray(params, dtype=float)
        if p.ndim == 0:
            p = p.reshape(1, 1)
        elif p.ndim == 1:
            p = p[:, None] if self.n_params == 1 else p[None, :]
        return param_basis(self.param_node_sets, p), p

    def displacement(self, mu: float, eta: float, x, params=None) -> np.ndarray:
        """``phi(mu, eta)(x) - x``; shape ``(q, len(x))`` when ``params`` has ``q`` rows."""
        i = self.source_index(eta)
        lk = lagrange_matrix(self.source_nodes, [mu])[0]
        basis_x = spatial_basis(x, self.spatial_interval, self.spatial_degree)
        bp, _ = self._param_values(params)
        a = np.einsum("k,kmj->mj", lk, self.coeffs[i])
        d = (mu - eta) * (bp @ a @ basis_x.T)
        if self.n_params == 0:
            return d[0]
        return d

    def displacement_table(self, mus, x) -> np.ndarray:
        """Displacements for all source nodes at many targets, shape ``(q, n, len(x))``.

        Only for transforms without parameter arguments.
        """
        if self.n_params:
            raise ValueError("displacement_table needs a transform without params")
        mus = np.atleast_1d(np.asarray(mus, dtype=float))
        lk = lagrange_matrix(self.source_nodes, mus)
        basis_x = spatial_basis(x, self.spatial_interval, self.spatial_degree)
        a = np.einsum("tk,ikj->tij", lk, self.coeffs[:, :, 0, :])
        shift = mus[:, None] - self.source_nodes.nodes[None, :]
        return shift[:, :, None] * (a @ basis_x.T)

    def continuous(self) -> "FunctionTransform":
        """Transform family with the source interpolated between nodes.

        The coefficient blocks of the source nodes are combined with the
        source Lagrange factors, so the result agrees with :meth:`apply` at
        nodes and is defined for any source parameter.
        """
        if self.n_params:
            raise ValueError("continuous() needs a transform without params")

        def func(mu, eta, x):
            ls = lagrange_matrix(self.source_nodes, [eta])[0]
            lk = lagrange_matrix(self.source_nodes, [mu])[0]
            basis_x = spatial_basis(x, self.spatial_interval, self.spatial_degree)
            a = np.einsum("i,k,ikj->j", ls, lk, self.coeffs[:, :, 0, :])
            return x + (mu - eta) * (basis_x @ a)

        return FunctionTransform(func, self.source_nodes)

    def param_displacement(self, mu: float, eta: float, params) -> np.ndarray:
        """Warp of the previously processed parameters, shape ``(q, r)``."""
        bp, p = self._param_values(params)
        if self.param_coeffs is None:
            return np.zeros_like(p)
        i = self.source_index(eta)
        lk = lagrange_matrix(self.source_nodes, [mu])[0]
        e = np.einsum("k,kmr->mr", lk, self.param_coeffs[i])
        return (mu - eta) * (bp @ e)

    def apply(self, mu: float, eta: float, x, params=None):
        """Transformed point ``phi(mu, eta)(x)`` or ``(x', params')``."""
        x = np.asarray(x, dtype=float)
        if self.n_params == 0:
            return x + self.displacement(mu, eta, x)
        if params is None:
            raise ValueError("this transform acts on (x, params); params missing")
        dx = self.displacement(mu, eta, x, params)
        _, p = self._param_values(params)
        dp = self.param_displacement(mu, eta, params)
        return x[None, :] + dx, p + dp

    def to_dict(self) -> dict:
        return {
            "type": "TransformSet",
            "source_nodes": self.source_nodes.to_dict(),
            "spatial_interval": list(self.spatial_interval),
            "spatial_basis": "legendre",
            "spatial_degree": self.spatial_degree,
            "param_node_sets": [ns.to_dict() for ns in self.param_node_sets],
            "coeff_shape": list(self.coeffs.shape),
            "coeffs": self.coeffs.ravel().tolist(),
            "param_coeffs": None if self.param_coeffs is None
            else self.param_coeffs.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformSet":
        shape = tuple(d["coeff_shape"])
        nsets = tuple(NodeSet.from_dict(v) for v in d["param_node_sets"])
        pc = d.get("param_coeffs")
        if pc is not None:
            pc = np.asarray(pc).reshape(shape[:3] + (len(nsets),))
        return cls(NodeSet.from_dict(d["source_nodes"]), tuple(d["spatial_interval"]),
                   np.asarray(d["coeffs"]).reshape(shape), nsets, pc)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "TransformSet":
        return cls.from_dict(json.loads(text))


class FunctionTransform:
    """Transform family given by a callable ``func(mu, eta, x)``.

    Unlike :class:`TransformSet` the source parameter may vary continuously,
    which is what the flow diagnostics need.
    """

    def __init__(self, func: Callable, source_nodes: Optional[NodeSet] = None):
        self.func = func
        self.source_nodes = source_nodes

    def apply(self, mu, eta, x, params=None):
        if params is None:
            return np.asarray(self.func(mu, eta, np.asarray(x, dtype=float)), dtype=float)
        return self.func(mu, eta, np.asarray(x, dtype=float), params)


def apply(T, target, source, point):
    """Evaluate ``phi(target, source)`` at ``point`` (``x`` or ``(x, params)``)."""
    if isinstance(point, tuple):
        return T.apply(target, source, point[0], point[1])
    return T.apply(target, source, point)


@dataclass(frozen=True)
class Step:
    """Local transform ``phi(target, source)`` of a chain."""

    target: float
    source: float
    map: Callable


class ComposedMap:
    def __init__(self, steps: Sequence[Step]):
        self.steps = list(steps)
        self.source = self.steps[0].source
        self.target = self.steps[-1].target

    def __call__(self, x):
        for step in reversed(self.steps):
            x = step.map(x)
        return x


def compose_chain(steps: Sequence[Step], tol: float = 1e-12) -> ComposedMap:
    """Compose ``phi(mu_1, mu_0) o ... o phi(mu_k, mu_{k-1})``.

    ``steps`` is ordered from the source end (``steps[0] = phi(mu_1, mu_0)``);
    the last step is applied first.
    """
    if not steps:
        raise ValueError("empty chain")
    for s1, s2 in zip(steps, steps[1:]):
        if abs(s1.target - s2.source) > tol * max(1.0, abs(s1.target)):
            raise ValueError(f"chain broken between {s1} and {s2}")
    return ComposedMap(steps)


def ode_residual(T, mu: float, eta: float, x: float, dh: float) -> float:
    """Defect of the transform family in the flow equation ``d/deta phi = Phi``.

    ``Phi(eta, y)`` is read off as ``d/dxi phi(eta, xi)(y)`` at ``xi = eta``;
    both derivatives use forward differences with step ``dh``. The source
    parameter must vary continuously, so a :class:`TransformSet` is replaced
    by its :meth:`~TransformSet.continuous` extension.
    """
    if isinstance(T, TransformSet):
        T = T.continuous()
    y = float(T.apply(mu, eta, np.array([x]))[0])
    lhs = (float(T.apply(mu, eta + dh, np.array([x]))[0]) - y) / dh
    direction = (float(T.apply(eta, eta + dh, np.array([y]))[0]) - y) / dh
    return abs(lhs - direction)


@dataclass(frozen=True)
class DirectionField:
    """Direction field ``Phi(eta, x)`` of a transform flow.

    ``lipschitz`` is the Lipschitz constant of ``|eta - singular_param| * Phi``
    in ``x`` (or of ``Phi`` itself when there is no singular parameter).
    """

    func: Callable
    singular_param: Optional[float] = None
    lipschitz: float = 0.0

    def __call__(self, eta, x):
        return self.func(eta, x)


def integrate_flow(field: DirectionField, mu: float, eta: float, x0) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if eta == mu:
        return x0.copy()
    sol = solve_ivp(lambda s, y: field(s, y), (mu, eta), x0, method="DOP853",
                    rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[:, -1]


def gronwall_ratio_check(field: DirectionField, mu: float, eta: float, x: float, y: float):
    """Integrated separation of two flow lines and its a-priori bound.

    Returns ``(|x_eta - y_eta|, bound)`` with
    ``bound = |(eta - mu_bar)/(mu - mu_bar)|**L * |x - y|``, or
    ``exp(L |eta - mu|) |x - y|`` for a field without singular parameter.
    """
    if x == y:
        raise ValueError("x and y must differ")
    mb = field.singular_param
    if mb is not None and min(mu, eta) <= mb <= max(mu, eta):
        raise ValueError("singular parameter lies between mu and eta")
    end = integrate_flow(field, mu, eta, [x, y])
    lhs = abs(end[0] - end[1])
    if mb is None:
        bound = np.exp(field.lipschitz * abs(eta - mu)) * abs(x - y)
    else:
        bound = abs((eta - mb) / (mu - mb)) ** field.lipschitz * abs(x - y)
    return float(lhs), float(bound)


def pushforward_gamma(T, mu: float, eta: float, grid: Grid1D, params=None) -> float:
    """Largest inverse stretch ``max 1/|d phi/dx|`` of the realized map on ``grid``."""
    x = grid.x
    y = T.apply(mu, eta, x) if params is None else T.apply(mu, eta, x, params)[0]
    y = np.asarray(y, dtype=float).reshape(-1)
    dy = np.diff(y)
    if np.any(dy <= 0):
        bad = int(np.argmax(dy <= 0))
        raise FoldingTransformError(
            f"transform ({mu}, {eta}) is not monotone near x={x[bad]:.6g}")
    return float(np.max(grid.h / dy))


def dof_count(n: int, d: int, K: int):
    """Transform degrees of freedom of the component-wise scheme.

    Returns ``(exact, bound)`` with ``exact = sum_{i=1}^d n * n**i * K`` and
    ``bound = 2 n**(d+1) K``.
    """
    if n < 2 or d < 1 or K < 1:
        raise ValueError("need n >= 2, d >= 1, K >= 1")
    exact = sum(n * n ** i * K for i in range(1, d + 1))
    closed = n * (n ** (d + 1) - 1) // (n - 1) * K - n * K
    assert exact == closed
    return exact, 2 * n ** (d + 1) * K
