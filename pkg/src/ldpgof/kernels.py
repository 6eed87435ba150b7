"""Kernel functions used by the privacy mechanisms and the alternative generator.

Two roles are covered:

* a smoothing kernel ``psi`` (bounded, supported in [-1, 1], integrating to one)
  that the non-interactive mechanism evaluates at the bin centres;
* a zero-mean, unit-energy wave used to build perturbed alternatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate


def integrate_interval(func: Callable[[float], float], a: float, b: float,
                       points=None, tol: float = 1e-12) -> float:
    """Adaptive quadrature of ``func`` on ``[a, b]``."""
    if b <= a:
        return 0.0
    pts = None
    if points is not None:
        pts = [p for p in points if a < p < b] or None
    val, _ = integrate.quad(func, a, b, points=pts, epsabs=tol, epsrel=tol, limit=500)
    return float(val)


@dataclass(frozen=True)
class SmoothingKernel:
    """Bounded kernel supported in [-1, 1] with unit integral.

    Attributes:
        name: Short identifier.
        func: Vectorised evaluator on the real line (must already vanish outside [-1, 1]).
        sup_norm: ``max |psi|``.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    sup_norm: float
    _c_beta: Callable[[float], float] | None = field(default=None, repr=False)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(np.abs(t) <= 1.0, self.func(t), 0.0)
        return float(out) if out.ndim == 0 else out

    def c_beta(self, beta: float) -> float:
        """Integral of ``|t|^beta |psi(t)|`` over [-1, 1]."""
        if self._c_beta is not None:
            return self._c_beta(beta)
        return integrate_interval(lambda t: abs(t) ** beta * abs(self.eval(t)), -1.0, 1.0,
                                  points=[0.0])


@dataclass(frozen=True)
class WaveKernel:
    """Zero-mean, unit-energy function on [-1, 1], zero outside."""

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    antiderivative: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    sup_norm: float
    c1: float
    _holder: Callable[[float], float] = field(repr=False)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(np.abs(t) <= 1.0, self.func(t), 0.0)
        return float(out) if out.ndim == 0 else out

    def holder_constant(self, beta: float) -> float:
        return self._holder(beta)

    def integral(self, a, b):
        """Exact integral of the zero-extended wave over ``[a, b]`` (vectorised)."""
        a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
        b = np.clip(np.asarray(b, dtype=float), -1.0, 1.0)
        return np.where(b > a, self.antiderivative(b) - self.antiderivative(a), 0.0)


def boxcar() -> SmoothingKernel:
    """``psi(t) = 1/2`` on [-1, 1]."""
    return SmoothingKernel(
        name="boxcar",
        func=lambda t: np.full(np.shape(t), 0.5),
        sup_norm=0.5,
        _c_beta=lambda beta: 1.0 / (beta + 1.0),
    )


def epanechnikov() -> SmoothingKernel:
    """``psi(t) = 3/4 (1 - t^2)`` on [-1, 1]; an alternative admissible kernel."""
    return SmoothingKernel(
        name="epanechnikov",
        func=lambda t: 0.75 * (1.0 - np.asarray(t) ** 2),
        sup_norm=0.75,
    )


def sine_wave() -> WaveKernel:
    """``sin(pi t)`` on [-1, 1].

    Its zero extension is Hölder-beta with constant ``pi * 2**(1 - beta)``:
    ``|sin(pi t) - sin(pi s)| <= min(pi d, 2) <= pi**beta 2**(1-beta) d**beta``.
    """
    return WaveKernel(
        name="sine",
        func=lambda t: np.sin(np.pi * np.asarray(t)),
        antiderivative=lambda t: -np.cos(np.pi * np.asarray(t)) / np.pi,
        sup_norm=1.0,
        c1=4.0 / math.pi,
        _holder=lambda beta: math.pi * 2.0 ** (1.0 - beta),
    )


KERNELS = {"boxcar": boxcar, "epanechnikov": epanechnikov}


def scaled_eval(k: SmoothingKernel, h: float, u):
    """``(1/h) psi(u/h)``."""
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    u = np.asarray(u, dtype=float)
    out = k.eval(u / h) / h
    return out
