"""Hot-kernel dispatch between the numpy implementation and the compiled
extension.

Both backends implement identical contracts (parity-tested); `bench kernels`
times them against each other. On builds where numpy links a fast BLAS the
numpy backend wins at production sizes, so ``auto`` selects it; set
BINDSOLVE_KERNELS=compiled to use the extension (raises if it was not built).

Every public function books its arithmetic cost with :mod:`bindsolve.flops`,
so op counting works identically on both backends.
"""
from __future__ import annotations

import os

import numpy as np

from .. import flops
from . import _numpy

_FORCED = os.environ.get("BINDSOLVE_KERNELS", "auto").lower()

_compiled = None
try:
    from . import _core as _compiled  # type: ignore[no-redef]
except ImportError:
    _compiled = None
    if _FORCED == "compiled":
        raise ImportError(
            "BINDSOLVE_KERNELS=compiled but the extension is not built; "
            "run `python setup.py build_ext --inplace` or reinstall."
        )

_impl = _compiled if (_FORCED == "compiled" and _compiled is not None) else _numpy


def backend_name() -> str:
    return "compiled" if _impl is not _numpy else "python"


def use_backend(name: str) -> None:
    """Switch backend at runtime (used by the kernel benchmark and tests)."""
    global _impl
    if name == "python":
        _impl = _numpy
    elif name == "compiled":
        if _compiled is None:
            raise ValueError("compiled kernel extension is not available")
        _impl = _compiled
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def mixture_softmax(centers, state, logit_scale, offsets):
    D, n = centers.shape
    flops.add(2 * flops.matvec(D, n) + 6 * n)
    return _impl.mixture_softmax(_as_f64(centers), _as_f64(state),
                                 float(logit_scale), _as_f64(offsets))


def mixture_softmax_identity(state, logit_scale, offsets):
    n = state.shape[0]
    flops.add(8 * n)
    return _impl.mixture_softmax_identity(_as_f64(state), float(logit_scale),
                                          _as_f64(offsets))


def softmax_jacobian_apply(centers, weights, vec, coef_mix, coef_id):
    D, n = centers.shape
    flops.add(2 * flops.matvec(D, n) + 4 * n + 2 * D)
    return _impl.softmax_jacobian_apply(_as_f64(centers), _as_f64(weights),
                                        _as_f64(vec), float(coef_mix),
                                        float(coef_id))


def softmax_jacobian_apply_identity(weights, vec, coef_mix, coef_id):
    n = weights.shape[0]
    flops.add(8 * n)
    return _impl.softmax_jacobian_apply_identity(_as_f64(weights), _as_f64(vec),
                                                 float(coef_mix), float(coef_id))


def autoassoc_sign(codebook, vec):
    D, n = codebook.shape
    flops.add(2 * flops.matvec(D, n) + D)
    return _impl.autoassoc_sign(_as_f64(codebook), _as_f64(vec))
