"""Independent reference computations used by several test modules."""

import numpy as np
import sympy as sy

_x, _z, _a, _b = sy.symbols("x z a b", real=True)
_e, _A, _B = sy.symbols("e A B", positive=True)
_r = sy.symbols("r", nonnegative=True)
_PHI_R = _A * sy.exp(-(_e**2) * _r**2) + _B * _r**3


def _radial_ops():
    # radial forms: d/dx phi = phi'(r) (x-a)/r, lap phi = phi'' + phi'/r; simplified so r = 0 is finite
    d1 = sy.diff(_PHI_R, _r)
    g = sy.simplify(d1 / _r)
    lap = sy.simplify(sy.diff(_PHI_R, _r, 2) + d1 / _r)
    args = (_r, _e, _A, _B)
    return sy.lambdify(args, _PHI_R, "numpy"), sy.lambdify(args, g, "numpy"), sy.lambdify(args, lap, "numpy")


PHI, GRAD_OVER_R, LAP = _radial_ops()


def kernel_coeffs(spec):
    if spec.variant == "gaussian":
        return spec.epsilon, 1.0, 0.0
    if spec.variant in ("cubic", "phs"):
        return 1.0, 0.0, 1.0
    return spec.epsilon, 1.0, spec.gamma


def dense_weights(spec, op, center, stencil):
    """Row of ``K_L K^{-1}`` in unscaled coordinates with an explicit inverse."""
    e, A, B = kernel_coeffs(spec)
    Z = np.asarray(stencil, dtype=float)
    c = np.asarray(center, dtype=float)
    R = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=-1)
    K = np.broadcast_to(PHI(R, e, A, B), R.shape).astype(float)
    d = c - Z
    r = np.linalg.norm(d, axis=1)
    terms = op.terms()
    b = np.zeros(len(Z), dtype=complex)
    for t, coef in terms.items():
        if t == "id":
            v = PHI(r, e, A, B)
        elif t == "lap":
            v = LAP(r, e, A, B)
        else:
            v = GRAD_OVER_R(r, e, A, B) * d[:, 0 if t == "dx" else 1]
        b += coef * np.broadcast_to(v, r.shape)
    w = np.linalg.inv(K) @ b
    return w.real if not np.any(w.imag) else w
