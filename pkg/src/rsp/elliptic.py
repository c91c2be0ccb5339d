"""Complete elliptic integral of the second kind by the AGM."""
import math

AGM_RTOL = 1e-15
_MAX_ITER = 64


def elliptic_E(k: float) -> float:
    """``E(k) = int_0^{pi/2} sqrt(1 - k^2 sin^2 phi) dphi`` (modulus ``k``, not ``m = k^2``).

    Uses ``E = K (1 - sum_n 2^(n-1) c_n^2)`` with ``K = pi / (2 AGM(1, k'))``.
    """
    k = float(k)
    if not 0.0 <= k <= 1.0:
        raise ValueError(f"modulus k={k} outside [0, 1]")
    if k == 1.0:
        return 1.0
    a, b = 1.0, math.sqrt((1.0 - k) * (1.0 + k))
    c2 = k * k
    total = 0.5 * c2
    weight = 0.5
    for _ in range(_MAX_ITER):
        if abs(a - b) <= AGM_RTOL * a:
            break
        c = 0.5 * (a - b)
        a, b = 0.5 * (a + b), math.sqrt(a * b)
        weight *= 2.0
        total += weight * c * c
    else:  # pragma: no cover - quadratic convergence makes this unreachable
        raise RuntimeError("AGM iteration did not converge")
    return math.pi / (2.0 * a) * (1.0 - total)
