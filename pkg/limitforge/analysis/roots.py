import math
import logging
from typing import Callable, Optional, Tuple

from ..exceptions import RootBracketError

logger = logging.getLogger(__name__)

EPS = 2.220446049250313e-16


def newton_bisect(
    func: Callable[[float], Tuple[float, float]],
    lo: float,
    hi: float,
    x0: Optional[float] = None,
    xtol: float = 4 * EPS,
    ftol: float = 0.0,
    max_iter: int = 200,
) -> float:
    """Finds a root bracketed by [lo, hi] combining Newton steps and bisection.

    A Newton step is taken when it stays inside the current bracket and shrinks the step fast enough;
    otherwise the bracket is bisected. The bracket is updated after every evaluation.

    Args:
        func (Callable[[float], Tuple[float, float]]): Returns (f(x), f'(x)).
        lo (float): One end of the bracket.
        hi (float): Other end of the bracket.
        x0 (Optional[float], optional): Starting point inside the bracket. Defaults to the midpoint.
        xtol (float, optional): Relative step size at which to stop. Defaults to 4 machine epsilons.
        ftol (float, optional): Absolute residual at which to stop. Defaults to 0.0.
        max_iter (int, optional): Maximum number of iterations. Defaults to 200.

    Raises:
        RootBracketError: Raises when f(lo) and f(hi) have the same sign, or on non-convergence.

    Returns:
        float: The root.
    """
    flo, _ = func(lo)
    fhi, _ = func(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if math.copysign(1.0, flo) == math.copysign(1.0, fhi):
        raise RootBracketError(
            f"Interval [{lo!r}, {hi!r}] does not bracket a root: f(lo)={flo!r}, f(hi)={fhi!r}."
        )
    # Orient the search so that f(xlo) < 0 < f(xhi)
    xlo, xhi = (lo, hi) if flo < 0 else (hi, lo)
    x = 0.5 * (lo + hi) if x0 is None else x0
    dxold = abs(hi - lo)
    dx = dxold
    f, df = func(x)
    for _ in range(max_iter):
        if f == 0.0 or abs(f) <= ftol:
            return x
        if ((x - xhi) * df - f) * ((x - xlo) * df - f) > 0.0 or abs(
            2.0 * f
        ) > abs(dxold * df):
            dxold = dx
            dx = 0.5 * (xhi - xlo)
            x = xlo + dx
            if x == xlo:
                return x
        else:
            dxold = dx
            dx = f / df
            previous = x
            x = x - dx
            if previous == x:
                return x
        if abs(dx) <= xtol * abs(x):
            return x
        f, df = func(x)
        if f < 0:
            xlo = x
        else:
            xhi = x
    raise RootBracketError(
        f"Root solver did not converge in {max_iter} iterations on [{lo!r}, {hi!r}]."
    )
