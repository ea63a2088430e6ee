"""Damped least-squares (Levenberg-Marquardt) engine with box bounds."""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from tcentre_hyperpol.core.contracts import FitResult
from tcentre_hyperpol.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

ModelFn = Callable[..., np.ndarray]
Bounds = Sequence[Tuple[float, float]]

FD_REL_STEP = 1e-6
COST_RTOL = 1e-10
STEP_TOL = 1e-12
SINGULAR_COND = 1e14
LAMBDA_START = 1e-3
LAMBDA_MAX = 1e12


class LeastSquaresFitter:
    """
    Minimizes sum(((y - model(x, *p)) / sigma)^2) over the free parameters.

    Steps solve (alpha + lambda * diag(alpha)) dp = beta with alpha = J^T W J
    and beta = J^T W r. Lambda is divided by 10 after an accepted step and
    multiplied by 10 after a rejected one. Trial points are clipped to the bounds.
    """

    def __init__(
        self,
        model: ModelFn,
        xdata: np.ndarray,
        ydata: np.ndarray,
        sigma: Optional[np.ndarray] = None,
        max_iter: int = 500,
    ):
        self.model = model
        self.xdata = xdata
        self.ydata = np.asarray(ydata, dtype=float).ravel()
        if sigma is None:
            sigma = np.ones_like(self.ydata)
        sigma = np.asarray(sigma, dtype=float).ravel()
        if sigma.shape != self.ydata.shape:
            raise ValidationError("sigma must match ydata in length")
        if np.any(sigma <= 0):
            raise ValidationError("sigma values must be positive")
        self.weight = 1.0 / sigma ** 2
        self.max_iter = max_iter
        self.n_evaluations = 0

    def evaluate(self, params: np.ndarray) -> np.ndarray:
        self.n_evaluations += 1
        return np.asarray(self.model(self.xdata, *params), dtype=float).ravel()

    def cost(self, yfit: np.ndarray) -> float:
        if yfit.shape != self.ydata.shape or not np.all(np.isfinite(yfit)):
            return np.inf
        return float(np.sum(self.weight * (self.ydata - yfit) ** 2))

    def jacobian(
        self,
        params: np.ndarray,
        free: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        yfit: np.ndarray,
    ) -> np.ndarray:
        """Finite-difference d(model)/dp for the free parameters, central where the bounds allow."""
        columns = []
        for index in free:
            h = FD_REL_STEP * max(abs(params[index]), 1.0)
            up = params.copy()
            down = params.copy()
            up[index] += h
            down[index] -= h
            if up[index] <= upper[index] and down[index] >= lower[index]:
                columns.append((self.evaluate(up) - self.evaluate(down)) / (2.0 * h))
            elif up[index] <= upper[index]:
                columns.append((self.evaluate(up) - yfit) / h)
            else:
                columns.append((yfit - self.evaluate(down)) / h)
        return np.column_stack(columns)

    def curvature(self, jac: np.ndarray, yfit: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        weighted = jac * self.weight[:, np.newaxis]
        alpha = jac.T @ weighted
        beta = weighted.T @ (self.ydata - yfit)
        return alpha, beta

    def fit(
        self,
        p0: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        free: np.ndarray,
    ) -> Dict:
        params = p0.copy()
        yfit = self.evaluate(params)
        chisq = self.cost(yfit)
        if not np.isfinite(chisq):
            raise ValidationError("model is not finite at the initial parameters")

        flambda = LAMBDA_START
        history = [chisq]
        converged = False
        message = "maximum iterations exceeded"
        n_iter = 0

        while n_iter < self.max_iter:
            n_iter += 1
            if chisq == 0.0:
                converged = True
                message = "exact fit"
                break

            jac = self.jacobian(params, free, lower, upper, yfit)
            alpha0, beta = self.curvature(jac, yfit)
            diag = np.diag(alpha0).copy()
            diag[diag == 0] = 1.0

            accepted = False
            while flambda <= LAMBDA_MAX:
                alpha = alpha0 + flambda * np.diag(diag)
                try:
                    step = np.linalg.solve(alpha, beta)
                except np.linalg.LinAlgError:
                    flambda *= 10.0
                    continue
                trial = params.copy()
                trial[free] = np.clip(params[free] + step, lower[free], upper[free])
                trial_fit = self.evaluate(trial)
                trial_chisq = self.cost(trial_fit)
                if trial_chisq <= chisq:
                    accepted = True
                    break
                flambda *= 10.0

            if not accepted:
                converged = True
                message = "no further decrease in chi-square"
                break

            step_norm = float(np.linalg.norm(trial[free] - params[free]))
            decrease = chisq - trial_chisq
            params, yfit, previous, chisq = trial, trial_fit, chisq, trial_chisq
            history.append(chisq)
            flambda = max(flambda / 10.0, 1e-15)
            logger.debug(f"iteration {n_iter}: chi2={chisq:.6g} lambda={flambda:.1e}")

            if decrease <= COST_RTOL * previous:
                converged = True
                message = "relative chi-square change below tolerance"
                break
            if step_norm < STEP_TOL * max(1.0, float(np.linalg.norm(params[free]))):
                converged = True
                message = "step size below tolerance"
                break

        return {
            "params": params,
            "yfit": yfit,
            "chisq": chisq,
            "converged": converged,
            "message": message,
            "n_iter": n_iter,
            "history": history,
        }


def least_squares(
    model: ModelFn,
    p0: Sequence[float],
    xdata,
    ydata: Sequence[float],
    sigma: Optional[Sequence[float]] = None,
    bounds: Optional[Bounds] = None,
    names: Optional[Sequence[str]] = None,
    fixed: Optional[Sequence[str]] = None,
    max_iter: int = 500,
) -> FitResult:
    """
    Fit model(xdata, *params) to ydata.

    Args:
        model: Callable returning the model values for xdata
        p0: Initial parameters, inside the bounds
        xdata: Passed through to the model unchanged
        ydata: Data values
        sigma: Positive 1-sigma uncertainties, default 1
        bounds: (lower, upper) per parameter, +/-inf for unbounded
        names: Parameter names, default p0, p1, ...
        fixed: Names of parameters held at their initial value
        max_iter: Iteration cap; hitting it leaves converged False

    Returns:
        FitResult with covariance chi2_reduced * (J^T W J)^-1 over the free
        parameters (zero rows and columns for fixed ones). A singular curvature
        matrix sets singular and clears converged.
    """
    p0 = np.asarray(p0, dtype=float).ravel()
    n_params = len(p0)
    names = list(names) if names is not None else [f"p{i}" for i in range(n_params)]
    if len(names) != n_params:
        raise ValidationError("one name per parameter is required")

    if bounds is None:
        bounds = [(-np.inf, np.inf)] * n_params
    if len(bounds) != n_params:
        raise ValidationError("one (lower, upper) pair per parameter is required")
    lower = np.array([b[0] for b in bounds], dtype=float)
    upper = np.array([b[1] for b in bounds], dtype=float)
    if np.any(lower > upper):
        raise ValidationError("lower bounds must not exceed upper bounds")
    if np.any(p0 < lower) or np.any(p0 > upper):
        raise ValidationError("initial parameters must lie within the bounds")

    fixed = set(fixed or ())
    unknown = fixed - set(names)
    if unknown:
        raise ValidationError(f"unknown fixed parameters: {sorted(unknown)}")
    free = np.array([i for i, name in enumerate(names) if name not in fixed], dtype=int)
    if len(free) == 0:
        raise ValidationError("at least one parameter must be free")

    fitter = LeastSquaresFitter(model, xdata, ydata, sigma, max_iter)
    outcome = fitter.fit(p0, lower, upper, free)
    params = outcome["params"]

    n_data = len(fitter.ydata)
    dof = n_data - len(free)
    chi2_reduced = outcome["chisq"] / dof if dof > 0 else float("nan")

    jac = fitter.jacobian(params, free, lower, upper, outcome["yfit"])
    alpha, _ = fitter.curvature(jac, outcome["yfit"])
    covariance = np.zeros((n_params, n_params))
    singular = False
    try:
        if np.linalg.cond(alpha) > SINGULAR_COND:
            raise np.linalg.LinAlgError("ill-conditioned curvature matrix")
        cov_free = np.linalg.inv(alpha) * (chi2_reduced if dof > 0 else 0.0)
        cov_free = 0.5 * (cov_free + cov_free.T)
        covariance[np.ix_(free, free)] = cov_free
    except np.linalg.LinAlgError:
        singular = True
        covariance[np.ix_(free, free)] = np.nan

    converged = outcome["converged"] and not singular
    message = outcome["message"]
    if singular:
        message = "singular curvature matrix; " + message

    at_bounds: List[str] = []
    for index in free:
        span = max(abs(params[index]), 1.0)
        if (abs(params[index] - lower[index]) <= 1e-9 * span
                or abs(upper[index] - params[index]) <= 1e-9 * span):
            at_bounds.append(names[index])

    diag = np.diag(covariance)
    sigmas = {name: float(np.sqrt(max(diag[i], 0.0))) if np.isfinite(diag[i]) else float("nan")
              for i, name in enumerate(names)}

    logger.debug(
        f"Least squares finished after {outcome['n_iter']} iterations "
        f"({fitter.n_evaluations} evaluations): {message}"
    )
    return FitResult(
        params={name: float(params[i]) for i, name in enumerate(names)},
        sigmas=sigmas,
        covariance=covariance,
        chi2_reduced=float(chi2_reduced),
        converged=bool(converged),
        n_iter=outcome["n_iter"],
        message=message,
        singular=singular,
        at_bounds=at_bounds,
        extras={"cost_history": [float(c) for c in outcome["history"]]},
    )
