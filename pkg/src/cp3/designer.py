"""Design of narrowband, passband and broadband composite sequences.

A design is a set of target equations on the Taylor coefficients of the
transfer profile ``P(eps)`` (around ``eps = 0`` and ``eps = +-1``) and,
optionally, of the leakage profile.  Coefficient names used throughout:

``x<m>``   transfer profile, order ``m`` at ``eps = 0``
``xt<m>``  transfer profile, order ``m`` at ``eps = +-1``
``y<m>``   leakage profile at ``eps = 0``
``yt<m>``  leakage profile at ``eps = +-1``

Only even orders appear: for ``2 pi`` pulses all odd orders vanish, as do
``xt0``, ``xt2``, ``y0`` and ``yt0``.
"""
from __future__ import annotations

import enum
import logging
import os
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import least_squares, minimize
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from .core import TWO_PI, Modulation, PulseSequence, populations
from .taylor import Center, Target, amplitude_coefficients, evaluate_named, named_coefficient
from .validation import check_eps

logger = logging.getLogger(__name__)

PB_CLASSES = "abcde"
EXACT_TOL = 1e-8


class Family(str, enum.Enum):
    NB = "nb"
    PB = "pb"
    BB = "bb"


class NoSolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class DesignSpec:
    """What to design.

    ``pb_class`` selects how many orders are flattened at ``eps = 0`` for a
    passband sequence (``'a'`` -> one, ``'b'`` -> two, ...).
    ``suppress_leakage`` is the number ``L`` of even leakage orders nulled at
    both centers (``y2..y2L`` and ``yt2..yt2L``); ``0`` disables it.
    """

    family: Family
    modulation: Modulation
    n_pulses: int
    pb_class: str | None = None
    target_prob: float = 1.0
    suppress_leakage: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "modulation", Modulation(self.modulation))
        n = self.n_pulses
        if self.family is Family.PB:
            if n < 3:
                raise ValueError("N ≥ 3 required for passband sequences")
            cls = self.pb_class or "a"
            if len(cls) != 1 or cls not in PB_CLASSES:
                raise ValueError(f"unknown passband class {cls!r}")
            if PB_CLASSES.index(cls) + 1 > n - 2:
                raise ValueError(f"passband class {cls!r} needs N ≥ {PB_CLASSES.index(cls) + 3}")
            object.__setattr__(self, "pb_class", cls)
        else:
            if n < 2:
                raise ValueError("N ≥ 2 required")
            if self.pb_class is not None:
                raise ValueError("pb_class only applies to passband sequences")
        if self.modulation is Modulation.PHASE and n % 2 == 0:
            raise ValueError("phase modulation requires an odd number of pulses")
        if not 0.0 < self.target_prob <= 1.0:
            raise ValueError("target probability must lie in (0, 1]")
        if self.suppress_leakage < 0:
            raise ValueError("leakage order must be non-negative")

    @property
    def flat_orders(self) -> int:
        """Number ``M`` of orders nulled at ``eps = 0`` by a passband design."""
        return PB_CLASSES.index(self.pb_class) + 1 if self.family is Family.PB else 0

    @property
    def free_theta(self) -> bool:
        """Phase designs with partial transfer also tune the shared ratio."""
        return self.modulation is Modulation.PHASE and self.target_prob < 1.0

    @property
    def n_params(self) -> int:
        if self.modulation is Modulation.STRENGTH:
            return self.n_pulses
        return 2 * (self.n_pulses - 1) + int(self.free_theta)

    @property
    def is_filtered(self) -> bool:
        """Phase-modulated PB and BB have no exact solutions; they are
        designed by filter-function minimization."""
        return (self.modulation is Modulation.PHASE and self.family in (Family.PB, Family.BB)
                and self.target_prob == 1.0 and self.suppress_leakage == 0)

    @property
    def label(self) -> str:
        head = "S" if self.modulation is Modulation.STRENGTH else "P"
        if self.target_prob < 1.0 or self.suppress_leakage:
            head += "a"
        cls = self.pb_class if (self.family is Family.PB and self.n_pulses > 3) else ""
        return f"{head}-{self.family.value.upper()}{self.n_pulses}{cls}"


def _even(start: int, stop: int, prefix: str) -> list[str]:
    return [f"{prefix}{m}" for m in range(start, stop + 1, 2)]


def equation_names(spec: DesignSpec) -> list[str]:
    """Coefficients driven to zero (besides ``x0 = target``), in order."""
    n, mod, fam = spec.n_pulses, spec.modulation, spec.family
    m = spec.flat_orders
    if mod is Modulation.STRENGTH:
        if fam is Family.NB:
            profile = _even(4, 2 * n, "xt")
        elif fam is Family.PB:
            profile = _even(2, 2 * m, "x") + _even(4, 2 * (n - m), "xt")
        else:
            profile = _even(2, 2 * (n - 1), "x")
    else:
        if fam is Family.NB:
            profile = _even(4, 4 * n - 2, "xt")
        elif fam is Family.PB:
            profile = _even(2, 4 * m, "x") + _even(4, 4 * n - 2 - 4 * m, "xt")
        else:
            profile = _even(2, 4 * n - 4, "x")
    leak_l = spec.suppress_leakage
    if not leak_l:
        return profile
    leak = _even(2, 2 * leak_l, "y") + _even(2, 2 * leak_l, "yt")
    # with leakage constraints a class-M passband flattens orders up to 2M
    # for either modulation, and the band edge takes what is left
    profile = _even(2, 2 * m, "x") + _even(4, 4 * n, "xt")
    # leakage constraints consume parameters otherwise used for profile shaping
    # one parameter (theta_1, or the shared theta) goes to x0 = target
    budget = spec.n_params - len(leak) - 1
    if mod is Modulation.PHASE and fam is Family.NB:
        # the phase-modulated narrowband transfer keeps one spare parameter
        budget -= 1
    if budget < 1:
        raise ValueError("not enough free parameters for the requested leakage order")
    return profile[:budget] + leak


def filter_weights(names: list[str]) -> np.ndarray:
    """Filter factors ``exp(-m)`` for coefficients of order ``m``."""
    return np.array([np.exp(-named_coefficient(n)[2]) for n in names])


def build_sequence(params, spec: DesignSpec) -> PulseSequence:
    """Pulse sequence for a full parameter vector (radians).

    Strength: ``(theta_1, ..., theta_N)``.  Phase: ``(phi_2, varphi_2, ...)``,
    preceded by the shared ``theta`` when the ratio is free.
    """
    params = np.asarray(params, dtype=float).ravel()
    if params.size != spec.n_params:
        raise ValueError(f"expected {spec.n_params} parameters for {spec.label}, got {params.size}")
    if spec.modulation is Modulation.STRENGTH:
        return PulseSequence.strength(params, label=spec.label)
    if spec.free_theta:
        return PulseSequence.phase(params[1:], theta=params[0], label=spec.label)
    return PulseSequence.phase(params, label=spec.label)


def evaluate_coefficients(seq: PulseSequence, names: list[str]) -> dict[str, float]:
    return evaluate_named(seq, names)


def residual_names(spec: DesignSpec) -> list[str]:
    return ["x0"] + equation_names(spec)


def residual_vector(params, spec: DesignSpec) -> np.ndarray:
    """``[x0 - target, c_1, c_2, ...]`` for the spec's targeted coefficients."""
    seq = build_sequence(params, spec)
    names = residual_names(spec)
    values = evaluate_coefficients(seq, names)
    out = np.array([values[n] for n in names])
    out[0] -= spec.target_prob
    return out


def equation_scales(spec: DesignSpec) -> np.ndarray:
    """Natural magnitude ``(pi N)^m / m!`` of an order-``m`` coefficient."""
    n = spec.n_pulses
    scales = [1.0]
    for name in equation_names(spec):
        m = named_coefficient(name)[2]
        scales.append(max(1.0, (np.pi * n) ** m / factorial(m)))
    return np.array(scales)


def filter_value(params, spec: DesignSpec, names: list[str] | None = None) -> float:
    names = names or equation_names(spec)
    values = evaluate_coefficients(build_sequence(params, spec), names)
    return float(filter_weights(names) @ np.abs([values[n] for n in names]))


@dataclass
class DesignResult:
    spec: DesignSpec
    params: np.ndarray
    residuals: dict[str, float]
    coefficients: dict[str, float]
    filter_value: float | None = None
    solver_report: dict = field(default_factory=dict)

    @property
    def sequence(self) -> PulseSequence:
        return build_sequence(self.params, self.spec)

    @property
    def params_pi(self) -> np.ndarray:
        return self.params / np.pi

    @property
    def max_residual(self) -> float:
        return max(abs(v) for v in self.residuals.values())

    def to_dict(self) -> dict:
        s = self.spec
        return {
            "label": s.label,
            "family": s.family.value,
            "modulation": s.modulation.value,
            "pulses": s.n_pulses,
            "pb_class": s.pb_class,
            "target_prob": s.target_prob,
            "suppress_leakage": s.suppress_leakage,
            "params_pi": [float(v) for v in self.params_pi],
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "coefficients": {k: float(v) for k, v in self.coefficients.items()},
            "filter_value": None if self.filter_value is None else float(self.filter_value),
            "solver_report": self.solver_report,
        }


def make_result(params, spec: DesignSpec, report: dict | None = None, with_filter: bool = False) -> DesignResult:
    params = np.mod(np.asarray(params, dtype=float), TWO_PI)
    names = residual_names(spec)
    coeffs = evaluate_coefficients(build_sequence(params, spec), names)
    resid = dict(coeffs)
    resid["x0"] = coeffs["x0"] - spec.target_prob
    fval = None
    if with_filter:
        eq = equation_names(spec)
        fval = float(filter_weights(eq) @ np.abs([coeffs[n] for n in eq]))
    return DesignResult(spec, params, resid, coeffs, fval, dict(report or {}))


# -- parameter reduction for exact solves ---------------------------------

def _first_theta(rest: np.ndarray, target_prob: float) -> float:
    """Ratio of the first pulse that fixes the error-free transfer.

    The error-free strength-modulated propagator rotates by
    ``2 sum (-1)^(n+1) theta_n``; choosing the ``k = 0`` branch gives
    ``theta_1 = sum_{n>=2} (-1)^n theta_n + arcsin(sqrt(P)) / 2``.
    """
    signs = np.array([(-1) ** n for n in range(2, rest.size + 2)])
    return float(signs @ rest + 0.5 * np.arcsin(np.sqrt(target_prob)))


def _expand(reduced: np.ndarray, spec: DesignSpec) -> np.ndarray:
    if spec.modulation is Modulation.STRENGTH:
        return np.concatenate([[_first_theta(reduced, spec.target_prob)], reduced])
    return reduced


def _n_reduced(spec: DesignSpec) -> int:
    return spec.n_params - 1 if spec.modulation is Modulation.STRENGTH else spec.n_params


def _scaled_residual(reduced, spec, scales):
    return residual_vector(_expand(reduced, spec), spec) / scales


def _amplitude_plan(spec: DesignSpec) -> tuple[dict, list[str]]:
    """Split the design equations into amplitude conditions and leftovers.

    A population that must vanish to order ``2 J`` (the transfer near
    ``eps = +-1``, the leakage, or ``1 - P`` near ``eps = 0`` for complete
    transfer) is the squared modulus of amplitudes that must vanish to order
    ``J``.  Solving on the amplitudes keeps the roots regular; on the
    populations they are singular and Newton steps converge only linearly.

    Returns ``{(center, state): top order}`` and the names still imposed on
    the populations directly.
    """
    plan: dict[tuple[float, int], int] = {}
    rest = []

    def need(center, state, order):
        plan[(center, state)] = max(order, plan.get((center, state), 0))

    for name in equation_names(spec):
        target, center, order = named_coefficient(name)
        half = order // 2
        if target is Target.TRANSFER and center is Center.PLUS_ONE:
            need(1.0, 1, half)
        elif target is Target.LEAKAGE:
            need(center.value, 2, half)
        elif spec.target_prob == 1.0:
            need(0.0, 0, half)
            need(0.0, 2, half)
        else:
            rest.append(name)
    return plan, rest


def _rest_scales(spec: DesignSpec, rest: list[str]) -> np.ndarray:
    n = spec.n_pulses
    orders = [named_coefficient(k)[2] for k in rest]
    return np.array([max(1.0, (np.pi * n) ** m / factorial(m)) for m in orders])


def _solver_residual(x, spec, plan, rest, full=False):
    """Scaled residuals in amplitude form.

    ``x`` is the reduced vector (first strength ratio eliminated) unless
    ``full``, in which case it is the complete parameter vector and
    ``x0 - target`` is imposed explicitly.
    """
    params = x if full else _expand(x, spec)
    seq = build_sequence(params, spec)
    n = spec.n_pulses
    out = []
    if plan:
        top = max(plan.values())
        amps = amplitude_coefficients(seq, sorted({c for c, _ in plan}), top)
        for (center, state), order in sorted(plan.items()):
            j = np.arange(1, order + 1)
            scale = np.array([max(1.0, (np.pi * n) ** m / factorial(m)) for m in j])
            a = amps[center][1:order + 1, state] / scale
            out.append(a.real)
            out.append(a.imag)
    with_x0 = full or (spec.modulation is Modulation.PHASE and spec.target_prob < 1.0)
    names = (["x0"] if with_x0 else []) + rest
    if names:
        values = evaluate_named(seq, names)
        r = np.array([values[k] for k in rest]) / _rest_scales(spec, rest)
        if with_x0:
            r = np.concatenate([[values["x0"] - spec.target_prob], r])
        out.append(r)
    return np.concatenate(out)


def polish(params, spec: DesignSpec, max_nfev: int | None = None) -> tuple[np.ndarray, float]:
    """Refine a full parameter vector towards the nearest exact root.

    Returns the refined parameters and their scaled population residual norm.
    """
    params = np.asarray(params, dtype=float)
    plan, rest = _amplitude_plan(spec)
    sol = least_squares(_solver_residual, params, args=(spec, plan, rest, True), method="trf",
                        x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=max_nfev or 200 * (params.size + 1))
    return sol.x, float(np.linalg.norm(residual_vector(sol.x, spec) / equation_scales(spec)))


def _threads(n_jobs: int | None) -> int:
    n = 1 if n_jobs is None else (os.cpu_count() or 1 if n_jobs < 0 else n_jobs)
    cap = os.environ.get("CP3_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _local_solve(x0, spec, plan, rest, scales, budget=40):
    try:
        sol = least_squares(_solver_residual, x0, args=(spec, plan, rest),
                            method="trf", x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=budget * (x0.size + 1))
    except (ValueError, np.linalg.LinAlgError):
        return None, np.inf
    # convergence is judged on the population equations themselves
    return sol.x, float(np.linalg.norm(_scaled_residual(sol.x, spec, scales)))


def closed_form_nb2() -> np.ndarray:
    """Analytic two-pulse strength-modulated narrowband ratios (k = 0 branch)."""
    theta2 = 5 * np.pi / 8 - 0.5 * np.arctan(np.sqrt(2 * (1 + np.sqrt(2))))
    return np.array([theta2 + np.pi / 4, theta2])


def _pick(candidates: list[tuple[float, np.ndarray]], tie_tol: float = 1e-10):
    """Smallest residual norm; norms below ``tie_tol`` tie and are broken by
    the smallest parameter norm."""
    best = min(c[0] for c in candidates)
    pool = [c for c in candidates if c[0] <= max(best, tie_tol)]
    return min(pool, key=lambda c: float(np.linalg.norm(np.mod(c[1], TWO_PI))))


def solve_exact(spec: DesignSpec, n_starts: int = 200, random_state=None, tol: float = EXACT_TOL,
                n_jobs: int | None = None, use_closed_form: bool = True) -> DesignResult:
    """Null the spec's coefficients exactly from many random starts.

    Each start runs a damped Gauss-Newton (trust-region) iteration on the
    amplitude form of the equations (see ``_amplitude_plan``).  Residuals of
    order ``m`` are divided by ``(pi N)^m / m!`` so that every equation is
    of order one; a start converges when the scaled population residual
    norm drops below ``tol``.
    """
    if spec.is_filtered:
        raise ValueError(f"{spec.label} has no exact solutions; use solve_filtered")
    if (use_closed_form and spec.modulation is Modulation.STRENGTH and spec.family is Family.NB
            and spec.n_pulses == 2 and spec.target_prob == 1.0 and not spec.suppress_leakage):
        params = closed_form_nb2()
        return make_result(params, spec, {"method": "closed form", "starts": 0, "converged": 1,
                                          "criterion": "analytic"})
    rng = check_random_state(random_state)
    scales = equation_scales(spec)
    plan, rest = _amplitude_plan(spec)
    d = _n_reduced(spec)
    starts = rng.uniform(0.0, TWO_PI, size=(n_starts, d))
    runs = Parallel(n_jobs=_threads(n_jobs))(
        delayed(_local_solve)(x0, spec, plan, rest, scales) for x0 in starts)
    converged = [(norm, _expand(x, spec)) for x, norm in runs if x is not None and norm < tol]
    report = {"method": "trust-region least squares", "starts": int(n_starts), "converged": len(converged),
              "criterion": "min scaled residual norm, then min parameter norm", "tol": tol}
    if not converged:
        raise NoSolutionError("no exact solution found; use solve_filtered")
    norm, params = _pick(converged)
    # polish the winner; keep it only if the population residuals improve
    reduced = params[1:] if spec.modulation is Modulation.STRENGTH else params
    x, polished = _local_solve(reduced, spec, plan, rest, scales, budget=200)
    if x is not None and polished < norm:
        norm, params = polished, _expand(x, spec)
    report["residual_norm"] = norm
    return make_result(params, spec, report)


def _filter_objective(spec: DesignSpec, names: list[str], weights: np.ndarray):
    def objective(p):
        values = evaluate_coefficients(build_sequence(p, spec), names)
        if "x0" in values:
            values["x0"] -= spec.target_prob
        return float(weights @ np.abs([values[n] for n in names]))
    return objective


def _nelder_mead(objective, x0, tight: bool):
    d = x0.size
    if tight:
        opts = {"xatol": 1e-10, "fatol": 1e-14, "maxfev": 1000 * d}
    else:
        opts = {"xatol": 1e-4, "fatol": 1e-8, "maxfev": 150 * d}
    res = minimize(objective, x0, method="Nelder-Mead", options=opts)
    return res.x, float(res.fun)


def solve_filtered(spec: DesignSpec, n_starts: int = 500, random_state=None,
                   n_jobs: int | None = None, names: list[str] | None = None,
                   n_refine: int = 10) -> DesignResult:
    """Minimize the filter function ``sum exp(-m) |c_m|`` by multi-start
    Nelder-Mead; always returns the best point found.

    Every start runs a coarse simplex search; the ``n_refine`` best end
    points are then refined with tight tolerances and one restart each.
    With ``target_prob < 1`` the term ``|x0 - target|`` (weight one) joins
    the filter.
    """
    names = list(names or equation_names(spec))
    weights = filter_weights(names)
    if spec.target_prob < 1.0:
        names = ["x0"] + names
        weights = np.concatenate([[1.0], weights])
    objective = _filter_objective(spec, names, weights)
    rng = check_random_state(random_state)
    starts = rng.uniform(0.0, TWO_PI, size=(n_starts, spec.n_params))
    pool = Parallel(n_jobs=_threads(n_jobs))
    coarse = pool(delayed(_nelder_mead)(objective, x0, False) for x0 in starts)
    coarse.sort(key=lambda r: r[1])

    def refine(x):
        x, _ = _nelder_mead(objective, x, True)
        return _nelder_mead(objective, x, True)

    fine = pool(delayed(refine)(x) for x, _ in coarse[:max(1, n_refine)])
    best_x, best_f = min(fine, key=lambda r: r[1])
    report = {"method": "nelder-mead", "starts": int(n_starts), "refined": min(n_refine, n_starts),
              "criterion": "min filter value", "filter_terms": names}
    result = make_result(best_x, spec, report, with_filter=True)
    result.filter_value = best_f
    return result


def solve_arbitrary_transfer(spec: DesignSpec, n_starts: int = 200, random_state=None,
                             tol: float = EXACT_TOL, n_jobs: int | None = None) -> DesignResult:
    """Partial transfer ``x0 = target`` with the excited-state leakage
    suppressed; falls back to a filter over the same terms when no exact
    solution is found."""
    if not 0.0 < spec.target_prob <= 1.0:
        raise ValueError("target probability must lie in (0, 1]")
    if not spec.suppress_leakage:
        default = 1 if spec.modulation is Modulation.STRENGTH else 2
        spec = DesignSpec(spec.family, spec.modulation, spec.n_pulses, spec.pb_class,
                          spec.target_prob, default)
    try:
        return solve_exact(spec, n_starts=n_starts, random_state=random_state, tol=tol, n_jobs=n_jobs)
    except NoSolutionError:
        logger.info("no exact solution for %s; minimizing the filter instead", spec.label)
        result = solve_filtered(spec, n_starts=n_starts, random_state=random_state, n_jobs=n_jobs)
        result.solver_report["fallback"] = "filter"
        return result


def design(spec: DesignSpec, n_starts: int | None = None, random_state=None, n_jobs=None,
           tol: float = EXACT_TOL) -> DesignResult:
    """Dispatch to the right solver for ``spec``."""
    if spec.is_filtered:
        return solve_filtered(spec, n_starts=n_starts or 500, random_state=random_state, n_jobs=n_jobs)
    if spec.target_prob < 1.0 or spec.suppress_leakage:
        return solve_arbitrary_transfer(spec, n_starts=n_starts or 200, random_state=random_state,
                                        tol=tol, n_jobs=n_jobs)
    return solve_exact(spec, n_starts=n_starts or 200, random_state=random_state, tol=tol, n_jobs=n_jobs)


class CompositePulseDesigner(BaseEstimator):
    """Estimator wrapper around the sequence designers.

    ``fit`` solves the design equations; ``predict`` then returns the transfer
    probability for an array of area errors and ``transform`` the final
    populations ``(P_g, P_f, P_e)``.

    Examples
    --------
    >>> d = CompositePulseDesigner(family="nb", modulation="strength", n_pulses=2).fit()
    >>> round(float(d.predict([0.0])[0]), 12)
    1.0
    """

    def __init__(self, family="nb", modulation="strength", n_pulses=2, pb_class=None,
                 target_prob=1.0, suppress_leakage=0, n_starts=None, tol=EXACT_TOL,
                 random_state=None, n_jobs=None):
        self.family = family
        self.modulation = modulation
        self.n_pulses = n_pulses
        self.pb_class = pb_class
        self.target_prob = target_prob
        self.suppress_leakage = suppress_leakage
        self.n_starts = n_starts
        self.tol = tol
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _spec(self) -> DesignSpec:
        return DesignSpec(Family(self.family), Modulation(self.modulation), int(self.n_pulses),
                          self.pb_class, float(self.target_prob), int(self.suppress_leakage))

    def fit(self, X=None, y=None):
        result = design(self._spec(), n_starts=self.n_starts, random_state=self.random_state,
                        n_jobs=self.n_jobs, tol=self.tol)
        self.result_ = result
        self.params_ = result.params
        self.sequence_ = result.sequence
        self.residuals_ = result.residuals
        self.filter_value_ = result.filter_value
        return self

    def _eps(self, X):
        return check_eps(X)

    def transform(self, X):
        check_is_fitted(self, "sequence_")
        return populations(self.sequence_, self._eps(X))

    def predict(self, X):
        return self.transform(X)[:, 1]

    def predict_leakage(self, X):
        return self.transform(X)[:, 2]
