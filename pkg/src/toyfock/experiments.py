"""Batch studies: validation suites, convergence tables and their reports.

Every study emits rows for one CSV file with the fixed header

    study,level,mesh,probe,value_re,value_im,reference_re,reference_im,abs_error,seconds

and is written atomically.  All randomness is drawn from named splitmix64
streams derived from the run seed, so identical config + seed reproduce
identical values byte for byte (timings aside, see --zero-timings).
"""

from __future__ import annotations

import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ExperimentConfig, StudySpec
from .discrete import (
    ito_identity_residual,
    ito_residual_apply,
    scale_operator,
    sigma2_left_nested,
    sigma_apply,
    sigma_element,
    triangle_left,
)
from .grid import (
    Partition,
    StepFunction,
    cumulative_inner,
    exp_inner,
    l2_norm,
    mesh,
    project,
    refines,
)
from .operators import (
    CoupledOperator,
    SplitMix64,
    fnv1a64,
    particle_projection,
    random_coupled,
    vacuum_slot_projection,
)
from .oracle import (
    ElementReport,
    IntegralSpec,
    continuous_weight,
    gradient_norm_sq,
    ito_limit_element,
    lambda1_element,
    lambda2_element,
)
from .states import (
    ToyState,
    apply_site_coupled,
    cross_inner,
    embed_exponential,
    inner,
    merge_terms,
)

CSV_HEADER = ("study,level,mesh,probe,value_re,value_im,"
              "reference_re,reference_im,abs_error,seconds")

ZERO_ERROR = 1e-14  # below this an error sequence counts as exact, not fitted


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log(error) against log(mesh)."""

    slope: float
    intercept: float
    points: int

    def ok(self) -> bool:
        return self.points >= 3 and np.isfinite(self.slope)


def fit_rate(meshes, errors, drop_coarsest: int = 2) -> RateFit:
    """Fit after dropping the coarsest levels (pre-asymptotic pollution).

    Zero errors (exact identities) are excluded; fewer than 3 usable points
    yields an undefined fit.
    """
    m = np.asarray(meshes, dtype=float)
    e = np.asarray(errors, dtype=float)
    order = np.argsort(m)[::-1]
    m, e = m[order], e[order]
    m, e = m[drop_coarsest:], e[drop_coarsest:]
    keep = e > ZERO_ERROR
    m, e = m[keep], e[keep]
    if m.size < 3:
        return RateFit(float("nan"), float("nan"), int(m.size))
    slope, intercept = np.polyfit(np.log(m), np.log(e), 1)
    return RateFit(float(slope), float(intercept), int(m.size))


@dataclass
class Row:
    study: str
    level: int
    mesh: float
    probe: str
    value: complex
    reference: complex
    abs_error: float
    seconds: float

    def render(self, zero_timings: bool) -> str:
        sec = 0.0 if zero_timings else self.seconds
        cols = [self.study, repr(self.level), repr(float(self.mesh)), self.probe,
                repr(self.value.real), repr(self.value.imag),
                repr(self.reference.real), repr(self.reference.imag),
                repr(float(self.abs_error)), repr(float(sec))]
        return ",".join(cols)


@dataclass
class StudyResult:
    index: int
    kind: str
    rows: list[Row] = field(default_factory=list)
    fits: dict[str, RateFit] = field(default_factory=dict)
    passed: bool = True
    notes: list[str] = field(default_factory=list)

    def filename(self) -> str:
        return f"study_{self.index:02d}_{self.kind.replace('-', '_')}.csv"


def _atomic_write(path: str, text: str):
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_study_csv(result: StudyResult, out_dir: str, zero_timings: bool) -> str:
    path = os.path.join(out_dir, result.filename())
    lines = [CSV_HEADER] + [r.render(zero_timings) for r in result.rows]
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def csv_to_markdown(text: str) -> str:
    lines = [ln for ln in text.strip().splitlines() if ln]
    cells = [ln.split(",") for ln in lines]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cells[0]))]
    def fmt(row):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |"
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([fmt(cells[0]), sep] + [fmt(r) for r in cells[1:]]) + "\n"


# ---------------------------------------------------------------------------
# deterministic probe material
# ---------------------------------------------------------------------------


def _stream(cfg_seed: int, name: str) -> SplitMix64:
    return SplitMix64(SplitMix64(cfg_seed ^ fnv1a64(name)).next_u64())


def _random_step(rng: SplitMix64, d: int, horizon: float, cells: int = 3,
                 aligned: Partition | None = None) -> StepFunction:
    if aligned is not None:
        bps = aligned.times
        cells = aligned.n_cells
    else:
        raw = np.array([0.25 + rng.next_double() for _ in range(cells)])
        bps = np.concatenate(([0.0], horizon * np.cumsum(raw) / raw.sum()))
    vals = np.array([[complex(rng.next_double() - 0.5, rng.next_double() - 0.5)
                      for _ in range(d)] for _ in range(cells)])
    return StepFunction(bps, vals)


def _random_vector(rng: SplitMix64, n: int) -> np.ndarray:
    v = np.array([complex(rng.next_double() - 0.5, rng.next_double() - 0.5)
                  for _ in range(n)])
    nrm = np.linalg.norm(v)
    return v / nrm if nrm > 0 else v


def _random_state(rng: SplitMix64, partition: Partition, dim_h: int, d: int,
                  terms: int = 2) -> ToyState:
    n = partition.n_cells
    coeffs = [complex(rng.next_double(), rng.next_double()) for _ in range(terms)]
    h_vecs = [[complex(rng.next_double() - 0.5, rng.next_double() - 0.5)
               for _ in range(dim_h)] for _ in range(terms)]
    sites = [[[complex(rng.next_double() - 0.5, rng.next_double() - 0.5)
               for _ in range(d + 1)] for _ in range(n)] for _ in range(terms)]
    return ToyState(partition, dim_h, d, coeffs, h_vecs, sites)


# ---------------------------------------------------------------------------
# validation suite
# ---------------------------------------------------------------------------


def validation_checks(cfg: ExperimentConfig) -> list[tuple[str, float, float]]:
    """(name, worst residual, tolerance) for every module invariant."""
    from . import tensor

    d, dh = cfg.d, cfg.dim_h
    horizon = cfg.horizon
    checks: list[tuple[str, float, float]] = []
    rng = _stream(cfg.seed, "validate")
    tau = Partition.dyadic(horizon, 3)
    fine = Partition.dyadic(horizon, 5)
    f = _random_step(rng, d, horizon)
    g = _random_step(rng, d, horizon)
    u = _random_vector(rng, dh)
    v = _random_vector(rng, dh)
    x_op = random_coupled(rng.next_u64(), dh, d, 1)
    y_op = random_coupled(rng.next_u64(), dh, d, 1)

    # dense tensor algebra
    def rnd_mat(n):
        return np.array([[complex(rng.next_double() - 0.5, rng.next_double() - 0.5)
                          for _ in range(n)] for _ in range(n)])

    a, b, c, e = (rnd_mat(2) for _ in range(4))
    res = np.max(np.abs(tensor.kron(a, b) @ tensor.kron(c, e)
                        - tensor.kron(a @ c, b @ e)))
    checks.append(("kron-mixed-product", float(res), 1e-12))

    m = tensor.kron(tensor.kron(a, b), c)
    perm = [1, 2, 0]
    inv = [perm.index(k) for k in range(3)]
    back = tensor.permute_factors(
        tensor.permute_factors(m, (2, 2, 2), perm), (2, 2, 2), inv)
    checks.append(("permute-inverse", float(np.max(np.abs(back - m))), 0.0))

    checks.append(("adjoint-product-reversal",
                   float(np.max(np.abs((a @ b).conj().T - b.conj().T @ a.conj().T))),
                   1e-12))

    # projections on step functions
    pf = project(f, tau)
    checks.append(("projection-contractive",
                   max(0.0, l2_norm(pf) - l2_norm(f)), 1e-12))
    gap_fine = l2_norm(project(f, fine) - f)
    gap_coarse = l2_norm(pf - f)
    checks.append(("projection-nested", max(0.0, gap_fine - gap_coarse), 1e-12))

    # embeddings
    xi = embed_exponential(u, f, tau)
    eta = embed_exponential(v, g, tau)
    from .grid import coarse_grain

    ft, gt = coarse_grain(f, tau), coarse_grain(g, tau)
    product = complex(u.conj() @ v) * np.prod(1 + np.sum(ft.conj() * gt, axis=1))
    checks.append(("embed-product-formula",
                   abs(inner(xi, eta) - product), 1e-12))

    # u is unit-normalised, so the embedded norm carries no extra factor
    xi_fine = embed_exponential(u, f, fine)
    defect_tau = exp_inner(f, f).real - inner(xi, xi).real
    defect_fine = exp_inner(f, f).real - inner(xi_fine, xi_fine).real
    checks.append(("toy-norm-defect-nonneg", max(0.0, -defect_tau), 1e-12))
    checks.append(("toy-norm-defect-decreasing",
                   max(0.0, defect_fine - defect_tau), 1e-12))

    checks.append(("cross-inner-degenerate",
                   abs(cross_inner(xi, eta) - inner(xi, eta)), 1e-12))

    # equal-site homomorphism with the width correction
    widths = tau.widths
    lhs = scale_operator(y_op, tau, (1,)).matrix @ scale_operator(x_op, tau, (1,)).matrix
    delta = particle_projection(dh, d)
    perp = vacuum_slot_projection(dh, d)
    rhs = (scale_operator(y_op @ delta @ x_op, tau, (1,)).matrix
           + widths[1] * scale_operator(y_op @ perp @ x_op, tau, (1,)).matrix)
    checks.append(("site-homomorphism", float(np.max(np.abs(lhs - rhs))), 1e-12))

    # triangle join on random states
    theta = _random_state(rng, tau, dh, d)
    yx = triangle_left(y_op, x_op)
    joined = apply_site_coupled(theta, CoupledOperator(
        scale_operator(yx, tau, (0, 2)).matrix, dh, d, 2), (0, 2), True)
    stepwise = apply_site_coupled(
        apply_site_coupled(theta, scale_operator(x_op, tau, (0,)).as_operator(),
                           (0,), True),
        scale_operator(y_op, tau, (2,)).as_operator(), (2,), True)
    gap = merge_terms(joined - stepwise).norm()
    checks.append(("triangle-join", gap / max(stepwise.norm(), 1e-30), 1e-12))

    # Fubini: nested assembly against direct pair enumeration
    direct = sigma_apply(yx, tau, horizon, theta)
    nested = sigma2_left_nested(y_op, x_op, tau, horizon, theta)
    checks.append(("fubini-left-nested",
                   merge_terms(direct - nested).norm() / max(direct.norm(), 1e-30),
                   1e-12))

    # discrete product identity
    res = ito_identity_residual(y_op, x_op, tau, horizon, xi)
    checks.append(("ito-product-identity", res["bound"], 1e-10))

    # scalar path against the apply path
    val_apply = inner(xi, sigma_apply(x_op, tau, horizon, eta))
    val_direct = sigma_element(x_op, 1, tau, horizon, u, f, v, g)
    checks.append(("sigma-element-vs-apply", abs(val_apply - val_direct), 1e-10))

    checks.append(("sigma-adjoint-symmetry",
                   abs(sigma_element(x_op.adjoint(), 1, tau, horizon, u, f, v, g)
                       - np.conj(sigma_element(x_op, 1, tau, horizon, v, g, u, f))),
                   1e-12))

    # weights
    t1 = 0.63 * horizon
    checks.append(("weight-consistency",
                   abs(continuous_weight(f, g, t1)
                       - np.exp(cumulative_inner(f, g, t1))), 1e-13))

    # discrete integral equals its subordinate oracle (both arities)
    for n in (1, 2):
        op_n = x_op if n == 1 else random_coupled(rng.next_u64(), dh, d, 2)
        spec = IntegralSpec(op_n, 0.9 * horizon, m_mode="project",
                            weight="discrete", partition=tau, subordinate=True)
        oracle_val = (lambda1_element if n == 1 else lambda2_element)(spec, u, f, v, g)
        direct_val = sigma_element(op_n, n, tau, 0.9 * horizon, u, f, v, g)
        checks.append((f"iterated-integral-identity-n{n}",
                       abs(oracle_val - direct_val), 1e-10))

    # norm bounds at a moderate reference level
    ref = Partition.dyadic(horizon, 5)
    state = sigma_apply(x_op, ref, horizon, embed_exponential(u, f, ref))
    lhs_norm = state.norm()
    c_t = np.sqrt(2 * max(horizon, 1.0))
    grad = np.sqrt(gradient_norm_sq(x_op, u, f, horizon))
    slack = 10 * mesh(ref)
    checks.append(("integrator-gradient-bound",
                   max(0.0, lhs_norm - c_t * grad - slack), 0.0))
    theta_norm = np.sqrt(exp_inner(f, f).real) * float(np.linalg.norm(u))
    bound2 = c_t * x_op.norm() * np.sqrt(horizon + 1.0) * theta_norm
    checks.append(("integrator-norm-bound",
                   max(0.0, lhs_norm - bound2 - slack), 0.0))
    return checks


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------


def _run_validate(cfg: ExperimentConfig, study: StudySpec, index: int) -> StudyResult:
    result = StudyResult(index, study.kind)
    override = study.params.get("tolerance_override")
    t0 = time.perf_counter()
    for name, residual, tol in validation_checks(cfg):
        if override is not None:
            tol = float(override)
        ok = residual <= tol
        result.passed &= ok
        result.rows.append(Row("validate", 0, 0.0, name, complex(residual),
                               complex(tol), residual,
                               time.perf_counter() - t0))
        t0 = time.perf_counter()
    return result


def _probe_vectors(cfg: ExperimentConfig, params: dict):
    u = cfg.initial_vector(params.get("u"), cfg.dim_h)
    v = cfg.initial_vector(params.get("v"), cfg.dim_h)
    return u, v


def _timed_element(fn, *args, mesh_value=None, path="") -> ElementReport:
    t0 = time.perf_counter()
    value = fn(*args)
    return ElementReport(value=complex(value), mesh=mesh_value, path=path,
                         seconds=time.perf_counter() - t0)


def _run_weak(cfg: ExperimentConfig, study: StudySpec, index: int) -> StudyResult:
    result = StudyResult(index, study.kind)
    params = study.params
    op = cfg.operator(params["operator"])
    f = cfg.step_function(params["f"])
    g = cfg.step_function(params["g"]) if "g" in params else StepFunction.zero(cfg.d)
    u, v = _probe_vectors(cfg, params)
    t = float(params.get("t", cfg.horizon))
    if op.arity == 1:
        reference = _timed_element(lambda1_element, IntegralSpec(op, t),
                                   u, f, v, g, path="oracle")
    elif op.arity == 2:
        reference = _timed_element(lambda2_element, IntegralSpec(op, t),
                                   u, f, v, g, path="oracle")
    else:
        raise ConfigError("weak-convergence supports arity 1 or 2")
    meshes, errors = [], []
    for level, partition in cfg.partitions():
        report = _timed_element(sigma_element, op, op.arity, partition, t,
                                u, f, v, g, mesh_value=mesh(partition),
                                path="discrete-element")
        err = abs(report.value - reference.value)
        meshes.append(report.mesh)
        errors.append(err)
        result.rows.append(Row(study.kind, level, report.mesh,
                               params["operator"], report.value,
                               reference.value, err,
                               report.seconds + reference.seconds))
    result.fits["weak-error"] = fit_rate(meshes, errors)
    return result


def _run_strong(cfg: ExperimentConfig, study: StudySpec, index: int) -> StudyResult:
    result = StudyResult(index, study.kind)
    params = study.params
    op = cfg.operator(params["operator"])
    f = cfg.step_function(params["f"])
    u, _ = _probe_vectors(cfg, params)
    t = float(params.get("t", cfg.horizon))
    ref_level = int(params.get("reference_level", 9))
    sigma = Partition.dyadic(cfg.horizon, ref_level)
    eta = sigma_apply(op, sigma, t, embed_exponential(u, f, sigma))
    eta_sq = inner(eta, eta).real
    meshes, errors = [], []
    for level, partition in cfg.partitions():
        if not refines(sigma, partition):
            raise ConfigError(
                f"strong-convergence: reference level {ref_level} does not refine "
                f"the level-{level} partition")
        t0 = time.perf_counter()
        xi = sigma_apply(op, partition, t, embed_exponential(u, f, partition))
        gap_sq = inner(xi, xi).real - 2 * cross_inner(xi, eta).real + eta_sq
        gap = float(np.sqrt(max(gap_sq, 0.0)))
        meshes.append(mesh(partition))
        errors.append(gap)
        result.rows.append(Row(study.kind, level, mesh(partition),
                               params["operator"], complex(gap), 0.0, gap,
                               time.perf_counter() - t0))
    result.fits["strong-gap"] = fit_rate(meshes, errors)
    return result


def _run_ito(cfg: ExperimentConfig, study: StudySpec, index: int) -> StudyResult:
    result = StudyResult(index, study.kind)
    params = study.params
    y = cfg.operator(params["y"])
    x = cfg.operator(params["x"])
    zy = cfg.operator(params["z_y"]) if "z_y" in params else y
    zx = cfg.operator(params["z_x"]) if "z_x" in params else x
    f = cfg.step_function(params["f"]) if "f" in params else StepFunction.zero(cfg.d)
    g = cfg.step_function(params["g"]) if "g" in params else StepFunction.zero(cfg.d)
    u, v = _probe_vectors(cfg, params)
    t = float(params.get("t", cfg.horizon))
    limit = ito_limit_element(y, x, t, u, f, v, g)
    meshes, z_norms, errors = [], [], []
    for level, partition in cfg.partitions():
        theta = embed_exponential(v, g, partition)
        probe = embed_exponential(u, f, partition)
        t0 = time.perf_counter()
        res = ito_identity_residual(y, x, partition, t, theta)
        result.rows.append(Row(study.kind, level, mesh(partition),
                               "identity-residual", complex(res["bound"]), 0.0,
                               res["bound"], time.perf_counter() - t0))
        result.passed &= res["bound"] <= 1e-10
        t0 = time.perf_counter()
        z_norm = ito_residual_apply(zy, zx, partition, t, theta).norm()
        result.rows.append(Row(study.kind, level, mesh(partition), "z-norm",
                               complex(z_norm), 0.0, z_norm,
                               time.perf_counter() - t0))
        t0 = time.perf_counter()
        bra = sigma_apply(y.adjoint(), partition, t, probe)
        ket = sigma_apply(x, partition, t, theta)
        element = inner(bra, ket)
        err = abs(element - limit)
        result.rows.append(Row(study.kind, level, mesh(partition),
                               "product-element", element, limit, err,
                               time.perf_counter() - t0))
        meshes.append(mesh(partition))
        z_norms.append(z_norm)
        errors.append(err)
    result.fits["z-norm"] = fit_rate(meshes, z_norms)
    result.fits["product-error"] = fit_rate(meshes, errors)
    return result


def _run_iterint(cfg: ExperimentConfig, study: StudySpec, index: int) -> StudyResult:
    result = StudyResult(index, study.kind)
    params = study.params
    arity = int(params.get("arity", 1))
    op = cfg.operator(params["operator"], arity_hint=arity)
    if op.arity != arity:
        raise ConfigError("iterint-identity: operator arity mismatch")
    f = cfg.step_function(params["f"]) if "f" in params else StepFunction.zero(cfg.d)
    g = cfg.step_function(params["g"]) if "g" in params else StepFunction.zero(cfg.d)
    u, v = _probe_vectors(cfg, params)
    t = float(params.get("t", cfg.horizon))
    element_fn = lambda1_element if arity == 1 else lambda2_element
    for level, partition in cfg.partitions():
        report = _timed_element(sigma_element, op, arity, partition, t,
                                u, f, v, g, mesh_value=mesh(partition),
                                path="discrete-element")
        spec = IntegralSpec(op, t, m_mode="project", weight="discrete",
                            partition=partition, subordinate=True)
        oracle = _timed_element(element_fn, spec, u, f, v, g,
                                mesh_value=report.mesh, path="oracle")
        err = abs(report.value - oracle.value)
        result.passed &= err <= 1e-10
        result.rows.append(Row(study.kind, level, report.mesh,
                               params["operator"], report.value, oracle.value,
                               err, report.seconds + oracle.seconds))
    return result


_RUNNERS = {
    "validate": _run_validate,
    "weak-convergence": _run_weak,
    "strong-convergence": _run_strong,
    "ito": _run_ito,
    "iterint-identity": _run_iterint,
}


def run_studies(cfg: ExperimentConfig, out_dir: str | None = None,
                threads: int = 1, zero_timings: bool = False,
                kinds: tuple[str, ...] | None = None) -> list[StudyResult]:
    out_dir = out_dir or cfg.output_dir
    selected = [(k, s) for k, s in enumerate(cfg.studies)
                if kinds is None or s.kind in kinds]

    def task(item):
        k, spec = item
        result = _RUNNERS[spec.kind](cfg, spec, k)
        write_study_csv(result, out_dir, zero_timings)
        return result

    if threads > 1 and len(selected) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, os.cpu_count() or 1)) as ex:
            results = list(ex.map(task, selected))
    else:
        results = [task(item) for item in selected]
    _atomic_write(os.path.join(out_dir, "summary.md"), render_summary(results))
    return results


def render_summary(results: list[StudyResult]) -> str:
    lines = ["# Study summary", ""]
    for r in results:
        status = "pass" if r.passed else "FAIL"
        lines.append(f"## {r.index:02d} {r.kind} - {status}")
        for name, fit in r.fits.items():
            if fit.ok():
                lines.append(f"- rate fit `{name}`: slope {fit.slope:.3f} "
                             f"({fit.points} points)")
            else:
                lines.append(f"- rate fit `{name}`: not fitted "
                             f"({fit.points} usable points; exact or too few)")
        for note in r.notes:
            lines.append(f"- {note}")
        if r.kind == "validate":
            worst = max((row.abs_error for row in r.rows), default=0.0)
            lines.append(f"- {len(r.rows)} checks, worst residual {worst:.3e}")
        lines.append("")
    return "\n".join(lines)
