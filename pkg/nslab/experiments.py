"""
Experiment suites dispatched by the command line.

Each suite takes a validated RunManifest and returns an ExperimentResult:
verifier reports, plot-ready frames and the traces worth keeping. Nothing
here touches the filesystem.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from .bumps import TestFunction, random_tests
from .energy import (
    EnergyTrace,
    apriori_scaling_check,
    cross_term_bounds,
    energy_inequality_residual,
    integrability_report,
    local_energy_residual,
    pressure_tail_ladder,
    split_energy_check,
    split_traces,
    tail_l2_bound,
)
from .field import Grid, GridField
from .heat import (
    SemigroupEstimateReport,
    heat_energy_identity,
    heat_trace,
    initial_convergence_check,
    semigroup_decay_report,
    weakstar_pairing_trace,
)
from .initdata import SEQUENCE_KINDS, InitialDataSpec, inverse_distance, make_initial_data, make_sequence
from .kato import (
    MildSolutionTrace,
    amplitude_sweep,
    contraction_report,
    continuity_gap,
    continuity_report,
    interpolation_check,
    kato_iterate,
    kozono_yamazaki_run,
    ns_residual,
    predicted_horizon,
)
from .lorentz import calderon_split, radial_window, tail_energy_ratio, verify_split_bounds, weak_l3
from .manifest import RunManifest
from .reports import VerifierReport, check, merge_reports, trivial_pass
from .stokes import pressure_decompose
from .timegrid import FieldTrace, TimeGrid

logger = logging.getLogger(__name__)

INVERSE_DISTANCE_WEAK_NORM = (4.0 * math.pi / 3.0) ** (1.0 / 3.0)
SEQUENCE_TESTS = 5
SOLUTION_SHRINK = 0.5


class ExperimentResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    experiment: str
    reports: List[VerifierReport] = Field(default_factory=list)
    series: Dict[str, pd.DataFrame] = Field(default_factory=dict)
    traces: Dict[str, FieldTrace] = Field(default_factory=dict)
    fitted_constants: Dict[str, float] = Field(default_factory=dict)
    run_failures: List[str] = Field(default_factory=list)

    @property
    def flags(self) -> List[str]:
        return sorted({f for r in self.reports for f in r.flags})

    def extend(self, other: "ExperimentResult") -> None:
        prefix = other.experiment
        self.reports.extend(other.reports)
        self.series.update({f"{prefix}_{k}": v for k, v in other.series.items()})
        self.traces.update({f"{prefix}_{k}": v for k, v in other.traces.items()})
        self.fitted_constants.update({f"{prefix}.{k}": v for k, v in other.fitted_constants.items()})
        self.run_failures.extend(f"{prefix}: {f}" for f in other.run_failures)


class Context(BaseModel):
    """Objects every suite derives from the manifest."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    manifest: RunManifest
    u0: GridField

    @property
    def grid(self) -> Grid:
        return self.manifest.grid

    @property
    def timegrid(self) -> TimeGrid:
        return self.manifest.timegrid

    @classmethod
    def build(cls, manifest: RunManifest) -> "Context":
        return cls(manifest=manifest, u0=make_initial_data(manifest.initial_data, manifest.grid))

    def run_kato(self, u0: Optional[GridField] = None, timegrid: Optional[TimeGrid] = None, **kw) -> MildSolutionTrace:
        opts = self.manifest.options
        return kato_iterate(
            self.u0 if u0 is None else u0,
            timegrid or self.timegrid,
            kmax=opts.kmax,
            tol=opts.tol,
            thresholds=self.manifest.thresholds,
            **kw,
        )


def _tag(report: VerifierReport, **params) -> VerifierReport:
    report.params.update(params)
    return report


# =============================================================================
# SEMIGROUP
# =============================================================================


def _decay_to_report(est: SemigroupEstimateReport) -> List[VerifierReport]:
    params = {"r": est.r, "m": est.m, "k": est.k}
    if est.weak_norm_u0 == 0.0:
        return [trivial_pass("semigroup_decay", "zero data", params=params)]
    peak = max(v for _, v in est.samples)
    return [
        VerifierReport(
            inequality_id="semigroup_decay",
            lhs=peak,
            rhs=est.sup_ratio * est.weak_norm_u0,
            fitted_constant=est.sup_ratio,
            passed=math.isfinite(est.sup_ratio),
            flags=list(est.flags),
            params=params,
            details={"variation": est.variation, "weight_exponent": est.weight_exponent},
        ),
        VerifierReport(
            inequality_id="semigroup_weak_bound",
            lhs=est.weak_bound_constant * est.weak_norm_u0,
            rhs=est.weak_bound_constant * est.weak_norm_u0,
            fitted_constant=est.weak_bound_constant,
            passed=math.isfinite(est.weak_bound_constant),
            flags=["empirical"],
            params=params,
        ),
    ]


def run_semigroup(ctx: Context) -> ExperimentResult:
    out = ExperimentResult(experiment="semigroup")
    tg, u0 = ctx.timegrid, ctx.u0
    times = tg.times
    main = semigroup_decay_report(u0, 5.0, 0, 0, times)
    out.reports.extend(_decay_to_report(main))
    out.reports.extend(_decay_to_report(semigroup_decay_report(u0, math.inf, 0, 1, times)))
    out.fitted_constants["decay_r5"] = main.sup_ratio
    out.reports.append(heat_energy_identity(u0, tg.T, timegrid=tg, safety=ctx.manifest.thresholds.richardson_safety))

    early = times[: min(4, len(times))]
    conv = initial_convergence_check(u0, 2.0, early, stride=2)
    out.reports.append(
        VerifierReport(
            inequality_id="initial_convergence",
            lhs=conv.values[0][1] if conv.values else 0.0,
            rhs=conv.values[-1][1] if conv.values else 0.0,
            passed=conv.monotone,
            params={"q": conv.q},
            flags=["lattice_sup"],
            details={"values": conv.values, "weak_gaps": conv.weak_gaps},
        )
    )
    out.series["decay"] = pd.DataFrame(
        {
            "t": [t for t, _ in main.samples],
            "weighted_l5": [v for _, v in main.samples],
            "weak_ratio": [w for _, w in main.weak_ratios] or [0.0] * len(main.samples),
        }
    )
    if ctx.manifest.options.save_traces:
        out.traces["V"] = heat_trace(u0, tg)
    return out


# =============================================================================
# SPLIT
# =============================================================================


def run_split(ctx: Context) -> ExperimentResult:
    out = ExperimentResult(experiment="split")
    m = ctx.manifest
    opts = m.options
    fields = [ctx.u0] + [
        make_initial_data(InitialDataSpec(kind="curl_bump", amplitude=1.0, seed=m.seed + i), ctx.grid)
        for i in range(opts.split_fields)
    ]
    worst: Dict[str, float] = {}
    for idx, f in enumerate(fields):
        for N in opts.cutoffs:
            for t, r, s in opts.exponent_triples:
                pair = calderon_split(f, N)
                rep = _tag(verify_split_bounds(pair, r, s, t, tol=m.thresholds.split_tol), field=idx)
                out.reports.append(rep)
                key = f"t{t:g}_r{r:g}_s{s:g}"
                for part in rep.details.get("checks", []):
                    c = part.get("fitted_constant")
                    if c is not None:
                        worst[key] = max(worst.get(key, 0.0), c)
            out.reports.append(_tag(verify_split_bounds(calderon_split(f, N, divfree=True), 3.0, 4.0, 2.0), field=idx))
            out.reports.append(_tag(tail_l2_bound(f, N), field=idx))
    out.fitted_constants.update(worst)

    # 1/|x| oracle, counted only once the grid resolves the window
    g = inverse_distance(ctx.grid)
    measured = weak_l3(g, window=radial_window(ctx.grid))
    oracle = check(
        "inverse_distance_weak_norm",
        abs(measured - INVERSE_DISTANCE_WEAK_NORM),
        0.02 * INVERSE_DISTANCE_WEAK_NORM,
        details={"measured": measured, "exact": INVERSE_DISTANCE_WEAK_NORM},
    )
    if ctx.grid.n < 64:
        oracle.counted = False
        oracle.flags.append("coarse_grid")
    out.reports.append(oracle)
    out.fitted_constants["inverse_distance_weak_norm"] = measured

    # the tail bound is attained by 1/|x|; the tail ball of radius 0.45 L fits the box
    N_tail = 1.0 / (0.45 * ctx.grid.L)
    ratio = tail_energy_ratio(inverse_distance(ctx.grid, 0.0), N_tail, INVERSE_DISTANCE_WEAK_NORM)
    tail_oracle = check(
        "inverse_distance_tail_l2",
        abs(ratio - 1.0),
        0.03,
        fitted_constant=ratio,
        params={"N": N_tail},
        details={"ratio": ratio},
    )
    if ctx.grid.n < 64:
        tail_oracle.counted = False
        tail_oracle.flags.append("coarse_grid")
    out.reports.append(tail_oracle)
    out.fitted_constants["inverse_distance_tail_ratio"] = ratio

    rows = []
    for N in opts.cutoffs:
        pair = calderon_split(ctx.u0, N)
        rows.append({"N": N, "tail_weak_norm": weak_l3(pair.plus), "bounded_sup": pair.minus.sup_norm()})
    out.series["cutoffs"] = pd.DataFrame(rows)
    return out


# =============================================================================
# KATO
# =============================================================================


def records_frame(run: MildSolutionTrace) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in run.records])


def _energy_pressure_report(run: MildSolutionTrace) -> VerifierReport:
    pairs = [
        (r.energy_pressure_lhs, r.energy_pressure_rhs)
        for r in run.records
        if r.energy_pressure_lhs is not None and r.energy_pressure_rhs
    ]
    if not pairs:
        return trivial_pass("energy_pressure_cauchy", "fewer than three iterates")
    c = max(a / b for a, b in pairs)
    return VerifierReport(
        inequality_id="energy_pressure_cauchy",
        lhs=max(a for a, _ in pairs),
        rhs=c * max(b for _, b in pairs),
        fitted_constant=c,
        passed=math.isfinite(c),
        flags=["empirical"],
    )


def residual_refinement_report(ctx: Context, run: MildSolutionTrace) -> VerifierReport:
    """The Navier-Stokes defect on the trace and on its nested refinement."""
    coarse = ns_residual(run)
    fine_run = ctx.run_kato(timegrid=run.timegrid.refine(), with_pressure=False)
    if not fine_run.converged:
        return VerifierReport(
            inequality_id="ns_residual",
            lhs=coarse.relative,
            rhs=math.nan,
            passed=False,
            counted=False,
            flags=["refined_run_failed"],
        )
    fine = ns_residual(fine_run)
    order = math.log2(coarse.relative / fine.relative) if fine.relative > 0 and coarse.relative > 0 else math.inf
    return check(
        "ns_residual",
        fine.relative,
        coarse.relative,
        tolerance=1e-14,
        fitted_constant=order,
        details={"coarse": coarse.relative, "fine": fine.relative, "observed_order": order},
    )


def run_kato(ctx: Context) -> ExperimentResult:
    out = ExperimentResult(experiment="kato")
    m = ctx.manifest
    run = ctx.run_kato(track_energy_pressure=True)
    out.series["iterates"] = records_frame(run)
    gaps = continuity_gap(run.v, ctx.u0)
    out.series["continuity"] = pd.DataFrame(gaps, columns=["t", "weak_gap"])
    if m.options.save_traces:
        out.traces["V"] = run.V
        out.traces["v"] = run.v
    if run.iterations >= 2 or run.kato_V == 0.0:
        out.reports.append(contraction_report(run))
    if not run.converged:
        out.run_failures.append(run.status)
        return out

    out.reports.append(interpolation_check(run.v, m.thresholds.interpolation_drift))
    out.reports.append(continuity_report(run.v, ctx.u0, m.thresholds.eps0))
    out.reports.append(_energy_pressure_report(run))
    if run.kato_V > 0 and m.options.refine:
        out.reports.append(residual_refinement_report(ctx, run))
    c_fit = next((r.fitted_constant for r in out.reports if r.inequality_id == "kato_contraction"), None)
    if c_fit is not None:
        out.fitted_constants["quadratic_gain"] = c_fit

    if m.options.sweep and run.kato_V > 0:
        base = ctx.u0.scale(1.0 / max(ctx.u0.sup_norm(), 1e-300))
        sweep = amplitude_sweep(
            base,
            ctx.timegrid,
            start=m.options.sweep_start,
            bisections=m.options.sweep_bisections,
            kmax=m.options.kmax,
            tol=m.options.tol,
            thresholds=m.thresholds,
        )
        out.series["sweep"] = pd.DataFrame([r.model_dump() for r in sweep.rows])
        if sweep.bracket:
            out.fitted_constants["sweep_lo"], out.fitted_constants["sweep_hi"] = sweep.bracket
    return out


# =============================================================================
# ENERGY
# =============================================================================


def run_energy(ctx: Context) -> ExperimentResult:
    out = ExperimentResult(experiment="energy")
    m = ctx.manifest
    tg, T = ctx.timegrid, ctx.timegrid.T
    run = ctx.run_kato()
    if not run.converged:
        out.run_failures.append(run.status)
        return out
    fine = ctx.run_kato(timegrid=tg.refine()) if m.options.refine else None
    if fine is not None and not fine.converged:
        out.run_failures.append(f"refined run {fine.status}")
        fine = None
    u, V = run.u, run.V

    out.reports.append(
        energy_inequality_residual(u, V, T, m.thresholds, refined=(fine.u, fine.V) if fine else None)
    )
    for N in m.options.cutoffs:
        out.reports.append(split_energy_check(u, ctx.u0, N, T, m.thresholds, refined=fine.u if fine else None))

    N_mid = m.options.cutoffs[len(m.options.cutoffs) // 2]
    split = split_traces(u, ctx.u0, N_mid)
    refined_split = split_traces(fine.u, ctx.u0, N_mid) if fine else None
    cross = cross_term_bounds(
        split.w,
        split.V_bar,
        ctx.u0,
        N_mid,
        T,
        m.thresholds,
        refined=(refined_split.w, refined_split.V_bar) if refined_split else None,
    )
    out.reports.append(cross)
    if cross.fitted_constant is not None:
        out.fitted_constants["cross_terms"] = cross.fitted_constant

    if run.kato_V > 0:
        for phi in random_tests(ctx.grid, T, m.options.test_functions, seed=m.seed):
            out.reports.append(
                local_energy_residual(
                    run.v,
                    run.pressure,
                    phi,
                    T,
                    m.thresholds,
                    refined=(fine.v, fine.pressure) if fine else None,
                )
            )
        out.reports.append(integrability_report(u, V, ctx.u0))
        L = ctx.grid.L
        radii = m.options.radii or [L / 16, L / 10, L / 6]
        tail = pressure_tail_ladder(split.w, pressure_decompose(u, V), radii, 0.25 * T, 0.75 * T)
        tail.counted = False
        tail.flags.append("diagnostic")
        out.reports.append(tail)

    energy = EnergyTrace.of(u, V)
    out.series["energy"] = pd.DataFrame(
        {
            "t": tg.nodes,
            "kinetic": energy.kinetic,
            "dissipation": energy.dissipation,
            "work": energy.rhs_work,
            "transport": energy.transport,
        }
    )
    return out


# =============================================================================
# SCALING
# =============================================================================


def run_scaling(ctx: Context) -> ExperimentResult:
    out = ExperimentResult(experiment="scaling")
    m = ctx.manifest
    T = ctx.timegrid.T
    window = (T * 10**-1.5, T)
    rows = []
    for a in m.options.amplitude_ladder:
        spec = m.initial_data.model_copy(update={"amplitude": m.initial_data.amplitude * a})
        u0 = make_initial_data(spec, ctx.grid)
        run = ctx.run_kato(u0=u0, with_pressure=False)
        report = apriori_scaling_check(run.u, run.V, u0, window=window, converged=run.converged)
        report.params["amplitude_factor"] = a
        out.reports.append(report)
        if not run.converged:
            out.run_failures.append(f"amplitude x{a}: {run.status}")
            continue
        rows.append(
            {
                "amplitude_factor": a,
                "weak_norm_u0": weak_l3(u0),
                "beta": report.details.get("beta", math.nan),
                "prefactor": report.details.get("prefactor", math.nan),
            }
        )
    frame = pd.DataFrame(rows)
    out.series["ladder"] = frame
    if len(rows) >= 2:
        ordered = frame.sort_values("weak_norm_u0")
        prefactors = ordered["prefactor"].to_numpy()
        out.reports.append(
            VerifierReport(
                inequality_id="prefactor_monotone",
                lhs=float(np.max(-np.diff(prefactors), initial=0.0)),
                rhs=0.0,
                passed=bool(np.all(np.diff(prefactors) >= 0)),
                details={"prefactors": prefactors.tolist()},
            )
        )
        out.fitted_constants["beta"] = float(frame["beta"].iloc[len(frame) // 2])
    return out


# =============================================================================
# STABILITY
# =============================================================================


def trace_pairing(trace: FieldTrace, phi: TestFunction, direction=(1.0, 0.0, 0.0)) -> float:
    """int int v . e phi dx dt, grid sum x trapezoid on the nodes."""
    grid = trace.grid
    psi = phi.space(grid)
    e = np.asarray(direction, dtype=float)
    eta = phi.time(trace.times)
    per_node = [
        eta[j] * float(np.sum(np.tensordot(e, trace.data[j], axes=1) * psi) * grid.cell_volume)
        for j in range(len(trace))
    ]
    return float(trace.timegrid.cumulative(np.array(per_node))[-1])


def sequence_gap_report(
    inequality_id: str, ks: List[int], gaps: List[float], slack: float, shrink: float = 1.0, **extra
) -> VerifierReport:
    """Gaps along a sequence: the last at most shrink * first, no rise above slack * first between neighbours."""
    first, last = gaps[0], gaps[-1]
    if first == 0.0:
        return trivial_pass(inequality_id, "members coincide with the base", details={"k": ks, "gaps": gaps}, **extra)
    rises = [b - a for a, b in zip(gaps, gaps[1:])]
    worst_rise = max(rises, default=0.0)
    monotone = worst_rise <= slack * first
    details = dict(extra.pop("details", {}))
    details.update({"k": ks, "gaps": gaps, "worst_rise": worst_rise, "shrink": shrink})
    return VerifierReport(
        inequality_id=inequality_id,
        lhs=last,
        rhs=shrink * first,
        fitted_constant=last / first,
        passed=last <= shrink * first and monotone,
        flags=[] if monotone else ["not_monotone"],
        details=details,
        **extra,
    )


def _sequence_reports(ctx: Context, kind: str) -> ExperimentResult:
    m = ctx.manifest
    spec = m.initial_data
    if spec.kind not in SEQUENCE_KINDS:
        spec = spec.model_copy(update={"kind": kind, "base": spec.kind})
    else:
        spec = spec.model_copy(update={"kind": kind})
    seq = make_sequence(spec, ctx.grid, m.options.sequence_count)
    out = ExperimentResult(experiment=kind)
    out.fitted_constants["uniform_weak_bound"] = seq.weak_bound
    if len(seq) < 2:
        out.run_failures.append(seq.note or "sequence too short")
        return out
    T = ctx.timegrid.T
    slack = m.thresholds.monotone_slack
    provenance = m.thresholds.provenance("monotone_slack")
    tests = random_tests(ctx.grid, T, SEQUENCE_TESTS, seed=m.seed)
    per_test = []
    for phi in tests:
        base_pairing = weakstar_pairing_trace([seq.base], phi, T=T)[0]
        per_test.append([abs(p - base_pairing) for p in weakstar_pairing_trace(seq.members, phi, T=T)])
    gaps = np.max(np.array(per_test), axis=0).tolist()
    ks = list(range(1, len(seq) + 1))
    out.series["semigroup_pairings"] = pd.DataFrame({"k": ks, "gap": gaps})
    out.reports.append(
        sequence_gap_report(
            "semigroup_pairing_gap", ks, gaps, slack, params={"tests": len(tests)}, provenance=provenance
        )
    )

    base_run = ctx.run_kato(u0=seq.base, with_pressure=False)
    k_first = 2 if len(seq) > 2 else 1
    picked = sorted({k_first, (k_first + len(seq)) // 2, len(seq)})
    runs = [ctx.run_kato(u0=seq.members[k - 1], with_pressure=False) for k in picked]
    if not base_run.converged or not all(r.converged for r in runs):
        out.run_failures.append("a sequence member did not converge")
        return out
    base_pairings = [trace_pairing(base_run.v, p) for p in tests]
    solution_gaps = [
        max(abs(trace_pairing(run.v, p) - b) for p, b in zip(tests, base_pairings)) for run in runs
    ]
    out.series["solution_pairings"] = pd.DataFrame({"k": picked, "gap": solution_gaps})
    out.reports.append(
        sequence_gap_report(
            "solution_pairing_gap",
            picked,
            solution_gaps,
            slack,
            shrink=SOLUTION_SHRINK,
            params={"k_first": picked[0], "k_last": picked[-1], "tests": len(tests)},
            provenance=provenance,
        )
    )
    return out


def run_stability(ctx: Context) -> ExperimentResult:
    out = ExperimentResult(experiment="stability")
    for kind in SEQUENCE_KINDS:
        part = _sequence_reports(ctx, kind)
        for r in part.reports:
            r.params["sequence"] = kind
        out.extend(part)
    return out


# =============================================================================
# SHORT-TIME RUN
# =============================================================================


def horizon_contraction(ctx: Context, N: float) -> ExperimentResult:
    """Iterate on Q_T at the predicted horizon for cutoffs N, 2N and amplitudes a, 2a.

    A case passes when the iteration converges there with every gap ratio
    below 1; the largest ratio is its contraction gain. The formula's own
    ratios T(2N)/T(N) = 1/4 and T(2a)/T(a) = 1/8 are reported uncounted.
    """
    out = ExperimentResult(experiment="horizon")
    th = ctx.manifest.thresholds
    horizons: Dict[Tuple[int, int], float] = {}
    rows = []
    for n_factor, a_factor in ((1, 1), (2, 1), (1, 2), (2, 2)):
        u0 = ctx.u0.scale(float(a_factor))
        T_pred = predicted_horizon(th, n_factor * N, weak_l3(u0))
        horizons[(n_factor, a_factor)] = T_pred
        T = min(T_pred, ctx.timegrid.T)
        run = ctx.run_kato(u0=u0, timegrid=ctx.timegrid.with_T(T), with_pressure=False)
        gain = run.max_gap_ratio
        params = {"N": n_factor * N, "amplitude_factor": a_factor, "T": T}
        report = VerifierReport(
            inequality_id="horizon_contraction",
            lhs=gain if gain is not None else 0.0,
            rhs=1.0,
            fitted_constant=gain,
            passed=run.converged and (gain is None or gain < 1.0),
            flags=["horizon_capped"] if T < T_pred else [],
            params=params,
            details={"T_predicted": T_pred, "status": run.status, "iterations": run.iterations},
        )
        out.reports.append(report)
        rows.append(params | {"T_predicted": T_pred, "status": run.status, "contraction_gain": gain})
        if not run.converged:
            out.run_failures.append(f"N x{n_factor}, amplitude x{a_factor}: {run.status}")
    out.series["cases"] = pd.DataFrame(rows)
    gains = [r.fitted_constant for r in out.reports if r.fitted_constant is not None]
    if gains:
        out.fitted_constants["max_contraction_gain"] = max(gains)

    base = horizons[(1, 1)]
    ratios = {"N_doubled": horizons[(2, 1)] / base, "amplitude_doubled": horizons[(1, 2)] / base}
    expected = {"N_doubled": 0.25, "amplitude_doubled": 0.125}
    formula = merge_reports(
        "horizon_scaling",
        [check(f"horizon_{k}", abs(ratios[k] / expected[k] - 1.0), 0.2, details={"ratio": ratios[k]}) for k in ratios],
    )
    formula.counted = False
    formula.flags.append("formula")
    out.reports.append(formula)
    return out


def run_kozono_yamazaki(ctx: Context) -> ExperimentResult:
    out = ExperimentResult(experiment="kozono_yamazaki")
    m = ctx.manifest
    result = kozono_yamazaki_run(
        ctx.u0, m.thresholds, ctx.timegrid, kmax=m.options.kmax, tol=m.options.tol, radii=m.options.radii
    )
    out.series["summary"] = pd.DataFrame([result.model_dump(exclude={"reports"})])
    if not result.condition_met:
        out.reports.append(
            VerifierReport(
                inequality_id="kozono_yamazaki",
                lhs=result.tail_surrogate,
                rhs=m.thresholds.eps3,
                passed=False,
                flags=["condition_not_met"],
            )
        )
        return out
    out.reports.extend(result.reports)
    if result.status != "converged":
        out.run_failures.append(result.status)
    if result.tail_constant is not None:
        out.fitted_constants["tail_kato_constant"] = result.tail_constant
    if result.N is not None and result.weak_norm_u0 > 0:
        out.extend(horizon_contraction(ctx, result.N))
        out.fitted_constants["T_predicted"] = result.T_predicted
        out.fitted_constants["N"] = result.N
    return out


SUITES: Dict[str, Callable[[Context], ExperimentResult]] = {
    "semigroup": run_semigroup,
    "split": run_split,
    "kato": run_kato,
    "energy": run_energy,
    "scaling": run_scaling,
    "stability": run_stability,
    "kozono_yamazaki": run_kozono_yamazaki,
}


def run_experiment(manifest: RunManifest) -> ExperimentResult:
    """Build the context once and run the named suite (or all of them)."""
    ctx = Context.build(manifest)
    if manifest.experiment != "all":
        logger.info(f"🧪 EXPERIMENT: running {manifest.experiment}")
        return SUITES[manifest.experiment](ctx)
    out = ExperimentResult(experiment="all")
    for name, suite in SUITES.items():
        logger.info(f"🧪 EXPERIMENT: running {name}")
        out.extend(suite(ctx))
    return out
