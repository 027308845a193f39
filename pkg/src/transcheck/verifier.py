"""End-to-end verification: compile the query, solve, and interpret.

An infeasible model means no admissible transformation and perturbation
flips the classifier, so the verdict is Robust.  A feasible model yields
the chosen instantiations (read from the selector binaries), the
counterexample image (read from the perturbation-layer outputs, the
exact tensor the network block saw), and the adversarial class (read
from the output code binaries).  The counterexample is then replayed
through the concrete forward pass; a replay that contradicts the solver
beyond tolerance downgrades the verdict to Undecided rather than ever
reporting an unconfirmed flip as fact.

Logit ties count as violations: the misclassification rows use a
non-strict comparison while concrete argmax breaks ties by the lowest
index, so a replayed tie confirms the counterexample even though the
plain label may not change.
"""

from __future__ import annotations

import itertools
import os
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DomainError, Image, Tensor3
from .encoder import VariableMap, VerificationQuery, encode_query
from .io import save_image
from .milp import Assignment
from .network import forward
from .solver import Feasible, Infeasible, SolverConfig, TimedOut, solve
from .transforms import (
    Instantiation,
    Perturbation,
    apply_sequence,
    enumerate_instantiations,
)

TIMEOUT = "timeout"
NUMERICAL_MISMATCH = "numerical_mismatch"
ERROR = "error"

REPLAY_MARGIN = 1e-9


@dataclass(frozen=True)
class Robust:
    """No admissible choice flips the label."""


@dataclass(frozen=True)
class NotRobust:
    """A concrete flip was found and reconstructed.

    instantiations line up with the query's transformation sequence;
    counterexample is the post-perturbation input tensor.
    """

    instantiations: tuple[Instantiation, ...]
    counterexample: Image
    adversarial_label: int
    original_label: int
    replay_confirmed: bool


@dataclass(frozen=True)
class Undecided:
    """No verdict: solver timeout or an unconfirmed counterexample."""

    reason: str
    detail: str = ""


VerificationOutcome = Robust | NotRobust | Undecided


def extract_instantiations(query: VerificationQuery, varmap: VariableMap,
                           assignment: Assignment) -> tuple[Instantiation, ...]:
    """Read the chosen parameters back from the solved model.

    Selector binaries decide discrete transformations (the active
    disjunct is what the pixels obey); photometric parameters come from
    the lambda variables; an in-sequence perturbation's offsets are the
    differences across its layer.
    """
    insts = []
    for k, tv in enumerate(varmap.transforms):
        if tv.selectors:
            picked = [i for i, d in enumerate(tv.selectors)
                      if assignment[d] > 0.5]
            if len(picked) != 1:
                raise DomainError(
                    f"transformation {k}: selector support has size {len(picked)}")
            insts.append(Instantiation(values=tv.instantiations[picked[0]]))
        elif tv.lambdas:
            insts.append(Instantiation(
                values=tuple(float(assignment[lam]) for lam in tv.lambdas)))
        else:
            assert isinstance(tv.spec, Perturbation)
            before = (varmap.input_pixels if k == 0
                      else varmap.transforms[k - 1].outputs)
            diff = np.array([assignment[o] - assignment[i]
                             for o, i in zip(tv.outputs, before)])
            radius = tv.spec.radius
            diff = np.clip(diff, -radius, radius)
            insts.append(Instantiation(
                offsets=Tensor3.from_array(diff.reshape(query.image.shape)),
                domain_covered=(radius == 0.0)))
    return tuple(insts)


def extract_counterexample(query: VerificationQuery, varmap: VariableMap,
                           assignment: Assignment) -> Image:
    """The post-perturbation pixels, clamped against tolerance dust."""
    values = np.array([assignment[v] for v in varmap.perturbation_outputs])
    values = np.clip(values, 0.0, query.image.p_max)
    return Image(Tensor3.from_array(values.reshape(query.image.shape)),
                 query.image.p_max)


def _decode_output_class(varmap: VariableMap, assignment: Assignment,
                         class_count: int) -> int | None:
    code = 0
    for k, var in enumerate(varmap.output_codes):
        if assignment[var] > 0.5:
            code |= 1 << k
    label = code + 1
    return label if 1 <= label <= class_count else None


def verify(query: VerificationQuery, config: SolverConfig | None = None,
           *, anchor_bounds: bool = True) -> VerificationOutcome:
    """Decide local robustness of the query exactly (up to tolerances)."""
    config = config or SolverConfig()
    model, varmap, _ = encode_query(query, anchor_to_image=anchor_bounds)
    result = solve(model, config)
    if isinstance(result, Infeasible):
        return Robust()
    if isinstance(result, TimedOut):
        return Undecided(TIMEOUT,
                         f"{result.elapsed_seconds:.1f}s over "
                         f"{result.nodes_explored} nodes")
    assert isinstance(result, Feasible)
    assignment = result.assignment

    counterexample = extract_counterexample(query, varmap, assignment)
    insts = extract_instantiations(query, varmap, assignment)
    adversarial = _decode_output_class(varmap, assignment,
                                       query.network.class_count)

    replay = forward(query.network, counterexample)
    logits = replay.logits
    label_logit = logits[query.label - 1]
    others = np.delete(np.arange(logits.size), query.label - 1)
    best = int(others[np.argmax(logits[others])])
    margin = float(logits[best] - label_logit)
    if adversarial is None or adversarial == query.label:
        adversarial = best + 1

    confirmed = replay.label != query.label or margin >= -REPLAY_MARGIN
    if not confirmed and margin < -config.feasibility_tolerance:
        return Undecided(
            NUMERICAL_MISMATCH,
            f"replayed margin {margin:.3e} contradicts feasibility")
    return NotRobust(
        instantiations=insts,
        counterexample=counterexample,
        adversarial_label=adversarial,
        original_label=query.label,
        replay_confirmed=confirmed,
    )


def falsify_bruteforce(query: VerificationQuery,
                       grid: int = 2) -> VerificationOutcome:
    """Exhaustive search over the enumerable domain product.

    Exact for discrete domains; photometric boxes are only sampled on a
    grid x grid lattice so Robust then means robust-on-grid.  Positive
    perturbation radii cannot be enumerated and are rejected.
    """
    if query.perturbation_radius > 0:
        raise DomainError("perturbations cannot be enumerated; use verify")
    for spec in query.transformations:
        if isinstance(spec, Perturbation) and spec.radius > 0:
            raise DomainError("perturbations cannot be enumerated; use verify")
    pools = [enumerate_instantiations(s, grid=grid)
             for s in query.transformations]
    for combo in itertools.product(*pools):
        final = apply_sequence(query.image, query.transformations, combo)
        res = forward(query.network, final)
        logits = res.logits
        label_logit = logits[query.label - 1]
        others = np.delete(np.arange(logits.size), query.label - 1)
        best = int(others[np.argmax(logits[others])])
        if logits[best] >= label_logit:
            return NotRobust(
                instantiations=tuple(combo),
                counterexample=final,
                adversarial_label=best + 1,
                original_label=query.label,
                replay_confirmed=True,
            )
    return Robust()


# ------------------------------------------------------------------ batches


@dataclass(frozen=True)
class BatchRow:
    """One summary line: all queries sharing a transformation domain."""

    domain: str
    total: int
    verified: int
    mean_seconds: float
    robust: int


@dataclass(frozen=True)
class BatchResult:
    rows: tuple[BatchRow, ...]
    outcomes: tuple[VerificationOutcome, ...]


def describe_domain(query: VerificationQuery) -> str:
    """Stable, human-readable grouping key for a query's domain."""
    parts = []
    for spec in query.transformations:
        name = type(spec).__name__.lower()
        if isinstance(spec, Perturbation):
            parts.append(f"{name}(rho={spec.radius:g})")
        elif hasattr(spec, "offsets"):
            txs = sorted({tx for tx, _ in spec.offsets})
            tys = sorted({ty for _, ty in spec.offsets})
            parts.append(f"{name}[{txs[0]},{txs[-1]}]x[{tys[0]},{tys[-1]}]")
        elif hasattr(spec, "factors"):
            parts.append(f"{name}{{{','.join(str(d) for d in spec.factors)}}}")
        else:
            parts.append(f"{name}[{spec.mu_lo:g},{spec.mu_hi:g}]"
                         f"x[{spec.nu_lo:g},{spec.nu_hi:g}]")
    parts.append(f"rho={query.perturbation_radius:g}")
    return " ".join(parts)


def batch_verify(queries, config: SolverConfig | None = None,
                 clock=time.perf_counter, *, configs=None,
                 jobs: int = 1) -> BatchResult:
    """Verify each query and aggregate per-domain statistics.

    verified counts queries that reached a verdict within the timeout;
    mean_seconds averages the wall time of those verified queries only.
    configs, when given, supplies one SolverConfig per query and takes
    precedence over config.  jobs > 1 runs queries on a thread pool;
    aggregation order stays the input order either way.
    """
    queries = list(queries)
    if configs is None:
        shared = config or SolverConfig()
        configs = [shared] * len(queries)
    else:
        configs = list(configs)
        if len(configs) != len(queries):
            raise DomainError("configs must align one-to-one with queries")

    def run(pair):
        query, cfg = pair
        start = clock()
        try:
            outcome = verify(query, cfg)
        except (DomainError, ValueError) as exc:
            outcome = Undecided(ERROR, f"query failed: {exc}")
        return outcome, clock() - start

    if jobs > 1 and len(queries) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, zip(queries, configs)))
    else:
        results = [run(pair) for pair in zip(queries, configs)]

    outcomes = []
    per_domain: dict[str, list[tuple[VerificationOutcome, float]]] = {}
    order: list[str] = []
    for query, (outcome, elapsed) in zip(queries, results):
        outcomes.append(outcome)
        key = describe_domain(query)
        if key not in per_domain:
            per_domain[key] = []
            order.append(key)
        per_domain[key].append((outcome, elapsed))
    rows = []
    for key in order:
        entries = per_domain[key]
        done = [(o, t) for o, t in entries if not isinstance(o, Undecided)]
        mean = sum(t for _, t in done) / len(done) if done else 0.0
        rows.append(BatchRow(
            domain=key,
            total=len(entries),
            verified=len(done),
            mean_seconds=mean,
            robust=sum(1 for o, _ in done if isinstance(o, Robust)),
        ))
    return BatchResult(rows=tuple(rows), outcomes=tuple(outcomes))


def format_batch_table(rows) -> str:
    """Fixed-width text table, one row per domain."""
    width = max([len(r.domain) for r in rows] + [len("domain")])
    header = f"{'domain':<{width}}  {'ok':>4}  {'mean_s':>8}  {'robust':>6}  {'total':>5}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r.domain:<{width}}  {r.verified:>4}  "
                     f"{r.mean_seconds:>8.3f}  {r.robust:>6}  {r.total:>5}")
    return "\n".join(lines) + "\n"


def _format_instantiations(insts) -> str:
    parts = []
    for inst in insts:
        if inst.values:
            parts.append(",".join(f"{v:g}" for v in inst.values))
        elif inst.offsets is not None:
            parts.append("offsets")
        else:
            parts.append("0")
    return ";".join(parts) if parts else "-"


def export_adversarial_set(outcomes, directory: str) -> int:
    """Write every counterexample image plus a tab-separated manifest.

    Returns the number of images written.  Per-file failures are
    reported as warnings and skip only that file.
    """
    os.makedirs(directory, exist_ok=True)
    lines = []
    written = 0
    for outcome in outcomes:
        if not isinstance(outcome, NotRobust):
            continue
        filename = f"adv_{written:04d}.pgm"
        try:
            save_image(outcome.counterexample,
                       os.path.join(directory, filename))
        except (OSError, DomainError) as exc:
            warnings.warn(f"could not write {filename}: {exc}", stacklevel=2)
            continue
        lines.append("\t".join([
            filename,
            str(outcome.original_label),
            str(outcome.adversarial_label),
            _format_instantiations(outcome.instantiations),
        ]))
        written += 1
    with open(os.path.join(directory, "manifest.tsv"), "w",
              encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    return written
