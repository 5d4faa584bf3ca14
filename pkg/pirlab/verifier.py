"""
Executable checks of correctness, privacy and rate for any registered scheme.

Privacy is judged on the queries alone; answers are deterministic functions of
query and store, so their independence from the desired index follows.

Three privacy modes are available:

  * structural: for plan-based schemes, compares per-database signature
    profiles across desired indices. Equal profiles imply equal query
    distributions provided (a) no bit occurs twice within one database's
    query, (b) each message's bits are relabelled by a uniform permutation,
    and (c) the order of each database's equations is uniformly shuffled.
    Under (a)-(c) the concrete query is a uniformly random labelling of its
    signature multiset, so only the multiset matters. The conditions are
    checked before the profiles are compared; if any fails the check falls
    back to sampled mode instead of reporting a verdict it cannot support.
  * exhaustive: enumerates every randomness atom and compares the exact
    per-database query distributions (total-variation distance).
  * sampled: chi-squared homogeneity test over hashed query histograms.
"""

import hashlib
import logging
import math
from collections import Counter
from fractions import Fraction
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import chi2_contingency

from pirlab.baselines import F5_UPLOAD_CONSTRAINED_CAPACITY
from pirlab.config import settings
from pirlab.exceptions import CapabilityRefusedError, DecodeError, InvalidArgumentError
from pirlab.messages import derive_seed
from pirlab.models import (
    CorrectnessFailure,
    CorrectnessReport,
    DatabaseQuery,
    DatabaseVerdict,
    PrivacyReport,
    PrivacyWitness,
    RateReport,
    SchemeParams,
    SchemeRun,
    SignatureProfile,
    format_fraction,
    format_signature,
)
from pirlab.scheme import capacity, capacity_lower_bound, randomize
from pirlab.schemes import (
    PlanScheme,
    SchemeProvider,
    format_size,
    get_scheme,
    require_exhaustive,
    within_limit,
)

logger = logging.getLogger(__name__)

SAMPLED_NOTE = "sampled verdicts are statistical evidence, not proof"


def signature_profile(q: DatabaseQuery) -> SignatureProfile:
    """Number of equations per message signature in one query."""
    return SignatureProfile(counts=dict(Counter(eq.signature for eq in q.equations)))


def _signature_order(signature: Tuple[int, ...]) -> Tuple[int, Tuple[int, ...]]:
    return (len(signature), signature)


def _profile_witness(
    baseline: SignatureProfile, other: SignatureProfile
) -> Optional[Tuple[int, ...]]:
    """First signature whose count differs, preferring signatures seen in ``other``."""
    for sig in sorted(other.counts, key=_signature_order):
        if other.counts[sig] != baseline.counts.get(sig, 0):
            return sig
    for sig in sorted(baseline.counts, key=_signature_order):
        if baseline.counts[sig] != other.counts.get(sig, 0):
            return sig
    return None


# ============================================================================
# STRUCTURAL MODE
# ============================================================================

def structural_violations(provider: PlanScheme, params: SchemeParams) -> List[str]:
    """Applicability conditions of structural mode that ``provider`` violates."""
    problems: List[str] = []
    size = provider.message_length(params)
    seeds = range(settings.structural_seeds)
    for desired in range(1, params.K + 1):
        plan = provider.plan(params, desired)
        for n, column in enumerate(plan.per_database, start=1):
            bits = [b for eq in column for b in eq.bits]
            if len(bits) != len(set(bits)):
                problems.append(f"DB{n} query repeats a bit (desired={desired})")

        atoms = [provider.randomness(plan, seed) for seed in seeds]
        if size > 1:
            for m in range(params.K):
                if all(np.array_equal(a.permutations[m], atoms[0].permutations[m]) for a in atoms[1:]):
                    problems.append(f"bit permutation of W{m + 1} does not depend on the seed")
        for n, column in enumerate(plan.per_database, start=1):
            if len(column) > 1 and all(
                np.array_equal(a.shuffles[n - 1], atoms[0].shuffles[n - 1]) for a in atoms[1:]
            ):
                problems.append(f"DB{n} equation order does not depend on the seed")
        if problems:
            break
    return problems


def check_structural_privacy(
    scheme_id: str, params: SchemeParams, message_length: Optional[int] = None
) -> PrivacyReport:
    """Compare per-database signature profiles across all desired indices."""
    provider = get_scheme(scheme_id)
    provider.check_params(params)
    if message_length is not None and message_length < provider.message_length(params):
        raise InvalidArgumentError(
            f"messages of {message_length} bits are shorter than the {provider.message_length(params)} "
            f"bits one run of {scheme_id} needs"
        )

    if not isinstance(provider, PlanScheme):
        return _downgrade(scheme_id, params, [f"{scheme_id} has no symbolic plan"])
    violations = structural_violations(provider, params)
    if violations:
        return _downgrade(scheme_id, params, violations)

    seed = settings.default_seed
    profiles: Dict[int, List[SignatureProfile]] = {}
    for desired in range(1, params.K + 1):
        queries, _ = randomize(provider.plan(params, desired), seed, randomness=provider.sample_atom(params, seed))
        if not all(q.has_unique_bits() for q in queries):
            return _downgrade(scheme_id, params, [f"concrete query repeats a bit (desired={desired})"])
        profiles[desired] = [signature_profile(q) for q in queries]

    per_database = []
    witness = None
    for n in range(1, params.N + 1):
        baseline = profiles[1][n - 1]
        verdict = "pass"
        for desired in range(2, params.K + 1):
            differing = _profile_witness(baseline, profiles[desired][n - 1])
            if differing is not None:
                verdict = "fail"
                if witness is None:
                    witness = PrivacyWitness(
                        database=n,
                        desired_pair=(1, desired),
                        signature=format_signature(differing),
                        detail=f"{baseline.as_text()} vs {profiles[desired][n - 1].as_text()}",
                    )
                break
        per_database.append(DatabaseVerdict(database=n, verdict=verdict, profile=baseline.as_text()))

    notes = []
    if params.K == 1:
        notes.append("single desired index; privacy holds vacuously")
    report = PrivacyReport(
        scheme_id=scheme_id,
        params=params,
        mode="structural",
        verdict="fail" if witness else "pass",
        per_database=per_database,
        witness=witness,
        notes=notes,
    )
    logger.info(f"Structural privacy for {scheme_id} ({params}): {report.verdict}")
    return report


def _downgrade(scheme_id: str, params: SchemeParams, reasons: List[str]) -> PrivacyReport:
    for reason in reasons:
        logger.warning(f"Structural mode not applicable to {scheme_id} ({params}): {reason}")
    report = check_privacy_sampled(scheme_id, params)
    notes = [f"structural mode downgraded to sampled: {reason}" for reason in reasons]
    return report.model_copy(update={"notes": notes + report.notes})


# ============================================================================
# EXHAUSTIVE MODE
# ============================================================================

def query_distributions(provider: SchemeProvider, params: SchemeParams) -> Dict[int, List[Counter]]:
    """Per desired index, a Counter of serialized queries per database over all atoms."""
    atoms = list(provider.enumerate_atoms(params))
    distributions = {}
    for desired in range(1, params.K + 1):
        counters = [Counter() for _ in range(params.N)]
        for atom in atoms:
            for n, key in enumerate(provider.query_keys_for_atom(params, desired, atom)):
                counters[n][key] += 1
        distributions[desired] = counters
    return distributions


def total_variation(p: Counter, q: Counter) -> Fraction:
    """Exact total-variation distance between two count distributions."""
    p_total, q_total = sum(p.values()), sum(q.values())
    return sum(
        (abs(Fraction(p[k], p_total) - Fraction(q[k], q_total)) for k in set(p) | set(q)),
        Fraction(0),
    ) / 2


def check_privacy_exhaustive(scheme_id: str, params: SchemeParams) -> PrivacyReport:
    """Exact comparison of per-database query distributions over every randomness atom."""
    provider = get_scheme(scheme_id)
    provider.check_params(params)
    atoms = require_exhaustive(provider, params, settings.exhaustive_limit)
    distributions = query_distributions(provider, params)

    per_database = []
    witness = None
    worst = Fraction(0)
    for n in range(params.N):
        baseline = distributions[1][n]
        tv = Fraction(0)
        for desired in range(2, params.K + 1):
            other = distributions[desired][n]
            distance = total_variation(baseline, other)
            if distance > tv:
                tv = distance
            if distance and witness is None:
                key = min(k for k in set(baseline) | set(other) if baseline[k] != other[k])
                witness = PrivacyWitness(
                    database=n + 1,
                    desired_pair=(1, desired),
                    query_key=key.hex(),
                    detail=f"probability {Fraction(baseline[key], atoms)} vs {Fraction(other[key], atoms)}",
                )
        worst = max(worst, tv)
        per_database.append(
            DatabaseVerdict(
                database=n + 1,
                verdict="pass" if tv == 0 else "fail",
                tv_distance=format_fraction(tv),
                support_size=len(baseline),
            )
        )

    report = PrivacyReport(
        scheme_id=scheme_id,
        params=params,
        mode="exhaustive",
        verdict="pass" if worst == 0 else "fail",
        per_database=per_database,
        statistic=float(worst),
        tv_distance=format_fraction(worst),
        witness=witness,
        notes=[f"{atoms} randomness atoms enumerated per desired index"],
    )
    logger.info(f"Exhaustive privacy for {scheme_id} ({params}): {report.verdict}, TV={report.tv_distance}")
    return report


# ============================================================================
# SAMPLED MODE
# ============================================================================

def bucket_of(key: bytes, buckets: int) -> int:
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big") % buckets


def _sample_histogram(
    scheme_id: str,
    params: SchemeParams,
    desired: int,
    trials: int,
    seed_base: int,
    buckets: int,
    shared_stream: bool,
) -> np.ndarray:
    provider = get_scheme(scheme_id)
    histogram = np.zeros((params.N, buckets), dtype=np.int64)
    for t in range(trials):
        seed = derive_seed(seed_base, t) if shared_stream else derive_seed(seed_base, desired, t)
        keys = provider.sample_query_keys(params, desired, seed)
        for n, key in enumerate(keys):
            histogram[n, bucket_of(key, buckets)] += 1
    return histogram


def sample_histograms(
    scheme_id: str,
    params: SchemeParams,
    trials: int,
    seed_base: int,
    buckets: Optional[int] = None,
    shared_stream: bool = False,
) -> np.ndarray:
    """Hashed query histograms, shape (K, N, buckets).

    Each desired index draws its own seed stream, so the K histograms are
    independent samples. ``shared_stream`` reuses trial t's seed for every
    desired index instead; the histograms are then coupled and unfit for the
    homogeneity test.
    """
    buckets = buckets or settings.histogram_buckets
    rows = Parallel(n_jobs=settings.n_jobs)(
        delayed(_sample_histogram)(scheme_id, params, desired, trials, seed_base, buckets, shared_stream)
        for desired in range(1, params.K + 1)
    )
    return np.stack(rows)


def _homogeneity(table: np.ndarray) -> Optional[Tuple[float, float]]:
    """(chi-squared statistic, p-value) over non-empty buckets; None when degenerate."""
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return None
    statistic, p_value, _, _ = chi2_contingency(table, correction=False)
    return float(statistic), float(p_value)


def check_privacy_sampled(
    scheme_id: str,
    params: SchemeParams,
    trials: Optional[int] = None,
    seed_base: Optional[int] = None,
) -> PrivacyReport:
    """Chi-squared homogeneity test of hashed query histograms across desired indices."""
    trials = trials if trials is not None else settings.sampled_trials
    seed_base = seed_base if seed_base is not None else settings.default_seed
    if trials < 1000:
        raise InvalidArgumentError(f"sampled mode needs at least 1000 trials, got {trials}")
    provider = get_scheme(scheme_id)
    provider.check_params(params)

    if params.K == 1:
        return PrivacyReport(
            scheme_id=scheme_id,
            params=params,
            mode="sampled",
            verdict="pass",
            per_database=[DatabaseVerdict(database=n, verdict="pass") for n in range(1, params.N + 1)],
            trials=trials,
            notes=["single desired index; privacy holds vacuously"],
        )

    histograms = sample_histograms(scheme_id, params, trials, seed_base)
    per_database = []
    worst: Optional[Tuple[float, float, int]] = None
    for n in range(params.N):
        result = _homogeneity(histograms[:, n, :])
        if result is None:
            per_database.append(DatabaseVerdict(database=n + 1, verdict="inconclusive"))
            continue
        statistic, p_value = result
        if p_value < settings.fail_threshold:
            verdict = "fail"
        elif p_value > settings.pass_threshold:
            verdict = "pass"
        else:
            verdict = "inconclusive"
        per_database.append(DatabaseVerdict(database=n + 1, verdict=verdict, p_value=p_value))
        if worst is None or p_value < worst[1]:
            worst = (statistic, p_value, n)

    verdicts = {v.verdict for v in per_database}
    if "fail" in verdicts:
        overall = "fail"
    elif verdicts == {"pass"}:
        overall = "pass"
    else:
        overall = "inconclusive"

    notes = [SAMPLED_NOTE]
    if worst is None:
        notes.append("every database's histogram fell into a single bucket")
    witness = None
    if overall == "fail":
        witness = _sampled_witness(histograms, worst[2])
    report = PrivacyReport(
        scheme_id=scheme_id,
        params=params,
        mode="sampled",
        verdict=overall,
        per_database=per_database,
        statistic=worst[0] if worst else None,
        p_value=worst[1] if worst else None,
        trials=trials,
        witness=witness,
        notes=notes,
    )
    if overall == "inconclusive":
        logger.warning(f"Sampled privacy for {scheme_id} ({params}) is inconclusive")
    logger.info(f"Sampled privacy for {scheme_id} ({params}): {overall}, p={report.p_value}")
    return report


def _sampled_witness(histograms: np.ndarray, n: int) -> PrivacyWitness:
    baseline = histograms[0, n]
    best = None
    for d in range(1, histograms.shape[0]):
        result = _homogeneity(np.stack([baseline, histograms[d, n]]))
        if result is not None and (best is None or result[1] < best[1]):
            best = (d, result[1])
    d = best[0] if best else 1
    bucket = int(np.argmax(np.abs(baseline - histograms[d, n])))
    return PrivacyWitness(
        database=n + 1,
        desired_pair=(1, d + 1),
        detail=f"bucket {bucket}: {int(baseline[bucket])} vs {int(histograms[d, n, bucket])} samples",
    )


# ============================================================================
# CORRECTNESS
# ============================================================================

def _first_mismatch(decoded: Sequence[int], expected: Sequence[int]) -> Optional[int]:
    for b, (x, y) in enumerate(zip(decoded, expected)):
        if x != y:
            return b
    if len(decoded) != len(expected):
        return min(len(decoded), len(expected))
    return None


def _correctness_trial(scheme_id: str, params: SchemeParams, t: int, seed_base: int) -> CorrectnessReport:
    provider = get_scheme(scheme_id)
    failures = []
    for desired in range(1, params.K + 1):
        seed = derive_seed(seed_base, t, desired)
        store = provider.generate_store(params, derive_seed(seed, 1))
        try:
            run = provider.run(params, desired, store, seed)
            mismatch = _first_mismatch(run.decoded, provider.desired_message(store, desired))
        except DecodeError as e:
            logger.debug(f"{scheme_id} trial {t} desired={desired}: {e}")
            mismatch = -1
        if mismatch is not None:
            failures.append(CorrectnessFailure(seed=seed, desired=desired, bit_index=mismatch))
    return CorrectnessReport(
        scheme_id=scheme_id, params=params, trials=1, retrievals=params.K, failures=failures
    )


def check_correctness(
    scheme_id: str, params: SchemeParams, trials: int, seed_base: Optional[int] = None
) -> CorrectnessReport:
    """Fresh store, retrieve, compare bit-exactly; for every trial and desired index.

    A ``bit_index`` of -1 marks a retrieval whose decoder raised.
    """
    if trials < 1:
        raise InvalidArgumentError(f"trials must be at least 1, got {trials}")
    seed_base = seed_base if seed_base is not None else settings.default_seed
    get_scheme(scheme_id).check_params(params)
    reports = Parallel(n_jobs=settings.n_jobs)(
        delayed(_correctness_trial)(scheme_id, params, t, seed_base) for t in range(trials)
    )
    report = reduce(
        CorrectnessReport.merge, reports, CorrectnessReport(scheme_id=scheme_id, params=params)
    )
    logger.info(
        f"Correctness for {scheme_id} ({params}): {report.retrievals} retrievals, "
        f"{len(report.failures)} failures"
    )
    return report


def check_correctness_exhaustive(scheme_id: str, params: SchemeParams) -> CorrectnessReport:
    """Every store x every randomness atom x every desired index."""
    provider = get_scheme(scheme_id)
    provider.check_params(params)
    limit = settings.exhaustive_limit
    log_cases = (
        math.log(provider.store_space_size(params))
        + provider.log_randomness_space_size(params)
        + math.log(params.K)
    )
    cases = None
    if within_limit(log_cases, limit):
        cases = provider.store_space_size(params) * provider.randomness_space_size(params) * params.K
    if cases is None or cases > limit:
        raise CapabilityRefusedError(
            f"{scheme_id} at {params} has {format_size(log_cases, cases)} store/randomness cases (limit {limit})"
        )
    atoms = list(provider.enumerate_atoms(params))
    failures = []
    retrievals = 0
    for store in provider.enumerate_stores(params):
        for desired in range(1, params.K + 1):
            expected = provider.desired_message(store, desired)
            for atom in atoms:
                run = provider.run_atom(params, desired, store, 0, atom)
                retrievals += 1
                mismatch = _first_mismatch(run.decoded, expected)
                if mismatch is not None:
                    failures.append(CorrectnessFailure(seed=0, desired=desired, bit_index=mismatch))
    return CorrectnessReport(
        scheme_id=scheme_id, params=params, trials=1, retrievals=retrievals, failures=failures
    )


# ============================================================================
# RATE
# ============================================================================

def measure_rate(runs: Sequence[SchemeRun]) -> Fraction:
    """Desired units recovered per downloaded unit, identical across ``runs``."""
    if not runs:
        raise InvalidArgumentError("measure_rate needs at least one run")
    first = runs[0]
    if any((r.scheme_id, r.params) != (first.scheme_id, first.params) for r in runs):
        raise InvalidArgumentError("measure_rate needs runs of a single scheme and parameter set")
    rates = {Fraction(r.desired_units, r.download_total) for r in runs}
    if len(rates) != 1:
        raise InvalidArgumentError(
            f"rate varies across runs ({', '.join(sorted(format_fraction(r) for r in rates))}); "
            "variable-length answers need entropy estimation"
        )
    return rates.pop()


def compare_rate(runs: Sequence[SchemeRun]) -> RateReport:
    """Measured rate against capacity and the 1 - 1/N bound."""
    achieved = measure_rate(runs)
    params = runs[0].params
    provider = get_scheme(runs[0].scheme_id)
    cap = capacity(params)
    notes = ["rate counts downloaded bits; it equals the entropy ratio when answers are uniform"]
    if provider.unit != "bit":
        notes.append(f"rate counts {provider.unit}s of equal size up and down")
    if runs[0].scheme_id == "f5-aligned":
        notes.append(
            f"upload-constrained capacity for three query choices is "
            f"{format_fraction(F5_UPLOAD_CONSTRAINED_CAPACITY)}"
        )
    if not provider.private:
        notes.append("non-private fixture; the capacity bound does not apply")
    return RateReport(
        scheme_id=runs[0].scheme_id,
        params=params,
        achieved=format_fraction(achieved),
        capacity=format_fraction(cap),
        lower_bound=format_fraction(capacity_lower_bound(params.N)),
        meets_capacity=achieved == cap,
        exceeds_capacity=achieved > cap,
        notes=notes,
    )
