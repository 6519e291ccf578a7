"""The dyadic sparse operator T f = sum_I a_I <f>_I chi_I, its testing
conditions, bump constants, and the Green's-formula induction that bounds
the weighted sums sum a_J u_J L_J |J| on finite trees."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .bellman import (B1, B2, BellmanNode, ConstantBudget, default_budget,
                      master_bellman_eval)
from .bumps import BumpFamily, EpsilonModel, orlicz_norm_def_batch
from .dyadic import (CarlesonSequence, DyadicIndex, LeafWeight, ROOT,
                     StepDistribution, l_intensity_levels)


class SparseOperator:
    """Positive sparse operator given by a Carleson family of coefficients.

    Two normalizations are accepted: "unit" requires the Carleson intensity
    (1/|J|) sum_{I subseteq J} a_I |I| to stay <= 1; "lerner" accepts a bound
    of 2 and stores the coefficients rescaled by 1/2, recording the factor.
    """

    def __init__(self, coeffs: CarlesonSequence, normalization: str = "unit"):
        if normalization == "unit":
            factor = 1.0
        elif normalization == "lerner":
            factor = 0.5
        else:
            raise ValueError(f"unknown normalization {normalization!r}")
        limit = 1.0 / factor
        worst = coeffs.max_intensity()
        if worst > limit * (1.0 + 1e-12):
            raise ValueError(
                f"Carleson intensity {worst:.6g} exceeds the {normalization} "
                f"bound {limit:g}")
        self.coeffs = coeffs if factor == 1.0 else coeffs.scaled(factor)
        self.depth = coeffs.depth
        self.conversion_factor = factor

    def a_levels(self) -> list[np.ndarray]:
        return self.coeffs.levels


def truncated(T: SparseOperator, depth: int) -> SparseOperator:
    """The operator with all coefficients below the given depth discarded
    (used for depth-refinement stability comparisons)."""
    if depth > T.depth:
        raise ValueError(f"cannot truncate depth {T.depth} to {depth}")
    return SparseOperator(CarlesonSequence(depth, T.coeffs.levels[:depth + 1],
                                           T.coeffs.bound))


def apply_sparse(T: SparseOperator, f: LeafWeight) -> LeafWeight:
    """(T f)(x) = sum over dyadic I containing x of a_I <f>_I."""
    if f.depth < T.depth:
        raise ValueError(
            f"weight depth {f.depth} shallower than operator depth {T.depth}")
    out = np.zeros(2 ** f.depth)
    for k, a in enumerate(T.coeffs.levels):
        out += np.repeat(a * f.node_averages(k), 2 ** (f.depth - k))
    return LeafWeight(f.depth, out)


def _weighted_l2_sq(g: np.ndarray, w: LeafWeight) -> float:
    return float(np.dot(g * g, w.values)) / w.values.size


def _masked(w: LeafWeight, index: DyadicIndex) -> LeafWeight:
    lo, hi = index.leaf_range(w.depth)
    vals = np.zeros_like(w.values)
    vals[lo:hi] = w.values[lo:hi]
    return LeafWeight(w.depth, vals)


def _one_sided_testing(T: SparseOperator, u: LeafWeight,
                       v: LeafWeight) -> dict:
    """ratio(J) = ||chi_J T(u chi_J)||^2_{L^2(v)} / u(J) over all dyadic J."""
    ratios = []
    sup, sup_at = 0.0, None
    for level in range(T.depth + 1):
        for pos in range(2 ** level):
            J = DyadicIndex(level, pos)
            lo, hi = J.leaf_range(u.depth)
            mass = u.average(J) * J.length  # u(J) = integral of u over J
            if mass <= 0.0:
                continue
            img = apply_sparse(T, _masked(u, J)).values
            g = np.zeros_like(img)
            g[lo:hi] = img[lo:hi]
            num = _weighted_l2_sq(g, v)
            ratio = num / mass
            ratios.append(((level, pos), ratio))
            if ratio > sup:
                sup, sup_at = ratio, (level, pos)
    return {"ratios": ratios, "sup": sup, "sup_at": sup_at}


def testing_condition(T: SparseOperator, u: LeafWeight, v: LeafWeight) -> dict:
    """Both one-sided sparse testing conditions; zero-mass J are skipped."""
    if u.depth != v.depth:
        raise ValueError("u and v must share a depth")
    fwd = _one_sided_testing(T, u, v)
    bwd = _one_sided_testing(T, v, u)
    return {"u_to_v": fwd, "v_to_u": bwd,
            "sup": max(fwd["sup"], bwd["sup"])}


def bump_condition(u: LeafWeight, v: LeafWeight, family: BumpFamily,
                   depth: int | None = None) -> dict:
    """Suprema over dyadic I of the one-sided bump products and the joint
    A2 product: B_uv_left = sup ||u||_{Phi,I} <v>_I, B_uv_right the mirror,
    A2 = sup <u>_I <v>_I."""
    if u.depth != v.depth:
        raise ValueError("u and v must share a depth")
    depth = u.depth if depth is None else min(depth, u.depth)
    left = right = a2 = 0.0
    for k in range(depth + 1):
        rows_u = u.values.reshape(2 ** k, -1)
        rows_v = v.values.reshape(2 ** k, -1)
        norm_u = orlicz_norm_def_batch(rows_u, family)
        norm_v = orlicz_norm_def_batch(rows_v, family)
        avg_u = u.node_averages(k)
        avg_v = v.node_averages(k)
        left = max(left, float(np.max(norm_u * avg_v)))
        right = max(right, float(np.max(avg_u * norm_v)))
        a2 = max(a2, float(np.max(avg_u * avg_v)))
    return {"B_uv_left": left, "B_uv_right": right, "A2": a2}


def normalize_to_bump(u: LeafWeight, v: LeafWeight, family: BumpFamily,
                      target: float) -> tuple[LeafWeight, LeafWeight, float]:
    """Scale u and v by a common factor so the larger one-sided bump
    constant equals target (both products are bilinear in (u, v))."""
    rep = bump_condition(u, v, family)
    worst = max(rep["B_uv_left"], rep["B_uv_right"])
    if worst <= 0:
        return u, v, 1.0
    s = math.sqrt(target / worst)
    return u.scaled(s), v.scaled(s), s


# ---------------------------------------------------------------------------
# The (glav) sum and its recursion
# ---------------------------------------------------------------------------

def glav_levels(u: LeafWeight, v: LeafWeight,
                T: SparseOperator) -> list[np.ndarray]:
    """G_I = (1/|I|) sum_{J subseteq I} a_J u_J L_J |J| for every node,
    by the midpoint recursion G_I = a_I u_I L_I + (G_+ + G_-)/2."""
    L = l_intensity_levels(u, v, T.coeffs)
    out = [None] * (T.depth + 1)
    k = T.depth
    cur = T.coeffs.levels[k] * u.node_averages(k) * L[k]
    out[k] = cur
    for k in range(T.depth - 1, -1, -1):
        cur = T.coeffs.levels[k] * u.node_averages(k) * L[k] \
            + (cur[0::2] + cur[1::2]) / 2.0
        out[k] = cur
    return out


def glav_brute(u: LeafWeight, v: LeafWeight, T: SparseOperator,
               index: DyadicIndex = ROOT) -> float:
    """G_I by the literal double sum over descendants (oracle)."""
    L = l_intensity_levels(u, v, T.coeffs)
    total = 0.0
    for k in range(index.level, T.depth + 1):
        for pos in range(2 ** k):
            J = DyadicIndex(k, pos)
            if index.contains(J):
                total += T.coeffs.levels[k][pos] * u.average(J) \
                    * float(L[k][pos]) * J.length
    return total / index.length


def glav_check(u: LeafWeight, v: LeafWeight, T: SparseOperator,
               family: BumpFamily, budget: ConstantBudget | None = None) -> dict:
    """sup over dyadic I of G_I / u_I (zero-mass I skipped), with the bump
    constants recorded so callers can confirm the pre-normalization."""
    G = glav_levels(u, v, T)
    sup, sup_at = 0.0, None
    for k in range(T.depth + 1):
        avg = u.node_averages(k)
        pos_mask = avg > 0
        if not pos_mask.any():
            continue
        ratios = np.where(pos_mask, G[k] / np.where(pos_mask, avg, 1.0), 0.0)
        j = int(np.argmax(ratios))
        if ratios[j] > sup:
            sup, sup_at = float(ratios[j]), (k, j)
    bump = bump_condition(u, v, family)
    return {"sup_ratio": sup, "sup_at": sup_at, "glav_root": float(G[0][0]),
            "bump": bump, "budget": budget}


# ---------------------------------------------------------------------------
# Green's-formula induction
# ---------------------------------------------------------------------------

def _tree_nodes(u: LeafWeight, v: LeafWeight, T: SparseOperator):
    """BellmanNode per dyadic index down to the operator depth."""
    A = T.coeffs.intensity_levels()
    L = l_intensity_levels(u, v, T.coeffs)
    nodes = []
    for k in range(T.depth + 1):
        row = []
        for pos in range(2 ** k):
            idx = DyadicIndex(k, pos)
            row.append(BellmanNode(u.average(idx), v.average(idx),
                                   float(L[k][pos]), float(A[k][pos]),
                                   StepDistribution.of(u, idx)))
        nodes.append(row)
    return nodes


def green_induction(u: LeafWeight, v: LeafWeight, T: SparseOperator,
                    family: BumpFamily,
                    budget: ConstantBudget | None = None) -> dict:
    """Evaluate the master Bellman function at every node, verify the
    telescoping identity |I| B(I) - sum over bottom nodes = sum of the
    per-node differences Delta(J), and report the achieved minimum of
    Delta(J) / (|J| a_J u_J L_J).

    Nodes outside Omega2 (uv > delta or L > P sqrt(uv)) are excluded from
    the drop statistic and listed in the report; the telescoping identity
    is algebra and is checked on everything.
    """
    if budget is None:
        budget = default_budget(family)
    b1 = B1(family, budget.c1)
    model = family.epsilon_model() or EpsilonModel("power", beta=0.25)
    b2 = B2(model, budget.c2)
    nodes = _tree_nodes(u, v, T)

    values = [np.array([master_bellman_eval(n, b1, b2) for n in row])
              for row in nodes]
    lengths = [2.0 ** (-k) for k in range(T.depth + 1)]

    # B1(N, A) -> -inf as A -> 0 with mass present, so nodes carrying mass
    # but no coefficients below them make the evaluation diverge; report
    # them instead of propagating NaN through the telescoping algebra
    divergent = [{"level": k, "pos": int(p)}
                 for k, row in enumerate(values)
                 for p in np.nonzero(~np.isfinite(row))[0]]
    if divergent:
        return {"telescoping_residual": math.inf, "telescoping_pass": False,
                "min_drop_constant": None, "min_drop_at": None,
                "drop_nodes": 0, "excluded_nodes": [],
                "divergent_nodes": divergent, "glav_sum": None,
                "u_root": nodes[0][0].u, "chain_holds": False, "pass": False}

    # Delta(J) = |J| B(J) - |J+| B(J+) - |J-| B(J-) for internal J
    deltas = []
    drop_stats = []
    excluded = []
    for k in range(T.depth):
        d = lengths[k] * values[k] \
            - lengths[k + 1] * (values[k + 1][0::2] + values[k + 1][1::2])
        deltas.append(d)
        for pos in range(2 ** k):
            n = nodes[k][pos]
            uv = n.u * n.v
            if uv > budget.delta * (1 + 1e-12) \
                    or n.L > budget.P * math.sqrt(uv) * (1 + 1e-12):
                excluded.append({"level": k, "pos": pos, "uv": uv, "L": n.L})
                continue
            required = lengths[k] * T.coeffs.levels[k][pos] * n.u * n.L
            if required > 0:
                drop_stats.append(((k, pos), float(d[pos]) / required))

    lhs = values[0][0]  # |I0| = 1
    bottom = lengths[T.depth] * float(values[T.depth].sum())
    rhs = bottom + float(sum(d.sum() for d in deltas))
    residual = abs(lhs - rhs) / max(abs(lhs), 1e-300)

    min_c, min_at = math.inf, None
    for at, c in drop_stats:
        if c < min_c:
            min_c, min_at = c, at

    # chain: (C1 + C2) u_I >= |I| B(I) >= sum Delta >= min_c sum |J| a_J u_J L_J
    glav_sum = float(glav_levels(u, v, T)[0][0])  # sum |J| a_J u_J L_J, |I0|=1
    u_root = nodes[0][0].u
    chain_holds = (not drop_stats or min_c <= 0 or glav_sum <= 0
                   or (budget.c1 + budget.c2) * u_root
                   >= min_c * glav_sum * (1 - 1e-12))
    report = {
        "telescoping_residual": residual,
        "telescoping_pass": bool(residual <= 1e-10),
        "min_drop_constant": None if not drop_stats else min_c,
        "min_drop_at": min_at,
        "drop_nodes": len(drop_stats),
        "excluded_nodes": excluded,
        "divergent_nodes": [],
        "glav_sum": glav_sum,
        "u_root": u_root,
        "chain_holds": bool(chain_holds),
        "pass": bool(residual <= 1e-10
                     and (not drop_stats or min_c > 0)
                     and chain_holds
                     and not excluded),
    }
    return report


def vavo_L_bound(u: LeafWeight, v: LeafWeight, T: SparseOperator,
                 P: float = 100.0) -> dict:
    """Check L_I <= P sqrt(u_I v_I) at every node.  The bound is a lemma
    under joint A2 <= 1 and Carleson bound <= 1; if either hypothesis fails
    the report is marked conditional rather than failed."""
    a2 = 0.0
    for k in range(T.depth + 1):
        a2 = max(a2, float(np.max(u.node_averages(k) * v.node_averages(k))))
    carleson = T.coeffs.max_intensity()
    hypotheses = a2 <= 1.0 + 1e-12 and carleson <= 1.0 + 1e-12

    L = l_intensity_levels(u, v, T.coeffs)
    worst, worst_at = 0.0, None
    for k in range(T.depth + 1):
        denom = P * np.sqrt(u.node_averages(k) * v.node_averages(k))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(denom > 0, L[k] / np.where(denom > 0, denom, 1.0),
                         np.where(L[k] > 0, np.inf, 0.0))
        j = int(np.argmax(r))
        if r[j] > worst:
            worst, worst_at = float(r[j]), (k, j)
    return {"worst_ratio": worst, "worst_at": worst_at, "A2": a2,
            "carleson": carleson, "conditional": not hypotheses,
            "pass": bool(worst <= 1.0 or not hypotheses)}


# ---------------------------------------------------------------------------
# Seeded random instances and bundle I/O
# ---------------------------------------------------------------------------

def normalize_to_omega2(u: LeafWeight, v: LeafWeight,
                        delta: float) -> tuple[LeafWeight, LeafWeight, float]:
    """Shrink u and v by a common factor until max over dyadic I of
    u_I v_I <= delta (no-op when already inside)."""
    worst = 0.0
    for k in range(u.depth + 1):
        worst = max(worst, float(np.max(u.node_averages(k)
                                        * v.node_averages(k))))
    if worst <= delta:
        return u, v, 1.0
    s = math.sqrt(delta / worst)
    return u.scaled(s), v.scaled(s), s


def random_instance(depth: int, seed: int, *, family: BumpFamily | None = None,
                    bump_target: float | None = None,
                    omega2_delta: float | None = None,
                    a_decay: float = 0.45) -> dict:
    """Seeded random (u, v, T): positive step weights and a Carleson family
    with per-level magnitude a_decay^k, which keeps every intensity < 1.
    When bump_target is given the weights are rescaled so the one-sided
    bump constant equals it; omega2_delta additionally shrinks them until
    every node average product u_I v_I is <= that delta."""
    rng = np.random.default_rng(seed)
    u = LeafWeight(depth, rng.uniform(0.2, 1.8, 2 ** depth))
    v = LeafWeight(depth, rng.uniform(0.2, 1.8, 2 ** depth))
    levels = [rng.uniform(0.0, 1.0, 2 ** k) * a_decay ** k * (1 - a_decay)
              for k in range(depth + 1)]
    seq = CarlesonSequence(depth, levels)
    scale = 1.0
    if bump_target is not None:
        if family is None:
            raise ValueError("bump_target needs a family")
        u, v, scale = normalize_to_bump(u, v, family, bump_target)
    if omega2_delta is not None:
        u, v, s2 = normalize_to_omega2(u, v, omega2_delta)
        scale *= s2
    return {"u": u, "v": v, "T": SparseOperator(seq), "seed": seed,
            "scale": scale}


def save_instance(path, u: LeafWeight, v: LeafWeight, T: SparseOperator,
                  family: BumpFamily | None = None,
                  budget: ConstantBudget | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    u.save(path / "u.json")
    v.save(path / "v.json")
    T.coeffs.save(path / "carleson.json")
    if family is not None:
        (path / "family.json").write_text(json.dumps(family.to_json()))
    if budget is not None:
        (path / "budget.json").write_text(json.dumps({
            "c1": budget.c1, "c2": budget.c2, "c_drop": budget.c_drop,
            "delta1": budget.delta1, "derivative_floor": budget.derivative_floor,
            "delta": budget.delta, "P": budget.P}))


def load_instance(path) -> dict:
    path = Path(path)
    out = {
        "u": LeafWeight.load(path / "u.json"),
        "v": LeafWeight.load(path / "v.json"),
        "T": SparseOperator(CarlesonSequence.load(path / "carleson.json")),
    }
    fam = path / "family.json"
    out["family"] = BumpFamily.load(fam) if fam.exists() else None
    bud = path / "budget.json"
    if bud.exists():
        out["budget"] = ConstantBudget(**json.loads(bud.read_text()))
    else:
        out["budget"] = None
    return out
