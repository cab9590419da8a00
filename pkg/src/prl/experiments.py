"""Named experiments run by the command line harness.

Every experiment takes a parameter dict (defaults below, overridden by the
config file) and a seed, and returns an :class:`Outcome` holding the rows of
``results.csv``, the checks for ``summary.json`` and the plot tables.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dual, gaussmix, linreg, vcsim
from .metrics import accuracies
from .models import Model
from .perturb import NormKind, PerturbationSpec
from .riskcore import cvar_sorted
from .trainer import Method, TrainConfig, train


@dataclass
class Check:
    value: object
    threshold: str
    passed: bool

    def to_dict(self):
        return {"value": self.value, "threshold": self.threshold, "pass": bool(self.passed)}


@dataclass
class Outcome:
    columns: list[str]
    rows: list[dict]
    checks: dict[str, Check] = field(default_factory=dict)
    plots: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())


DEFAULTS: dict[str, dict] = {
    "gap_classification": {
        "dims": [100, 400, 1600], "rhos": [0.0, 0.1], "mu_norm": 2.0, "eps": 1.0,
        "pi_plus": 0.5, "mc_points": 0, "mc_draws": 0,
    },
    "gap_regression": {
        "dims": [10, 100, 400], "rho": 0.1, "eps": 1.0, "theta_norm": 1.0, "noise_sigma": 1.0,
        "n": 20000, "adjudication": {"d": 400, "eps": 1.0, "rho": 0.1, "M": 1000000,
                                     "residual": 1.0},
    },
    "vrho_asymptotics": {"dims": [10, 100, 1000, 10000], "rhos": [0.01, 0.1, 0.3], "eps": 1.0},
    "train_sweep": {
        "dim": 2, "mu_norm": 2.0, "pi_plus": 0.8, "eps": 1.5, "norm": "l2",
        "n_train": 2000, "n_test": 10000, "rhos": [1.0, 0.5, 0.1, 0.01, 0.001],
        "prl_reference_rho": 0.1, "min_M": 20, "M_per_inverse_rho": 2, "max_M": 200,
        "eta_alpha_over_rho": 3.0, "alpha_init": "quantile", "init_seed": 9,
        "train": {"T": 10, "eta": 0.1, "batch_size": 50, "epochs": 100},
        "eval": {"aug_M": 20, "pgd_steps": 10, "pgd_step_size": 0.4, "cvar_tail": 0.05,
                 "cvar_M": 100},
        "tolerance": 0.01,
    },
    "vc_shatter": {"rho_o": 0.01, "eps": 1.0, "rhos": [0.0, 0.01, 0.5, 0.891]},
    "duality": {"n_instances": 100, "atoms": 20, "betas": [0.05, 0.3, 0.9], "n_bernoulli": 50},
    "metrics_table": {
        "dim": 2, "mu_norm": 2.0, "pi_plus": 0.5, "eps": 1.0, "norm": "l2",
        "n_train": 2000, "n_test": 5000, "rho": 0.1, "M": 20, "init_seed": 9,
        "train": {"T": 10, "eta": 0.1, "eta_alpha": 1.0, "batch_size": 50, "epochs": 50,
                  "pgd_steps": 10, "pgd_step_size": 0.25},
        "eval": {"aug_M": 100, "pgd_steps": 10, "pgd_step_size": 0.25,
                 "prob_rhos": [0.1], "prob_M": 100, "cvar_tail": 0.05, "cvar_M": 100},
    },
}


def merge_params(experiment: str, params: dict) -> dict:
    """Overlay ``params`` on the defaults; unknown keys are an error."""
    if experiment not in DEFAULTS:
        raise KeyError(f"unknown experiment {experiment!r}; choose from {sorted(DEFAULTS)}")

    def merge(base, over, path):
        out = dict(base)
        for key, value in over.items():
            if key not in base:
                raise KeyError(f"unknown parameter {path + key!r} for {experiment}")
            if isinstance(base[key], dict):
                if not isinstance(value, dict):
                    raise TypeError(f"parameter {path + key!r} must be an object")
                out[key] = merge(base[key], value, path + key + ".")
            else:
                out[key] = value
        return out

    return merge(DEFAULTS[experiment], params, "")


def _monotone(seq, direction, tol):
    """``direction=-1``: non-increasing up to ``tol`` per step; ``+1``: non-decreasing."""
    return all(direction * (b - a) >= -tol for a, b in zip(seq, seq[1:]))


# --- experiments ----------------------------------------------------------------

def gap_classification(p, seed):
    rng = np.random.default_rng(seed)
    rows = []
    for rho in p["rhos"]:
        for gp in gaussmix.gap_curve(p["dims"], p["mu_norm"], p["eps"], rho, p["pi_plus"],
                                     p["mc_points"], p["mc_draws"], rng):
            rows.append({"d": gp.d, "rho": gp.rho, "gap_closed_form": gp.gap_closed_form,
                         "gap_mc": gp.gap_mc, "mc_stderr": gp.mc_stderr})
    out = Outcome(["d", "rho", "gap_closed_form", "gap_mc", "mc_stderr"], rows)
    gap = {(r["d"], r["rho"]): r["gap_closed_form"] for r in rows}
    for rho in p["rhos"]:
        if rho > 0 and (100, rho) in gap and (400, rho) in gap:
            ratio = gap[(100, rho)] / gap[(400, rho)]
            out.checks[f"ratio_100_400_rho{rho!r}"] = Check(ratio, "in [1.5, 2.7]",
                                                           1.5 <= ratio <= 2.7)
        if rho == 0 and (100, rho) in gap:
            ref = gap[(100, rho)]
            worst = max(abs(gap[(d, rho)] / ref - 1) for d in p["dims"])
            out.checks["rho0_constant"] = Check(worst, "relative change <= 0.05", worst <= 0.05)
    out.plots["gap_vs_d"] = (["d", "rho", "gap"],
                             [[r["d"], r["rho"], r["gap_closed_form"]] for r in rows])
    return out


def gap_regression(p, seed):
    rng = np.random.default_rng(seed)
    pts = linreg.regression_gap(p["dims"], p["theta_norm"], p["noise_sigma"], p["eps"], p["rho"],
                                p["n"], rng)
    rows = [{"d": g.d, "rho": g.rho, "gap_mc": g.gap_mc, "stderr": g.stderr} for g in pts]
    out = Outcome(["d", "rho", "gap_mc", "stderr"], rows)
    a = p["adjudication"]
    adj = linreg.adjudicate_correction(a["d"], a["eps"], a["rho"], a["M"],
                                       np.random.default_rng(seed + 1), a["residual"])
    out.extra["adjudication"] = adj
    out.checks["proof_form_within_10pct"] = Check(adj["proof_rel_err"], "<= 0.10",
                                                  adj["proof_within_10pct"])
    out.checks["lemma_form_rejected"] = Check(adj["lemma_rel_err"], "> 0.50",
                                              adj["lemma_rejected"])
    gaps = [g.gap_mc for g in pts]
    out.checks["gap_decreasing_in_d"] = Check(gaps, "non-increasing", _monotone(gaps, -1, 0.0))
    out.plots["gap_vs_d"] = (["d", "gap"], [[g.d, g.gap_mc] for g in pts])
    return out


def vrho_asymptotics(p, seed):
    rows = []
    for rho in p["rhos"]:
        for d in p["dims"]:
            v = gaussmix.cap_distance_v_rho(d, p["eps"], rho)
            va = gaussmix.cap_distance_asymptotic(d, p["eps"], rho)
            rows.append({"d": d, "rho": rho, "v_exact": v, "v_asymptotic": va,
                         "rel_err": abs(v - va) / abs(va),
                         "cap_at_v": gaussmix.cap_measure(d, v / p["eps"])})
    out = Outcome(["d", "rho", "v_exact", "v_asymptotic", "rel_err", "cap_at_v"], rows)
    cap_err = max(abs(r["cap_at_v"] - r["rho"]) for r in rows)
    out.checks["cap_measure_matches_rho"] = Check(cap_err, "<= 1e-9", cap_err <= 1e-9)
    big = [r for r in rows if r["d"] >= 1000]
    if big:
        worst = max(r["rel_err"] for r in big)
        out.checks["asymptotic_within_5pct_d_ge_1000"] = Check(worst, "<= 0.05", worst <= 0.05)
    out.plots["vrho_vs_d"] = (["d", "rho", "v_exact", "v_asymptotic"],
                              [[r["d"], r["rho"], r["v_exact"], r["v_asymptotic"]] for r in rows])
    return out


def _mixture_data(p, seed):
    spec = gaussmix.GaussianMixtureSpec.isotropic(p["dim"], p["mu_norm"], p["pi_plus"])
    data_rng, test_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    x, y = spec.sample(p["n_train"], data_rng)
    xt, yt = spec.sample(p["n_test"], test_rng)
    pert = PerturbationSpec(NormKind(p["norm"]), p["eps"], p["dim"])
    return spec, pert, x, y, xt, yt


def _cos(model, spec):
    w = model.weights
    n = np.linalg.norm(w)
    return float(w @ spec.mu / (n * spec.mu_norm)) if n > 0 else 0.0


def train_sweep(p, seed):
    spec, pert, x, y, xt, yt = _mixture_data(p, seed)
    t, e = p["train"], p["eval"]
    tail = e["cvar_tail"]
    runs = [("erm", None)] + [("prl", float(r)) for r in p["rhos"]]
    rows, traces = [], {}
    for method, rho in runs:
        kw = dict(t, seed=seed)
        if method == "prl":
            M = min(p["max_M"], max(p["min_M"], math.ceil(p["M_per_inverse_rho"] / rho - 1e-9)))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # rho * M < 1 at the smallest rho
                cfg = TrainConfig(Method.PRL, pert, rho=rho, M=M,
                                  eta_alpha=p["eta_alpha_over_rho"] * rho,
                                  alpha_init=p["alpha_init"], **kw)
        else:
            M = 0
            cfg = TrainConfig(Method.ERM, pert, **kw)
        model0 = Model.init("linear_logistic", p["dim"], rng=np.random.default_rng(p["init_seed"]))
        res = train(x, y, model0, cfg)
        rep = accuracies(res.model, xt, yt, pert, e["aug_M"], e["pgd_steps"], e["pgd_step_size"],
                         np.random.default_rng(seed + 7), tails=[tail], cvar_M=e["cvar_M"])
        rows.append({"method": method, "rho": "" if rho is None else rho, "M": M,
                     "clean_acc": rep.clean_acc, "aug_acc": rep.aug_acc, "adv_acc": rep.adv_acc,
                     "cvar_test": rep.cvar_test[tail], "cos_mu": _cos(res.model, spec),
                     "w_norm": float(np.linalg.norm(res.model.weights)),
                     "bias": float(res.model.params[-1]),
                     "final_objective": res.trace[-1].train_objective})
        traces[f"{method}" + ("" if rho is None else f"_rho{rho!r}")] = res.trace
    out = Outcome(list(rows[0]), rows)
    prl = [r for r in rows if r["method"] == "prl"]  # in the configured rho order
    tol = p["tolerance"]
    clean = [r["clean_acc"] for r in prl]
    adv = [r["adv_acc"] for r in prl]
    out.checks["clean_non_increasing"] = Check(clean, f"per-step drop allowed, rise <= {tol}",
                                               _monotone(clean, -1, tol))
    out.checks["adv_non_decreasing"] = Check(adv, f"per-step rise allowed, drop <= {tol}",
                                             _monotone(adv, +1, tol))
    ref = next(r for r in prl if r["rho"] == p["prl_reference_rho"])
    erm = rows[0]
    out.checks["prl_cvar_below_erm"] = Check(
        {"prl": ref["cvar_test"], "erm": erm["cvar_test"]}, "prl < erm",
        ref["cvar_test"] < erm["cvar_test"])
    out.plots["tradeoff"] = (["rho", "clean_acc", "adv_acc"],
                             [[r["rho"], r["clean_acc"], r["adv_acc"]] for r in prl])
    out.plots["cvar_bars"] = (["method", "rho", "cvar_test"],
                              [[r["method"], r["rho"], r["cvar_test"]] for r in rows])
    out.extra["traces"] = traces
    return out


def vc_shatter(p, seed):
    cls = vcsim.build_class(p["rho_o"], p["eps"])
    rows = []
    for rho in p["rhos"]:
        rows.append({"loss": "rhosup", "rho": rho,
                     "canonical_count": len(vcsim.behavior_set(cls, vcsim.canonical_points(cls),
                                                               rho)),
                     "growth_k2": vcsim.growth_estimate(cls, rho, 2)})
    rows.append({"loss": "nominal", "rho": "",
                 "canonical_count": len(vcsim.behavior_set(cls, vcsim.canonical_points(cls), None)),
                 "growth_k2": vcsim.growth_estimate(cls, None, 2)})
    out = Outcome(["loss", "rho", "canonical_count", "growth_k2"], rows)
    out.extra["m"] = cls.m
    out.extra["report"] = {
        "rho_o": cls.rho_o, "m": cls.m,
        "shatter_counts": {repr(r["rho"]): r["canonical_count"] for r in rows[:-1]},
        "vc_estimates": {repr(r["rho"]): r["growth_k2"] for r in rows[:-1]},
        "nominal_growth_k2": rows[-1]["growth_k2"],
    }
    full = 1 << cls.m
    for r in rows[:-1]:
        if r["rho"] == 0:
            out.checks["shattered_at_rho0"] = Check(r["canonical_count"], f"== {full}",
                                                    r["canonical_count"] == full)
        elif p["rho_o"] <= r["rho"] < 1 - p["rho_o"]:
            out.checks[f"pair_growth_rho{r['rho']!r}"] = Check(r["growth_k2"], "<= 3",
                                                              r["growth_k2"] <= 3)
    out.checks["nominal_pair_growth"] = Check(rows[-1]["growth_k2"], "<= 3",
                                              rows[-1]["growth_k2"] <= 3)
    out.plots["shatter_counts"] = (["rho", "canonical_count", "growth_k2"],
                                   [[r["rho"], r["canonical_count"], r["growth_k2"]]
                                    for r in rows[:-1]])
    return out


def duality(p, seed):
    rng = np.random.default_rng(seed)
    rows = []
    for inst in range(p["n_instances"]):
        losses = rng.standard_normal(p["atoms"])
        probs = rng.dirichlet(np.ones(p["atoms"]))
        probs /= probs.sum()
        atoms = dual.DiscreteAtoms(losses, probs)
        for beta in p["betas"]:
            nu = dual.dual_optimum(atoms, beta)
            primal = cvar_sorted(atoms.as_sample(), beta)
            value = nu.value(atoms)
            rows.append({"kind": "random", "instance": inst, "beta": beta, "primal": primal,
                         "dual": value, "gap": abs(primal - value),
                         "feasible": int(nu.is_feasible(atoms, 1e-12))})
    for inst in range(p["n_bernoulli"]):
        m_err = float(rng.uniform())
        beta = float(rng.choice(p["betas"]))
        _, _, value = dual.zero_one_dual_density(m_err, beta)
        expected = min(1.0, m_err / beta)
        rows.append({"kind": "bernoulli", "instance": inst, "beta": beta, "primal": expected,
                     "dual": value, "gap": abs(value - expected), "feasible": 1})
    out = Outcome(["kind", "instance", "beta", "primal", "dual", "gap", "feasible"], rows)
    rnd = [r for r in rows if r["kind"] == "random"]
    bern = [r for r in rows if r["kind"] == "bernoulli"]
    worst = max(r["gap"] for r in rnd)
    out.checks["strong_duality"] = Check(worst, "<= 1e-9", worst <= 1e-9)
    out.checks["dual_feasible"] = Check(sum(r["feasible"] for r in rnd), f"== {len(rnd)}",
                                        all(r["feasible"] for r in rnd))
    out.checks["zero_one_exact"] = Check(max(r["gap"] for r in bern), "== 0",
                                         all(r["gap"] == 0 for r in bern))
    out.plots["gap_hist"] = (["beta", "gap"], [[r["beta"], r["gap"]] for r in rnd])
    return out


def metrics_table(p, seed):
    spec, pert, x, y, xt, yt = _mixture_data(p, seed)
    t, e = p["train"], p["eval"]
    rows = []
    for method in (Method.ERM, Method.ERM_DA, Method.PGD_AT, Method.PRL):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = TrainConfig(method, pert, rho=p["rho"], M=p["M"], seed=seed, **t)
        model0 = Model.init("linear_logistic", p["dim"], rng=np.random.default_rng(p["init_seed"]))
        res = train(x, y, model0, cfg)
        rep = accuracies(res.model, xt, yt, pert, e["aug_M"], e["pgd_steps"], e["pgd_step_size"],
                         np.random.default_rng(seed + 11), rhos=e["prob_rhos"],
                         tails=[e["cvar_tail"]], prob_M=e["prob_M"], cvar_M=e["cvar_M"])
        rows.append({"method": method.value, **rep.flat()})
    opt = gaussmix.prob_robust_hypothesis(spec, p["eps"], p["rho"]) if p["norm"] == "l2" and \
        p["eps"] < spec.mu_norm else None
    out = Outcome(list(rows[0]), rows)
    for r in rows:
        lo = r["adv_acc"] <= r["aug_acc"] + 0.01 and r["adv_acc"] <= r["clean_acc"] + 0.01
        out.checks[f"adv_dominated_{r['method']}"] = Check(
            [r["adv_acc"], r["aug_acc"], r["clean_acc"]], "adv <= aug, clean (+0.01)", lo)
    if opt is not None:
        out.extra["closed_form_prob_acc"] = 1.0 - gaussmix.prob_risk(opt, spec, p["eps"], p["rho"])
    out.plots["metrics"] = (list(rows[0]), [list(r.values()) for r in rows])
    return out


EXPERIMENTS = {
    "gap_classification": gap_classification,
    "gap_regression": gap_regression,
    "vrho_asymptotics": vrho_asymptotics,
    "train_sweep": train_sweep,
    "vc_shatter": vc_shatter,
    "duality": duality,
    "metrics_table": metrics_table,
}


def run_experiment(name: str, params: dict, seed: int) -> Outcome:
    p = merge_params(name, params)
    return EXPERIMENTS[name](p, seed)
