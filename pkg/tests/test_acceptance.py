"""Acceptance suite: one test per release criterion.

Each test prints a PASS/FAIL line (visible with `pytest -s` or on failure)
and asserts the criterion at its stated tolerance. Synthetic analogues stand
in for the original monitoring campaigns, so the checks are structural and
statistical rather than exact-number reproductions.
"""

import numpy as np
import pytest

from shmlearn import datagen, dp, semisup
from shmlearn.config import config_from_values
from shmlearn.conjugate import NiwParams, niw_predictive_logpdf, niw_update
from shmlearn.experiments import (
    run_active_once,
    run_dp_once,
    run_experiment,
    run_kbtl_once,
    run_semisup_once,
)
from shmlearn.gmm import GmmHyper

from oracles import chain_modal_frequencies, niw_grid_posterior_1d


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {name}: {status} {detail}")
    assert ok, f"{name}: {detail}"


def test_c1_conjugacy_oracle():
    rng = np.random.default_rng(101)
    worst_mom, worst_pred = 0.0, 0.0
    for _ in range(20):
        m0 = float(rng.normal(0, 1))
        kappa0 = float(rng.uniform(0.5, 3.0))
        nu0 = float(rng.uniform(3.0, 6.0))
        s0 = float(rng.uniform(0.5, 2.0))
        data = rng.normal(rng.normal(), rng.uniform(0.5, 1.5), size=int(rng.integers(2, 7)))

        post = niw_update(NiwParams(m=[m0], kappa=kappa0, nu=nu0, S=[[s0]]), data[:, None])
        oracle = niw_grid_posterior_1d(m0, kappa0, nu0, s0, data)

        dof = post.nu  # nu_n - d + 1 with d = 1
        e_mu = post.m[0]
        var_mu = post.S[0, 0] / (post.kappa * dof) * dof / (dof - 2)
        e_var = post.S[0, 0] / (post.nu - 2)
        worst_mom = max(
            worst_mom,
            abs(e_mu - oracle["E_mu"]),
            abs(var_mu - oracle["Var_mu"]),
            abs(e_var - oracle["E_var"]),
        )
        x_star = float(rng.normal(e_mu, 1.0))
        ours = float(np.exp(niw_predictive_logpdf(post, np.array([x_star]))))
        worst_pred = max(worst_pred, abs(ours - oracle["predictive"](x_star)))
    report(
        "1 conjugacy-oracle",
        worst_mom < 1e-6 and worst_pred < 1e-3,
        f"max moment err {worst_mom:.2e}, max predictive err {worst_pred:.2e}",
    )


def test_c2_em_ascent_and_supervised_reduction():
    hyper = GmmHyper.default(2)
    rng = np.random.default_rng(202)
    worst_drop = 0.0
    for _ in range(50):
        k = int(rng.integers(2, 4))
        centers = rng.normal(scale=4.0, size=(k, 2))
        n_l, n_u = int(rng.integers(2, 5)), int(rng.integers(5, 25))
        Xl = np.vstack([c + rng.normal(scale=0.8, size=(n_l, 2)) for c in centers])
        yl = np.repeat(np.arange(1, k + 1), n_l)
        Xu = centers[rng.integers(k, size=n_u)] + rng.normal(scale=0.8, size=(n_u, 2))
        _, trace = semisup.fit_semisupervised(Xl, yl, Xu, hyper)
        diffs = np.diff(trace)
        if diffs.size:
            worst_drop = max(worst_drop, float(-diffs.min()))

    Xl, yl = np.vstack([[-2, 0], [-2.2, 0.1], [2, 0], [2.1, -0.2]]), np.array([1, 1, 2, 2])
    est, _ = semisup.fit_semisupervised(Xl, yl, np.empty((0, 2)), hyper)
    sup = semisup.m_step(Xl, yl, np.empty((0, 2)), np.empty((0, 2)), hyper)
    exact = (
        np.array_equal(est.means, sup.means)
        and np.array_equal(est.covs, sup.covs)
        and np.array_equal(est.weights, sup.weights)
    )
    report(
        "2 em-ascent",
        worst_drop <= 1e-8 and exact,
        f"worst trace drop {worst_drop:.2e}, supervised reduction exact: {exact}",
    )


def test_c3_semisupervised_gain():
    seeds = range(1, 11)
    means = {}
    for fraction in (0.025, 0.05, 0.10):
        gains = []
        for seed in seeds:
            pool = datagen.gen_ae_like(seed, 300)
            test = datagen.gen_ae_like(seed + 7919, 200)
            f_sup, f_semi = run_semisup_once(pool, test, fraction, seed, 1e-6, 200)
            gains.append(f_semi - f_sup)
        means[fraction] = float(np.mean(gains))
    ok = all(m >= 0.0 for m in means.values()) and means[0.05] > 0.0
    report(
        "3 semisupervised-gain",
        ok,
        " ".join(f"{f:.1%}: {m:+.4f}" for f, m in means.items()),
    )


def test_c4_active_vs_passive():
    seeds = range(1, 11)
    spec = datagen.z24_spec()
    detail = []
    ok = True
    for fraction in (0.25, 0.125):
        finals_a, finals_p, disc_ok = [], [], 0
        for seed in seeds:
            ds = datagen.gen_z24_like(spec, seed)
            act = run_active_once(ds, seed, 50, fraction, "split", 100)
            pas = run_active_once(ds, seed, 50, fraction, "random", 100)
            finals_a.append(act.records[-1].test_f1)
            finals_p.append(pas.records[-1].test_f1)
            disc_ok += act.damage_discovery_batch(3) <= pas.damage_discovery_batch(3)
        gap = float(np.mean(finals_a) - np.mean(finals_p))
        ok = ok and gap > 0.0 and disc_ok >= 7
        detail.append(f"budget {fraction:.1%}: gap {gap:+.4f}, discovery<= {disc_ok}/10")
    report("4 active-vs-passive", ok, "; ".join(detail))


def _three_cluster_data(seed: int, n_per: int = 20) -> np.ndarray:
    rng = np.random.default_rng(seed)
    raw = np.concatenate(
        [rng.normal(-10, 1, n_per), rng.normal(0, 1, n_per), rng.normal(10, 1, n_per)]
    )[:, None]
    return raw - raw.mean()


def test_c5_dp_model_selection():
    hyper = GmmHyper(m0=np.zeros(1), kappa0=0.01, nu0=3.0, S0=np.eye(1))
    seeds = range(1, 11)

    modal_three = 0
    for seed in seeds:
        rows = dp.k_profile(_three_cluster_data(seed), [0.1], sweeps=240, seed=seed, hyper=hyper)
        dist = {k: f for _, k, f in rows}
        modal_three += max(dist.items(), key=lambda t: t[1])[0] == 3

    pooled: dict = {}
    for seed in range(1, 5):
        rows = dp.k_profile(
            _three_cluster_data(seed), [0.01, 0.1, 1.0, 10.0], sweeps=240, seed=seed,
            hyper=hyper,
        )
        for a, k, f in rows:
            pooled.setdefault(a, {}).setdefault(k, 0.0)
            pooled[a][k] += f
    modal_by_alpha = [
        max(pooled[a].items(), key=lambda t: t[1])[0] for a in (0.01, 0.1, 1.0, 10.0)
    ]
    monotone = all(b >= a for a, b in zip(modal_by_alpha, modal_by_alpha[1:]))

    rng = np.random.default_rng(55)
    alpha, n, reps = 2.0, 100, 400
    draws = [dp.simulate_crp_tables(alpha, n, rng) for _ in range(reps)]
    se = np.std(draws, ddof=1) / np.sqrt(reps)
    crp_ok = abs(np.mean(draws) - dp.crp_expected_tables(alpha, n)) < 3 * se

    report(
        "5 dp-model-selection",
        modal_three >= 9 and monotone and crp_ok,
        f"modal K=3 in {modal_three}/10 seeds; modal over alpha {modal_by_alpha}; "
        f"CRP mean within 3 SE: {crp_ok}",
    )


def test_c6_dp_streaming_alarm():
    seeds = range(1, 11)
    onset = 300
    spec = datagen.z24_spec(length=450, env_start=120, env_end=220, damage_onset=onset)
    timely = 0
    for seed in seeds:
        ds = datagen.gen_z24_like(spec, seed)
        _, summary = run_dp_once(
            ds, seed, alpha=10.0, sweeps=2, alarm_threshold=50,
            init_size=100, prior_scale=16.0,
        )
        first = summary["first_alarm_index"]
        timely += first != -1 and 0 <= first - onset <= 200

    false_alarms = 0
    for seed in seeds:
        rng = np.random.default_rng(9000 + seed)
        base = rng.normal(2.0, 0.5, size=4)
        stationary = datagen.LabeledDataset(
            X=base + 0.1 * rng.standard_normal((500, 4)) * base,
            y=np.ones(500, dtype=int),
        )
        _, summary = run_dp_once(
            stationary, seed, alpha=10.0, sweeps=2, alarm_threshold=50,
            init_size=100, prior_scale=16.0,
        )
        false_alarms += summary["first_alarm_index"] != -1

    report(
        "6 dp-streaming-alarm",
        timely >= 8 and false_alarms <= 1,
        f"timely alarms {timely}/10, stationary false alarms {false_alarms}/10",
    )


def test_c7_kbtl_transfer():
    seeds = range(1, 11)
    mean_multi, mean_single, dom5_best = [], [], 0
    for seed in seeds:
        records = run_kbtl_once(seed, subspace_dim=2, margin=1.0, max_iters=60, noise_sd=0.03)
        f1m = [r["f1_multitask"] for r in records]
        f1s = [r["f1_singletask"] for r in records]
        mean_multi.append(np.mean(f1m))
        mean_single.append(np.mean(f1s))
        gains = np.array(f1m) - np.array(f1s)
        dom5_best += int(np.argmax(gains)) == 4
    gap = float(np.mean(mean_multi) - np.mean(mean_single))
    report(
        "7 kbtl-transfer",
        gap > 0.0 and dom5_best >= 6,
        f"mean multi-single gap {gap:+.4f}; domain-5 largest gain in {dom5_best}/10 seeds",
    )


def test_c8_physics_oracle():
    # d-DOF vs the independent modal-decomposition oracle
    rel_err = 0.0
    for spec in datagen.table1_specs():
        got = datagen.shear_frequencies(spec, spec.e_mean, spec.rho_mean, 5.0)
        mm = 1e-3
        m = spec.rho_mean * (spec.mass_l * mm) * (spec.mass_w * mm) * (spec.mass_t * mm)
        second = (spec.beam_w * mm) * (spec.beam_t * mm) ** 3 / 12.0
        k = 12.0 * spec.e_mean * 1e9 * second / (spec.beam_l * mm) ** 3
        expected = chain_modal_frequencies(np.full(spec.dof, m), np.full(spec.dof, k), 5.0)
        rel_err = max(rel_err, float(np.abs(got / expected - 1.0).max()))

    # 1-DOF closed forms
    unit = datagen.ShearSpec(
        dof=1, beam_l=100, beam_w=100, beam_t=100, mass_l=100, mass_w=100, mass_t=100,
        e_mean=4 * np.pi**2 * 10 / 1e9, e_var=1e-12, rho_mean=1000, rho_var=1,
        c_shape=1, c_scale=1,
    )
    f_undamped = datagen.shear_frequencies(unit, unit.e_mean, 1000.0, 0.0)[0]
    zeta = 0.1
    f_damped = datagen.shear_frequencies(unit, unit.e_mean, 1000.0, 2 * 2 * np.pi * zeta)[0]
    closed = (
        abs(f_undamped - 1.0) < 1e-12 and abs(f_damped - np.sqrt(1 - zeta**2)) < 1e-12
    )

    # EI-reduction monotonicity on random draws
    rng = np.random.default_rng(88)
    monotone = True
    for _ in range(100):
        spec = datagen.table1_specs()[int(rng.integers(5))]
        e = rng.normal(spec.e_mean, np.sqrt(spec.e_var))
        rho = rng.normal(spec.rho_mean, np.sqrt(spec.rho_var))
        c = rng.gamma(spec.c_shape, spec.c_scale)
        healthy = datagen.shear_frequencies(spec, e, rho, c)
        damaged = datagen.shear_frequencies(spec, e, rho, c, damaged=True)
        monotone = monotone and bool(np.all(damaged <= healthy + 1e-12))

    report(
        "8 physics-oracle",
        rel_err < 1e-9 and closed and monotone,
        f"max rel err {rel_err:.2e}; closed forms exact: {closed}; monotone: {monotone}",
    )


def test_c9_determinism(tmp_path):
    def build(kind, out):
        values = {
            "experiment": {"id": kind, "out_dir": str(out), "seeds": [1]},
            "data": {
                "stream_length": 400, "env_start": 120, "env_end": 200,
                "damage_onset": 300, "n_per_class": 60, "test_per_class": 60,
            },
            "semisup": {"labelled_fractions": [0.1, 0.3]},
            "dp": {"sweeps": 1, "init_size": 60},
            "active": {"init_size": 60},
            "kbtl": {"max_iters": 10},
            "gen": {"dataset": "ae"},
        }
        return config_from_values(values)

    identical = True
    for kind in ("gen", "semisup", "active", "dp", "kbtl"):
        b1 = run_experiment(build(kind, tmp_path / f"{kind}_a"))
        b2 = run_experiment(build(kind, tmp_path / f"{kind}_b"))
        csvs1 = [p for p in b1.output_files if p.endswith(".csv")]
        csvs2 = [p for p in b2.output_files if p.endswith(".csv")]
        for p1, p2 in zip(csvs1, csvs2):
            if open(p1, "rb").read() != open(p2, "rb").read():
                identical = False
    report("9 determinism", identical, "metric CSVs byte-identical on rerun")
