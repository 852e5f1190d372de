use std::collections::{BTreeMap, HashSet};

use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use courtaudit::assignment::{audit_assignment, AuditConfig, LabelKind};
use courtaudit::data::{
    compute_all_features, compute_features, group_cases, history_cutoff, load_dataset, write_cases,
    write_judges, CaseRecord, CaseType, Circuit, Dataset, EntityLabel, FileFormat, GroupKeys,
    JudgeProfile, Outcome,
};
use courtaudit::deviation::{flag_for, DeviationFlag};
use courtaudit::embedding::{build_citation_matrix, nmf_fit, CitationConfig, NmfConfig, NmfSolver, ReferenceMode};
use courtaudit::evaluation::{bin_accuracy, ci_bounds, confidence_bin, CasePrediction, JudgeFlag, BIN_EDGES};
use courtaudit::par::stream_rng;
use courtaudit::predict::{train_gbdt, DesignMatrix, GbdtParams};
use courtaudit::stats::{binomial_two_sided, correct_pvalues, Correction};
use courtaudit::synth::{simulate_court, CourtConfig};

fn choose(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

fn brute_two_sided(k: u64, n: u64, p: f64) -> f64 {
    let pmf: Vec<f64> = (0..=n)
        .map(|i| choose(n, i) as f64 * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32))
        .collect();
    let threshold = pmf[k as usize] * (1.0 + 1e-12);
    pmf.iter().filter(|d| **d <= threshold).sum::<f64>().min(1.0)
}

fn random_dataset(seed: u64, n_judges: usize, n_cases: usize) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let start = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
    let judges: Vec<JudgeProfile> = (0..n_judges)
        .map(|j| JudgeProfile {
            judge_id: format!("j{j}"),
            gender_male: rng.random_bool(0.5),
            party_republican: rng.random_bool(0.5),
            appointment_date: start + Duration::days(rng.random_range(0..2000)),
            promotion_date: rng
                .random_bool(0.3)
                .then(|| start + Duration::days(rng.random_range(3000..8000))),
        })
        .collect();
    let cases: Vec<CaseRecord> = (0..n_cases)
        .map(|i| {
            let j = rng.random_range(0..n_judges);
            CaseRecord {
                case_id: format!("c{i}"),
                judge_id: format!("j{j}"),
                decision_date: start + Duration::days(rng.random_range(2000..12000)),
                circuit: Circuit::ALL[rng.random_range(0..13)],
                case_type: CaseType::ALL[rng.random_range(0..6)],
                outcome: if rng.random_bool(0.3) { Outcome::WON } else { Outcome::LOST },
                entity_label: rng
                    .random_bool(0.8)
                    .then(|| EntityLabel::ALL[rng.random_range(0..4)]),
                citations: (0..rng.random_range(0..5))
                    .map(|_| format!("p{}", rng.random_range(0..15)))
                    .collect(),
            }
        })
        .collect();
    Dataset::new(cases, judges, BTreeMap::new()).unwrap()
}

fn pvalues() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![0.0f64..1e-3, 0.0f64..=1.0, Just(1.0)],
        1..60,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn two_sided_matches_brute_force(n in 1u64..60, frac in 0.0f64..=1.0, p in 0.05f64..0.95) {
        let k = ((n as f64) * frac).round() as u64;
        let got = binomial_two_sided(k, n, p).unwrap();
        let want = brute_two_sided(k, n, p);
        prop_assert!((got - want).abs() <= 1e-9 * want.max(1e-300), "k={k} n={n} p={p}: {got} vs {want}");
    }

    #[test]
    fn two_sided_symmetric_at_half(n in 1u64..400, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as u64;
        let a = binomial_two_sided(k, n, 0.5).unwrap();
        let b = binomial_two_sided(n - k, n, 0.5).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        prop_assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn by_rejections_are_bh_rejections(ps in pvalues(), alpha in 0.001f64..0.5) {
        let bh = correct_pvalues(&ps, Correction::BenjaminiHochberg, alpha).unwrap();
        let by = correct_pvalues(&ps, Correction::BenjaminiYekutieli, alpha).unwrap();
        for i in 0..ps.len() {
            prop_assert!(!by.rejected[i] || bh.rejected[i]);
            prop_assert!(by.adjusted[i] >= bh.adjusted[i] - 1e-15);
        }
    }

    #[test]
    fn corrections_commute_with_permutation(ps in pvalues(), alpha in 0.001f64..0.5, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 1);
        let mut perm: Vec<usize> = (0..ps.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled: Vec<f64> = perm.iter().map(|&i| ps[i]).collect();
        for method in Correction::ALL {
            let a = correct_pvalues(&ps, method, alpha).unwrap();
            let b = correct_pvalues(&shuffled, method, alpha).unwrap();
            for (pos, &i) in perm.iter().enumerate() {
                prop_assert_eq!(a.rejected[i], b.rejected[pos]);
                prop_assert!((a.adjusted[i] - b.adjusted[pos]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ci_flag_is_monotone(n in 1usize..300, alpha in 0.001f64..0.5) {
        let ci = ci_bounds(n, alpha).unwrap();
        prop_assert!(ci.ci_low <= ci.ci_high);
        let rank = |f: JudgeFlag| match f {
            JudgeFlag::Under => 0,
            JudgeFlag::Within => 1,
            JudgeFlag::Over => 2,
        };
        let flags: Vec<u8> = (0..=n as u64).map(|c| rank(ci.flag(c))).collect();
        prop_assert!(flags.windows(2).all(|w| w[0] <= w[1]));
        let wider = ci_bounds(n, alpha / 2.0).unwrap();
        prop_assert!(wider.ci_low <= ci.ci_low && wider.ci_high >= ci.ci_high);
    }

    #[test]
    fn deviation_flag_is_monotone_in_alpha(n in 1u64..300, frac in 0.0f64..=1.0, p0 in 0.05f64..0.95) {
        let k = ((n as f64) * frac).round() as u64;
        let p = binomial_two_sided(k, n, p0).unwrap();
        let mut seen_flag = false;
        for alpha in [0.001, 0.01, 0.05, 0.1, 0.2, 0.5] {
            let f = flag_for(k, n, p0, p, alpha);
            if seen_flag {
                prop_assert_ne!(f, DeviationFlag::Within);
            }
            seen_flag |= f != DeviationFlag::Within;
        }
    }

    #[test]
    fn bins_partition_predictions(probs in prop::collection::vec(0.0f64..=1.0, 1..200), seed in any::<u64>()) {
        let preds: Vec<CasePrediction> = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| CasePrediction {
                case_id: format!("c{i}"),
                judge_id: "j".into(),
                probability: p,
                label: i % 3 == 0,
            })
            .collect();
        for &p in &probs {
            let b = confidence_bin(p);
            prop_assert!(BIN_EDGES[b] <= p && (p < BIN_EDGES[b + 1] || (b == 4 && p <= 1.0)));
        }
        let eval = bin_accuracy(&preds, 5, seed).unwrap();
        prop_assert_eq!(eval.bins.iter().map(|b| b.count).sum::<usize>(), preds.len());
        let correct: f64 = eval
            .bins
            .iter()
            .filter_map(|b| b.accuracy.map(|a| a * b.count as f64))
            .sum();
        prop_assert!((correct / preds.len() as f64 - eval.overall_accuracy).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grouping_is_a_partition(seed in any::<u64>(), judge: bool, decade: bool, circuit: bool, case_type: bool, entity_label: bool) {
        let ds = random_dataset(seed, 6, 150);
        let keys = GroupKeys { judge, decade, circuit, case_type, entity_label };
        let g = group_cases(&ds, keys);
        let mut seen = HashSet::new();
        for (key, members) in &g.groups {
            prop_assert!(!members.is_empty());
            for c in members {
                prop_assert!(seen.insert(c.case_id.clone()));
                prop_assert_eq!(key.judge.is_some(), judge);
                if judge {
                    prop_assert_eq!(key.judge.as_deref(), Some(c.judge_id.as_str()));
                }
                if circuit {
                    prop_assert_eq!(key.circuit, Some(c.circuit));
                }
                if decade {
                    prop_assert_eq!(key.decade, Some(c.decade()));
                }
                if case_type {
                    prop_assert_eq!(key.case_type, Some(c.case_type));
                }
                if entity_label {
                    prop_assert_eq!(key.entity_label, c.entity_label);
                }
            }
        }
        prop_assert_eq!(seen.len() + g.dropped, ds.len());
    }

    #[test]
    fn features_ignore_the_future(seed in any::<u64>(), target in 0usize..120) {
        let ds = random_dataset(seed, 4, 120);
        let case = &ds.cases()[target];
        let before = compute_features(&ds, case).unwrap();
        let cutoff = history_cutoff(case.decision_date);
        let altered: Vec<CaseRecord> = ds
            .cases()
            .iter()
            .map(|c| {
                let mut c = c.clone();
                if c.decision_date >= cutoff {
                    c.outcome = if c.won() { Outcome::LOST } else { Outcome::WON };
                    c.citations.push("later".into());
                }
                c
            })
            .collect();
        let ds2 = Dataset::new(altered, ds.judges().to_vec(), BTreeMap::new()).unwrap();
        let after = compute_features(&ds2, &ds2.cases()[target]).unwrap();
        prop_assert_eq!(&before, &after);
        prop_assert_eq!(&compute_all_features(&ds)[target], &before);
    }

    #[test]
    fn dataset_round_trips(seed in any::<u64>(), jsonl: bool) {
        let ds = random_dataset(seed, 5, 60);
        let dir = tempfile::tempdir().unwrap();
        let (format, ext) = if jsonl { (FileFormat::JsonLines, "jsonl") } else { (FileFormat::Csv, "csv") };
        let cp = dir.path().join(format!("cases.{ext}"));
        let jp = dir.path().join(format!("judges.{ext}"));
        write_cases(&cp, ds.cases(), format).unwrap();
        write_judges(&jp, ds.judges(), format).unwrap();
        let back = load_dataset(&cp, &jp, format).unwrap();
        prop_assert_eq!(back.cases(), ds.cases());
        prop_assert_eq!(back.judges(), ds.judges());
    }

    #[test]
    fn citation_rows_ignore_count_scaling(seed in any::<u64>(), factor in 2usize..4, global: bool) {
        let ds = random_dataset(seed, 6, 200);
        let scaled: Vec<CaseRecord> = ds
            .cases()
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.citations = c.citations.iter().flat_map(|x| std::iter::repeat_n(x.clone(), factor)).collect();
                c
            })
            .collect();
        let ds2 = Dataset::new(scaled, ds.judges().to_vec(), BTreeMap::new()).unwrap();
        let cfg = CitationConfig {
            fraction: 0.3,
            n_top: 8,
            exclude_self_citations: false,
            reference: if global { ReferenceMode::Global } else { ReferenceMode::PerJudge },
        };
        let a = build_citation_matrix(&ds, &cfg).unwrap();
        let b = build_citation_matrix(&ds2, &cfg).unwrap();
        prop_assert_eq!(&a.judges, &b.judges);
        prop_assert_eq!(&a.reference_cases, &b.reference_cases);
        prop_assert!((&a.values - &b.values).abs().max() < 1e-12);
        for r in 0..a.values.nrows() {
            let s = a.values.row(r).sum();
            prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nmf_stays_nonnegative_and_descends(
        seed in any::<u64>(),
        rows in 3usize..15,
        cols in 3usize..15,
        k in 1usize..5,
        l1 in prop_oneof![Just(0.0), 0.0f64..0.1],
        l2 in prop_oneof![Just(0.0), 0.0f64..0.1],
        mu: bool,
    ) {
        let mut rng = stream_rng(seed, 2);
        let c = DMatrix::from_fn(rows, cols, |_, _| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() });
        let cfg = NmfConfig {
            k,
            l1_w: l1,
            l2_w: l2,
            l1_h: l2,
            l2_h: l1,
            tol: 0.0,
            max_iter: 40,
            seed,
            solver: if mu { NmfSolver::Multiplicative } else { NmfSolver::Hals },
        };
        let m = nmf_fit(&c, &cfg).unwrap();
        prop_assert!(m.w.iter().chain(m.h.iter()).all(|v| *v >= 0.0 && v.is_finite()));
        for w in m.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-12, "trace rose: {} -> {}", w[0], w[1]);
        }
    }
}

fn parallel_pools() -> (rayon::ThreadPool, rayon::ThreadPool) {
    (
        rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
        rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap(),
    )
}

#[test]
fn audit_is_thread_count_invariant() {
    let sim = simulate_court(&CourtConfig { n_judges: 40, n_cases: 8000, seed: 3, ..Default::default() }).unwrap();
    let (one, four) = parallel_pools();
    for kind in [LabelKind::CaseType, LabelKind::EntityLabel] {
        let a = one.install(|| audit_assignment(&sim.dataset, kind, AuditConfig::default()).unwrap());
        let b = four.install(|| audit_assignment(&sim.dataset, kind, AuditConfig::default()).unwrap());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn nmf_and_gbdt_are_thread_count_invariant() {
    let mut rng = stream_rng(5, 3);
    let c = DMatrix::from_fn(30, 20, |_, _| rng.random::<f64>());
    let cfg = NmfConfig { k: 4, max_iter: 50, seed: 1, ..Default::default() };
    let (one, four) = parallel_pools();
    let a = one.install(|| nmf_fit(&c, &cfg).unwrap());
    let b = four.install(|| nmf_fit(&c, &cfg).unwrap());
    assert_eq!(a.w, b.w);
    assert_eq!(a.objective_trace, b.objective_trace);

    let rows: Vec<Vec<f64>> = (0..500).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r[0] + r[1] > 1.0).collect();
    let x = DesignMatrix::from_rows((0..5).map(|i| format!("x{i}")).collect(), &rows, labels).unwrap();
    let params = GbdtParams { n_estimators: 20, ..Default::default() };
    let a = one.install(|| train_gbdt(&x, &params).unwrap());
    let b = four.install(|| train_gbdt(&x, &params).unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
