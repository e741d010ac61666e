//! Diagnostics over many seeds of the dimension-scaling preset.

use vslab::diagnostics::{good_event_check, separability_witness, DiagnosticsConfig};
use vslab::experiments::{fig2_preset, Fig2Variant, GridPoint};
use vslab::loss::tune_vs_defaults;
use vslab::{sample_dataset, solve_cs_svm, SvmOptions};

const SEEDS: u64 = 50;

fn point(d: usize) -> GridPoint {
    fig2_preset(Fig2Variant::FixedTau)
        .expand()
        .unwrap()
        .into_iter()
        .find(|p| p.d == d)
        .unwrap()
}

#[test]
fn witness_separates_at_large_dimension() {
    // Pilot over seeds 1..=50: separable on all of them at d = 4096 and
    // 16384, smallest margin / sqrt(d/n) = 0.275. Fails at d <= 1024.
    for d in [4096, 16384] {
        let p = point(d);
        let mut good = 0;
        for seed in 1..=SEEDS {
            let ds = sample_dataset(&p.spec, seed).unwrap();
            let w = separability_witness(&ds).unwrap();
            if w.separable && w.min_margin >= 0.1 * w.reference_scale {
                good += 1;
            }
        }
        assert!(good >= 48, "d={d}: {good}/{SEEDS}");
    }
}

#[test]
fn good_event_rate_at_4096() {
    // Pilot over seeds 1..=50 at c1 = 3, delta = 0.05: 34 pass. Every failure
    // is the same-group alignment bound, which carries no free constant.
    let p = point(4096);
    let cfg = DiagnosticsConfig::default();
    let mut pass = 0;
    for seed in 1..=SEEDS {
        let ds = sample_dataset(&p.spec, seed).unwrap();
        let rep = good_event_check(&ds, &cfg).unwrap();
        if rep.overall {
            pass += 1;
        } else {
            assert!(!rep.same_group.pass, "seed {seed}");
            assert!(rep.norm_upper.pass && rep.norm_lower.pass && rep.cross_group.pass && rep.pairwise.pass);
        }
    }
    assert_eq!(pass, 34);
}

#[test]
fn good_event_monotone_in_c1() {
    let p = point(1024);
    let ds = sample_dataset(&p.spec, 3).unwrap();
    let mut prev = [false; 5];
    for c1 in [1.0, 1.2, 1.5, 2.0, 3.0, 10.0] {
        let cfg = DiagnosticsConfig {
            c1,
            ..DiagnosticsConfig::default()
        };
        let rep = good_event_check(&ds, &cfg).unwrap();
        let now: Vec<bool> = rep.checks().iter().map(|c| c.pass).collect();
        for (a, b) in prev.iter().zip(&now) {
            assert!(!a || *b, "pass flipped to fail at c1={c1}");
        }
        prev.copy_from_slice(&now);
    }
}

#[test]
fn separable_flag_implies_svm_success() {
    let p = point(4096);
    let deltas = tune_vs_defaults(p.n_plus, p.n_minus).unwrap().deltas();
    for seed in 1..=5 {
        let ds = sample_dataset(&p.spec, seed).unwrap();
        if separability_witness(&ds).unwrap().separable {
            let sol = solve_cs_svm(&ds, &deltas, &SvmOptions::default()).unwrap();
            assert!(sol.kkt_max_violation <= 1e-8);
        }
    }
}
