use floorlab::descent::DescentConfig;
use floorlab::ensemble::{compare_gd_sgd_spin, run_ensemble, EnsembleSpec, LandscapeKind};
use std::time::Instant;

fn cfg(gamma: f64) -> DescentConfig<f64> {
    DescentConfig { step_size: gamma, ..DescentConfig::default() }
}

#[test]
#[ignore]
fn probe_acceptance_numbers() {
    // Exact acceptance protocol shapes, seed 42.
    for (n, trials) in [(10usize, 200usize), (50, 200), (100, 200), (150, 30), (200, 10)] {
        let t0 = Instant::now();
        let spec = EnsembleSpec {
            descent: cfg(0.1),
            ..EnsembleSpec::new(LandscapeKind::Coupled, n, trials, 42)
        };
        let r = run_ensemble(&spec).unwrap();
        println!(
            "coupled n={n} trials={trials}: mean {:.4} std {:.4} min {:.4} max {:.4} iqr {:.4} modal {:.4} stops {:?} ({:.0}s)",
            r.mean, r.std, r.min, r.max, r.interquartile_range, r.histogram.modal_bin_center(), r.stop_reason_counts, t0.elapsed().as_secs_f64()
        );
    }
    let t0 = Instant::now();
    let spec = EnsembleSpec {
        descent: cfg(0.1),
        ..EnsembleSpec::new(LandscapeKind::Tripartite, 50, 200, 42)
    };
    let r = run_ensemble(&spec).unwrap();
    println!(
        "tripartite n=50: mean {:.4} std {:.4} min {:.4} max {:.4} iqr {:.4} ({:.0}s)",
        r.mean, r.std, r.min, r.max, r.interquartile_range, t0.elapsed().as_secs_f64()
    );

    // SGD comparison, n=50, budget = gamma*steps = 0.1*3000.
    let t0 = Instant::now();
    let rows = compare_gd_sgd_spin(50, &[1, 5, 10], 300.0, 40, &cfg(0.1), 42).unwrap();
    for row in &rows {
        println!(
            "P={}: raw mean {:.4} (std {:.4}), refined mean {:.4}",
            row.p_count, row.mean_normalized_energy, row.std_normalized_energy, row.refined_mean_normalized_energy
        );
    }
    println!("sgd compare took {:.0}s", t0.elapsed().as_secs_f64());
}
