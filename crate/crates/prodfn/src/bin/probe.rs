// Temporary numeric probe used during development; not part of the artifact.
use prodfn::dgp::{generate_panel, true_elasticity_summary};
use prodfn::model::ScenarioSpec;
use prodfn::montecarlo::{preset_technology, run_method};
use prodfn::proposed::EstimatorOptions;
use prodfn::report::Method;

fn main() {
    let options = EstimatorOptions::default();
    let reps = 5;
    for family_cd in [true, false] {
        for crs in [true, false] {
            for prod in [true, false] {
                let spec = ScenarioSpec::baseline(preset_technology(family_cd, crs), prod);
                let mut sums: Vec<(f64, f64, usize)> = vec![(0.0, 0.0, 0); 4];
                let mut truth = (0.0, 0.0);
                for rep in 0..reps {
                    let panel = generate_panel(&spec, rep).unwrap();
                    let t = true_elasticity_summary(&panel, &spec.tech).unwrap();
                    truth.0 += t.eps_k / reps as f64;
                    truth.1 += t.eps_l / reps as f64;
                    for (idx, method) in Method::ALL.iter().enumerate() {
                        match run_method(&panel, *method, &options) {
                            Ok(r) => {
                                sums[idx].0 += r.mean_capital_elasticity.unwrap_or(f64::NAN);
                                sums[idx].1 += r.mean_land_elasticity.unwrap_or(f64::NAN);
                                sums[idx].2 += 1;
                            }
                            Err(e) => println!("    {method} rep {rep} FAILED: {e}"),
                        }
                    }
                }
                println!(
                    "{}-{}-{}: true k={:.4} l={:.4}",
                    if family_cd { "cd" } else { "ces" },
                    if crs { "crs" } else { "drs" },
                    if prod { "prod" } else { "noprod" },
                    truth.0,
                    truth.1
                );
                for (idx, method) in Method::ALL.iter().enumerate() {
                    let n = sums[idx].2.max(1) as f64;
                    println!(
                        "    {:<9} k={:.4} l={:.4} ({} ok)",
                        method.name(),
                        sums[idx].0 / n,
                        sums[idx].1 / n,
                        sums[idx].2
                    );
                }
            }
        }
    }

    // Pointwise RMS diagnostics for CES CRS with productivity.
    let spec = ScenarioSpec::baseline(preset_technology(false, true), true);
    let panel = generate_panel(&spec, 0).unwrap();
    let report = run_method(&panel, Method::Proposed, &options).unwrap();
    let mut sq_k = 0.0;
    let mut sq_l = 0.0;
    let mut bias_l = 0.0;
    for (obs, (ek, el)) in panel.observations.iter().zip(
        report
            .capital_elasticities
            .iter()
            .zip(&report.land_elasticities),
    ) {
        let t = prodfn::model::ces_elasticities(&spec.tech, obs.capital, obs.land).unwrap();
        sq_k += (ek - t.eps_k) * (ek - t.eps_k);
        sq_l += (el - t.eps_l) * (el - t.eps_l);
        bias_l += el - t.eps_l;
    }
    let n = panel.len() as f64;
    println!(
        "CES crs+prod: capital RMS {:.4}, land RMS {:.4}, land bias {:.4}, nonpos rents {}",
        (sq_k / n).sqrt(),
        (sq_l / n).sqrt(),
        bias_l / n,
        panel.nonpositive_rent_count
    );
    println!(
        "  mean est k={:.4} l={:.4}",
        report.mean_capital_elasticity.unwrap(),
        report.mean_land_elasticity.unwrap()
    );

    // Per-replication spread of the proposed land estimate, CD CRS baseline.
    let spec = ScenarioSpec::baseline(preset_technology(true, true), true);
    let mut lands = Vec::new();
    for rep in 0..20 {
        let panel = generate_panel(&spec, rep).unwrap();
        let r = run_method(&panel, Method::Proposed, &options).unwrap();
        lands.push(r.mean_land_elasticity.unwrap());
    }
    let mean = lands.iter().sum::<f64>() / lands.len() as f64;
    let sd = (lands.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 19.0).sqrt();
    println!("cd-crs-prod proposed land over 20 reps: mean {mean:.4} sd {sd:.4}");
    println!("  reps: {:?}", lands.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>());

    // EGS rent-curve degree comparison.
    for family_cd in [true, false] {
        for crs in [true, false] {
            for prod in [true, false] {
                let spec = ScenarioSpec::baseline(preset_technology(family_cd, crs), prod);
                let panel = generate_panel(&spec, 0).unwrap();
                let t = true_elasticity_summary(&panel, &spec.tech).unwrap();
                let mut line = format!(
                    "egs {}-{}-{}: true l={:.3} |",
                    if family_cd { "cd" } else { "ces" },
                    if crs { "crs" } else { "drs" },
                    if prod { "prod" } else { "noprod" },
                    t.eps_l
                );
                for degree in 1..=3 {
                    let r = prodfn::baselines::egs_estimate_with_degree(&panel, degree).unwrap();
                    line.push_str(&format!(
                        " d{}={:.3}",
                        degree,
                        r.mean_land_elasticity.unwrap()
                    ));
                }
                println!("{line}");
            }
        }
    }
}
