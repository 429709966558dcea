mod common;

use common::*;
use mirrorwyner::divergence::{constrained_cmi_max, AccessMask, CmiMaxOutcome, LatentModel};
use mirrorwyner::harness::{
    mapping_grid, reference_instance, run, run_convergence_cdf, run_mi_tradeoff, run_secrecy_gap, seed_list,
    ConvergenceConfig, SecrecyGapConfig, Subcommand, TradeoffConfig,
};
use mirrorwyner::mirror_game::{bernoulli_joint, MirrorGameSpec, SLOTS};
use mirrorwyner::prob::{mutual_information, JointPmf2, PrivacyMapping};
use mirrorwyner::solvers::GreedyConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn bsc_capacity_point() {
    let j = bernoulli_joint(0.5, 0.1).unwrap();
    let closed_form = 1.0 - h2(0.1);
    assert!((mutual_information(&j) - closed_form).abs() <= 1e-12);
    assert!((closed_form - 0.531004).abs() < 5e-7);
}

fn tradeoff(grid: Vec<f64>) -> TradeoffConfig {
    TradeoffConfig { instance: reference_instance(), magnitudes: vec![0.0], leakage_grid: grid, samples: 1, resolution: 16 }
}

#[test]
fn zero_leakage_caps_utility_at_source_blind_channels() {
    let rows = run_mi_tradeoff(&tradeoff(vec![0.0, 2.0]), &[0]).unwrap();
    for q in 0..2 {
        let j = &reference_instance().joints[q];
        // best utility among grid channels that leak nothing about S
        let best = mapping_grid(2, 2, 16)
            .unwrap()
            .iter()
            .filter_map(|o| {
                let sy = through(j, o);
                (brute_mi(&sy, 2, 2) <= 1e-12).then(|| {
                    let xy = JointPmf2::from_channel(&j.marginal_b(), o).unwrap();
                    brute_mi(xy.as_flat(), 2, 2)
                })
            })
            .fold(0.0, f64::max);
        let r = rows.iter().find(|r| r.q == q && r.grid_index == 0).unwrap();
        assert!(r.utility.unwrap() <= best + 1e-12);
        // a vacuous bound admits the identity channel
        let open = rows.iter().find(|r| r.q == q && r.grid_index == 1).unwrap();
        assert!((open.utility.unwrap() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn frontier_is_monotone() {
    let cfg = TradeoffConfig { magnitudes: vec![0.1, 0.5], samples: 16, ..tradeoff((0..=8).map(|i| i as f64 / 8.0).collect()) };
    let rows = run_mi_tradeoff(&cfg, &seed_list(0, 2)).unwrap();
    for chunk in rows.chunks(9) {
        let u: Vec<f64> = chunk.iter().map(|r| r.utility.unwrap_or(f64::NEG_INFINITY)).collect();
        assert!(u.windows(2).all(|w| w[1] >= w[0]), "{u:?}");
    }
}

/// `P(s, y)` for the chain `S → X → Y` with joint `P(s, x)`.
fn through(j: &JointPmf2, map: &PrivacyMapping) -> Vec<f64> {
    let (ns, nx, ny) = (j.rows(), j.cols(), map.outputs());
    let mut out = vec![0.0; ns * ny];
    for s in 0..ns {
        for x in 0..nx {
            for y in 0..ny {
                out[s * ny + y] += j.get(s, x) * map.get(x, y);
            }
        }
    }
    out
}

/// `I(X_q; (Y^(o)_b, Y^(v)_b))` with both Bobs' `X` driven by a shared `S`.
fn cross_term(jq: &JointPmf2, jb: &JointPmf2, o: &PrivacyMapping, v: &PrivacyMapping) -> f64 {
    let (ns, nxq, nxb) = (jq.rows(), jq.cols(), jb.cols());
    let (no, nv) = (o.outputs(), v.outputs());
    let ps: Vec<f64> = (0..ns).map(|s| (0..nxq).map(|x| jq.get(s, x)).sum()).collect();
    let mut t = vec![0.0; nxq * no * nv];
    for s in 0..ns {
        for xq in 0..nxq {
            for xb in 0..nxb {
                let w = jq.get(s, xq) * jb.get(s, xb) / ps[s];
                for a in 0..no {
                    for c in 0..nv {
                        t[xq * no * nv + a * nv + c] += w * o.get(xb, a) * v.get(xb, c);
                    }
                }
            }
        }
    }
    brute_mi(&t, nxq, no * nv)
}

#[test]
fn open_budget_gap_matches_enumeration() {
    let spec = reference_instance();
    let cfg = SecrecyGapConfig {
        instance: spec.clone(),
        magnitudes: vec![0.0],
        budget_grid: vec![0.0, 10.0],
        samples: 1,
        resolution: 4,
        twin_conditions: false,
        silent_twin: true,
        floors: GreedyConfig::default().floors,
    };
    let rows = run_secrecy_gap(&cfg, &[0]).unwrap();
    let grid = mapping_grid(2, 2, 4).unwrap();
    let mut total = 0.0;
    for b in 0..2 {
        let jb = &spec.joints[b];
        let mut best = f64::NEG_INFINITY;
        for o in &grid {
            let xy = JointPmf2::from_channel(&jb.marginal_b(), o).unwrap();
            let util = brute_mi(xy.as_flat(), 2, 2);
            let leak = brute_mi(&through(jb, o), 2, 2);
            if util < spec.gamma2 || leak > spec.gamma0[b] {
                continue;
            }
            for v in &grid {
                let cross = cross_term(&spec.joints[1 - b], jb, o, v);
                best = best.max(util - cross);
            }
        }
        total += best;
    }
    let open = rows.iter().find(|r| r.grid_index == 1).unwrap();
    assert!((open.gap.unwrap() - total / 2.0).abs() <= 1e-10, "{:?} vs {}", open.gap, total / 2.0);
}

#[test]
fn gap_rises_with_budget() {
    let cfg = SecrecyGapConfig {
        instance: reference_instance(),
        magnitudes: vec![0.6],
        budget_grid: vec![0.0, 0.1, 0.2, 0.4, 1.0],
        samples: 8,
        resolution: 8,
        twin_conditions: true,
        silent_twin: false,
        floors: GreedyConfig::default().floors,
    };
    let rows = run_secrecy_gap(&cfg, &[3]).unwrap();
    let solved: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
    assert!(solved.len() >= 2);
    assert!(solved.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{solved:?}");
}

#[test]
fn vacuous_cdf_is_degenerate_at_one() {
    let spec = MirrorGameSpec {
        gamma0: vec![10.0; 2],
        gamma1: vec![10.0; 2],
        gamma2: 0.0,
        gamma3: 10.0,
        theta_levels: [0.0; SLOTS],
        ..reference_instance()
    };
    let cfg = ConvergenceConfig {
        mode: Default::default(),
        instance: spec,
        magnitude: 0.1,
        greedy: GreedyConfig { budget: 1, ..GreedyConfig::default() },
        nonstationary: Default::default(),
    };
    let r = run_convergence_cdf(&cfg, &seed_list(0, 30)).unwrap();
    assert_eq!(r.horizon, 1);
    assert_eq!(r.cdf, vec![vec![1.0], vec![1.0]]);
    assert_eq!(r.completed, vec![30, 30]);
}

#[test]
fn cdf_needs_thirty_seeds() {
    let cfg: ConvergenceConfig = mirrorwyner::harness::parse_config("{}").unwrap();
    assert!(run_convergence_cdf(&cfg, &seed_list(0, 29)).unwrap_err().is_input_error());
}

/// `H(M|Z)` and `I(X;Y|Z)` of a reweighted latent table, from scratch.
fn latent_stats(m: &LatentModel, w: &[f64]) -> (f64, f64) {
    let [nx, ny, nz, nm] = m.dims();
    let mut pz = vec![0.0; nz];
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                for k in 0..nm {
                    pz[z] += m.get(x, y, z, k);
                }
            }
        }
    }
    let mut xyz = vec![0.0; nx * ny * nz];
    let mut mz = vec![0.0; nm * nz];
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                for k in 0..nm {
                    let v = if pz[z] > 0.0 { m.get(x, y, z, k) / pz[z] * w[z] } else { 0.0 };
                    xyz[(x * ny + y) * nz + z] += v;
                    mz[k * nz + z] += v;
                }
            }
        }
    }
    (brute_conditional_entropy(&mz, nm, nz), brute_cmi(&xyz, [nx, ny, nz]))
}

#[test]
fn cmi_max_beats_every_grid_point() {
    for seed in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [2, 2, 3, 2];
        let m = LatentModel::normalized(dims, (0..24).map(|_| rng.random_range(0.02..1.0)).collect(), [1.0; 4])
            .unwrap();
        let pz = m.z_marginal();
        let mask = AccessMask::new(vec![0, 2]).unwrap();
        let h = m.equivocation();
        let (g1, g2) = (h - 0.02, h + 0.02);
        let out = constrained_cmi_max(&m, &mask, g1, g2).unwrap();
        let CmiMaxOutcome::Optimal { weights, cmi, .. } = &out else { panic!("band holds the incumbent") };
        let (eq, c) = latent_stats(&m, weights);
        assert!(eq >= g1 - 1e-9 && eq <= g2 + 1e-9);
        assert!((c - cmi).abs() <= 1e-10);
        // 1/200 grid over the accessible mass
        let mass = pz[0] + pz[2];
        for i in 0..=200 {
            let a = mass * i as f64 / 200.0;
            let w = [a, pz[1], mass - a];
            let (eq, c) = latent_stats(&m, &w);
            if eq >= g1 && eq <= g2 {
                assert!(*cmi >= c - 1e-9, "seed {seed}: grid {c} beats {cmi}");
            }
        }
    }
}

#[test]
fn nash_subcommand_reports_equilibria() {
    let cfg = r#"{"random": {"players": 8, "colors": 3}, "max_rounds": 200}"#;
    let out = run(Subcommand::Nash, cfg, &seed_list(0, 5)).unwrap();
    let text = String::from_utf8(out.csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "is_nash").unwrap();
    assert_eq!(lines.clone().count(), 5);
    assert!(lines.all(|l| l.split(',').nth(col) == Some("true")));
}

#[test]
fn mfg_subcommand_conserves_mass() {
    let cfg = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/mfg.json")).unwrap();
    let out = run(Subcommand::Mfg, &cfg, &[0]).unwrap();
    let mut reader = csv::Reader::from_reader(out.csv.as_slice());
    let mut mass = std::collections::BTreeMap::<String, f64>::new();
    let mut xs = Vec::new();
    for rec in reader.records() {
        let rec = rec.unwrap();
        *mass.entry(rec[0].to_string()).or_default() += rec[3].parse::<f64>().unwrap();
        if xs.len() < 2 {
            xs.push(rec[1].parse::<f64>().unwrap());
        }
    }
    let dx = xs[1] - xs[0];
    assert_eq!(mass.len(), 200);
    assert!(mass.values().all(|m| (m * dx - 1.0).abs() <= 1e-6));
}
