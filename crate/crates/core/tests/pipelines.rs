//! Cross-module checks through the public API: Monte Carlo against enumeration.

use fklab_core::experiments::monte_carlo_curves;
use fklab_core::inequality::{check_diffineq, DiffIneqOptions, Verdict};
use fklab_core::samplers::{SamplerKind, SamplingPlan, DEFAULT_CFTP_MAX_UPDATES};
use fklab_core::{build_lattice, enumerate_measure, exact_tail, BoundaryKind, Curves, Lattice, Params};

fn plan(kind: SamplerKind, replicas: u64, seed: u64) -> SamplingPlan {
    SamplingPlan { kind, replicas, seed, connectivity: Default::default(), rule: Default::default() }
}

#[test]
fn sampled_tails_cover_the_exact_tails() {
    // 2x3 box: 7 edges, small enough to enumerate.
    let g = build_lattice(&Lattice::boxed(&[2, 3], 1.0)).unwrap();
    let betas = [0.4, 0.8];
    for (q, kind) in [(1.0, SamplerKind::Bernoulli), (2.0, SamplerKind::Cftp { max_updates: DEFAULT_CFTP_MAX_UPDATES })]
    {
        let mc = monte_carlo_curves(&g, q, BoundaryKind::Free, &betas, &plan(kind, 40_000, 17), 0, false, 2, 0.9999)
            .unwrap();
        for (i, &beta) in betas.iter().enumerate() {
            let exact = exact_tail(&enumerate_measure(&g, Params::new(beta, q).unwrap()).unwrap(), 0);
            for n in 1..=6 {
                let (est, hw) = (mc.tails[i].at(n).unwrap(), mc.tails[i].half_width(n).unwrap());
                let truth = exact.at(n).unwrap();
                assert!((est - truth).abs() <= hw, "q={q} β={beta} n={n}: {est} vs {truth} ± {hw}");
            }
        }
    }
}

#[test]
fn exact_and_sampled_diffineq_agree_on_a_cycle() {
    let g = fklab_core::graph::cycle_graph(6, 1.0).unwrap();
    let betas: Vec<f64> = (0..6).map(|i| 0.3 + 0.1 * i as f64).collect();
    let ns: Vec<usize> = (1..=6).collect();
    let exact = Curves::exact(&g, 1.0, BoundaryKind::Free, &betas, 0, 2).unwrap();
    let r = check_diffineq(&exact, &ns, &DiffIneqOptions::default()).unwrap();
    assert!(r.records.iter().all(|x| x.verdict == Verdict::Holds), "{}", r.summary_table());

    let mc = monte_carlo_curves(
        &g,
        1.0,
        BoundaryKind::Free,
        &betas,
        &plan(SamplerKind::Bernoulli, 50_000, 3),
        0,
        false,
        2,
        0.997,
    )
    .unwrap();
    let r = check_diffineq(&mc, &ns, &DiffIneqOptions::default()).unwrap();
    assert_eq!(r.counts().violated, 0, "{}", r.summary_table());
}

#[test]
fn f32_and_f64_enumerations_agree() {
    let g64 = build_lattice(&fklab_core::LatticeSpec::<f64>::torus(&[3, 3], 0.7)).unwrap();
    let g32 = build_lattice(&fklab_core::LatticeSpec::<f32>::torus(&[3, 3], 0.7)).unwrap();
    let a = exact_tail(&enumerate_measure(&g64, Params::new(0.9, 2.5).unwrap()).unwrap(), 4);
    let b = exact_tail(&enumerate_measure(&g32, fklab_core::ModelParams::new(0.9f32, 2.5).unwrap()).unwrap(), 4);
    for n in 1..=9 {
        assert!((a.at(n).unwrap() - b.at(n).unwrap() as f64).abs() < 1e-4);
    }
}
