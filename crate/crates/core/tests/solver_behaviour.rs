mod common;

use blocksel_core::solver::{optimize, Termination};
use blocksel_core::{GradientMode, SolverConfig};
use common::*;

fn config(beta_bar: f64, gamma: f64, eta: f64, iters: usize) -> SolverConfig {
    SolverConfig {
        beta_bar,
        gamma,
        eta,
        max_iterations: iters,
        ..SolverConfig::default()
    }
}

#[test]
fn single_iteration_gives_two_records() {
    let inst = random_instance(1, 15, 6, 3);
    let (_, trace) = optimize(&inst.net, &inst.model, &config(0.6, 0.0, 1e-2, 1)).unwrap();
    assert_eq!(trace.records.len(), 2);
    assert_eq!(trace.records[0].iteration, 0);
    assert_eq!(trace.records[0].nnz, 6);
    assert_eq!(trace.termination, Termination::IterationCap);
}

#[test]
fn runs_are_bit_identical() {
    let inst = random_instance(2, 20, 8, 3);
    let cfg = config(0.6, 0.5, 5e-2, 80);
    let (r1, t1) = optimize(&inst.net, &inst.model, &cfg).unwrap();
    let (r2, t2) = optimize(&inst.net, &inst.model, &cfg).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(t1, t2);
    assert_eq!(t1.to_csv(), t2.to_csv());
}

#[test]
fn trace_csv_layout() {
    let inst = random_instance(3, 12, 4, 2);
    let (_, trace) = optimize(&inst.net, &inst.model, &config(0.6, 0.0, 1e-2, 3)).unwrap();
    let csv = trace.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iteration,loss_b,loss_m,loss_total,grad_norm,nnz");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));
}

#[test]
fn loss_b_descends_when_it_is_the_only_term() {
    for seed in 0..5 {
        let inst = random_instance(10 + seed, 16, 6, 3);
        let (_, trace) = optimize(&inst.net, &inst.model, &config(0.0, 0.0, 1e-3, 50)).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].loss_b <= w[0].loss_b + 1e-8, "seed {seed}: {} -> {}", w[0].loss_b, w[1].loss_b);
        }
    }
}

#[test]
fn loss_m_descends_when_it_is_the_only_term() {
    for seed in 0..5 {
        let inst = random_instance(20 + seed, 16, 6, 3);
        let (_, trace) = optimize(&inst.net, &inst.model, &config(1.0, 0.0, 1e-3, 50)).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].loss_m <= w[0].loss_m + 1e-8, "seed {seed}: {} -> {}", w[0].loss_m, w[1].loss_m);
        }
    }
}

#[test]
fn sparsity_grows_with_gamma() {
    let inst = random_instance(30, 25, 12, 3);
    let nnz: Vec<usize> = [0.0, 1.0, 2.0]
        .iter()
        .map(|&g| {
            let (r, _) = optimize(&inst.net, &inst.model, &config(0.6, g, 5e-2, 200)).unwrap();
            r.nnz()
        })
        .collect();
    assert!(nnz.windows(2).all(|w| w[1] <= w[0]), "{nnz:?}");
}

#[test]
fn literal_mode_runs_and_keeps_constraints() {
    let inst = random_instance(40, 20, 8, 3);
    let cfg = SolverConfig {
        gradient_mode: GradientMode::PaperLiteral,
        ..config(0.6, 0.0, 1e-2, 60)
    };
    let (r, trace) = optimize(&inst.net, &inst.model, &cfg).unwrap();
    assert!((r.norm() - 1.0).abs() <= 1e-12);
    assert!(trace.records.iter().all(|t| t.loss_total.is_finite()));
}

#[test]
fn oversized_step_is_reported_with_trace() {
    let inst = random_instance(50, 12, 3, 2);
    // huge sparsity weight drives every coordinate below zero at once
    let err = optimize(&inst.net, &inst.model, &config(0.6, 1e6, 1.0, 10)).unwrap_err();
    assert!(matches!(err.error, blocksel_core::Error::DegenerateStep { .. }));
    assert_eq!(err.trace.records.len(), 1);
}
