//! Timing probe for the heavy code paths (not part of the test suite).

use std::time::Instant;

use rootwalk_core::element::Budgets;
use rootwalk_core::fixtures::register_fixture;
use rootwalk_core::network::{effective_resistance, schreier_graph};
use rootwalk_core::rwidf::{build_ascension, trace};
use rootwalk_core::valency::{level_vertices, Vertex};

fn main() {
    // Hanoi exact trace at increasing levels
    let hanoi = register_fixture("hanoi", Budgets::default()).unwrap();
    for n in [4usize, 5, 6, 7] {
        let t0 = Instant::now();
        let orbit = level_vertices(hanoi.universe.base(), 0, n);
        let d = build_ascension(&hanoi.measure, &orbit).unwrap();
        let corners: Vec<usize> = (0..3)
            .map(|x| orbit.iter().position(|v| *v == Vertex::repeated(x, n)).unwrap())
            .collect();
        let t1 = Instant::now();
        let traced = trace(&d, &corners).unwrap();
        let p = traced.prob(0, 1);
        println!(
            "hanoi trace n={n}: build {:?}, trace {:?}, p_n = {p} ≈ {:.6}",
            t1 - t0,
            t1.elapsed(),
            rootwalk_core::solve::ratio_to_f64(&p)
        );
    }
    // mother3 Schreier resistance
    let mother = register_fixture("mother3", Budgets::default()).unwrap();
    for n in [4usize, 5, 6, 7, 8] {
        let t0 = Instant::now();
        let vertices = level_vertices(mother.universe.base(), 0, n);
        let net = schreier_graph(&mother.measure, &vertices).unwrap();
        let unit = net.unit_adjacency();
        let t1 = Instant::now();
        let root = vertices.iter().position(|v| *v == Vertex::zeros(n)).unwrap();
        let anti = vertices
            .iter()
            .position(|v| *v == Vertex::zeros(n - 1).child(1))
            .unwrap();
        let r = effective_resistance(&unit, &[root], &[anti], 2000).unwrap();
        println!(
            "mother3 R n={n}: graph {:?}, solve {:?}, method {:?}, R = {:.6}",
            t1 - t0,
            t1.elapsed(),
            r.method,
            r.value.to_f64()
        );
    }
    // Hanoi exact entropy to k = 10
    let t0 = Instant::now();
    let mut power = rootwalk_core::measure::FiniteMeasure::delta_identity(&hanoi.universe, 0).unwrap();
    for k in 1..=10 {
        power = power.convolve(&hanoi.measure).unwrap();
        println!(
            "hanoi H(mu^{k}) = {:.6} nats, supp {} ({:?})",
            power.entropy_nats(),
            power.support_size(),
            t0.elapsed()
        );
    }
}
