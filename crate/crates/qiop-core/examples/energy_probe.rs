use num_complex::Complex64;
use qiop_core::cliffham::CliffordHamiltonian;
use qiop_core::energy::*;
use qiop_core::f2::BitVec;
use qiop_core::linalg::{self, CMat};
use qiop_core::pauli;
use qiop_core::qubit_tests::MqtProver;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

fn toy() -> CliffordHamiltonian {
    CliffordHamiltonian::new(
        1,
        vec![
            (vec![0], linalg::identity(2)),
            (vec![0], linalg::gates::h()),
        ],
    )
    .unwrap()
}

fn rand_state(rng: &mut ChaCha20Rng, dim: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let n: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut v {
        *a /= n;
    }
    v
}

fn rand_unitary(rng: &mut ChaCha20Rng, dim: usize) -> CMat {
    let a = CMat::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let qr = a.qr();
    qr.q()
}

fn rand_density(rng: &mut ChaCha20Rng, dim: usize) -> CMat {
    let a = CMat::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let p = &a * a.adjoint();
    let tr: Complex64 = (0..dim).map(|i| p[(i, i)]).sum();
    p / tr
}

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(424242);

    // measure_xzy anchors.
    let h = toy();
    // Y eigenstate: (|0> + i|1>)/sqrt(2), a=b=0, c=e1.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let wit = vec![Complex64::new(s, 0.0), Complex64::new(0.0, s)];
    let p = energy_honest_prover(&h, 1, &wit).unwrap();
    let z1 = BitVec::zeros(1);
    let e1 = BitVec::from_index(1, 1);
    let pr = measure_xzy(&p.rounds, &z1, &z1, &e1).unwrap();
    println!("Y eigenstate: Pr[e=0] = {pr:.12}");
    // X eigenstate |+>, a=e1.
    let wit = vec![Complex64::new(s, 0.0), Complex64::new(s, 0.0)];
    let p = energy_honest_prover(&h, 1, &wit).unwrap();
    let pr = measure_xzy(&p.rounds, &e1, &z1, &z1).unwrap();
    println!("X eigenstate: Pr[e=0] = {pr:.12}");

    // Random 2-qubit witness, random disjoint (a,b,c): compare against the
    // direct dense observable.
    let h2 = CliffordHamiltonian::new(
        2,
        vec![(vec![0, 1], linalg::gates::cnot())],
    )
    .unwrap();
    let mut max_tv: f64 = 0.0;
    for _ in 0..20 {
        let wit = rand_state(&mut rng, 4);
        let p = energy_honest_prover(&h2, 1, &wit).unwrap();
        let mut a = BitVec::zeros(2);
        let mut b = BitVec::zeros(2);
        let mut c = BitVec::zeros(2);
        for q in 0..2 {
            match rng.gen_range(0..4) {
                0 => {}
                1 => a.set(q, 1),
                2 => b.set(q, 1),
                _ => c.set(q, 1),
            }
        }
        let pr = measure_xzy(&p.rounds, &a, &b, &c).unwrap();
        let op = pauli::from_xzy(0, &a, &b, &c).unwrap().matrix().unwrap();
        let mut quad = Complex64::new(0.0, 0.0);
        for r in 0..4 {
            for cc in 0..4 {
                quad += wit[r].conj() * op[(r, cc)] * wit[cc];
            }
        }
        let direct = (1.0 + quad.re) / 2.0;
        max_tv = max_tv.max((pr - direct).abs());
    }
    println!("random xzy max |kickback - direct| over 20 draws: {max_tv:.3e}");

    // Mask lemma on random instances.
    let mut worst = f64::NEG_INFINITY;
    let t0 = Instant::now();
    for trial in 0..30 {
        let n = 1 + trial % 3;
        let dim = 1usize << n;
        let q = 1 + trial % 2;
        let wmat = rand_unitary(&mut rng, dim);
        let obs: Vec<CMat> = (0..q)
            .map(|_| {
                let d = CMat::from_fn(dim, dim, |r, c| {
                    if r == c {
                        Complex64::new(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                &wmat * d * wmat.adjoint()
            })
            .collect();
        let u = rand_unitary(&mut rng, dim);
        let cells = 1usize << q;
        let mut family: Vec<CMat> = vec![CMat::zeros(dim, dim); cells];
        for col in 0..dim {
            let s = rng.gen_range(0..cells);
            let e = u.column(col).into_owned();
            family[s] += &e * e.adjoint();
        }
        let v = rand_unitary(&mut rng, dim);
        let rho = rand_density(&mut rng, dim);
        let (lhs, rhs) = mask_lemma_gap(&family, &obs, &v, &rho).unwrap();
        worst = worst.max(lhs - rhs);
    }
    println!(
        "mask lemma: worst lhs-rhs over 30 random instances = {worst:.3e} ({:.2?})",
        t0.elapsed()
    );

    // Exact vs sampled agreement on a cheat.
    let h = toy();
    let spec = qiop_core::qubit_tests::AdversarySpec::new("flip_report", vec![0.0], 0);
    let p = build_energy_adversary(&h, 1, &spec).unwrap();
    let cfg = EnergyConfig::default();
    let exact = full_sqiop(&h, &p, &cfg).unwrap();
    let t0 = Instant::now();
    let (sampled, verdicts) = full_sqiop_sampled(&h, &p, &cfg, 4000, &mut rng).unwrap();
    println!(
        "flip_report: exact={:.6} sampled={:.6} over 4000 trials ({:.2?})",
        exact.acceptance,
        sampled,
        t0.elapsed()
    );
    // Query tallies by branch.
    let mut by_branch: std::collections::BTreeMap<String, std::collections::BTreeSet<(usize, usize, usize)>> =
        Default::default();
    for v in &verdicts {
        by_branch
            .entry(format!("{:?}", v.branch))
            .or_default()
            .insert((v.queries.qubit_reads, v.queries.message_reads, v.queries.proof_reads));
    }
    for (b, set) in &by_branch {
        println!("  {b}: tallies {set:?}");
    }

    // All-identity prover sampled tally at N=2 for comparison.
    let ground: Vec<Complex64> = h.ground_state().unwrap().iter().copied().collect();
    let w2 = product_witness(&ground, 2);
    let p2 = energy_honest_prover(&h, 2, &w2).unwrap();
    let (_, verdicts2) = full_sqiop_sampled(&h, &p2, &cfg, 2000, &mut rng).unwrap();
    let mut by_branch2: std::collections::BTreeMap<String, std::collections::BTreeSet<(usize, usize, usize)>> =
        Default::default();
    for v in &verdicts2 {
        by_branch2
            .entry(format!("{:?}", v.branch))
            .or_default()
            .insert((v.queries.qubit_reads, v.queries.message_reads, v.queries.proof_reads));
    }
    println!("honest N=2 tallies:");
    for (b, set) in &by_branch2 {
        println!("  {b}: tallies {set:?}");
    }

    // Corrupted-proof prover caught in sampled mode: hand-flip proof bits.
    let p = energy_honest_prover(&h, 1, &product_witness(&ground, 1)).unwrap();
    let rep = full_sqiop(&h, &p, &cfg).unwrap();
    println!("honest N=1 again for reference: {:.6}", rep.acceptance);

    let _ = MqtProver::new(1, None, vec![], vec![], vec![], vec![]).unwrap();
}
