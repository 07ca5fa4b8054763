//! Quick oracle checks exposed through the `selftest` subcommand.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scma_core::channel::complex_gaussian;
use scma_core::codec::{bpsk_constellation, build_codebook, Codebook, IndicatorMatrix};
use scma_core::coop::{consensus_round, network_average, AdmmState, LinkModel, Links, Topology};
use scma_core::counting::{solve_counting_numbers, CountingNumbers, GraphShape};
use scma_core::gaussian::{ep_project, DiscretePrior, GaussianMsg};
use scma_core::oracle::{gaussian_posterior_exact, stretched_linear_model};
use scma_core::receiver::{Detector, ReceiverConfig};
use scma_core::sim::{draw_frame, Scenario};
use scma_core::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Largest deviation between detector beliefs under fixed Gaussian priors and
/// the exact joint-Gaussian posterior, on one random instance.
pub fn tree_exactness_error<R: Rng>(cb: &Codebook, taps: usize, symbols: usize, rng: &mut R) -> f64 {
    let h: Vec<Vec<Complex64>> = (0..cb.resources())
        .map(|_| (0..taps).map(|_| complex_gaussian(rng, 1.0)).collect())
        .collect();
    let y: Vec<Complex64> = (0..symbols + taps - 1).map(|_| complex_gaussian(rng, 2.0)).collect();
    let n0 = rng.random_range(0.05..0.5);
    let mut det = Detector::new(cb, taps, symbols, ReceiverConfig::default(), None).expect("plain detector");
    det.load(&h, &y, n0).expect("matching dimensions");
    let priors: Vec<GaussianMsg> = (0..cb.users() * cb.nonzeros * symbols)
        .map(|_| GaussianMsg::new(complex_gaussian(rng, 1.0), rng.random_range(0.2..2.0)))
        .collect();
    det.set_gaussian_priors(priors.clone());
    // one pass settles a tree; the second must leave it unchanged
    det.iterate(None);
    det.iterate(None);

    let (model, s_map) = stretched_linear_model(cb, &h, &y, 2.0 * n0, priors);
    let post = gaussian_posterior_exact(&model).expect("positive definite");
    let mut worst: f64 = 0.0;
    for k in 0..cb.users() {
        for d in 0..cb.nonzeros {
            for n in 0..symbols {
                let got = det.symbol_belief(k, d, n);
                let want = post.marginal(det.graph().x_index(k, d, n));
                worst = worst.max((got.mean - want.mean).norm()).max((got.var - want.var).abs());
            }
        }
    }
    for j in 0..cb.resources() {
        for n in 0..symbols {
            let got = det.antenna_belief(j, n);
            let row: DVector<Complex64> = s_map.row(j * symbols + n).transpose();
            let want = post.combination(&row);
            worst = worst.max((got.mean - want.mean).norm()).max((got.var - want.var).abs());
        }
    }
    worst
}

/// A random instance of one of the loop-free families: flat channels with
/// any indicator, or a single antenna with at most two taps.
pub fn random_tree_instance<R: Rng>(rng: &mut R) -> (Codebook, usize, usize) {
    if rng.random_bool(0.5) {
        (Codebook::paper_default(), 1, rng.random_range(1..=4))
    } else {
        let users = rng.random_range(1..=3);
        let f = IndicatorMatrix::new(vec![vec![1; users]]).expect("single row");
        let cb = build_codebook(f, 2, &bpsk_constellation()).expect("valid codebook");
        (cb, rng.random_range(1..=2), rng.random_range(1..=6))
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Runs the quick suite.
pub fn run_selftest(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let worst = (0..20)
        .map(|_| {
            let (cb, taps, n) = random_tree_instance(&mut rng);
            tree_exactness_error(&cb, taps, n, &mut rng)
        })
        .fold(0.0, f64::max);
    out.push(check("tree beliefs match exact posterior", worst < 1e-9, format!("max error {worst:.2e}")));

    let cb = Codebook::paper_default();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(0..6);
        let j = cb.indicator.support(k)[0];
        let support: Vec<Complex64> = (0..cb.size).map(|m| cb.entry(k, m, j)).collect();
        let probs: Vec<f64> = (0..cb.size).map(|_| rng.random_range(0.01..1.0)).collect();
        let prior = DiscretePrior::new(support.clone(), probs.clone());
        let cavity = GaussianMsg::new(complex_gaussian(&mut rng, 1.0), rng.random_range(0.1..3.0));
        let proj = ep_project(&prior, &cavity).expect("proper prior");
        // belief = message · cavity, compared with the direct weighted sums
        let w: Vec<f64> = support
            .iter()
            .zip(&probs)
            .map(|(c, p)| p * (-(c - cavity.mean).norm_sqr() / cavity.var).exp())
            .collect();
        let z: f64 = w.iter().sum();
        let mean: Complex64 = support.iter().zip(&w).map(|(c, wi)| c * wi / z).sum();
        let var: f64 = support.iter().zip(&w).map(|(c, wi)| (c - mean).norm_sqr() * wi / z).sum();
        if !proj.safeguarded {
            let b = scma_core::gaussian::gmul(proj.msg, cavity);
            worst = worst.max((b.mean - mean).norm()).max((b.var - var).abs());
        }
    }
    out.push(check("EP projection moments", worst < 1e-10, format!("max error {worst:.2e}")));

    let (gap, time) = {
        let start = std::time::Instant::now();
        let cn = solve_counting_numbers(&GraphShape::chain(8));
        let gap = cn.map_or(f64::INFINITY, |c| {
            c.gammas
                .iter()
                .map(|&(a, b)| (a - 1.0).abs().max((b - 1.0).abs()))
                .fold(c.objective.abs(), f64::max)
        });
        (gap, start.elapsed().as_secs_f64())
    };
    out.push(check("chain counting numbers are Bethe", gap < 1e-8, format!("gap {gap:.2e} in {time:.3} s")));

    let scn = Scenario {
        cb: Codebook::paper_default(),
        code: None,
        taps: 3,
        uncoded_symbols: 8,
    };
    let shape = scma_core::receiver::StretchedGraph::new(&scn.cb, scn.taps, scn.symbols()).shape();
    let bethe = CountingNumbers::bethe(&shape);
    let mut identical = true;
    for trial in 0..3 {
        let f = draw_frame(&scn, 0.05, seed, trial);
        let mut a = Detector::new(&scn.cb, scn.taps, scn.symbols(), ReceiverConfig::default(), None).expect("plain");
        let mut b = Detector::new(&scn.cb, scn.taps, scn.symbols(), ReceiverConfig::default(), Some(&bethe)).expect("bethe");
        a.load(f.channel.user(0), &f.rx.y[0], 0.05).expect("dims");
        b.load(f.channel.user(0), &f.rx.y[0], 0.05).expect("dims");
        for _ in 0..3 {
            a.iterate(None);
            b.iterate(None);
        }
        identical &= (0..6).all(|k| {
            a.extrinsic_llrs(k)
                .iter()
                .zip(b.extrinsic_llrs(k))
                .all(|(x, y)| x.to_bits() == y.to_bits())
        });
    }
    out.push(check("unit counting numbers reproduce plain detection", identical, "3 frames".into()));

    let mut worst_c: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    for _ in 0..10 {
        let Some(topo) = Topology::random_connected(6, 20.0, 10.0, 10_000, &mut rng) else {
            continue;
        };
        let init: Vec<Vec<f64>> = (0..6).map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let avg = network_average(&init);
        let mut links = Links::new(LinkModel::PERFECT, &init, ChaCha8Rng::seed_from_u64(0));
        let mut st = init.clone();
        for p in 1..=200 {
            st = consensus_round(&st, &topo, &mut links, p, false);
        }
        let mut admm = AdmmState::new(init, &topo, 1.0, true);
        for _ in 0..200 {
            admm.round(&topo, &mut links);
        }
        let dist = |a: &[f64]| a.iter().zip(&avg).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        worst_c = st.iter().map(|s| dist(s)).fold(worst_c, f64::max);
        worst_a = admm.theta.iter().map(|s| dist(s)).fold(worst_a, f64::max);
    }
    out.push(check("belief consensus reaches the average", worst_c < 1e-6, format!("max distance {worst_c:.2e}")));
    out.push(check("ADMM reaches the average", worst_a < 1e-6, format!("max distance {worst_a:.2e}")));
    out
}
