use super::*;
use crate::channel::{complex_gaussian, n0_from_ebn0};
use crate::codec::{bpsk_constellation, build_codebook, qpsk_constellation, IndicatorMatrix};
use crate::counting::{solve_counting_numbers, CountingNumbers};
use crate::oracle::{gaussian_posterior_exact, stretched_linear_model};
use crate::sim::{draw_frame, Scenario};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_prior(rng: &mut ChaCha8Rng) -> GaussianMsg {
    GaussianMsg::new(complex_gaussian(rng, 1.0), rng.random_range(0.2..2.0))
}

/// Runs fixed-prior detection on a random instance and compares every belief
/// with the exact joint-Gaussian posterior.
fn check_tree(cb: &Codebook, taps: usize, symbols: usize, rng: &mut ChaCha8Rng) -> f64 {
    let h: Vec<Vec<Complex64>> = (0..cb.resources())
        .map(|_| (0..taps).map(|_| complex_gaussian(rng, 1.0)).collect())
        .collect();
    let y: Vec<Complex64> = (0..symbols + taps - 1).map(|_| complex_gaussian(rng, 2.0)).collect();
    let n0 = rng.random_range(0.05..0.5);
    let mut det = Detector::new(cb, taps, symbols, ReceiverConfig::default(), None).unwrap();
    det.load(&h, &y, n0).unwrap();
    let priors: Vec<GaussianMsg> = (0..det.graph().x_var.len()).map(|_| random_prior(rng)).collect();
    det.set_gaussian_priors(priors.clone());
    det.iterate(None);
    det.iterate(None);

    let (model, s_map) = stretched_linear_model(cb, &h, &y, 2.0 * n0, priors);
    let post = gaussian_posterior_exact(&model).unwrap();
    let mut worst: f64 = 0.0;
    let d = cb.nonzeros;
    for k in 0..cb.users() {
        for di in 0..d {
            for n in 0..symbols {
                let got = det.symbol_belief(k, di, n);
                let want = post.marginal(det.graph().x_index(k, di, n));
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

#[test]
fn flat_channel_beliefs_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cb = Codebook::paper_default();
    for _ in 0..10 {
        assert!(check_tree(&cb, 1, 3, &mut rng) < 1e-9);
    }
}

#[test]
fn single_antenna_two_tap_beliefs_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = IndicatorMatrix::new(vec![vec![1, 1]]).unwrap();
    let cb = build_codebook(f, 2, &bpsk_constellation()).unwrap();
    for _ in 0..10 {
        assert!(check_tree(&cb, 2, 5, &mut rng) < 1e-9);
    }
}

#[test]
fn loopy_graph_differs_from_exact_posterior() {
    // sanity check that the comparison above has teeth
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cb = Codebook::paper_default();
    let worst = (0..5).map(|_| check_tree(&cb, 3, 4, &mut rng)).fold(0.0, f64::max);
    assert!(worst > 1e-6, "{worst}");
}

// One receive antenna carries every user, so only lightly loaded systems are
// decodable from a single measurement. Two BPSK users on two antennas are.
fn two_user_bpsk() -> Scenario {
    Scenario {
        cb: build_codebook(IndicatorMatrix::identity(2), 2, &bpsk_constellation()).unwrap(),
        code: None,
        taps: 2,
        uncoded_symbols: 12,
    }
}

fn single_user_coded() -> Scenario {
    Scenario {
        cb: build_codebook(IndicatorMatrix::identity(1), 4, &qpsk_constellation()).unwrap(),
        code: Some(LdpcCode::paper_default(280, 11).unwrap()),
        taps: 3,
        uncoded_symbols: 0,
    }
}

fn paper_coded() -> Scenario {
    Scenario {
        cb: Codebook::paper_default(),
        code: Some(LdpcCode::paper_default(140, 11).unwrap()),
        taps: 3,
        uncoded_symbols: 0,
    }
}

#[test]
fn high_snr_uncoded_detection_is_error_free() {
    let scn = two_user_bpsk();
    let n0 = n0_from_ebn0(25.0, 1.0, 1);
    let cfg = ReceiverConfig {
        outer_iters: 4,
        ..ReceiverConfig::default()
    };
    let mut det = Detector::new(&scn.cb, scn.taps, scn.symbols(), cfg, None).unwrap();
    for trial in 0..5 {
        let f = draw_frame(&scn, n0, 4, trial);
        let dec = detect_symbols(&mut det, f.channel.user(0), &f.rx.y[0], n0).unwrap();
        assert_eq!(dec, f.symbols);
    }
}

#[test]
fn high_snr_coded_detection_is_error_free() {
    let scn = single_user_coded();
    let code = scn.code.clone().unwrap();
    let n0 = n0_from_ebn0(12.0, code.rate(), 2);
    let mut det = Detector::new(&scn.cb, scn.taps, scn.symbols(), ReceiverConfig::default(), None).unwrap();
    let f = draw_frame(&scn, n0, 6, 0);
    let out = detect_frame(&mut det, 0, f.channel.user(0), &f.rx.y[0], n0, &code, Some(&f.info[0])).unwrap();
    assert_eq!(out.info_bits, f.info);
    assert_eq!(out.diagnostics.len(), 10);
    assert_eq!(out.diagnostics.last().unwrap().ber, Some(0.0));
}

#[test]
fn gauss_approx_mode_decodes_single_user() {
    // without decoder feedback the moment-matched prior never sharpens, so
    // this mode is only meaningful in the coded loop
    let scn = single_user_coded();
    let code = scn.code.clone().unwrap();
    let n0 = n0_from_ebn0(12.0, code.rate(), 2);
    let cfg = ReceiverConfig {
        prior_mode: PriorMode::GaussApprox,
        ..ReceiverConfig::default()
    };
    let mut det = Detector::new(&scn.cb, scn.taps, scn.symbols(), cfg, None).unwrap();
    let f = draw_frame(&scn, n0, 8, 0);
    let out = detect_frame(&mut det, 0, f.channel.user(0), &f.rx.y[0], n0, &code, None).unwrap();
    assert_eq!(out.info_bits, f.info);
}

#[test]
fn bethe_numbers_reproduce_plain_detection_bitwise() {
    let scn = paper_coded();
    let code = scn.code.clone().unwrap();
    let n0 = n0_from_ebn0(4.0, code.rate(), 2);
    let shape = StretchedGraph::new(&scn.cb, scn.taps, scn.symbols()).shape();
    let bethe = CountingNumbers::bethe(&shape);
    let cfg = ReceiverConfig::default();
    let mut plain = Detector::new(&scn.cb, scn.taps, scn.symbols(), cfg, None).unwrap();
    let mut conv = Detector::new(&scn.cb, scn.taps, scn.symbols(), cfg, Some(&bethe)).unwrap();
    for trial in 0..3 {
        let f = draw_frame(&scn, n0, 21, trial);
        plain.load(f.channel.user(0), &f.rx.y[0], n0).unwrap();
        conv.load(f.channel.user(0), &f.rx.y[0], n0).unwrap();
        for _ in 0..3 {
            let a = plain.iterate(Some(&code));
            let b = conv.iterate(Some(&code));
            assert_eq!(a.info_bits, b.info_bits);
            for k in 0..6 {
                let la = plain.extrinsic_llrs(k);
                let lb = conv.extrinsic_llrs(k);
                assert!(la.iter().zip(&lb).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }
}

#[test]
fn convexified_detection_recovers_clean_frames() {
    let scn = two_user_bpsk();
    let shape = StretchedGraph::new(&scn.cb, scn.taps, scn.symbols()).shape();
    let cn = solve_counting_numbers(&shape).unwrap();
    assert!(cn.validate().valid);
    let n0 = n0_from_ebn0(25.0, 1.0, 1);
    let mut det = Detector::new(&scn.cb, scn.taps, scn.symbols(), ReceiverConfig::default(), Some(&cn)).unwrap();
    let f = draw_frame(&scn, n0, 12, 0);
    let dec = detect_symbols(&mut det, f.channel.user(1), &f.rx.y[1], n0).unwrap();
    assert_eq!(dec, f.symbols);
}

#[test]
fn extrinsic_llrs_point_at_transmitted_bits() {
    let scn = two_user_bpsk();
    let n0 = n0_from_ebn0(25.0, 1.0, 1);
    let mut det = Detector::new(&scn.cb, scn.taps, scn.symbols(), ReceiverConfig::default(), None).unwrap();
    let f = draw_frame(&scn, n0, 13, 0);
    det.load(f.channel.user(0), &f.rx.y[0], n0).unwrap();
    det.iterate(None);
    det.iterate(None);
    for k in 0..2 {
        let llrs = det.extrinsic_llrs(k);
        for (l, &b) in llrs.iter().zip(&f.coded[k]) {
            // positive LLR favours bit 0
            assert_eq!(*l > 0.0, b == 0, "user {k}");
        }
    }
}

#[test]
fn load_rejects_wrong_lengths() {
    let cb = Codebook::paper_default();
    let mut det = Detector::new(&cb, 2, 4, ReceiverConfig::default(), None).unwrap();
    let h = vec![vec![Complex64::new(1.0, 0.0); 2]; 4];
    assert!(det.load(&h, &[Complex64::new(0.0, 0.0); 4], 0.1).is_err());
    assert!(det.load(&h[..3], &[Complex64::new(0.0, 0.0); 5], 0.1).is_err());
}

#[test]
fn receiver_names_round_trip() {
    for k in [
        ReceiverKind::StretchBpEp,
        ReceiverKind::GaussApproxBp,
        ReceiverKind::ConvBpEp,
    ] {
        assert_eq!(k.name().parse::<ReceiverKind>().unwrap(), k);
    }
    assert!("mmse".parse::<ReceiverKind>().is_err());
}

#[test]
fn stepwise_api_matches_iterate() {
    let scn = paper_coded();
    let n0 = n0_from_ebn0(8.0, 1.0, 2);
    let f = draw_frame(&scn, n0, 14, 0);
    let mut a = Detector::new(&scn.cb, scn.taps, scn.symbols(), ReceiverConfig::default(), None).unwrap();
    let mut b = a.clone();
    a.load(f.channel.user(2), &f.rx.y[2], n0).unwrap();
    b.load(f.channel.user(2), &f.rx.y[2], n0).unwrap();
    a.iterate(None);
    b.front_half();
    // passing the local messages explicitly must change nothing
    let local = b.local_messages();
    b.finish_iteration(Some(&local), None);
    for k in 0..6 {
        assert_eq!(a.extrinsic_llrs(k), b.extrinsic_llrs(k));
    }
}
