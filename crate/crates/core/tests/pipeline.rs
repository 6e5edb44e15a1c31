//! End-to-end: simulate, sample, tally, then bound the key rate.

use msqkd::channels::DepolarizingChannel;
use msqkd::keyrate::{depolarizing_key_rate, key_rate};
use msqkd::protocol::{extract_raw_key, run_protocol, TRANSCRIPT_HEADER};
use msqkd::stats::predict_from_attack;
use msqkd::{AttackModel, Cell, Mode, Noise, ProtocolConfig};

#[test]
fn estimated_rate_approaches_closed_form() {
    let (qf, qr) = (0.03, 0.03);
    let cfg =
        ProtocolConfig::new(400_000, 0.5, 0.5, Noise::depolarizing(qf, qr).unwrap(), 17).unwrap();
    let run = run_protocol(&cfg).unwrap();
    assert!(!run.sampling.abort);
    let estimated = key_rate(&run.stats).unwrap();
    let exact = depolarizing_key_rate(qf, qr).unwrap();
    assert!(
        (estimated.best_rate() - exact.best_rate()).abs() < 0.05,
        "{} vs {}",
        estimated.best_rate(),
        exact.best_rate()
    );
    assert!((estimated.h_ab_noflip - exact.h_ab_noflip).abs() < 0.02);
}

#[test]
fn raw_key_error_rate_matches_h_ab_inputs() {
    let cfg = ProtocolConfig::new(
        100_000,
        0.5,
        0.1,
        Noise::depolarizing(0.1, 0.0).unwrap(),
        23,
    )
    .unwrap();
    let run = run_protocol(&cfg).unwrap();
    let no_flip = extract_raw_key(&run.records, Mode::NoFlip);
    let flip = extract_raw_key(&run.records, Mode::Flip);
    let n = no_flip.len() as f64;
    let err = no_flip.mismatches() as f64 / n;
    let sigma = (0.1 * 0.9 / n).sqrt();
    assert!((err - 0.1).abs() < 4.0 * sigma, "error rate {err}");
    // forward flips are announced by messages 2/3, so FLIP corrects them all
    assert_eq!(flip.mismatches(), 0);
}

#[test]
fn simulated_attack_reproduces_its_predicted_statistics() {
    let attack = AttackModel::honest_with_reverse_noise(DepolarizingChannel::new(0.2).unwrap());
    let predicted = predict_from_attack(&attack);
    let cfg = ProtocolConfig::new(60_000, 0.5, 0.5, Noise::attack(attack), 29).unwrap();
    let run = run_protocol(&cfg).unwrap();
    for cell in Cell::all() {
        let p = predicted.get(cell).unwrap();
        let n = run.stats.row_samples(cell).unwrap() as f64;
        // rows conditioned on α_01 = α_10 = 0 never occur
        if n == 0.0 {
            assert!(
                matches!(cell, Cell::Msg(0, 1, _) | Cell::Msg(1, 0, _)),
                "{cell}"
            );
            assert!(run.stats.get(cell).is_none());
            continue;
        }
        let est = run.stats.get(cell).unwrap();
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!(
            (est - p).abs() <= 4.0 * sigma + 1e-12,
            "{cell}: {est} vs {p}"
        );
    }
}

#[test]
fn transcript_header_is_stable() {
    assert_eq!(
        TRANSCRIPT_HEADER,
        "index,choice_a,choice_b,outcome_a,outcome_b,msg,in_sample"
    );
}
