use ghostlab::protocol::{abrupt_drops, detect_stuck, run_training, EpochLog, Outcome, RunRecord, TrainingSpec, ABRUPT_DROP};
use ghostlab::rnn::{InitSpec, ReadoutKind, RnnParams, TaskSpec};
use ghostlab::toy::{optimal_r, train_toy_gd};
use proptest::prelude::*;

#[test]
fn toy_escape_fires_the_drop_detector() {
    let rs = optimal_r(100.0).unwrap();
    let rec = train_toy_gd(100.0, 10.0 * rs, 1e-10, 3000).unwrap();
    let drops = abrupt_drops(&rec.loss_trace(), ABRUPT_DROP);
    assert!(!drops.is_empty());
    assert!((1000..=2500).contains(&drops[0]), "{drops:?}");
}

#[test]
fn gradual_full_rank_run_does_not_fire() {
    let spec = InitSpec::new(100, 100, ReadoutKind::LinearSigmoid);
    for seed in 0..2 {
        let p = RnnParams::init(seed, &spec).unwrap();
        let mut rec = RunRecord::new(seed, "test");
        run_training(&p, &TaskSpec::default(), &TrainingSpec::new(3e-5, 2000), &mut rec).unwrap();
        let losses = rec.losses();
        assert!(losses.last() < losses.first(), "seed {seed} did not descend");
        assert!(rec.abrupt_drops().is_empty(), "seed {seed}: {:?}", rec.abrupt_drops());
    }
}

fn log(epoch: usize, accuracy: f64) -> EpochLog {
    EpochLog {
        epoch,
        loss: 1.0,
        grad_norm: 0.0,
        accuracy,
        confidence: None,
        fp_count: None,
        ghost: None,
    }
}

proptest! {
    #[test]
    fn smooth_decay_never_fires(start in 1.0f64..1e3, rate in 0.0f64..0.2, len in 2usize..500) {
        let losses: Vec<f64> = (0..len).map(|i| start * (1.0 - rate).powi(i as i32)).collect();
        prop_assert!(abrupt_drops(&losses, ABRUPT_DROP).is_empty());
    }

    #[test]
    fn single_cliff_fires_once(start in 1.0f64..1e3, at in 1usize..100, keep in 0.0f64..0.74) {
        let losses: Vec<f64> = (0..100).map(|i| if i < at { start } else { start * keep }).collect();
        prop_assert_eq!(abrupt_drops(&losses, ABRUPT_DROP), vec![at]);
    }

    #[test]
    fn stuck_iff_whole_window_at_chance(accs in prop::collection::vec(0.0f64..1.0, 50..120)) {
        let mut rec = RunRecord::new(0, "test");
        rec.logs = accs.iter().enumerate().map(|(i, &a)| log(i, a)).collect();
        let tail_ok = accs[accs.len() - 50..].iter().all(|&a| a <= 0.5);
        prop_assert_eq!(detect_stuck(&rec, 50, 0.5).unwrap(), tail_ok);
        if tail_ok {
            prop_assert_eq!(rec.outcome(), Outcome::Stuck);
        }
    }
}

#[test]
fn stuck_outranks_learned() {
    let mut rec = RunRecord::new(0, "test");
    rec.logs = (0..100).map(|i| log(i, if i == 10 { 1.0 } else { 0.5 })).collect();
    assert!(rec.learned());
    assert_eq!(rec.epochs_to_learned(), Some(10));
    assert_eq!(rec.outcome(), Outcome::Stuck);
    rec.logs.truncate(20);
    assert!(detect_stuck(&rec, 50, 0.5).is_err());
    assert_eq!(rec.outcome(), Outcome::Learned);
}
