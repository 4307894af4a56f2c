use cmdr_core::eval::{run_batch, self_play_rate, BatchCase, OpponentChoice};
use cmdr_core::rts::MapPreset;

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

#[test]
fn mirror_match_is_roughly_even() {
    let report = run_batch(&[BatchCase::new("balanced_macro", OpponentChoice::Mirror)], &seeds(50)).unwrap();
    let rate = report.rows[0].rate();
    assert!((0.35..=0.65).contains(&rate), "mirror win rate {rate}: {:?}", report.rows[0]);
}

#[test]
fn difficulty_six_beats_difficulty_one() {
    let rate = self_play_rate(1, 6, MapPreset::Corner, &seeds(50));
    assert!(rate < 0.5, "difficulty 1 won {rate} of games against difficulty 6");
}

/// Against a fixed weaker side, a stronger opponent never does worse.
#[test]
fn wider_difficulty_gap_never_helps_the_weaker_side() {
    let s = seeds(50);
    let rates: Vec<f64> = (2..=6).map(|d| self_play_rate(1, d, MapPreset::Corner, &s)).collect();
    for w in rates.windows(2) {
        assert!(w[1] <= w[0], "difficulty 1 win rates by opponent 2..=6: {rates:?}");
    }
}
