use itm_core::evolve::{init_state, WaveState};
use itm_core::geometry::{make_grid, ScalarField};
use itm_core::media::{ItmSchedule, ItmWindow, Medium};
use itm_core::refocus::{refocus_metrics, refocus_prediction, remainder_experiment};

fn scenario() -> (Medium, WaveState) {
    let g = make_grid(1, 20.0, 512).unwrap();
    let u0 = ScalarField::from_fn(&g, |x| (-(x[0] - 10.0).powi(2) / 0.25).exp());
    let u1 = ScalarField::from_fn(&g, |x| {
        let d = x[0] - 10.0;
        -2.0 * d / 0.25 * (-d * d / 0.25).exp()
    });
    (Medium::free(&g), init_state(&u0, &u1).unwrap())
}

#[test]
fn in_window_deviation_scales_with_width() {
    let (medium, initial) = scenario();
    let mut scaled = Vec::new();
    for eps in [0.1, 0.05, 0.025, 0.0125] {
        let sched = ItmSchedule::single(ItmWindow::new(1.5, eps, 0.5).unwrap());
        let run = remainder_experiment(&initial, &medium, &sched, &[3.0], 0.5).unwrap();
        assert!(run.deviation.iter().all(|&(t, _)| t >= 1.5 - eps / 2.0 - 1e-12 && t <= 1.5 + eps / 2.0 + 1e-12));
        let peak = run.deviation.iter().map(|d| d.1).fold(0.0, f64::max);
        scaled.push(peak / eps);
    }
    // deviation / eps settles on its leading coefficient
    let steps: Vec<f64> = scaled.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
    for pair in steps.windows(2) {
        assert!(pair[1] < 0.6 * pair[0], "deviation / eps {scaled:?}");
    }
    assert!(scaled.iter().all(|&s| s < 10.0));
}

#[test]
fn remainder_vanishes_before_the_window() {
    let (medium, initial) = scenario();
    let sched = ItmSchedule::single(ItmWindow::new(1.5, 0.1, 0.5).unwrap());
    let run = remainder_experiment(&initial, &medium, &sched, &[1.0, 3.0], 0.5).unwrap();
    assert_eq!(run.times, vec![1.0, 3.0]);
    assert_eq!(run.w[0].max_abs(), 0.0);
    assert_eq!(run.big_w[0].max_abs(), 0.0);
    assert!(run.w[1].max_abs() > 0.0);
}

#[test]
fn remainder_is_zero_without_a_mirror() {
    let (medium, initial) = scenario();
    let sched = ItmSchedule::single(ItmWindow::new(1.5, 0.1, 0.0).unwrap());
    let run = remainder_experiment(&initial, &medium, &sched, &[3.0], 0.5).unwrap();
    assert_eq!(run.w[0].max_abs(), 0.0);
    assert_eq!(run.big_w[0].max_abs(), 0.0);
}

#[test]
fn metrics_of_an_exact_image() {
    let (_, initial) = scenario();
    let p = refocus_prediction(&initial.ut, 0.5);
    let r = refocus_metrics(&p, &p, [10.0, 0.0], 1.5).unwrap();
    assert_eq!(r.peak_location_error, 0.0);
    assert!((r.amplitude_ratio - 1.0).abs() < 1e-15);
    assert!((r.shape_correlation - 1.0).abs() < 1e-12);

    let flipped = refocus_metrics(&p.scale(-1.0), &p, [10.0, 0.0], 1.5).unwrap();
    assert!(flipped.shape_correlation < -0.99);
    // u₁ is odd about the source, so the same-sign extremum of the flipped
    // field sits on the other lobe
    assert!(flipped.peak_location_error > 0.0);
}

#[test]
fn metrics_reject_an_empty_ball() {
    let (_, initial) = scenario();
    let p = refocus_prediction(&initial.ut, 0.5);
    assert!(refocus_metrics(&p, &p, [10.01, 0.0], 1e-4).is_err());
}
