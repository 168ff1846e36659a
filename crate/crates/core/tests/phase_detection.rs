use netsir::model::{discrete_step, GroupFractions, GroupMatrix, ModelParams, Trajectory};
use netsir::phase::{detect_phases, PhaseConfig};

fn base() -> GroupMatrix {
    GroupMatrix::from_rows(&[vec![0.12, 0.04], vec![0.05, 0.10]]).unwrap()
}

/// Noiseless 120-day series; `factor(k)` scales the contact matrix used on day `k`.
fn series(factor: impl Fn(usize) -> f64) -> Trajectory {
    let gamma = vec![0.1, 0.1];
    let mut state =
        GroupFractions::new(vec![0.599, 0.399], vec![1e-3, 1e-3], vec![0.0, 0.0]).unwrap();
    let mut times = vec![0.0];
    let mut states = vec![state.clone()];
    for k in 0..120 {
        let params = ModelParams::mean_field(base().scaled(factor(k)), gamma.clone()).unwrap();
        state = discrete_step(&params, &state).unwrap();
        times.push((k + 1) as f64);
        states.push(state.clone());
    }
    Trajectory::new(times, states).unwrap()
}

#[test]
fn single_change_found_near_day_sixty() {
    let data = series(|k| if k >= 60 { 2.0 } else { 1.0 });
    let report = detect_phases(&data, &PhaseConfig::default()).unwrap();
    assert_eq!(report.boundaries.len(), 1);
    assert!((55..=65).contains(&report.boundaries[0]));
}

#[test]
fn constant_parameters_give_no_boundary() {
    let data = series(|_| 1.0);
    let report = detect_phases(&data, &PhaseConfig::default()).unwrap();
    assert!(report.boundaries.is_empty());
    assert!(report.windows.iter().all(|w| w.ratio == Some(0.0)));
}

#[test]
fn close_changes_merge() {
    let data = series(|k| match k {
        0..50 => 1.0,
        50..60 => 1.5,
        _ => 2.5,
    });
    let report = detect_phases(&data, &PhaseConfig::default()).unwrap();
    assert_eq!(report.boundaries.len(), 1, "{:?}", report.windows);
    for pair in report.boundaries.windows(2) {
        assert!(pair[1] - pair[0] > 20);
    }
}

#[test]
fn windows_start_at_step_and_fit_timeline() {
    let data = series(|_| 1.0);
    let report = detect_phases(&data, &PhaseConfig::default()).unwrap();
    let ps: Vec<usize> = report.windows.iter().map(|w| w.p).collect();
    assert_eq!(ps.first(), Some(&5));
    assert_eq!(ps.last(), Some(&90));
    assert!(ps.windows(2).all(|w| w[1] - w[0] == 5));
}

#[test]
fn deterministic_and_monotone_in_threshold() {
    let data = series(|k| if k >= 60 { 2.0 } else { 1.0 });
    let a = detect_phases(&data, &PhaseConfig::default()).unwrap();
    let b = detect_phases(&data, &PhaseConfig::default()).unwrap();
    assert_eq!(a, b);
    let strict = detect_phases(
        &data,
        &PhaseConfig {
            delta: 1e6,
            ..PhaseConfig::default()
        },
    )
    .unwrap();
    assert!(strict.boundaries.iter().all(|p| a.boundaries.contains(p)));
}

#[test]
fn short_data_rejected() {
    let data = series(|_| 1.0).slice(0, 30).unwrap();
    assert!(matches!(
        detect_phases(&data, &PhaseConfig::default()),
        Err(netsir::Error::DataTooShort {
            len: 31,
            needed: 36
        })
    ));
}
