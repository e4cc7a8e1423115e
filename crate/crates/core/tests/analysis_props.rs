mod common;

use common::{run, virtual_host};
use daq_core::analysis::{align, compare, Series};
use daq_core::conversion::LinearMap;
use daq_core::persistence::{write_log, LogPolicy, LogSchema};
use daq_core::sim::{ChannelSource, SimConfig, Waveform};
use proptest::prelude::*;

fn arb_series() -> impl Strategy<Value = Series> {
    prop::collection::vec((0.01f64..2.0, -100.0f64..100.0), 1..60).prop_map(|steps| {
        let mut t = 0.0;
        let pts = steps
            .into_iter()
            .map(|(dt, v)| {
                t += dt;
                (t, v)
            })
            .collect();
        Series::new("u", pts).unwrap()
    })
}

fn with_values(grid: &Series, vals: &[f64]) -> Series {
    let pts = grid.points().iter().zip(vals.iter().cycle()).map(|(&(t, _), &v)| (t, v)).collect();
    Series::new("u", pts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn self_comparison_is_exactly_zero(a in arb_series()) {
        let s = compare(&a, &a).unwrap();
        prop_assert_eq!((s.max_abs_diff, s.mean_abs_diff, s.rmse), (0.0, 0.0, 0.0));
        prop_assert_eq!(s.n_points, a.len());
    }

    #[test]
    fn stats_are_ordered(a in arb_series(), b in arb_series()) {
        if let Ok(s) = compare(&a, &b) {
            prop_assert!(s.max_abs_diff >= s.mean_abs_diff - 1e-12);
            prop_assert!(s.mean_abs_diff >= 0.0 && s.rmse >= 0.0);
            prop_assert!(s.rmse <= s.max_abs_diff + 1e-12);
        }
    }

    #[test]
    fn shift_equivariance(a in arb_series(), b in arb_series(), c in -1e3f64..1e3) {
        if let Ok(s) = compare(&a, &b) {
            let t = compare(&a.offset(c), &b.offset(c)).unwrap();
            let tol = 1e-9 * (1.0 + c.abs());
            prop_assert_eq!(s.n_points, t.n_points);
            prop_assert!((s.max_abs_diff - t.max_abs_diff).abs() <= tol);
            prop_assert!((s.mean_abs_diff - t.mean_abs_diff).abs() <= tol);
            prop_assert!((s.rmse - t.rmse).abs() <= tol);
        }
    }

    #[test]
    fn symmetric_on_a_shared_grid(a in arb_series(), vals in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let b = with_values(&a, &vals);
        let ab = compare(&a, &b).unwrap();
        let ba = compare(&b, &a).unwrap();
        prop_assert_eq!(ab.max_abs_diff, ba.max_abs_diff);
        prop_assert_eq!(ab.rmse, ba.rmse);
    }

    #[test]
    fn aligned_times_lie_in_both_spans(a in arb_series(), b in arb_series()) {
        if let Ok(pairs) = align(&a, &b) {
            let (lo, hi) = b.span();
            prop_assert!(pairs.iter().all(|p| p.t >= lo && p.t <= hi));
        }
    }
}

#[test]
fn noiseless_rh_run_matches_truth_within_quantization() {
    let sim = SimConfig::default().with_source(
        1,
        ChannelSource::new(
            Waveform::Sine { offset: 50.0, amplitude: 30.0, period_s: 600.0 },
            0.0,
            LinearMap::humidity(),
        )
        .unwrap(),
    );
    let host = virtual_host();
    let (_, c, dev) = run(&sim, &host, 2_000);
    let truth = Series::from_truth(dev.truth(), 1).unwrap();

    // In memory: quantization only.
    let t0 = c.records[0].host_time;
    let acquired = Series::new(
        "%RH",
        c.records.iter().map(|r| (r.host_time.seconds_since(t0), r.value(1).unwrap().value)).collect(),
    )
    .unwrap();
    let bound = LinearMap::humidity().lsb_in_units() / 2.0;
    let s = compare(&acquired, &truth).unwrap();
    assert_eq!(s.n_points, 2_000);
    assert!(s.max_abs_diff <= bound + 1e-9, "{} > {bound}", s.max_abs_diff);

    // Through a log file: plus the 3-decimal rounding of the stored value.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rh.csv");
    let schema = LogSchema::new(&[1], &host.maps());
    write_log(std::fs::File::create(&path).unwrap(), &schema, &c.records, &LogPolicy::new(".")).unwrap();
    let truth_path = dir.path().join("truth.csv");
    dev.truth().write_csv_file(&truth_path).unwrap();
    let from_log = Series::from_file(&path, 1).unwrap();
    let from_truth = Series::from_file(&truth_path, 1).unwrap();
    let s = compare(&from_log, &from_truth).unwrap();
    assert!(s.max_abs_diff <= bound + 0.5e-3 + 1e-9);
}
