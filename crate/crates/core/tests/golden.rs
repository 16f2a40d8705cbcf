//! The CSV layout is part of the interface; these files pin it.

use std::path::Path;

use mlsync::estimator::Method;
use mlsync::evaluation::{Crlb, MethodSummary, SnrSummary, SweepSummary};
use mlsync::report::{render_csvs, CSV_FILES};

fn method(method: Method, scale: f64) -> MethodSummary {
    MethodSummary {
        method,
        mse_epsilon: Some(2.5e-3 * scale),
        mse_eta: Some(4e-8 * scale),
        mse_theta: Some(0.5 * scale),
        mse_channel: Some(1.5 * scale),
        se_epsilon: None,
        se_eta: None,
        se_channel: None,
        ptf: Some(0.125 * scale),
        completed: 8,
        failed: 0,
    }
}

fn summary() -> SweepSummary {
    let rows = [
        (0.0, 1.0, Some(1.0)),
        (12.5, 0.5, None),
        (-3.0, 2.0, Some(0.25)),
    ]
    .iter()
    .map(|&(snr_db, scale, bound)| SnrSummary {
        snr_db,
        trials: 8,
        methods: vec![
            method(Method::Mlsp, scale),
            method(Method::Mlls, 2.0 * scale),
        ],
        crlb: bound.map(|b: f64| Crlb {
            epsilon: 1e-3 * b,
            eta: 2e-9 * b,
            trace_h: 0.75 * b,
        }),
        crlb_trials: if bound.is_some() { 8 } else { 0 },
    })
    .collect();
    SweepSummary {
        timing_p: 2,
        estimators: vec![Method::Mlsp, Method::Mlls],
        rows,
    }
}

#[test]
fn csv_output_matches_golden_files() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for (name, body) in CSV_FILES.iter().zip(render_csvs(&summary())) {
        let golden = std::fs::read_to_string(dir.join(name)).unwrap();
        assert_eq!(body, golden, "{name}");
    }
}

#[test]
fn rows_parse_as_finite_numbers_or_empty_bounds() {
    for body in render_csvs(&summary()) {
        let mut lines = body.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        for line in lines {
            for (col, cell) in header.iter().zip(line.split(',')) {
                if cell.is_empty() {
                    assert_eq!(*col, "crlb");
                } else {
                    assert!(cell.parse::<f64>().unwrap().is_finite());
                }
            }
        }
    }
}
