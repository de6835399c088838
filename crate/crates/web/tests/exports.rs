use serde_json::Value;
use servo_smc_web::{compare_json, simulate_json, switching_curve_json, Knobs};

const NOMINAL: Knobs = Knobs {
    eta: 1.0,
    phi: 0.05,
    d_gain: 0.0,
    d_tau: 0.0,
    sign_switching: false,
};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn simulate_returns_trace_metrics_and_report() {
    let v = parse(simulate_json("step", NOMINAL).unwrap());
    assert_eq!(v["trace"]["t"].as_array().unwrap().len(), 500);
    assert_eq!(v["trace"]["y"].as_array().unwrap().len(), 500);
    assert!(v["metrics"]["iae"].as_f64().unwrap() > 0.0);
    assert_eq!(v["stability"]["eta"].as_f64(), Some(1.0));
    let varying = parse(simulate_json("varying", NOMINAL).unwrap());
    assert_eq!(varying["trace"]["t"].as_array().unwrap().len(), 1200);
}

#[test]
fn simulate_rejects_bad_input() {
    assert!(simulate_json("ramp", NOMINAL)
        .unwrap_err()
        .contains("step, varying"));
    let bad = Knobs {
        phi: 0.0,
        ..NOMINAL
    };
    assert!(simulate_json("step", bad).is_err());
    let gone = Knobs {
        d_tau: -1.0,
        ..NOMINAL
    };
    assert!(simulate_json("step", gone).is_err());
}

#[test]
fn sign_switching_changes_the_run() {
    let sat = parse(simulate_json("step", NOMINAL).unwrap());
    let sign = parse(
        simulate_json(
            "step",
            Knobs {
                sign_switching: true,
                ..NOMINAL
            },
        )
        .unwrap(),
    );
    assert_ne!(sat["trace"]["u_smc"], sign["trace"]["u_smc"]);
}

#[test]
fn compare_ranks_three_presets() {
    let v = parse(compare_json("step").unwrap());
    let rows = v["rows"].as_array().unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["smcpid", "kuhn", "naive"]);
    for r in rows {
        let rank = r["ranks"]["iae"].as_u64().unwrap();
        assert!((1..=3).contains(&rank));
    }
}

#[test]
fn switching_curve_shapes() {
    let v = parse(switching_curve_json(2.0, 0.1, 0.2, 5).unwrap());
    let f = |k: &str| -> Vec<f64> {
        v[k].as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect()
    };
    let close = |a: Vec<f64>, b: [f64; 5]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
    assert!(close(f("s"), [-0.2, -0.1, 0.0, 0.1, 0.2]));
    assert!(close(f("sat"), [2.0, 2.0, 0.0, -2.0, -2.0]));
    let inside = parse(switching_curve_json(2.0, 1.0, 0.5, 3).unwrap());
    assert_eq!(inside["sat"][0].as_f64(), Some(1.0));
    assert!(switching_curve_json(1.0, 0.0, 1.0, 10).is_err());
    assert!(switching_curve_json(1.0, 0.1, 1.0, 1).is_err());
}
