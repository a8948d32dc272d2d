//! Property tests for the measurement invariants, netlist edit locality,
//! and reference-engine physics that hold across randomized inputs.

use proptest::prelude::*;

use spicedeck_core::engine::{run_reference_buck, BuckParams, TransientSpec};
use spicedeck_core::measure::{
    get_mean_output_voltage, get_ripple, get_switching_frequency, read_feature, MeasurementKind,
    SteadyWindow, Trace,
};
use spicedeck_core::netlist::{parse_netlist, serialize_netlist, Component, PhysicalValue};

/// Values on a dyadic grid: sums and power-of-two scalings stay exact in
/// f64, letting shift/scale invariants assert bitwise equality.
fn dyadic_trace() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    proptest::collection::vec(0u32..(1 << 20), 8..200).prop_map(|raw| {
        let values: Vec<f64> = raw
            .iter()
            .map(|&r| r as f64 / (1u64 << 20) as f64)
            .collect();
        let time: Vec<f64> = (0..values.len()).map(|i| i as f64 * 1e-6).collect();
        (time, values)
    })
}

proptest! {
    /// ripple(tr + c) == ripple(tr) exactly and ripple(a*tr) == a*ripple(tr)
    /// exactly for power-of-two a, mirroring the shift/scale invariants.
    #[test]
    fn ripple_shift_and_scale_invariance(
        (time, values) in dyadic_trace(),
        shift_num in 0u32..1024,
        scale_pow in -4i32..5,
    ) {
        let shift = shift_num as f64; // integers: exact when added to dyadics
        let scale = (2.0f64).powi(scale_pow);
        let t_end = *time.last().unwrap();
        let window = SteadyWindow::new(0.0, t_end);

        let base = Trace::new("s", "V", time.clone(), values.clone()).unwrap();
        let shifted_values: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let shifted = Trace::new("s", "V", time.clone(), shifted_values).unwrap();
        let scaled_values: Vec<f64> = values.iter().map(|v| v * scale).collect();
        let scaled = Trace::new("s", "V", time, scaled_values).unwrap();

        let r0 = get_ripple(&base, &window).unwrap().value;
        let r_shift = get_ripple(&shifted, &window).unwrap().value;
        let r_scale = get_ripple(&scaled, &window).unwrap().value;
        prop_assert_eq!(r_shift, r0);
        prop_assert_eq!(r_scale, scale * r0);

        let m0 = get_mean_output_voltage(&base, &window).unwrap().value;
        let m_scale = get_mean_output_voltage(&scaled, &window).unwrap().value;
        prop_assert_eq!(m_scale, scale * m0);
    }

    /// Suffix rendering re-parses to the same magnitude within 1 part in 1e12
    /// for every suffix decade.
    #[test]
    fn suffix_round_trip(mantissa in 1.0f64..999.9, exp in -15i32..13, neg in any::<bool>()) {
        let sign = if neg { -1.0 } else { 1.0 };
        let value = sign * mantissa * (10.0f64).powi(exp);
        let text = PhysicalValue::new(value).render();
        let back = PhysicalValue::parse(&text).unwrap().magnitude;
        prop_assert!(((back - value) / value).abs() < 1e-12, "{} -> {} -> {}", value, text, back);
    }

    /// Edits touch exactly the documented card: the serialized diff of
    /// set_component_value / rewire_pin is a single line, add_component a
    /// single appended line.
    #[test]
    fn edit_locality(new_value in 1.0f64..1e6, pin in 0usize..2) {
        let deck = parse_netlist(
            "V1 IN 0 12\nR1 IN OUT 10k\nR2 OUT 0 2k\nC1 OUT 0 100u\n.tran 1u 1m\n.end",
        ).unwrap();
        let before: Vec<String> = serialize_netlist(&deck).lines().map(String::from).collect();

        let set = deck.set_component_value("R1", &PhysicalValue::new(new_value)).unwrap();
        let after: Vec<String> = serialize_netlist(&set).lines().map(String::from).collect();
        prop_assert_eq!(before.len(), after.len());
        let changed: Vec<usize> = (0..before.len()).filter(|&i| before[i] != after[i]).collect();
        prop_assert_eq!(&changed, &vec![1usize]);

        let rewired = deck.rewire_pin("C1", pin, "SWX").unwrap();
        let after: Vec<String> = serialize_netlist(&rewired).lines().map(String::from).collect();
        let changed: Vec<usize> = (0..before.len()).filter(|&i| before[i] != after[i]).collect();
        prop_assert_eq!(&changed, &vec![3usize]);

        let added = deck
            .add_component(Component::new("R9", &["OUT", "0"], Some("1k")).unwrap())
            .unwrap();
        let after: Vec<String> = serialize_netlist(&added).lines().map(String::from).collect();
        prop_assert_eq!(after.len(), before.len() + 1);
        prop_assert_eq!(&after[..5], &before[..5]);
        prop_assert_eq!(after[5].as_str(), "R9 OUT 0 1k");
    }

    /// Name and node lookups ignore case.
    #[test]
    fn case_insensitive_lookups(upper in any::<bool>()) {
        let deck = parse_netlist("Rsense IN OUT 10k\nC1 OUT 0 1u").unwrap();
        let name = if upper { "RSENSE" } else { "rsense" };
        prop_assert!(deck.component(name).is_some());
        let conn = deck.connectivity_query("out", "IN").unwrap();
        prop_assert!(conn.connected());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The reference engine is deterministic and energy-conserving over the
    /// recorded steady-state window for randomized continuous-conduction
    /// designs.
    #[test]
    fn reference_buck_energy_and_determinism(
        v_in in 5.0f64..48.0,
        duty_pct in 20u32..80,
        l_uh in 4.0f64..47.0,
        c_uf in 22.0f64..470.0,
        load in 2.0f64..20.0,
    ) {
        let params = BuckParams {
            v_in,
            inductance: l_uh * 1e-6,
            capacitance: c_uf * 1e-6,
            load,
            switching_frequency: 500e3,
            duty: duty_pct as f64 / 100.0,
            esr: 0.0,
        };
        let spec = TransientSpec::steady_state(params.switching_frequency);
        let a = run_reference_buck(&params, &spec).unwrap();
        let b = run_reference_buck(&params, &spec).unwrap();
        prop_assert_eq!(&a, &b);

        // Only meaningful in continuous conduction where input power must
        // balance output power within integration tolerance.
        let v_out = params.duty * params.v_in;
        let delta_i = v_out * (1.0 - params.duty)
            / (params.inductance * params.switching_frequency);
        if delta_i / 2.0 < v_out / params.load {
            let t = a.time();
            let (_, vo) = a.column("V(out)").unwrap();
            let (_, ii) = a.column("I(Vin)").unwrap();
            let mut p_out = 0.0;
            let mut p_in = 0.0;
            for i in 1..t.len() {
                let dt = t[i] - t[i - 1];
                p_out += 0.5 * (vo[i] * vo[i] + vo[i - 1] * vo[i - 1]) / params.load * dt;
                p_in += 0.5 * (ii[i] + ii[i - 1]) * params.v_in * dt;
            }
            let span = t[t.len() - 1] - t[0];
            p_out /= span;
            p_in /= span;
            prop_assert!(
                (p_in - p_out).abs() / p_out < 0.01,
                "P_in {} vs P_out {}", p_in, p_out
            );
        }
    }

    /// Dataset -> measurement is bit-deterministic.
    #[test]
    fn measurement_determinism(seed in 0u64..500) {
        let params = BuckParams {
            v_in: 12.0,
            inductance: 10e-6,
            capacitance: 100e-6,
            load: 6.0,
            switching_frequency: 500e3,
            duty: 0.3 + (seed % 40) as f64 / 100.0,
            esr: 0.0,
        };
        let spec = TransientSpec::steady_state(params.switching_frequency);
        let ds = run_reference_buck(&params, &spec).unwrap();
        for kind in [
            MeasurementKind::Mean,
            MeasurementKind::Ripple,
            MeasurementKind::SwitchingFrequency,
        ] {
            let a = read_feature(&ds, "V(out)", kind).unwrap();
            let b = read_feature(&ds, "V(out)", kind).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

/// Resampling a band-limited trace onto a 2x denser, non-uniform grid moves
/// each measurement by less than 0.5%.
#[test]
fn time_reparameterization_robustness() {
    let f = 50e3;
    let t_end = 20.0 / f;
    let n = 4000;
    let signal = |t: f64| 5.0 + 0.5 * (2.0 * std::f64::consts::PI * f * t).sin();

    let time_a: Vec<f64> = (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect();
    let values_a: Vec<f64> = time_a.iter().map(|&t| signal(t)).collect();
    let coarse = Trace::new("s", "V", time_a, values_a).unwrap();

    // 2x denser and deliberately non-uniform (smooth jitter in the step).
    let mut time_b = Vec::with_capacity(2 * n);
    let mut t = 0.0;
    let base_step = t_end / (2 * n) as f64;
    let mut k = 0u32;
    while t < t_end {
        time_b.push(t);
        let jitter = 0.4 * ((k as f64 * 0.7).sin());
        t += base_step * (1.0 + jitter);
        k += 1;
    }
    time_b.push(t_end);
    let values_b: Vec<f64> = time_b.iter().map(|&t| signal(t)).collect();
    let dense = Trace::new("s", "V", time_b, values_b).unwrap();

    let window_a = SteadyWindow::new(0.0, coarse.t_end());
    let window_b = SteadyWindow::new(0.0, dense.t_end());
    for (what, a, b) in [
        (
            "mean",
            get_mean_output_voltage(&coarse, &window_a).unwrap().value,
            get_mean_output_voltage(&dense, &window_b).unwrap().value,
        ),
        (
            "ripple",
            get_ripple(&coarse, &window_a).unwrap().value,
            get_ripple(&dense, &window_b).unwrap().value,
        ),
        (
            "frequency",
            get_switching_frequency(&coarse, &window_a).unwrap().value,
            get_switching_frequency(&dense, &window_b).unwrap().value,
        ),
    ] {
        let change = ((a - b) / a).abs();
        assert!(change < 0.005, "{what} moved {change:.4} ({a} -> {b})");
    }
}

/// Editing the supply value and re-simulating scales the mean output with
/// the duty relation.
#[test]
fn supply_edit_rescales_simulated_output() {
    let deck = parse_netlist(
        "V1 IN 0 12\nS1 IN SW G 0 SM\nVG G 0 PULSE(0 1 0 1n 1n 1u 2u)\nD1 0 SW DM\n\
         L1 SW OUT 10u\nC1 OUT 0 100u\nR1 OUT 0 6\n.model SM SW()\n.model DM D()\n.end",
    )
    .unwrap();
    let edited = deck
        .set_component_value("V1", &PhysicalValue::new(38.0))
        .unwrap();
    let params = spicedeck_core::engine::detect_buck_pattern(&edited).unwrap();
    assert_eq!(params.v_in, 38.0);
    let ds = run_reference_buck(
        &params,
        &TransientSpec::steady_state(params.switching_frequency),
    )
    .unwrap();
    let mean = read_feature(&ds, "V(out)", MeasurementKind::Mean)
        .unwrap()
        .value;
    let expected = params.duty * 38.0;
    assert!(
        (mean - expected).abs() / expected < 0.02,
        "mean {mean} vs {expected}"
    );
}

/// With the load raised 100x the engine enters discontinuous conduction:
/// the inductor current touches zero and the mean output exceeds D*V_in.
#[test]
fn ccm_dcm_consistency() {
    let base = BuckParams {
        v_in: 12.0,
        inductance: 10e-6,
        capacitance: 100e-6,
        load: 6.0,
        switching_frequency: 500e3,
        duty: 0.5,
        esr: 0.0,
    };
    let spec = TransientSpec::steady_state(base.switching_frequency);

    let ccm = run_reference_buck(&base, &spec).unwrap();
    let (_, i_ccm) = ccm.column("I(L)").unwrap();
    assert!(
        i_ccm.iter().all(|&i| i > 0.0),
        "base design must stay in CCM"
    );

    let mut heavy = base;
    heavy.load *= 100.0;
    let dcm = run_reference_buck(&heavy, &spec).unwrap();
    let (_, i_dcm) = dcm.column("I(L)").unwrap();
    assert_eq!(i_dcm.iter().cloned().fold(f64::MAX, f64::min), 0.0);
    let mean = read_feature(&dcm, "V(out)", MeasurementKind::Mean)
        .unwrap()
        .value;
    assert!(mean > base.duty * base.v_in);
}
