use liquid_dynamics::encoding::{ScheduleKind, SpikeSchedule};
use liquid_dynamics::snn::{
    connection_probability, pairwise_distance, LifParams, Reservoir, ReservoirConfig, Synapse,
};
use proptest::prelude::*;

/// Scalar LIF written straight from the update equations.
struct ScalarLif {
    v: f64,
    i: f64,
}

impl ScalarLif {
    fn step(&mut self, p: &LifParams, spike_in: f64) -> bool {
        self.i = self.i + p.dt * (-self.i / p.tau3) + spike_in;
        self.v = self.v + p.dt * (-(self.v - p.v_rest) / p.tau1 + self.i / p.tau2);
        if self.v >= p.v_thresh {
            self.v = p.v_rest;
            true
        } else {
            false
        }
    }
}

fn lcg(state: &mut u64) -> u64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    *state >> 33
}

#[test]
fn two_neuron_network_matches_scalar_reference() {
    let lif = LifParams::default();
    let (w_in, w_ei, w_ie) = (1.3, 2.1, -0.9);
    // neuron 0 excitatory and driven, neuron 1 inhibitory and fed back
    let mut res = Reservoir::from_parts(
        lif,
        vec![false, true],
        vec![vec![Synapse {
            target: 0,
            weight: w_in,
        }]],
        vec![
            vec![Synapse {
                target: 1,
                weight: w_ei,
            }],
            vec![Synapse {
                target: 0,
                weight: w_ie,
            }],
        ],
    )
    .unwrap();

    let mut a = ScalarLif { v: 0.0, i: 0.0 };
    let mut b = ScalarLif { v: 0.0, i: 0.0 };
    let (mut prev_a, mut prev_b) = (false, false);
    let mut rng = 7u64;
    let mut total = [0usize; 2];
    for step in 0..1000 {
        let x = if lcg(&mut rng).is_multiple_of(3) { 1.0 } else { 0.0 };
        let mut in_a = 0.0;
        if x != 0.0 {
            in_a += w_in * x;
        }
        if prev_b {
            in_a += w_ie;
        }
        let in_b = if prev_a { w_ei } else { 0.0 };
        let fa = a.step(&lif, in_a);
        let fb = b.step(&lif, in_b);
        (prev_a, prev_b) = (fa, fb);

        let fired = res.step_once(&[x], ScheduleKind::Spikes).unwrap();
        assert_eq!(fired, &[fa, fb], "step {step}");
        total[0] += usize::from(fa);
        total[1] += usize::from(fb);
    }
    assert!(total[0] > 10 && total[1] > 0, "{total:?}");
}

#[test]
fn silent_input_keeps_the_liquid_at_rest() {
    let mut res = Reservoir::build(&ReservoirConfig::default(), 6).unwrap();
    let sched = SpikeSchedule::zeros(ScheduleKind::Spikes, 10, 6);
    for _ in 0..5 {
        assert!(res.simulate_window(&sched).unwrap().iter().all(|&f| f == 0.0));
    }
}

fn burst_schedule(window: usize, channels: usize, seed: u64) -> SpikeSchedule {
    let mut s = SpikeSchedule::zeros(ScheduleKind::Spikes, window, channels);
    let mut rng = seed;
    for c in 0..channels {
        let n = (lcg(&mut rng) % (window as u64 + 1)) as usize;
        for k in 0..n {
            s.set(k, c, 1.0);
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reset_matches_a_fresh_liquid(seed in 0u64..1000, windows in 1usize..6) {
        let cfg = ReservoirConfig { seed, ..ReservoirConfig::default() };
        let fresh = Reservoir::build(&cfg, 4).unwrap();
        let scheds: Vec<SpikeSchedule> =
            (0..windows).map(|k| burst_schedule(10, 4, seed * 31 + k as u64)).collect();

        let mut used = fresh.clone();
        for s in &scheds {
            used.simulate_window(s).unwrap();
        }
        used.reset_state();
        let mut again = fresh.clone();
        for s in &scheds {
            prop_assert_eq!(used.simulate_window(s).unwrap(), again.simulate_window(s).unwrap());
        }
    }

    #[test]
    fn features_are_rates_in_unit_interval(seed in 0u64..1000) {
        let cfg = ReservoirConfig { seed, ..ReservoirConfig::default() };
        let mut res = Reservoir::build(&cfg, 4).unwrap();
        let f = res.simulate_window(&burst_schedule(10, 4, seed)).unwrap();
        prop_assert_eq!(f.len(), 125);
        for v in f {
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!((v * 10.0).fract(), 0.0);
        }
    }
}

#[test]
fn liquid_state_carries_across_windows() {
    let mut res = Reservoir::build(&ReservoirConfig::default(), 4).unwrap();
    let strong = burst_schedule(10, 4, 3);
    let quiet = SpikeSchedule::zeros(ScheduleKind::Spikes, 10, 4);
    res.simulate_window(&strong).unwrap();
    res.simulate_window(&strong).unwrap();
    let after = res.simulate_window(&quiet).unwrap();
    assert!(after.iter().any(|&f| f > 0.0));
}

#[test]
fn pooled_connection_counts_match_expectation() {
    let base = ReservoirConfig::default();
    let mut observed = [0.0f64; 4];
    let mut expected = [0.0f64; 4];
    let mut variance = [0.0f64; 4];
    for seed in 0..20 {
        let cfg = ReservoirConfig { seed, ..base.clone() };
        let res = Reservoir::build(&cfg, 2).unwrap();
        let inh = res.is_inhibitory();
        let pos = res.positions();
        for (i, edges) in res.recurrent_edges().iter().enumerate() {
            let mut hit = vec![false; res.len()];
            for e in edges {
                hit[e.target as usize] = true;
            }
            for (j, &h) in hit.iter().enumerate() {
                let k = usize::from(inh[i]) * 2 + usize::from(inh[j]);
                let p = connection_probability(
                    pairwise_distance(pos[i], pos[j]),
                    cfg.c.get(inh[i], inh[j]),
                    cfg.lambda,
                );
                observed[k] += f64::from(u8::from(h));
                expected[k] += p;
                variance[k] += p * (1.0 - p);
            }
        }
    }
    for k in 0..4 {
        let z = (observed[k] - expected[k]) / variance[k].sqrt();
        assert!(z.abs() < 4.0, "class {k}: z = {z}");
    }
}
