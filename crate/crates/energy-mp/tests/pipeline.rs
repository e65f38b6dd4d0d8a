use energy_mp::benchgen::{gen_exhaustive_small, gen_random, RandomSpec};
use energy_mp::decision::{corner_case_wins, decide_energy_mp, DecideConfig};
use energy_mp::synthesis::{synth_alt, synth_for_decision, verify_strategy, AltLayout, AltMode, AltParams, Phase};
use energy_mp::Mdp;
use proptest::prelude::*;

fn small_random(seed: u64) -> Mdp {
    let spec = RandomSpec { max_denominator: 2, ..RandomSpec::new(1 + (seed % 4) as usize, 2, 1, 0.5) };
    gen_random(&spec, seed).unwrap()
}

/// Every winnable `(s, i_s)` gets a witness that passes exact verification.
fn check_pipeline(m: &Mdp) {
    let d = decide_energy_mp(m, &DecideConfig::default()).unwrap();
    for s in 0..m.n() {
        let Some(i) = d.report.energy(s) else { continue };
        let (search, sigma) = synth_for_decision(m, &d, s, i, 64).unwrap();
        let sigma = sigma.unwrap_or_else(|| panic!("no witness for {s} at {i}: {search:?}\n{}", m.to_json()));
        assert!(verify_strategy(m, &sigma, s, i).unwrap().pass);
    }
}

#[test]
fn exhaustive_sample_composes() {
    for m in gen_exhaustive_small().iter().step_by(97) {
        check_pipeline(m);
    }
}

#[test]
fn random_sample_composes() {
    for seed in 0..24 {
        check_pipeline(&small_random(1000 + seed));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn decision_matches_fixed_cap_oracle(seed in 0u64..1_000_000) {
        let m = small_random(seed);
        let d = decide_energy_mp(&m, &DecideConfig::default()).unwrap();
        let oracle = corner_case_wins(&m, Some(32), 32).unwrap();
        prop_assert_eq!(d.report.states.iter().map(|v| v.i_s).collect::<Vec<_>>(), oracle.min_energy);
    }

    #[test]
    fn mode_updates_follow_thresholds(seed in 0u64..1_000_000, extra in 0i64..4) {
        let m = small_random(seed);
        let Ok(gb) = energy_mp::synthesis::pure_gain_bailout(&m) else { return Ok(()) };
        if gb.gain.is_none() || gb.bailout.is_none() {
            return Ok(());
        }
        let z_b = gb.z_b();
        let p = AltParams::for_bound(z_b, z_b + 1 + extra);
        let sigma = synth_alt(&m, p).unwrap();
        let layout = AltLayout { b: p.b, corner_cap: None };
        let r = gb.restricted.as_ref().map_or(1, |r| r.mdp.r.max(1));
        for (&(mode, e), &next) in &sigma.update {
            let AltMode::Alt { energy, phase } = layout.decode(mode) else { unreachable!() };
            let AltMode::Alt { energy: u, phase: ph } = layout.decode(next) else { unreachable!() };
            prop_assert_eq!(u, (energy + m.edges[e].reward[0]).clamp(0, p.b));
            let want = match phase {
                Phase::Bailout if u >= p.z_g => Phase::Gain,
                Phase::Gain if u < p.z_b + r => Phase::Bailout,
                ph => ph,
            };
            prop_assert_eq!(ph, want);
        }
    }
}
