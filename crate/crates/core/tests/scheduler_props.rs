//! Randomized properties of the scheduler and audit pair.

mod common;

use common::random_model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tinyad_core::audit::{activation_memory, mode_macs, overlap_macs};
use tinyad_core::scheduler::{execute, Arena, ExecMode};
use tinyad_core::tensor::max_abs_diff;

fn model_count() -> usize {
    std::env::var("TINYAD_PROP_MODELS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(120)
}

#[test]
fn modes_agree_and_accounting_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xeb1d);
    let patch_counts = [1usize, 2, 3, 5];
    for case_idx in 0..model_count() {
        let case = random_model(&mut rng, 6);
        let m = patch_counts[case_idx % patch_counts.len()];
        let naive = execute(&case.model, &case.input, ExecMode::Naive, &mut Arena::new()).unwrap();

        let modes = [
            ExecMode::InPlace,
            ExecMode::PatchOnly { patches: m },
            ExecMode::PatchOnly { patches: m + 1 },
            ExecMode::TinyAd { patches: m },
        ];
        let mut peaks = std::collections::HashMap::new();
        let mut working = std::collections::HashMap::new();
        for mode in modes {
            let mut arena = Arena::new();
            let report = execute(&case.model, &case.input, mode, &mut arena).unwrap();
            let diff = max_abs_diff(&naive.output, &report.output).unwrap();
            assert!(diff <= 1e-5, "case {case_idx} mode {mode}: diff {diff}");

            let plan = activation_memory(&case.model, mode).unwrap();
            assert_eq!(
                plan.peak_bytes, report.peak_bytes,
                "case {case_idx} mode {mode}: analytic vs measured"
            );
            assert_eq!(
                plan.working_peak_bytes, report.working_peak_bytes,
                "case {case_idx} mode {mode}: analytic vs measured working set"
            );
            working.insert(format!("{mode}"), report.working_peak_bytes);
            let analytic_macs: u64 = mode_macs(&case.model, mode).unwrap().iter().sum();
            assert_eq!(report.macs, analytic_macs, "case {case_idx} mode {mode}: macs");

            // one layer's parameters resident at a time
            let max_params = case
                .model
                .spec
                .layers
                .iter()
                .map(|l| l.param_slot_bytes())
                .max()
                .unwrap_or(0);
            assert_eq!(report.param_slot_peak, max_params, "case {case_idx} mode {mode}");
            peaks.insert(format!("{mode}"), report.peak_bytes);
        }

        let naive_plan = activation_memory(&case.model, ExecMode::Naive).unwrap();
        assert_eq!(naive_plan.peak_bytes, naive.peak_bytes, "case {case_idx} naive");

        // in-place gating never increases a layer's bytes, so these hold on
        // full peaks
        let po = peaks[&format!("{}", ExecMode::PatchOnly { patches: m })];
        let ta = peaks[&format!("{}", ExecMode::TinyAd { patches: m })];
        assert!(ta <= po, "case {case_idx}: tinyad {ta} > patchonly {po}");
        assert!(
            peaks[&format!("{}", ExecMode::InPlace)] <= naive.peak_bytes,
            "case {case_idx}: inplace exceeds naive"
        );
        // the trunk working set (everything but the holding slot) is what
        // patching divides by m; on it the whole chain is monotone. The
        // full peak includes the held outputs and can exceed naive for
        // output-dominated models, which is a property of the schedule, not
        // a bug.
        let po_w = working[&format!("{}", ExecMode::PatchOnly { patches: m })];
        let po_w_next = working[&format!("{}", ExecMode::PatchOnly { patches: m + 1 })];
        let ta_w = working[&format!("{}", ExecMode::TinyAd { patches: m })];
        assert!(ta_w <= po_w, "case {case_idx}: tinyad working {ta_w} > patchonly {po_w}");
        assert!(
            po_w <= naive.working_peak_bytes,
            "case {case_idx}: patchonly working {po_w} > naive {}",
            naive.working_peak_bytes
        );
        assert!(po_w_next <= po_w, "case {case_idx}: m+1 working {po_w_next} > m {po_w}");

        // patch overhead is exactly the analytic overlap (signed: strided
        // layers can make patched execution skip unconsumed positions)
        let patched =
            execute(&case.model, &case.input, ExecMode::PatchOnly { patches: m }, &mut Arena::new())
                .unwrap();
        assert_eq!(
            patched.macs as i64 - naive.macs as i64,
            overlap_macs(&case.model, m).unwrap(),
            "case {case_idx}: overlap"
        );
    }
}

#[test]
fn patch_one_never_exceeds_naive() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a7c);
    for _ in 0..40 {
        let case = random_model(&mut rng, 2);
        let naive = execute(&case.model, &case.input, ExecMode::Naive, &mut Arena::new()).unwrap();
        let single =
            execute(&case.model, &case.input, ExecMode::PatchOnly { patches: 1 }, &mut Arena::new())
                .unwrap();
        // a single patch never exceeds naive; it can do strictly better when
        // strided layers leave trailing positions naive computes for nothing
        assert!(single.peak_bytes <= naive.peak_bytes);
        assert_eq!(naive.output, single.output);
        assert!(single.macs <= naive.macs);
    }
}

#[test]
fn budget_error_names_a_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a11);
    let case = random_model(&mut rng, 4);
    let unlimited = execute(&case.model, &case.input, ExecMode::Naive, &mut Arena::new()).unwrap();
    let mut tight = Arena::with_budget(unlimited.peak_bytes - 1);
    match execute(&case.model, &case.input, ExecMode::Naive, &mut tight) {
        Err(tinyad_core::Error::Budget { live, budget, .. }) => {
            assert!(live > budget);
        }
        other => panic!("expected budget error, got {other:?}"),
    }
    // exactly at the peak fits
    let mut exact = Arena::with_budget(unlimited.peak_bytes);
    assert!(execute(&case.model, &case.input, ExecMode::Naive, &mut exact).is_ok());
}
