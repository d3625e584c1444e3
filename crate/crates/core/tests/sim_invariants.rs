//! Simulator invariants: byte conservation, kernel serialization, mode
//! equivalence, and exact agreement with the closed-form execution-time
//! model on calibrated scenarios.

use approx::assert_relative_eq;
use ara_core::model::{exec_time_multitenancy, ModelParams};
use ara_core::power::PowerProfile;
use ara_core::sim::{
    cell_count, render_cells, simulate, BandwidthBand, LinkModel, SimScenario, TransferMode,
};
use proptest::prelude::*;

fn scenario(p: u32, v: u32, mode: TransferMode) -> SimScenario {
    SimScenario {
        n_pgpus: p,
        vgpus_per_pgpu: v,
        link: LinkModel::constant(6e9),
        setup_latency_per_vgpu: 0.0,
        split_bytes: 4e9,
        replicated_bytes: 124e6,
        compute_time_one_device: 9.55,
        transfer_mode: mode,
        power: PowerProfile::default(),
        cell_seconds: 0.035,
    }
}

#[test]
fn calibrated_makespan_reproduces_the_model_total() {
    // a constant-rate, zero-setup scenario built from the model constants
    // must land on the model's own prediction in both regimes
    for params in [ModelParams::qdr(), ModelParams::fdr()] {
        for p in [1u32, 2, 4, 7, 9, 15, 16] {
            for v in [1u32, 2, 3, 4, 8, 12] {
                let scn = SimScenario::calibrated(&params, p, v, 6e9);
                let timeline = simulate(&scn).unwrap();
                let predicted = exec_time_multitenancy(p, v, &params).unwrap();
                assert_relative_eq!(
                    timeline.makespan_s,
                    predicted.total_time_s,
                    max_relative = 1e-9
                );
            }
        }
    }
}

#[test]
fn calibrated_energy_reproduces_the_model_energy() {
    for params in [ModelParams::qdr(), ModelParams::fdr()] {
        for (p, v) in [(4, 1), (4, 2), (4, 4), (9, 2), (16, 1)] {
            let scn = SimScenario::calibrated(&params, p, v, 6e9);
            let timeline = simulate(&scn).unwrap();
            let predicted = exec_time_multitenancy(p, v, &params).unwrap();
            assert_relative_eq!(timeline.energy_ws, predicted.energy_ws, max_relative = 1e-9);
        }
    }
}

#[test]
fn fdr_life_cycle_lands_on_the_published_cells() {
    // four devices at one, two, and four tenants each: the grids complete
    // near cells 88, 80, and 76, shrinking as tenancy rises
    let params = ModelParams::fdr();
    let mut cells = Vec::new();
    for v in [1u32, 2, 4] {
        let scn = SimScenario::calibrated(&params, 4, v, 6e9);
        let timeline = simulate(&scn).unwrap();
        cells.push(cell_count(timeline.makespan_s, scn.cell_seconds) as i64);
    }
    for (have, want) in cells.iter().zip([88i64, 80, 76]) {
        assert!((have - want).abs() <= 3, "{have} cells vs published {want}");
    }
    assert!(cells[0] > cells[1] && cells[1] > cells[2]);
}

#[test]
fn modes_agree_without_tenancy() {
    for p in [1u32, 2, 3, 8] {
        let seq = simulate(&scenario(p, 1, TransferMode::Sequential)).unwrap();
        let conc = simulate(&scenario(p, 1, TransferMode::Concurrent)).unwrap();
        assert_relative_eq!(seq.makespan_s, conc.makespan_s, max_relative = 1e-12);
        assert_relative_eq!(seq.energy_ws, conc.energy_ws, max_relative = 1e-12);
    }
}

#[test]
fn more_tenants_never_slow_a_compute_dominant_run() {
    // when the kernel dwarfs the transfers (or nothing is replicated per
    // tenant) extra tenants only add overlap, so the makespan cannot grow
    for params in [ModelParams::qdr(), ModelParams::fdr()] {
        for p in [1u32, 4] {
            let mut last = f64::INFINITY;
            for v in 1..=12 {
                let mut scn = SimScenario::calibrated(&params, p, v, 6e9);
                scn.compute_time_one_device = 200.0;
                let makespan = simulate(&scn).unwrap().makespan_s;
                assert!(
                    makespan <= last * (1.0 + 1e-12),
                    "v={v}: {makespan} > {last}"
                );
                last = makespan;
            }
        }
    }
    for mode in [TransferMode::Sequential, TransferMode::Concurrent] {
        let mut last = f64::INFINITY;
        for v in 1..=12 {
            let mut scn = scenario(4, v, mode);
            scn.replicated_bytes = 0.0;
            let makespan = simulate(&scn).unwrap().makespan_s;
            assert!(
                makespan <= last * (1.0 + 1e-12),
                "v={v}: {makespan} > {last}"
            );
            last = makespan;
        }
    }
}

#[test]
fn faster_links_save_energy_at_fixed_compute() {
    let mut previous: Option<(f64, f64)> = None;
    for bandwidth in [1e9, 2e9, 4e9, 8e9] {
        let mut scn = scenario(4, 2, TransferMode::Sequential);
        scn.link = LinkModel::constant(bandwidth);
        let timeline = simulate(&scn).unwrap();
        if let Some((makespan, energy)) = previous {
            assert!(timeline.makespan_s < makespan);
            assert!(timeline.energy_ws < energy);
        }
        previous = Some((timeline.makespan_s, timeline.energy_ws));
    }
}

#[test]
fn rendered_grid_matches_the_makespan_width() {
    let scn = scenario(4, 2, TransferMode::Concurrent);
    let timeline = simulate(&scn).unwrap();
    let grid = render_cells(&timeline, scn.cell_seconds);
    let columns = cell_count(timeline.makespan_s, scn.cell_seconds);
    for line in grid.lines() {
        let glyphs: String = line.split_whitespace().skip(1).collect();
        assert_eq!(glyphs.chars().count(), columns);
    }
    // rows: 8 vGPUs + 4 pGPUs + link
    assert_eq!(grid.lines().count(), 13);
}

fn arbitrary_link() -> impl Strategy<Value = LinkModel> {
    (
        prop::collection::vec(1e6f64..1e10, 1..3),
        1e3f64..1e9,
        prop::option::of(1e6f64..1e10),
    )
        .prop_map(|(rates, step, cap)| {
            let mut bands: Vec<BandwidthBand> = rates
                .iter()
                .enumerate()
                .map(|(i, &bytes_per_sec)| BandwidthBand {
                    up_to_bytes: Some((i + 1) as f64 * step),
                    bytes_per_sec,
                })
                .collect();
            bands.push(BandwidthBand {
                up_to_bytes: None,
                bytes_per_sec: 5e9,
            });
            LinkModel {
                bands,
                aggregate_cap_bps: cap,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_transfer_moves_exactly_its_payload(
        p in 1u32..5,
        v in 1u32..5,
        split in 0.0f64..1e10,
        replicated in 0.0f64..1e8,
        setup in 0.0f64..0.1,
        link in arbitrary_link(),
        concurrent in any::<bool>(),
    ) {
        let scn = SimScenario {
            n_pgpus: p,
            vgpus_per_pgpu: v,
            link,
            setup_latency_per_vgpu: setup,
            split_bytes: split,
            replicated_bytes: replicated,
            compute_time_one_device: 1.0,
            transfer_mode: if concurrent {
                TransferMode::Concurrent
            } else {
                TransferMode::Sequential
            },
            power: PowerProfile::default(),
            cell_seconds: 0.035,
        };
        let timeline = simulate(&scn).unwrap();
        let payload = split / (p * v) as f64 + replicated;
        for t in &timeline.transfers {
            let moved: f64 = t
                .segments
                .iter()
                .map(|s| (s.end_s - s.start_s) * s.bytes_per_sec)
                .sum();
            prop_assert!(
                (moved - payload).abs() <= 1e-9 * payload.max(1.0),
                "moved {moved} of {payload}"
            );
        }
    }

    #[test]
    fn kernels_on_one_pgpu_never_overlap_and_sum_to_the_share(
        p in 1u32..5,
        v in 1u32..6,
        split in 1.0f64..1e10,
        compute in 0.1f64..50.0,
        concurrent in any::<bool>(),
    ) {
        let scn = SimScenario {
            n_pgpus: p,
            vgpus_per_pgpu: v,
            link: LinkModel::constant(6e9),
            setup_latency_per_vgpu: 0.0,
            split_bytes: split,
            replicated_bytes: 0.0,
            compute_time_one_device: compute,
            transfer_mode: if concurrent {
                TransferMode::Concurrent
            } else {
                TransferMode::Sequential
            },
            power: PowerProfile::default(),
            cell_seconds: 0.035,
        };
        let timeline = simulate(&scn).unwrap();
        for busy in &timeline.per_pgpu_busy_compute_s {
            prop_assert!((busy - compute / p as f64).abs() <= 1e-9 * compute);
        }
        use ara_core::sim::{Activity, Entity};
        for pgpu in 0..p {
            let mut spans: Vec<(f64, f64)> = timeline
                .intervals
                .iter()
                .filter(|i| i.entity == Entity::PGpu(pgpu) && i.activity == Activity::Compute)
                .map(|i| (i.start_s, i.end_s))
                .collect();
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            for pair in spans.windows(2) {
                prop_assert!(pair[0].1 <= pair[1].0 + 1e-12);
            }
        }
    }
}
