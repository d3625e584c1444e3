//! Text rendering of a timeline as a life-cycle cell grid.
//!
//! One row per entity (virtual GPUs, then physical GPUs, then the link),
//! one glyph per cell: `T` transferring, `C` computing, `·` idle, chosen
//! by the majority activity within the cell. The grid is presentation
//! only; the underlying timeline is exact.

use std::collections::BTreeSet;

use super::{Activity, Timeline};

/// Number of grid columns a run of the given makespan occupies.
pub fn cell_count(makespan_s: f64, cell_seconds: f64) -> usize {
    (makespan_s / cell_seconds).ceil() as usize
}

/// Renders the timeline as an aligned text grid of `T`/`C`/`·` cells.
pub fn render_cells(timeline: &Timeline, cell_seconds: f64) -> String {
    let columns = cell_count(timeline.makespan_s, cell_seconds);
    if columns == 0 || timeline.intervals.is_empty() {
        return String::new();
    }

    let entities: BTreeSet<_> = timeline.intervals.iter().map(|i| i.entity).collect();
    let labels: Vec<String> = entities.iter().map(|e| e.to_string()).collect();
    let label_width = labels.iter().map(String::len).max().unwrap_or(0);

    let mut grid = String::new();
    for (entity, label) in entities.iter().zip(&labels) {
        let mut transfer = vec![0.0f64; columns];
        let mut compute = vec![0.0f64; columns];
        for interval in timeline.intervals.iter().filter(|i| i.entity == *entity) {
            let tally = match interval.activity {
                Activity::Transfer => &mut transfer,
                Activity::Compute => &mut compute,
            };
            let first = (interval.start_s / cell_seconds).floor() as usize;
            let last = cell_count(interval.end_s, cell_seconds).min(columns);
            for (cell, slot) in tally.iter_mut().enumerate().take(last).skip(first) {
                let cell_start = cell as f64 * cell_seconds;
                let overlap = interval.end_s.min(cell_start + cell_seconds)
                    - interval.start_s.max(cell_start);
                *slot += overlap.max(0.0);
            }
        }
        grid.push_str(&format!("{label:<label_width$} "));
        for cell in 0..columns {
            let idle = cell_seconds - transfer[cell] - compute[cell];
            let glyph = if compute[cell] >= transfer[cell] && compute[cell] >= idle {
                'C'
            } else if transfer[cell] >= idle {
                'T'
            } else {
                '·'
            };
            grid.push(glyph);
        }
        grid.push('\n');
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::super::{Entity, Interval, LinkModel, SimScenario, TransferMode, simulate};
    use super::*;
    use crate::power::PowerProfile;

    fn empty_timeline() -> Timeline {
        Timeline {
            intervals: vec![],
            makespan_s: 0.0,
            per_pgpu_busy_compute_s: vec![],
            energy_ws: 0.0,
            utilization_per_pgpu: vec![],
            utilization_avg: 0.0,
            transfers: vec![],
        }
    }

    #[test]
    fn two_transfer_cells_then_three_compute_cells() {
        let scenario = SimScenario {
            n_pgpus: 1,
            vgpus_per_pgpu: 1,
            link: LinkModel::constant(1000.0),
            setup_latency_per_vgpu: 0.0,
            split_bytes: 1000.0 * 0.07,
            replicated_bytes: 0.0,
            compute_time_one_device: 0.105,
            transfer_mode: TransferMode::Sequential,
            power: PowerProfile::default(),
            cell_seconds: 0.035,
        };
        let timeline = simulate(&scenario).unwrap();
        let grid = render_cells(&timeline, 0.035);
        let row = grid
            .lines()
            .find(|line| line.starts_with("vgpu0.0"))
            .unwrap();
        assert_eq!(row.split_whitespace().last().unwrap(), "TTCCC");
        let pgpu_row = grid.lines().find(|line| line.starts_with("pgpu0")).unwrap();
        assert_eq!(pgpu_row.split_whitespace().last().unwrap(), "··CCC");
    }

    #[test]
    fn empty_timeline_renders_nothing() {
        assert_eq!(render_cells(&empty_timeline(), 0.035), "");
    }

    #[test]
    fn majority_tie_prefers_compute_then_transfer() {
        let mut timeline = empty_timeline();
        timeline.makespan_s = 1.0;
        timeline.intervals = vec![
            Interval {
                entity: Entity::PGpu(0),
                activity: Activity::Transfer,
                start_s: 0.0,
                end_s: 0.5,
            },
            Interval {
                entity: Entity::PGpu(0),
                activity: Activity::Compute,
                start_s: 0.5,
                end_s: 1.0,
            },
            Interval {
                entity: Entity::PGpu(1),
                activity: Activity::Transfer,
                start_s: 0.0,
                end_s: 0.5,
            },
        ];
        let grid = render_cells(&timeline, 1.0);
        let rows: Vec<&str> = grid.lines().collect();
        assert_eq!(rows[0], "pgpu0 C");
        assert_eq!(rows[1], "pgpu1 T");
    }

    #[test]
    fn rows_are_ordered_and_aligned() {
        let scenario = SimScenario {
            n_pgpus: 2,
            vgpus_per_pgpu: 2,
            link: LinkModel::constant(1000.0),
            setup_latency_per_vgpu: 0.0,
            split_bytes: 280.0,
            replicated_bytes: 0.0,
            compute_time_one_device: 0.28,
            transfer_mode: TransferMode::Sequential,
            power: PowerProfile::default(),
            cell_seconds: 0.035,
        };
        let timeline = simulate(&scenario).unwrap();
        let grid = render_cells(&timeline, 0.035);
        let lines: Vec<&str> = grid.lines().collect();
        let labels: Vec<&str> = lines
            .iter()
            .map(|l| l.split_whitespace().next().unwrap())
            .collect();
        assert_eq!(
            labels,
            ["vgpu0.0", "vgpu0.1", "vgpu1.0", "vgpu1.1", "pgpu0", "pgpu1", "link"]
        );
        let widths: BTreeSet<usize> = lines.iter().map(|l| l.chars().count()).collect();
        assert_eq!(widths.len(), 1, "all rows equally wide");
        let columns = cell_count(timeline.makespan_s, 0.035);
        let glyphs = lines[0].split_whitespace().last().unwrap();
        assert_eq!(glyphs.chars().count(), columns);
    }
}
