//! SVG line charts of polarization (top panel) and neighbors correlation
//! (bottom panel) against iteration.

use std::path::Path;

use opinion_core::MetricsSeries;
use plotters::prelude::*;

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(127, 127, 127),
];

fn label(s: &MetricsSeries, i: usize) -> String {
    match (&s.run_id, s.framing) {
        (Some(id), Some(f)) => format!("{} ({f})", short(id)),
        (Some(id), None) => short(id).to_string(),
        (None, Some(f)) => format!("series {i} ({f})"),
        (None, None) => format!("series {i}"),
    }
}

fn short(id: &str) -> &str {
    &id[..id.len().min(24)]
}

pub fn plot_series(series: &[MetricsSeries], out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let max_iter = series
        .iter()
        .flat_map(|s| s.records.iter().map(|r| r.iteration))
        .max()
        .unwrap_or(1)
        .max(1);
    let root = SVGBackend::new(out, (900, 700)).into_drawing_area();
    root.fill(&WHITE)?;
    let (top, bottom) = root.split_vertically(350);

    let mut pz = ChartBuilder::on(&top)
        .caption("Polarization", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(0u32..max_iter, 0f64..1.05)?;
    pz.configure_mesh().x_desc("iteration").y_desc("P_z").draw()?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        pz.draw_series(LineSeries::new(
            s.records.iter().map(|r| (r.iteration, r.polarization)),
            color.stroke_width(2),
        ))?
        .label(label(s, i))
        .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    pz.configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;

    let mut nci = ChartBuilder::on(&bottom)
        .caption("Neighbors correlation", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(0u32..max_iter, -1.05f64..1.05)?;
    nci.configure_mesh().x_desc("iteration").y_desc("NCI").draw()?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        // undefined values break the line
        let mut segment = Vec::new();
        for r in &s.records {
            match r.nci {
                Some(v) => segment.push((r.iteration, v)),
                None if !segment.is_empty() => {
                    nci.draw_series(LineSeries::new(std::mem::take(&mut segment), color.stroke_width(2)))?;
                }
                None => {}
            }
        }
        if !segment.is_empty() {
            nci.draw_series(LineSeries::new(segment, color.stroke_width(2)))?;
        }
    }
    root.present()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use opinion_core::MetricsRecord;

    #[test]
    fn writes_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        let s = MetricsSeries {
            run_id: Some("run-a".into()),
            model: Default::default(),
            condition: None,
            framing: None,
            records: (0..9)
                .map(|i| MetricsRecord {
                    iteration: i,
                    polarization: 1.0 - i as f64 / 10.0,
                    nci: if i == 4 { None } else { Some(0.1 * i as f64) },
                })
                .collect(),
        };
        plot_series(&[s.clone(), s], &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
    }
}
