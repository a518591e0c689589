use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ConfusionMatrix;
use crate::error::Result;
use crate::label::ActivityLabel;
use crate::raster::{encode_image, ImageEncoding, RasterImage};

const CELL_PX: usize = 32;

/// One evaluated fold (or the single held-out test set in split mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
}

pub struct ReportInput<'a> {
    pub title: &'a str,
    pub matrix: &'a ConfusionMatrix,
    pub folds: &'a [FoldSummary],
    /// Extra `key: value` lines for the summary, written in the given order.
    pub metadata: &'a [(String, String)],
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

/// Grayscale heat map, one 32×32 block per cell, brightness proportional to
/// the row-normalised count.
pub fn heatmap_image(matrix: &ConfusionMatrix) -> RasterImage {
    let k = ActivityLabel::COUNT;
    let norm = matrix.row_normalized();
    let side = k * CELL_PX;
    let mut img = RasterImage::filled(side, side, 1, 0);
    for r in 0..side {
        for c in 0..side {
            img.pixels[r * side + c] = (norm[r / CELL_PX][c / CELL_PX] * 255.0).round() as u8;
        }
    }
    img
}

/// Writes `summary.txt`, `confusion.csv`, `confusion.png` and `folds.csv`
/// into `dir`. Output depends only on the inputs.
pub fn emit_report(input: &ReportInput<'_>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let m = input.matrix;
    let mean_fold = if input.folds.is_empty() {
        m.accuracy()
    } else {
        input.folds.iter().map(|f| f.accuracy).sum::<f64>() / input.folds.len() as f64
    };

    let mut summary = String::new();
    writeln!(summary, "title: {}", input.title).unwrap();
    for (k, v) in input.metadata {
        writeln!(summary, "{k}: {v}").unwrap();
    }
    writeln!(summary, "samples: {}", m.total()).unwrap();
    writeln!(summary, "pooled_accuracy: {:.6}", m.accuracy()).unwrap();
    writeln!(summary, "mean_fold_accuracy: {mean_fold:.6}").unwrap();
    writeln!(summary, "folds: {}", input.folds.len()).unwrap();
    for l in ActivityLabel::ALL {
        writeln!(
            summary,
            "class.{l}: support={} recall={} precision={}",
            m.row_total(l),
            opt(m.recall(l)),
            opt(m.precision(l))
        )
        .unwrap();
    }
    std::fs::write(dir.join("summary.txt"), summary)?;

    let mut csv = String::from("true\\predicted");
    for l in ActivityLabel::ALL {
        write!(csv, ",{l}").unwrap();
    }
    csv.push('\n');
    let norm = m.row_normalized();
    for t in ActivityLabel::ALL {
        write!(csv, "{t}").unwrap();
        for p in ActivityLabel::ALL {
            write!(csv, ",{}", m.counts[t.index()][p.index()]).unwrap();
        }
        csv.push('\n');
    }
    csv.push('\n');
    csv.push_str("row_normalized");
    for l in ActivityLabel::ALL {
        write!(csv, ",{l}").unwrap();
    }
    csv.push('\n');
    for t in ActivityLabel::ALL {
        write!(csv, "{t}").unwrap();
        for p in ActivityLabel::ALL {
            write!(csv, ",{:.6}", norm[t.index()][p.index()]).unwrap();
        }
        csv.push('\n');
    }
    std::fs::write(dir.join("confusion.csv"), csv)?;

    std::fs::write(
        dir.join("confusion.png"),
        encode_image(&heatmap_image(m), ImageEncoding::Png)?,
    )?;

    let mut folds = String::from("fold,test_size,accuracy,c,gamma\n");
    for f in input.folds {
        writeln!(
            folds,
            "{},{},{:.6},{},{}",
            f.fold,
            f.test_size,
            f.accuracy,
            f.c.map(|v| v.to_string()).unwrap_or_default(),
            f.gamma.map(|v| v.to_string()).unwrap_or_default()
        )
        .unwrap();
    }
    std::fs::write(dir.join("folds.csv"), folds)?;
    Ok(())
}
