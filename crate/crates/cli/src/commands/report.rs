use std::path::Path;

use lil_core::checkpoint::Checkpoint;
use lil_core::error::Result;
use lil_core::linalg::Rng;
use lil_core::metrics::{argmax, distance_histogram, histogram_csv, isometry_report_sampled};

use super::{attack::load_eval_data, write_sidecar};

#[allow(clippy::too_many_arguments)]
pub fn run(
    model: &Path,
    data: &Path,
    out_dir: &Path,
    bins: usize,
    samples: Option<usize>,
    split: &str,
    max_pairs: usize,
    seed: u64,
    identity_diagnostic: bool,
) -> Result<()> {
    let start = std::time::Instant::now();
    let ckpt = Checkpoint::load(model)?;
    let net = ckpt.restore()?;
    let ds = load_eval_data(data, split, samples)?;
    let plan = ckpt.train.resolved_plan(net.num_blocks())?;

    std::fs::create_dir_all(out_dir)?;
    let traces = net.forward(&ds.points)?;

    let mut accuracy_csv = String::from("level,accuracy,n_samples\n");
    for (block, &level) in plan.iter().enumerate() {
        let labels = &ds.labels[level];
        let logits = &traces[block].logits;
        let correct = (0..ds.len())
            .filter(|&i| argmax(logits.row(i)) == labels[i])
            .count();
        accuracy_csv.push_str(&format!(
            "{level},{},{}\n",
            correct as f64 / ds.len() as f64,
            ds.len()
        ));

        // identity diagnostic replaces the representation by the raw
        // inputs; correlations must then be exactly 1
        let phi = if identity_diagnostic {
            &ds.points
        } else {
            traces[block].representation()
        };
        let mut rng = Rng::new(seed);
        let report = isometry_report_sampled(&ds.points, phi, labels, max_pairs, &mut rng)?;
        for w in &report.warnings {
            eprintln!("warning: level {level}: {w}");
        }
        std::fs::write(
            out_dir.join(format!("isometry_level_{level}.csv")),
            report.to_csv(),
        )?;

        let hist = distance_histogram(&ds.points, phi, labels, bins)?;
        std::fs::write(
            out_dir.join(format!("histograms_level_{level}.csv")),
            histogram_csv(&hist),
        )?;

        // raw embeddings for external plotting
        let mut emb = String::new();
        for d in 0..phi.cols() {
            emb.push_str(&format!("phi_{d},"));
        }
        emb.push_str("label\n");
        for (i, &label) in labels.iter().enumerate() {
            for &v in phi.row(i) {
                emb.push_str(&format!("{v},"));
            }
            emb.push_str(&format!("{label}\n"));
        }
        std::fs::write(out_dir.join(format!("embeddings_level_{level}.csv")), emb)?;
    }
    std::fs::write(out_dir.join("accuracy.csv"), accuracy_csv)?;
    write_sidecar(
        &out_dir.join("report.meta.json"),
        "report",
        start.elapsed().as_secs_f64(),
    )?;
    println!(
        "wrote report for {} samples to {}",
        ds.len(),
        out_dir.display()
    );
    Ok(())
}
