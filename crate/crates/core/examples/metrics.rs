//! Detection metrics on small hand-made inputs.
//!
//! Run with `cargo run --example metrics`.

use roundabout_dz::metrics::{
    classification_report, roc_points, temporal_iou, FrameInterval, IouAggregation,
};

fn main() -> roundabout_dz::Result<()> {
    let mut predictions = vec![true; 95];
    let mut labels = vec![true; 95];
    predictions.extend([false; 5]);
    labels.extend([true; 5]);
    predictions.extend([true; 10]);
    labels.extend([false; 10]);
    predictions.extend([false; 90]);
    labels.extend([false; 90]);
    let r = classification_report(&predictions, &labels)?;
    println!(
        "{:?}\nrecall {:.3} fpr {:.3} precision {:.3} f1 {:.3}",
        r.confusion, r.recall, r.fpr, r.precision, r.f1
    );

    let detected = [FrameInterval::inclusive(1, 0, 9)];
    let truth = [FrameInterval::inclusive(1, 5, 14)];
    let iou = temporal_iou(&detected, &truth, IouAggregation::Micro)?;
    println!("IoU of frames 0-9 vs 5-14: {iou:.3}");

    let roc = roc_points(&[0.9, 0.8, 0.3, 0.1], &[true, false, true, false])?;
    for p in &roc.points {
        println!("  threshold {:>4} fpr {:.2} tpr {:.2}", p.threshold, p.fpr, p.tpr);
    }
    println!("AUC {:.3}", roc.auc);
    Ok(())
}
