//! Intersection-over-union family of segmentation scores.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor_io::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Same masks with foreground and background swapped.
    pub fn inverted(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

fn same_shape(pred: &BinaryMask, gt: &BinaryMask) -> Result<()> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    Ok(())
}

pub fn confusion_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    same_shape(pred, gt)?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

/// `TP / (TP + FP + FN)`, and 1 when the class is absent from both masks.
pub fn iou(c: &ConfusionCounts) -> f64 {
    let union = c.tp + c.fp + c.fn_;
    if union == 0 {
        1.0
    } else {
        c.tp as f64 / union as f64
    }
}

pub fn mean_iou<K>(per_class: &[(K, f64)]) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::EmptyInput("mean IoU over zero classes".into()));
    }
    Ok(per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len() as f64)
}

pub fn fb_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion_counts(pred, gt)?;
    Ok(0.5 * (iou(&c) + iou(&c.inverted())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub iou_fg: f64,
    pub iou_bg: f64,
    pub fbiou: f64,
    pub per_class: BTreeMap<String, f64>,
    pub miou: f64,
}

impl MetricReport {
    /// Report for a single episode whose foreground belongs to `class`.
    pub fn for_episode(pred: &BinaryMask, gt: &BinaryMask, class: &str) -> Result<Self> {
        let c = confusion_counts(pred, gt)?;
        let (iou_fg, iou_bg) = (iou(&c), iou(&c.inverted()));
        Ok(Self {
            iou_fg,
            iou_bg,
            fbiou: 0.5 * (iou_fg + iou_bg),
            per_class: BTreeMap::from([(class.to_string(), iou_fg)]),
            miou: iou_fg,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.per_class.len()
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "iou_fg = {:.6}", self.iou_fg).unwrap();
        writeln!(s, "iou_bg = {:.6}", self.iou_bg).unwrap();
        writeln!(s, "fbiou = {:.6}", self.fbiou).unwrap();
        writeln!(s, "miou = {:.6}", self.miou).unwrap();
        for (class, v) in &self.per_class {
            writeln!(s, "iou_{class} = {v:.6}").unwrap();
        }
        s
    }
}
