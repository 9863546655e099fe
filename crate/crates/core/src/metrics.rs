//! Top-k metrics, the class-balanced variant, rank-leaderboard
//! aggregation, and the CSV metric-record schema.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Deterministic top-k membership: ties at the k-th score go to the
/// lowest class index.
pub fn topk_hit(scores: &[f64], label: usize, k: usize) -> bool {
    debug_assert!(k >= 1 && k <= scores.len());
    let better = scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > scores[label] || (s == scores[label] && j < label))
        .count();
    better < k
}

/// Fraction of rows whose label ranks among the k largest scores.
pub fn topk_accuracy(scores: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    assert_eq!(scores.len(), labels.len());
    if scores.is_empty() {
        return 0.0;
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(row, &y)| topk_hit(row, y, k))
        .count();
    hits as f64 / scores.len() as f64
}

/// Per-class top-k accuracy averaged uniformly over the classes present.
/// Classes absent from `labels` are skipped with a warning.
pub fn class_balanced_topk(scores: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    assert_eq!(scores.len(), labels.len());
    if scores.is_empty() {
        return 0.0;
    }
    let num_classes = scores[0].len();
    let mut hits = vec![0usize; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (row, &y) in scores.iter().zip(labels) {
        counts[y] += 1;
        if topk_hit(row, y, k) {
            hits[y] += 1;
        }
    }
    let mut total = 0.0;
    let mut present = 0usize;
    for c in 0..num_classes {
        if counts[c] == 0 {
            log::warn!("class {c} absent from labels, skipped in balanced accuracy");
            continue;
        }
        total += hits[c] as f64 / counts[c] as f64;
        present += 1;
    }
    total / present.max(1) as f64
}

/// `(dataset, setting, k)` leaderboard cell.
pub type CellKey = (String, String, usize);

#[derive(Debug, Clone, Serialize)]
pub struct LeaderboardRow {
    pub loss: String,
    /// Mean rank per k, keyed by k.
    pub per_k: BTreeMap<usize, f64>,
    pub overall: f64,
}

/// Ranks losses 1..L within every cell by descending accuracy (ties share
/// the mean of their rank span) and averages the ranks per k and overall.
/// Every loss must cover every cell; a hole would bias the ranks.
pub fn leaderboard(results: &BTreeMap<String, BTreeMap<CellKey, f64>>) -> Result<Vec<LeaderboardRow>> {
    let mut losses: Vec<&String> = results.keys().collect();
    losses.sort();
    if losses.is_empty() {
        return Ok(Vec::new());
    }
    let cells: Vec<CellKey> = results[losses[0]].keys().cloned().collect();
    for loss in &losses {
        let keys: Vec<CellKey> = results[*loss].keys().cloned().collect();
        if keys != cells {
            return Err(Error::config(format!(
                "loss '{loss}' does not cover the same cells as '{}'",
                losses[0]
            )));
        }
    }

    let mut rank_sum: BTreeMap<&String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for cell in &cells {
        let mut entries: Vec<(&String, f64)> =
            losses.iter().map(|l| (*l, results[*l][cell])).collect();
        entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
        // fractional ranks: tied values share the mean of their span
        let mut i = 0;
        while i < entries.len() {
            let mut j = i;
            while j + 1 < entries.len() && entries[j + 1].1 == entries[i].1 {
                j += 1;
            }
            let rank = (i + 1 + j + 1) as f64 / 2.0;
            for entry in &entries[i..=j] {
                let by_k = rank_sum.entry(entry.0).or_default();
                let slot = by_k.entry(cell.2).or_insert((0.0, 0));
                slot.0 += rank;
                slot.1 += 1;
            }
            i = j + 1;
        }
    }

    let mut rows = Vec::new();
    for loss in losses {
        let by_k = &rank_sum[loss];
        let per_k: BTreeMap<usize, f64> =
            by_k.iter().map(|(&k, &(sum, n))| (k, sum / n as f64)).collect();
        let total: f64 = by_k.values().map(|&(sum, _)| sum).sum();
        let count: usize = by_k.values().map(|&(_, n)| n).sum();
        rows.push(LeaderboardRow { loss: loss.clone(), per_k, overall: total / count as f64 });
    }
    rows.sort_by(|a, b| a.overall.partial_cmp(&b.overall).unwrap());
    Ok(rows)
}

/// One CSV row of per-epoch metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub fold: usize,
    pub epoch: usize,
    pub split: String,
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
    pub top4: f64,
    pub top5: f64,
    pub mean_loss: f64,
    pub lambda_clean: Option<f64>,
    pub lambda_noisy: Option<f64>,
}

impl MetricRecord {
    pub fn new(run_id: &str, fold: usize, epoch: usize, split: &str, topk: [f64; 5]) -> Self {
        MetricRecord {
            schema_version: SCHEMA_VERSION,
            run_id: run_id.to_string(),
            fold,
            epoch,
            split: split.to_string(),
            top1: topk[0],
            top2: topk[1],
            top3: topk[2],
            top4: topk[3],
            top5: topk[4],
            mean_loss: f64::NAN,
            lambda_clean: None,
            lambda_noisy: None,
        }
    }
}

/// Writes records with the fixed header; RFC-4180 quoting via the csv crate.
pub fn write_metric_csv<W: std::io::Write>(out: W, records: &[MetricRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(v: &[(&[f64], usize)]) -> (Vec<Vec<f64>>, Vec<usize>) {
        (v.iter().map(|(s, _)| s.to_vec()).collect(), v.iter().map(|&(_, y)| y).collect())
    }

    #[test]
    fn topk_edge_cases() {
        let (scores, labels) = rows(&[(&[1.0, 2.0], 1), (&[2.0, 1.0], 1)]);
        assert_eq!(topk_accuracy(&scores, &labels, 1), 0.5);
        // k = K is always a hit
        assert_eq!(topk_accuracy(&scores, &labels, 2), 1.0);
        // tie at the top: the lowest class index wins the slot
        let (scores, labels) = rows(&[(&[1.0, 1.0], 1)]);
        assert_eq!(topk_accuracy(&scores, &labels, 1), 0.0);
        let (scores, labels) = rows(&[(&[1.0, 1.0], 0)]);
        assert_eq!(topk_accuracy(&scores, &labels, 1), 1.0);
    }

    #[test]
    fn topk_is_nondecreasing_in_k() {
        let scores: Vec<Vec<f64>> = (0..50)
            .map(|i| (0..6).map(|j| ((i * 7 + j * 13) % 11) as f64).collect())
            .collect();
        let labels: Vec<usize> = (0..50).map(|i| i % 6).collect();
        let mut last = 0.0;
        for k in 1..=6 {
            let acc = topk_accuracy(&scores, &labels, k);
            assert!(acc >= last);
            last = acc;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn balanced_differs_from_pooled_under_imbalance() {
        // 9 correct rows of class 0, 1 wrong row of class 1
        let mut data = Vec::new();
        for _ in 0..9 {
            data.push((vec![1.0, 0.0], 0usize));
        }
        data.push((vec![1.0, 0.0], 1));
        let scores: Vec<Vec<f64>> = data.iter().map(|(s, _)| s.clone()).collect();
        let labels: Vec<usize> = data.iter().map(|&(_, y)| y).collect();
        assert_eq!(topk_accuracy(&scores, &labels, 1), 0.9);
        assert_eq!(class_balanced_topk(&scores, &labels, 1), 0.5);

        // balanced labels: both metrics agree
        let (scores, labels) = rows(&[(&[1.0, 0.0], 0), (&[0.0, 1.0], 1)]);
        assert_eq!(
            class_balanced_topk(&scores, &labels, 1),
            topk_accuracy(&scores, &labels, 1)
        );

        // single class present: balanced accuracy is that class's accuracy
        let (scores, labels) =
            rows(&[(&[1.0, 0.0], 0), (&[0.0, 1.0], 0), (&[1.0, 0.5], 0), (&[0.2, 0.8], 0)]);
        assert_eq!(class_balanced_topk(&scores, &labels, 1), 0.5);
    }

    fn table(rows: &[(&str, &[((&str, &str, usize), f64)])]) -> BTreeMap<String, BTreeMap<CellKey, f64>> {
        rows.iter()
            .map(|(loss, cells)| {
                (
                    loss.to_string(),
                    cells
                        .iter()
                        .map(|((d, s, k), v)| ((d.to_string(), s.to_string(), *k), *v))
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn leaderboard_simple_and_tied() {
        let cells_a: &[((&str, &str, usize), f64)] =
            &[(("d", "clean", 1), 0.9), (("d", "clean", 2), 0.95)];
        let cells_b: &[((&str, &str, usize), f64)] =
            &[(("d", "clean", 1), 0.8), (("d", "clean", 2), 0.95)];
        let out = leaderboard(&table(&[("a", cells_a), ("b", cells_b)])).unwrap();
        let a = out.iter().find(|r| r.loss == "a").unwrap();
        let b = out.iter().find(|r| r.loss == "b").unwrap();
        assert_eq!(a.per_k[&1], 1.0);
        assert_eq!(b.per_k[&1], 2.0);
        // exact tie shares rank 1.5
        assert_eq!(a.per_k[&2], 1.5);
        assert_eq!(b.per_k[&2], 1.5);
        assert_eq!(a.overall, 1.25);
        assert_eq!(b.overall, 1.75);
    }

    #[test]
    fn leaderboard_conserves_mean_rank() {
        let cells_a: &[((&str, &str, usize), f64)] =
            &[(("d", "u", 1), 0.7), (("e", "u", 1), 0.2)];
        let cells_b: &[((&str, &str, usize), f64)] =
            &[(("d", "u", 1), 0.6), (("e", "u", 1), 0.9)];
        let cells_c: &[((&str, &str, usize), f64)] =
            &[(("d", "u", 1), 0.5), (("e", "u", 1), 0.4)];
        let out =
            leaderboard(&table(&[("a", cells_a), ("b", cells_b), ("c", cells_c)])).unwrap();
        let mean: f64 = out.iter().map(|r| r.overall).sum::<f64>() / 3.0;
        assert!((mean - 2.0).abs() < 1e-12);
    }

    #[test]
    fn leaderboard_rejects_missing_cells() {
        let cells_a: &[((&str, &str, usize), f64)] =
            &[(("d", "u", 1), 0.7), (("e", "u", 1), 0.2)];
        let cells_b: &[((&str, &str, usize), f64)] = &[(("d", "u", 1), 0.6)];
        assert!(leaderboard(&table(&[("a", cells_a), ("b", cells_b)])).is_err());
    }

    #[test]
    fn metric_csv_schema_is_stable() {
        let mut rec = MetricRecord::new("vowel_ce_clean_7", 0, 3, "test", [0.5, 0.6, 0.7, 0.8, 0.9]);
        rec.mean_loss = 1.25;
        let mut buf = Vec::new();
        write_metric_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "schema_version,run_id,fold,epoch,split,top1,top2,top3,top4,top5,mean_loss,lambda_clean,lambda_noisy"
        );
        assert_eq!(lines.next().unwrap(), "1,vowel_ce_clean_7,0,3,test,0.5,0.6,0.7,0.8,0.9,1.25,,");
    }
}
