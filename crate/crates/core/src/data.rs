//! Dataset ingestion (LIBSVM text format), deterministic splits with
//! 5-fold cross-validation, the three label-noise protocols, and the
//! synthetic two-dimensional Gaussian generator.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dense feature matrix with contiguous class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Row-major `n x d`.
    pub features: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
    /// Original label token per contiguous class index.
    pub label_names: Vec<String>,
    /// True for rows appended as probe points.
    pub probe: Vec<bool>,
}

impl Dataset {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    /// Appends a single labeled point, flagged as a probe.
    pub fn push_probe(&mut self, x: &[f64], label: usize) {
        assert_eq!(x.len(), self.d);
        assert!(label < self.num_classes);
        self.features.extend_from_slice(x);
        self.labels.push(label);
        self.probe.push(true);
        self.n += 1;
    }

    /// Contiguous class index of an original label token, if present.
    pub fn class_of(&self, original: &str) -> Option<usize> {
        self.label_names.iter().position(|t| t == original)
    }
}

/// Parses LIBSVM text: `label idx:value ...` with 1-based strictly
/// increasing indices. Labels are remapped to `[0, K)` preserving the
/// sorted order of the original values.
pub fn parse_libsvm<R: Read>(reader: R, name: &str) -> Result<Dataset> {
    let buf = std::io::BufReader::new(reader);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in buf.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label = parts
            .next()
            .ok_or_else(|| Error::Parse { line: lineno + 1, message: "missing label".into() })?;
        // unify numeric spellings so "3" and "3.0" name the same class
        let label = match label.parse::<f64>() {
            Ok(v) if v.fract() == 0.0 && v.abs() < 1e15 => format!("{}", v as i64),
            _ => label.to_string(),
        };
        let mut row = Vec::new();
        let mut last_index = 0usize;
        for tok in parts {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: format!("expected idx:value, got '{tok}'"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("bad feature index '{idx}'"),
            })?;
            let val: f64 = val.replace('\u{2212}', "-").parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("bad feature value '{val}'"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: "feature indices are 1-based".into(),
                });
            }
            if idx <= last_index {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("indices not strictly increasing at '{tok}'"),
                });
            }
            last_index = idx;
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        raw_labels.push(label);
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::Parse { line: 0, message: "empty dataset".into() });
    }
    if max_index == 0 {
        return Err(Error::Parse { line: 0, message: "no feature indices found".into() });
    }

    // contiguous classes in sorted original order (numeric when possible)
    let mut uniq: Vec<String> = raw_labels.clone();
    uniq.sort_by(|a, b| match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap(),
        _ => a.cmp(b),
    });
    uniq.dedup();
    let index_of: BTreeMap<&str, usize> =
        uniq.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let n = rows.len();
    let d = max_index;
    let mut features = vec![0.0; n * d];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[i * d + j] = v;
        }
    }
    let labels: Vec<usize> = raw_labels.iter().map(|s| index_of[s.as_str()]).collect();
    Ok(Dataset {
        features,
        n,
        d,
        labels,
        num_classes: uniq.len(),
        name: name.to_string(),
        label_names: uniq,
        probe: vec![false; n],
    })
}

/// Reads and concatenates one or more LIBSVM files into a single dataset.
pub fn load_libsvm_files(paths: &[impl AsRef<Path>], name: &str) -> Result<Dataset> {
    let mut text = String::new();
    for p in paths {
        std::fs::File::open(p.as_ref())?.read_to_string(&mut text)?;
        if !text.ends_with('\n') {
            text.push('\n');
        }
    }
    parse_libsvm(text.as_bytes(), name)
}

// ---- label noise -----------------------------------------------------------

/// The three §-style corruption models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Uniform,
    Pairwise,
    Circular,
}

#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    /// Class-index pairs for the pairwise rules; symmetric by construction.
    pub pairs: Vec<(usize, usize)>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn uniform(rate: f64, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Uniform, rate, pairs: Vec::new(), seed }
    }

    pub fn circular(rate: f64, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Circular, rate, pairs: Vec::new(), seed }
    }

    pub fn pairwise(rate: f64, pairs: Vec<(usize, usize)>, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Pairwise, rate, pairs, seed }
    }

    fn validate(&self, num_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::config(format!("noise rate must lie in [0, 1], got {}", self.rate)));
        }
        for &(a, b) in &self.pairs {
            if a >= num_classes || b >= num_classes || a == b {
                return Err(Error::config(format!("invalid noise pair ({a}, {b})")));
            }
        }
        Ok(())
    }
}

/// Applies label noise; returns the noisy labels and a mask of entries
/// whose final label differs from the original. Uniform noise redraws
/// from all K classes including the original, so the effective flip
/// rate is `rate * (K-1)/K`.
pub fn inject_noise(
    labels: &[usize],
    num_classes: usize,
    spec: &NoiseSpec,
) -> Result<(Vec<usize>, Vec<bool>)> {
    spec.validate(num_classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut partner: Vec<Option<usize>> = vec![None; num_classes];
    for &(a, b) in &spec.pairs {
        partner[a] = Some(b);
        partner[b] = Some(a);
    }
    let mut noisy = Vec::with_capacity(labels.len());
    let mut mask = Vec::with_capacity(labels.len());
    for &y in labels {
        let flip = rng.gen::<f64>() < spec.rate;
        let new = match spec.kind {
            NoiseKind::Uniform => {
                // draw even when not flipping to keep the stream aligned
                let draw = rng.gen_range(0..num_classes);
                if flip {
                    draw
                } else {
                    y
                }
            }
            NoiseKind::Pairwise => match (flip, partner[y]) {
                (true, Some(p)) => p,
                _ => y,
            },
            NoiseKind::Circular => {
                if flip {
                    (y + 1) % num_classes
                } else {
                    y
                }
            }
        };
        noisy.push(new);
        mask.push(new != y);
    }
    Ok((noisy, mask))
}

/// Letter-recognition pairwise rules by class name (A..Z).
pub fn letter_noise_pairs() -> Vec<(String, String)> {
    [
        ("B", "D"),
        ("C", "G"),
        ("E", "F"),
        ("H", "N"),
        ("I", "L"),
        ("K", "X"),
        ("M", "W"),
        ("O", "Q"),
        ("P", "R"),
        ("U", "V"),
    ]
    .iter()
    .map(|&(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

/// Vowel pairwise rules by phonetic class name.
pub fn vowel_noise_pairs() -> Vec<(String, String)> {
    [("i", "I"), ("E", "A"), ("a:", "Y"), ("C:", "O"), ("u:", "U")]
        .iter()
        .map(|&(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// Phonetic names of the vowel classes in their canonical 0..=10 order.
pub fn vowel_class_names() -> Vec<&'static str> {
    vec!["i", "I", "E", "A", "a:", "Y", "O", "C:", "U", "u:", "3:"]
}

/// News20 pairwise rules by newsgroup name.
pub fn news20_noise_pairs() -> Vec<(String, String)> {
    [
        ("comp.os.ms-windows.misc", "comp.windows.x"),
        ("comp.sys.ibm.pc.hardware", "comp.sys.mac.hardware"),
        ("rec.autos", "rec.motorcycles"),
        ("rec.sport.baseball", "rec.sport.hockey"),
        ("sci.crypt", "sci.electronics"),
        ("soc.religion.christian", "talk.politics.misc"),
    ]
    .iter()
    .map(|&(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

/// The twenty newsgroups in the alphabetical order the numeric labels
/// 1..=20 follow.
pub fn news20_class_names() -> Vec<&'static str> {
    vec![
        "alt.atheism",
        "comp.graphics",
        "comp.os.ms-windows.misc",
        "comp.sys.ibm.pc.hardware",
        "comp.sys.mac.hardware",
        "comp.windows.x",
        "misc.forsale",
        "rec.autos",
        "rec.motorcycles",
        "rec.sport.baseball",
        "rec.sport.hockey",
        "sci.crypt",
        "sci.electronics",
        "sci.med",
        "sci.space",
        "soc.religion.christian",
        "talk.politics.guns",
        "talk.politics.mideast",
        "talk.politics.misc",
        "talk.religion.misc",
    ]
}

/// Resolves named pairs against a name -> class-index map.
pub fn resolve_pairs(
    named: &[(String, String)],
    class_of: impl Fn(&str) -> Option<usize>,
) -> Result<Vec<(usize, usize)>> {
    named
        .iter()
        .map(|(a, b)| {
            let ia = class_of(a).ok_or_else(|| Error::config(format!("unknown class '{a}'")))?;
            let ib = class_of(b).ok_or_else(|| Error::config(format!("unknown class '{b}'")))?;
            Ok((ia, ib))
        })
        .collect()
}

// ---- splits ------------------------------------------------------------------

/// Test holdout plus a fold assignment for the remaining rows.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    /// `Some(fold)` for training rows, `None` for test rows.
    pub fold: Vec<Option<usize>>,
    pub test: Vec<bool>,
    pub folds: usize,
}

impl FoldPlan {
    /// (train, val) index lists for one cross-validation round.
    pub fn split(&self, val_fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, f) in self.fold.iter().enumerate() {
            match f {
                Some(k) if *k == val_fold => val.push(i),
                Some(_) => train.push(i),
                None => {}
            }
        }
        (train, val)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.test
            .iter()
            .enumerate()
            .filter_map(|(i, &t)| t.then_some(i))
            .collect()
    }
}

/// Seeded shuffle, test holdout, then a stratified round-robin deal of
/// the remaining rows into `folds` folds.
pub fn make_folds(
    n: usize,
    test_fraction: f64,
    folds: usize,
    stratify_labels: Option<&[usize]>,
    seed: u64,
) -> Result<FoldPlan> {
    if folds < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {folds}")));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::config(format!("test fraction must lie in [0, 1), got {test_fraction}")));
    }
    if let Some(labels) = stratify_labels {
        if labels.len() != n {
            return Err(Error::config("stratify labels length mismatch"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_test = (n as f64 * test_fraction).round() as usize;

    let mut test = vec![false; n];
    for &i in order.iter().take(n_test) {
        test[i] = true;
    }
    let rest: Vec<usize> = order[n_test..].to_vec();

    let mut fold = vec![None; n];
    let mut counter = 0usize;
    if let Some(labels) = stratify_labels {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &rest {
            by_class.entry(labels[i]).or_default().push(i);
        }
        for (class, members) in by_class {
            if members.len() < folds {
                log::warn!(
                    "class {class} has {} training rows, fewer than {folds} folds",
                    members.len()
                );
            }
            for i in members {
                fold[i] = Some(counter % folds);
                counter += 1;
            }
        }
    } else {
        for i in rest {
            fold[i] = Some(counter % folds);
            counter += 1;
        }
    }
    Ok(FoldPlan { fold, test, folds })
}

// ---- synthetic Gaussians -----------------------------------------------------

/// Cluster centers of the two-dimensional synthetic layout.
pub const SYNTH_CENTERS: [[f64; 2]; 4] =
    [[0.8, 0.8], [0.8, -0.8], [-0.8, 0.8], [-0.8, -0.8]];
/// Class of each cluster; the two anti-diagonal clusters share class 2.
pub const SYNTH_CLASSES: [usize; 4] = [0, 2, 2, 1];
pub const SYNTH_STD: f64 = 0.3;

/// Three-class mixture drawn from four isotropic Gaussians.
pub fn synthetic_gaussians(n_per_cluster: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 4 * n_per_cluster;
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for (center, &class) in SYNTH_CENTERS.iter().zip(SYNTH_CLASSES.iter()) {
        for _ in 0..n_per_cluster {
            // Box-Muller keeps us off extra dependencies
            for dim in 0..2 {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                features.push(center[dim] + SYNTH_STD * z);
            }
            labels.push(class);
        }
    }
    Dataset {
        features,
        n,
        d: 2,
        labels,
        num_classes: 3,
        name: "synthetic-gaussians".into(),
        label_names: vec!["0".into(), "1".into(), "2".into()],
        probe: vec![false; n],
    }
}

// ---- binary cache --------------------------------------------------------------

const CACHE_MAGIC: &[u8; 4] = b"LDRD";
const CACHE_VERSION: u32 = 1;

/// Content hash used to key the normalized binary cache.
pub fn content_key(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Writes the little-endian binary cache (header with n, d, K).
pub fn write_cache(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    for v in [data.n as u64, data.d as u64, data.num_classes as u64] {
        out.write_all(&v.to_le_bytes())?;
    }
    for &l in &data.labels {
        out.write_all(&(l as u64).to_le_bytes())?;
    }
    for &x in &data.features {
        out.write_all(&x.to_le_bytes())?;
    }
    for name in &data.label_names {
        let bytes = name.as_bytes();
        out.write_all(&(bytes.len() as u64).to_le_bytes())?;
        out.write_all(bytes)?;
    }
    Ok(())
}

pub fn read_cache(path: &Path, name: &str) -> Result<Dataset> {
    let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Parse { line: 0, message: "bad cache magic".into() });
    }
    let mut u32buf = [0u8; 4];
    input.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != CACHE_VERSION {
        return Err(Error::Parse { line: 0, message: "unsupported cache version".into() });
    }
    let mut u64buf = [0u8; 8];
    let mut read_u64 = |input: &mut dyn Read| -> Result<u64> {
        input.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let n = read_u64(&mut input)? as usize;
    let d = read_u64(&mut input)? as usize;
    let k = read_u64(&mut input)? as usize;
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(read_u64(&mut input)? as usize);
    }
    let mut features = vec![0.0f64; n * d];
    let mut f64buf = [0u8; 8];
    for x in &mut features {
        input.read_exact(&mut f64buf)?;
        *x = f64::from_le_bytes(f64buf);
    }
    let mut label_names = Vec::with_capacity(k);
    for _ in 0..k {
        let len = read_u64(&mut input)? as usize;
        let mut buf = vec![0u8; len];
        input.read_exact(&mut buf)?;
        label_names.push(String::from_utf8_lossy(&buf).into_owned());
    }
    Ok(Dataset {
        features,
        n,
        d,
        labels,
        num_classes: k,
        name: name.to_string(),
        label_names,
        probe: vec![false; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_basic_libsvm() {
        let text = "3 1:0.5 4:-1\n1 2:2\n";
        let data = parse_libsvm(text.as_bytes(), "toy").unwrap();
        assert_eq!((data.n, data.d, data.num_classes), (2, 4, 2));
        assert_eq!(data.labels, vec![1, 0]);
        assert_eq!(data.row(0), &[0.5, 0.0, 0.0, -1.0]);
        assert_eq!(data.row(1), &[0.0, 2.0, 0.0, 0.0]);
        assert_eq!(data.label_names, vec!["1", "3"]);
    }

    #[test]
    fn empty_feature_row_is_all_zero() {
        let text = "2\n1 1:1\n";
        let data = parse_libsvm(text.as_bytes(), "toy").unwrap();
        assert_eq!(data.row(0), &[0.0]);
    }

    #[test]
    fn rejects_non_increasing_indices() {
        let err = parse_libsvm("1 3:1 2:1\n".as_bytes(), "toy").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn noise_zero_rate_is_identity() {
        let labels = vec![0, 1, 2, 3, 2, 1];
        let (noisy, mask) = inject_noise(&labels, 4, &NoiseSpec::uniform(0.0, 7)).unwrap();
        assert_eq!(noisy, labels);
        assert!(mask.iter().all(|&m| !m));
    }

    #[test]
    fn circular_full_rate_rotates() {
        let (noisy, mask) = inject_noise(&[0, 1, 2], 3, &NoiseSpec::circular(1.0, 7)).unwrap();
        assert_eq!(noisy, vec![1, 2, 0]);
        assert!(mask.iter().all(|&m| m));
    }

    #[test]
    fn uniform_noise_hits_expected_flip_rate() {
        let k = 26;
        let n = 15000;
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let (_, mask) = inject_noise(&labels, k, &NoiseSpec::uniform(0.9, 123)).unwrap();
        let frac = mask.iter().filter(|&&m| m).count() as f64 / n as f64;
        let want = 0.9 * 25.0 / 26.0;
        assert!((frac - want).abs() < 0.01, "flip fraction {frac}, expected ~{want}");
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let labels: Vec<usize> = (0..500).map(|i| i % 7).collect();
        let spec = NoiseSpec::uniform(0.4, 99);
        let a = inject_noise(&labels, 7, &spec).unwrap();
        let b = inject_noise(&labels, 7, &spec).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn pairwise_rules_are_symmetric_and_resolve() {
        let names = vowel_class_names();
        let class_of = |s: &str| names.iter().position(|&n| n == s);
        let pairs = resolve_pairs(&vowel_noise_pairs(), class_of).unwrap();
        assert_eq!(pairs.len(), 5);
        // every class appears at most once across the rule set
        let mut seen = vec![false; names.len()];
        for &(a, b) in &pairs {
            assert!(!seen[a] && !seen[b]);
            seen[a] = true;
            seen[b] = true;
        }
        let labels = vec![0, 1, 2, 3, 10];
        let spec = NoiseSpec::pairwise(1.0, pairs, 3);
        let (noisy, mask) = inject_noise(&labels, 11, &spec).unwrap();
        assert_eq!(noisy, vec![1, 0, 3, 2, 10]);
        assert_eq!(mask, vec![true, true, true, true, false]);
    }

    #[test]
    fn uniform_noise_keeps_majority_label() {
        // below the 1 - 1/K tolerance threshold the true label remains
        // the per-class majority
        let k = 5;
        let n = 20_000;
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let (noisy, _) = inject_noise(&labels, k, &NoiseSpec::uniform(0.6, 31)).unwrap();
        for class in 0..k {
            let mut counts = vec![0usize; k];
            for (i, &l) in noisy.iter().enumerate() {
                if labels[i] == class {
                    counts[l] += 1;
                }
            }
            let majority = counts.iter().enumerate().max_by_key(|&(_, c)| c).unwrap().0;
            assert_eq!(majority, class, "class {class} lost its majority: {counts:?}");
        }
    }

    #[test]
    fn news20_rules_resolve_and_are_self_inverse() {
        let names = news20_class_names();
        let class_of = |s: &str| names.iter().position(|&n| n == s);
        let pairs = resolve_pairs(&news20_noise_pairs(), class_of).unwrap();
        assert_eq!(pairs.len(), 6);
        let mut seen = vec![false; names.len()];
        for &(a, b) in &pairs {
            assert!(!seen[a] && !seen[b]);
            seen[a] = true;
            seen[b] = true;
        }
        // comp.os.ms-windows.misc (2) <-> comp.windows.x (5)
        assert!(pairs.contains(&(2, 5)));
    }

    #[test]
    fn folds_are_deterministic_and_balanced() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let plan = make_folds(100, 0.1, 5, Some(&labels), 11).unwrap();
        let plan2 = make_folds(100, 0.1, 5, Some(&labels), 11).unwrap();
        assert_eq!(plan.fold, plan2.fold);
        assert_eq!(plan.test, plan2.test);

        assert_eq!(plan.test.iter().filter(|&&t| t).count(), 10);
        let mut fold_sizes = vec![0usize; 5];
        for f in plan.fold.iter().flatten() {
            fold_sizes[*f] += 1;
        }
        assert_eq!(fold_sizes.iter().sum::<usize>(), 90);
        assert_eq!(fold_sizes, vec![18; 5]);

        // stratification: per-class fold counts differ by at most one
        for class in 0..4 {
            let mut counts = vec![0usize; 5];
            for (i, f) in plan.fold.iter().enumerate() {
                if let Some(f) = f {
                    if labels[i] == class {
                        counts[*f] += 1;
                    }
                }
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "class {class}: {counts:?}");
        }
    }

    #[test]
    fn synthetic_layout() {
        let data = synthetic_gaussians(50, 5);
        assert_eq!((data.n, data.d, data.num_classes), (200, 2, 3));
        // empirical means stay within 3 sigma / sqrt(n) of the centers
        let tol = 3.0 * SYNTH_STD / (50f64).sqrt();
        for (c, center) in SYNTH_CENTERS.iter().enumerate() {
            let rows: Vec<&[f64]> =
                (c * 50..(c + 1) * 50).map(|i| data.row(i)).collect();
            for dim in 0..2 {
                let mean: f64 = rows.iter().map(|r| r[dim]).sum::<f64>() / 50.0;
                assert!((mean - center[dim]).abs() < tol);
            }
        }
        let mut with_probe = data.clone();
        with_probe.push_probe(&[0.8, 0.8], 1);
        assert_eq!(with_probe.labels[200], 1);
        assert!(with_probe.probe[200]);
        assert!(!with_probe.probe[0]);
    }

    #[test]
    fn cache_roundtrip() {
        let data = parse_libsvm("3 1:0.5 4:-1\n1 2:2\n".as_bytes(), "toy").unwrap();
        let dir = std::env::temp_dir().join(format!("ldr-cache-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("{}.bin", content_key(b"toy")));
        write_cache(&path, &data).unwrap();
        let back = read_cache(&path, "toy").unwrap();
        assert_eq!(back.features, data.features);
        assert_eq!(back.labels, data.labels);
        assert_eq!(back.label_names, data.label_names);
        std::fs::remove_dir_all(&dir).ok();
    }
}
