//! Fixed-length encodings of point clouds, instructions and trajectories.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frame::{to_part_frame, PartFrame, PointCloudPart};
use crate::trajectory::{interpolate, normalize_length, Trajectory};

pub const GRID_SIDE: usize = 10;
pub const GRID_CELLS: usize = GRID_SIDE * GRID_SIDE * GRID_SIDE;
pub const FINE_CELL: f64 = 0.01;
pub const COARSE_CELL: f64 = 0.025;
/// Scalars per waypoint: gripper ordinal, translation, quaternion.
pub const WAYPOINT_WIDTH: usize = 8;

const STOP_WORDS: &str = include_str!("../data/stopwords.txt");

/// 10×10×10 binary occupancy grid centered on the part frame origin.
/// Cell `i` along an axis spans `[(i − 5)·s, (i − 4)·s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    cells: Vec<bool>,
    cell_size_um: u64,
}

impl OccupancyGrid {
    pub fn cell_size(&self) -> f64 {
        self.cell_size_um as f64 * 1e-6
    }

    pub fn index(ix: usize, iy: usize, iz: usize) -> usize {
        (ix * GRID_SIDE + iy) * GRID_SIDE + iz
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> bool {
        self.cells[Self::index(ix, iy, iz)]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Intersection over union of occupied cells; two empty grids score 1.
    pub fn jaccard(&self, other: &OccupancyGrid) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.cells.iter().zip(&other.cells) {
            inter += usize::from(a && b);
            union += usize::from(a || b);
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Marks every cell of the grid containing at least one point of `part`
/// after transforming the points into `frame`. Points beyond the grid extent
/// are ignored.
pub fn voxelize(part: &PointCloudPart, frame: &PartFrame, cell_size: f64) -> OccupancyGrid {
    assert!(cell_size > 0.0, "cell size must be positive");
    let mut cells = vec![false; GRID_CELLS];
    let half = (GRID_SIDE / 2) as f64;
    for p in &part.points {
        let local = frame.point_to_frame(p.position);
        let bin = |c: f64| -> Option<usize> {
            let i = (c / cell_size).floor() + half;
            (i >= 0.0 && i < GRID_SIDE as f64).then_some(i as usize)
        };
        if let (Some(ix), Some(iy), Some(iz)) = (bin(local.x), bin(local.y), bin(local.z)) {
            cells[OccupancyGrid::index(ix, iy, iz)] = true;
        }
    }
    OccupancyGrid {
        cells,
        cell_size_um: (cell_size * 1e6).round() as u64,
    }
}

/// Both grids flattened, fine grid first, as 0/1 values.
pub fn embed_point_cloud(part: &PointCloudPart, frame: &PartFrame) -> Vec<f64> {
    let fine = voxelize(part, frame, FINE_CELL);
    let coarse = voxelize(part, frame, COARSE_CELL);
    fine.cells
        .iter()
        .chain(&coarse.cells)
        .map(|&c| if c { 1.0 } else { 0.0 })
        .collect()
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords(BTreeSet<String>);

impl Default for StopWords {
    /// The shipped English list.
    fn default() -> Self {
        StopWords::parse(STOP_WORDS)
    }
}

impl StopWords {
    pub fn parse(text: &str) -> Self {
        StopWords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(StopWords::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for StopWords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        StopWords(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Frozen, sorted token list. The id is a content hash of the tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    id: String,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        Vocabulary::from_tokens(tokens).map_err(serde::de::Error::custom)
    }
}

impl Vocabulary {
    /// Builds from an arbitrary token list; tokens are sorted and deduplicated.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let set: BTreeSet<String> = tokens.into_iter().collect();
        if set.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let tokens: Vec<String> = set.into_iter().collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let id = content_id(&tokens);
        Ok(Vocabulary { tokens, index, id })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// File form: `# vocab_id <hash>` header, then one token per line.
    pub fn to_file_string(&self) -> String {
        let mut out = format!("# vocab_id {}\n", self.id);
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn parse_file(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut tokens = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(id) = rest.trim().strip_prefix("vocab_id") {
                    declared = Some(id.trim().to_string());
                }
                continue;
            }
            tokens.push(line.to_string());
        }
        let vocab = Vocabulary::from_tokens(tokens)?;
        match declared {
            Some(id) if id != vocab.id => Err(Error::invalid(
                "vocab_id",
                format!("header says {id}, tokens hash to {}", vocab.id),
            )),
            _ => Ok(vocab),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::parse_file(&text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }
}

fn content_id(tokens: &[String]) -> String {
    let mut h = Sha256::new();
    for t in tokens {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Sorted unique tokens of `corpus`, minus `stop_words`.
pub fn build_vocabulary<S: AsRef<str>>(corpus: &[S], stop_words: &StopWords) -> Result<Vocabulary> {
    let tokens: BTreeSet<String> = corpus
        .iter()
        .flat_map(|s| tokenize(s.as_ref()).collect::<Vec<_>>())
        .filter(|t| !stop_words.contains(t))
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// Bag-of-words counts over a frozen vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagOfWords {
    pub counts: Vec<u32>,
    pub vocab_id: String,
}

impl BagOfWords {
    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| f64::from(c)).collect()
    }

    /// Cosine similarity; zero when either side is the zero vector.
    pub fn cosine(&self, other: &BagOfWords) -> f64 {
        let dot: f64 = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        let na: f64 = self.counts.iter().map(|&a| f64::from(a).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = other.counts.iter().map(|&b| f64::from(b).powi(2)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

/// Counts in-vocabulary tokens of `instruction`; unknown tokens are dropped.
pub fn embed_language(instruction: &str, vocab: &Vocabulary) -> BagOfWords {
    let mut counts = vec![0u32; vocab.len()];
    for tok in tokenize(instruction) {
        if let Some(i) = vocab.position(&tok) {
            counts[i] += 1;
        }
    }
    BagOfWords {
        counts,
        vocab_id: vocab.id().to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Waypoints per trajectory after length normalization.
    pub target_len: usize,
    /// Intermediate waypoints inserted per segment before normalization.
    pub samples_per_segment: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            target_len: 15,
            samples_per_segment: 4,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_len == 0 {
            return Err(Error::invalid("target_len", "must be positive"));
        }
        if self.samples_per_segment == 0 {
            return Err(Error::invalid("samples_per_segment", "must be positive"));
        }
        Ok(())
    }

    pub fn trajectory_width(&self) -> usize {
        self.target_len * WAYPOINT_WIDTH
    }
}

/// Flattens a part-frame trajectory after smoothing and length normalization.
pub fn embed_part_trajectory(traj: &Trajectory, config: &FeatureConfig) -> Result<Vec<f64>> {
    let smooth = if traj.len() >= 2 {
        interpolate(traj, config.samples_per_segment)?
    } else {
        traj.clone()
    };
    let norm = normalize_length(&smooth, config.target_len)?;
    let mut out = Vec::with_capacity(config.trajectory_width());
    for w in &norm.waypoints {
        out.push(w.gripper.ordinal());
        out.extend(w.translation.to_array());
        out.extend(w.rotation.to_array());
    }
    Ok(out)
}

/// Expresses a world-frame trajectory in `frame`, then embeds it.
pub fn embed_trajectory(traj: &Trajectory, frame: &PartFrame, config: &FeatureConfig) -> Result<Vec<f64>> {
    embed_part_trajectory(&to_part_frame(traj, frame), config)
}

/// Network input: the three modalities side by side. Modalities are shared
/// pointers since one point cloud or trajectory appears in many examples.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub pc: Arc<[f64]>,
    pub lang: Arc<[f64]>,
    pub traj: Arc<[f64]>,
}

impl FeatureVector {
    pub fn new(pc: impl Into<Arc<[f64]>>, lang: impl Into<Arc<[f64]>>, traj: impl Into<Arc<[f64]>>) -> Self {
        FeatureVector {
            pc: pc.into(),
            lang: lang.into(),
            traj: traj.into(),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.pc.len(), self.lang.len(), self.traj.len())
    }

    pub fn is_finite(&self) -> bool {
        self.pc
            .iter()
            .chain(self.lang.iter())
            .chain(self.traj.iter())
            .all(|v| v.is_finite())
    }
}
