//! On-disk dataset format: import, export and durable demo submission.
//!
//! ```text
//! <root>/dataset.json            metadata
//! <root>/vocab.txt               optional frozen vocabulary
//! <root>/<object>/part_<id>.json point cloud (world frame) and optional frame
//! <root>/<object>/manual.json    manuals, instructions and demo references
//! <root>/<object>/demos/<id>.json trajectories
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::Vocabulary;
use crate::frame::{compute_part_frame, from_part_frame, to_part_frame, PartFrame, PointCloudPart, DEFAULT_GRAVITY};
use crate::labels::TaskInstance;
use crate::math::Vec3;
use crate::trajectory::Trajectory;

pub const FORMAT_VERSION: u32 = 1;
const METADATA_FILE: &str = "dataset.json";
const VOCAB_FILE: &str = "vocab.txt";
const MANUAL_FILE: &str = "manual.json";
const DEMO_DIR: &str = "demos";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub objects: usize,
    pub parts: usize,
    pub manuals: usize,
    pub instructions: usize,
    pub demos: usize,
    pub expert_demos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub name: String,
    pub version: u32,
    /// Seconds since the Unix epoch.
    pub created: u64,
    #[serde(default = "default_gravity")]
    pub gravity: Vec3,
    #[serde(default)]
    pub counts: Counts,
}

fn default_gravity() -> Vec3 {
    DEFAULT_GRAVITY
}

impl Metadata {
    pub fn new(name: impl Into<String>) -> Self {
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Metadata {
            name: name.into(),
            version: FORMAT_VERSION,
            created,
            gravity: DEFAULT_GRAVITY,
            counts: Counts::default(),
        }
    }
}

/// Tasks with their demonstrations in part frames, plus metadata and an
/// optional frozen vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub metadata: Metadata,
    pub tasks: Vec<TaskInstance>,
    pub vocab: Option<Vocabulary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoFrame {
    World,
    #[default]
    Part,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartFile {
    part_id: String,
    points: Vec<crate::frame::ColoredPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame: Option<PartFrame>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManualFile {
    #[serde(default)]
    demo_frame: DemoFrame,
    manuals: Vec<ManualEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManualEntry {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fold: Option<usize>,
    instructions: Vec<InstructionEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstructionEntry {
    task_id: String,
    part_id: String,
    instruction: String,
    demos: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expert: Option<String>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(path, &text)
}

/// Parses JSON, reporting the failing field path and line/column.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        Error::Schema {
            path: path.to_path_buf(),
            message: if field == "." {
                inner.to_string()
            } else {
                format!("at {field}: {inner}")
            },
        }
    })
}

/// Writes through a temporary file, syncs it and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    if let Ok(d) = fs::File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn check_id(path: &Path, what: &str, id: &str) -> Result<()> {
    if valid_id(id) {
        Ok(())
    } else {
        Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!("{what} {id:?} must be non-empty and use only [A-Za-z0-9._-]"),
        })
    }
}

fn demo_path(object_dir: &Path, id: &str) -> PathBuf {
    object_dir.join(DEMO_DIR).join(format!("{id}.json"))
}

fn load_demo(object_dir: &Path, id: &str, frame: &PartFrame, demo_frame: DemoFrame) -> Result<Trajectory> {
    let path = demo_path(object_dir, id);
    if !path.exists() {
        return Err(Error::Reference(format!(
            "{}: demo {id:?} has no file {}",
            object_dir.join(MANUAL_FILE).display(),
            path.display()
        )));
    }
    let traj: Trajectory = read_json(&path)?;
    traj.validate().map_err(|e| Error::Schema {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if traj.id != id {
        return Err(Error::Schema {
            path,
            message: format!("id {:?} does not match the file name", traj.id),
        });
    }
    Ok(match demo_frame {
        DemoFrame::Part => traj,
        DemoFrame::World => to_part_frame(&traj, frame),
    })
}

fn object_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() && path.join(MANUAL_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

impl Dataset {
    pub fn new(metadata: Metadata, mut tasks: Vec<TaskInstance>, vocab: Option<Vocabulary>) -> Result<Self> {
        tasks.sort_by(|a, b| a.id.cmp(&b.id));
        let mut ds = Dataset { metadata, tasks, vocab };
        ds.check_integrity()?;
        ds.metadata.counts = ds.counts();
        Ok(ds)
    }

    pub fn counts(&self) -> Counts {
        let objects: BTreeSet<&str> = self.tasks.iter().map(|t| t.object_id.as_str()).collect();
        let parts: BTreeSet<(&str, &str)> = self
            .tasks
            .iter()
            .map(|t| (t.object_id.as_str(), t.part.part_id.as_str()))
            .collect();
        let manuals: BTreeSet<&str> = self.tasks.iter().map(|t| t.manual_id.as_str()).collect();
        Counts {
            objects: objects.len(),
            parts: parts.len(),
            manuals: manuals.len(),
            instructions: self.tasks.len(),
            demos: self.pool().len(),
            expert_demos: self.tasks.iter().filter(|t| t.expert_demo.is_some()).count(),
        }
    }

    fn check_integrity(&self) -> Result<()> {
        let mut task_ids = BTreeSet::new();
        let mut demo_owner: HashMap<&str, (&str, &Trajectory)> = HashMap::new();
        let mut manual_object: HashMap<&str, &str> = HashMap::new();
        for t in &self.tasks {
            if !task_ids.insert(t.id.as_str()) {
                return Err(Error::Reference(format!("duplicate task id {:?}", t.id)));
            }
            if t.demos.is_empty() {
                return Err(Error::Reference(format!("task {:?} has no demonstrations", t.id)));
            }
            if let Some(obj) = manual_object.insert(&t.manual_id, &t.object_id) {
                if obj != t.object_id {
                    return Err(Error::Reference(format!(
                        "manual {:?} spans objects {obj:?} and {:?}",
                        t.manual_id, t.object_id
                    )));
                }
            }
            for d in t.demos.iter().chain(t.expert_demo.iter()) {
                if let Some((obj, existing)) = demo_owner.insert(&d.id, (&t.object_id, d)) {
                    if obj != t.object_id || existing != d {
                        return Err(Error::Reference(format!(
                            "trajectory id {:?} is used for different data",
                            d.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Distinct crowd demonstrations across all tasks, sorted by id.
    pub fn pool(&self) -> Vec<&Trajectory> {
        let mut map: BTreeMap<&str, &Trajectory> = BTreeMap::new();
        for t in &self.tasks {
            for d in &t.demos {
                map.entry(d.id.as_str()).or_insert(d);
            }
        }
        map.into_values().collect()
    }

    pub fn task(&self, id: &str) -> Option<&TaskInstance> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Hash of the task content and vocabulary; ignores the creation time.
    pub fn content_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.tasks)?);
        if let Some(v) = &self.vocab {
            h.update(v.id().as_bytes());
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn import(root: &Path) -> Result<Dataset> {
        if !root.is_dir() {
            return Err(Error::io(
                root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            ));
        }
        let meta_path = root.join(METADATA_FILE);
        let dirs = object_dirs(root)?;
        if dirs.is_empty() && !meta_path.exists() {
            return Err(Error::EmptyDataset);
        }
        let metadata: Metadata = if meta_path.exists() {
            read_json(&meta_path)?
        } else {
            Metadata::new(root.file_name().and_then(|n| n.to_str()).unwrap_or("dataset"))
        };
        if metadata.version != FORMAT_VERSION {
            return Err(Error::Schema {
                path: meta_path,
                message: format!("unsupported format version {}", metadata.version),
            });
        }
        let vocab_path = root.join(VOCAB_FILE);
        let vocab = if vocab_path.exists() {
            Some(Vocabulary::load(&vocab_path)?)
        } else {
            None
        };

        let mut tasks = Vec::new();
        for dir in &dirs {
            tasks.extend(load_object(dir, metadata.gravity)?);
        }
        if tasks.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let recorded = metadata.counts.clone();
        let ds = Dataset::new(metadata, tasks, vocab)?;
        if recorded != Counts::default() && recorded != ds.metadata.counts {
            warn!(
                "{}: recorded counts {:?} differ from loaded counts {:?}",
                meta_path.display(),
                recorded,
                ds.metadata.counts
            );
        }
        Ok(ds)
    }

    /// Writes the dataset with demonstrations stored in part frames.
    pub fn export(&self, root: &Path) -> Result<()> {
        self.export_with(root, DemoFrame::Part)
    }

    /// Writes the dataset with demonstrations in the requested frame.
    pub fn export_with(&self, root: &Path, demo_frame: DemoFrame) -> Result<()> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let mut metadata = self.metadata.clone();
        metadata.counts = self.counts();
        write_json(&root.join(METADATA_FILE), &metadata)?;
        if let Some(v) = &self.vocab {
            v.save(&root.join(VOCAB_FILE))?;
        }

        let mut by_object: BTreeMap<&str, Vec<&TaskInstance>> = BTreeMap::new();
        for t in &self.tasks {
            by_object.entry(&t.object_id).or_default().push(t);
        }
        for (object, tasks) in by_object {
            let dir = root.join(object);
            check_id(&dir, "object id", object)?;
            let mut parts: BTreeMap<&str, (&PointCloudPart, &PartFrame)> = BTreeMap::new();
            let mut demos: BTreeMap<&str, (&Trajectory, &PartFrame)> = BTreeMap::new();
            let mut manuals: BTreeMap<&str, ManualEntry> = BTreeMap::new();
            for t in tasks {
                check_id(&dir, "part id", &t.part.part_id)?;
                parts.insert(&t.part.part_id, (&t.part, &t.frame));
                for d in t.demos.iter().chain(t.expert_demo.iter()) {
                    check_id(&dir, "trajectory id", &d.id)?;
                    demos.entry(&d.id).or_insert((d, &t.frame));
                }
                let entry = manuals.entry(&t.manual_id).or_insert_with(|| ManualEntry {
                    id: t.manual_id.clone(),
                    fold: t.fold,
                    instructions: Vec::new(),
                });
                entry.instructions.push(InstructionEntry {
                    task_id: t.id.clone(),
                    part_id: t.part.part_id.clone(),
                    instruction: t.instruction.clone(),
                    demos: t.demos.iter().map(|d| d.id.clone()).collect(),
                    expert: t.expert_demo.as_ref().map(|d| d.id.clone()),
                });
            }
            for (id, (part, frame)) in parts {
                let file = PartFile {
                    part_id: id.to_string(),
                    points: part.points.clone(),
                    frame: Some(*frame),
                };
                write_json(&dir.join(format!("part_{id}.json")), &file)?;
            }
            for (id, (d, frame)) in demos {
                match demo_frame {
                    DemoFrame::Part => write_json(&demo_path(&dir, id), d)?,
                    DemoFrame::World => write_json(&demo_path(&dir, id), &from_part_frame(d, frame))?,
                }
            }
            let manual = ManualFile {
                demo_frame,
                manuals: manuals.into_values().collect(),
            };
            write_json(&dir.join(MANUAL_FILE), &manual)?;
        }
        Ok(())
    }

    /// Durably appends a demonstration (given in the world frame) to a task
    /// on disk and in memory. The demo file is written before the manual that
    /// references it, so an interrupted write never leaves a dangling id.
    pub fn append_demo(&mut self, root: &Path, task_id: &str, world: &Trajectory) -> Result<()> {
        world.validate()?;
        let index = self
            .tasks
            .iter()
            .position(|t| t.id == task_id)
            .ok_or_else(|| Error::Reference(format!("unknown task {task_id:?}")))?;
        if self
            .tasks
            .iter()
            .any(|t| t.demos.iter().chain(t.expert_demo.iter()).any(|d| d.id == world.id))
        {
            return Err(Error::invalid(
                "id",
                format!("trajectory id {:?} already exists", world.id),
            ));
        }
        let task = &self.tasks[index];
        let dir = root.join(&task.object_id);
        check_id(&dir, "trajectory id", &world.id)?;
        let manual_path = dir.join(MANUAL_FILE);
        let mut manual: ManualFile = read_json(&manual_path)?;
        let part_frame = to_part_frame(world, &task.frame);
        let stored = match manual.demo_frame {
            DemoFrame::Part => part_frame.clone(),
            DemoFrame::World => world.clone(),
        };
        let entry = manual
            .manuals
            .iter_mut()
            .flat_map(|m| m.instructions.iter_mut())
            .find(|i| i.task_id == task_id)
            .ok_or_else(|| Error::Reference(format!("{}: task {task_id:?} not found", manual_path.display())))?;
        entry.demos.push(world.id.clone());
        write_json(&demo_path(&dir, &world.id), &stored)?;
        write_json(&manual_path, &manual)?;

        self.tasks[index].demos.push(part_frame);
        self.metadata.counts = self.counts();
        write_json(&root.join(METADATA_FILE), &self.metadata)?;
        Ok(())
    }

    /// World-frame copy of a part-frame trajectory for the given task.
    pub fn to_world(&self, task: &TaskInstance, traj: &Trajectory) -> Trajectory {
        from_part_frame(traj, &task.frame)
    }
}

fn load_object(dir: &Path, gravity: Vec3) -> Result<Vec<TaskInstance>> {
    let object_id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Schema {
            path: dir.to_path_buf(),
            message: "object directory name is not valid UTF-8".into(),
        })?
        .to_string();
    let manual_path = dir.join(MANUAL_FILE);
    let manual: ManualFile = read_json(&manual_path)?;

    let mut parts: HashMap<String, (PointCloudPart, PartFrame)> = HashMap::new();
    let mut demos: HashMap<(String, String), Trajectory> = HashMap::new();
    let mut tasks = Vec::new();
    for m in &manual.manuals {
        for ins in &m.instructions {
            if !parts.contains_key(&ins.part_id) {
                let path = dir.join(format!("part_{}.json", ins.part_id));
                if !path.exists() {
                    return Err(Error::Reference(format!(
                        "{}: task {:?} refers to missing part {:?}",
                        manual_path.display(),
                        ins.task_id,
                        ins.part_id
                    )));
                }
                let file: PartFile = read_json(&path)?;
                let schema = |e: Error| Error::Schema {
                    path: path.clone(),
                    message: e.to_string(),
                };
                if file.part_id != ins.part_id {
                    return Err(Error::Schema {
                        path: path.clone(),
                        message: format!("part_id {:?} does not match the file name", file.part_id),
                    });
                }
                let part = PointCloudPart::new(file.part_id, file.points).map_err(schema)?;
                let frame = match file.frame {
                    Some(f) => f,
                    None => compute_part_frame(&part, gravity).map_err(schema)?,
                };
                parts.insert(ins.part_id.clone(), (part, frame));
            }
            let (part, frame) = &parts[&ins.part_id];
            let mut fetch = |id: &String| -> Result<Trajectory> {
                let key = (ins.part_id.clone(), id.clone());
                if let Some(t) = demos.get(&key) {
                    return Ok(t.clone());
                }
                let t = load_demo(dir, id, frame, manual.demo_frame)?;
                demos.insert(key, t.clone());
                Ok(t)
            };
            let task_demos = ins.demos.iter().map(&mut fetch).collect::<Result<Vec<_>>>()?;
            let expert = ins.expert.as_ref().map(&mut fetch).transpose()?;
            tasks.push(TaskInstance {
                id: ins.task_id.clone(),
                object_id: object_id.clone(),
                manual_id: m.id.clone(),
                part: part.clone(),
                frame: *frame,
                instruction: ins.instruction.clone(),
                demos: task_demos,
                expert_demo: expert,
                fold: m.fold,
            });
        }
    }
    Ok(tasks)
}
