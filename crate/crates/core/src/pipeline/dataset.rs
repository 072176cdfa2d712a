use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::Frame;

use super::{EventSample, BATCH_FRAMES, CLASS_NAMES};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetIndex {
    n: usize,
    classes: Vec<String>,
    samples: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    label: usize,
    class: String,
    /// Extra labels of a multi-event sample; the loader emits one copy per
    /// label.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    also: Vec<usize>,
    trajectories: Vec<Vec<(usize, usize)>>,
    seed: u64,
}

fn sample_dir(i: usize) -> String {
    format!("sample_{i:05}")
}

/// Writes `dataset.json` and one directory per sample holding
/// `frame_0.ppm` .. `frame_3.ppm` and `manifest.json`.
pub fn save_dataset(dir: impl AsRef<Path>, samples: &[EventSample]) -> Result<()> {
    let dir = dir.as_ref();
    let first = samples
        .first()
        .ok_or_else(|| invalid("refusing to write an empty dataset"))?;
    fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = sample_dir(i);
        let sd = dir.join(&name);
        fs::create_dir_all(&sd)?;
        for (t, f) in s.frames.iter().enumerate() {
            f.save_ppm(sd.join(format!("frame_{t}.ppm")))?;
        }
        let class = CLASS_NAMES
            .get(s.label)
            .map(|c| c.to_string())
            .unwrap_or_else(|| format!("class_{}", s.label));
        let manifest = Manifest {
            label: s.label,
            class,
            also: Vec::new(),
            trajectories: s.trajectories.clone(),
            seed: s.seed,
        };
        fs::write(
            sd.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        names.push(name);
    }
    let index = DatasetIndex {
        n: first.frames[0].height(),
        classes: CLASS_NAMES.iter().map(|c| c.to_string()).collect(),
        samples: names,
    };
    fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&index)? + "\n")?;
    Ok(())
}

/// Reads a dataset written by [`save_dataset`]. A manifest with extra labels
/// yields one sample per label.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<EventSample>> {
    let dir = dir.as_ref();
    let index: DatasetIndex = serde_json::from_str(&fs::read_to_string(dir.join("dataset.json"))?)?;
    let mut out = Vec::new();
    for name in &index.samples {
        let sd = dir.join(name);
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(sd.join("manifest.json"))?)?;
        let frames = (0..BATCH_FRAMES)
            .map(|t| Frame::load_ppm(sd.join(format!("frame_{t}.ppm"))))
            .collect::<Result<Vec<_>>>()?;
        if frames[0].height() != index.n {
            return Err(Error::Format(format!(
                "{name}: frame side {} != {}",
                frames[0].height(),
                index.n
            )));
        }
        for label in std::iter::once(manifest.label).chain(manifest.also.iter().copied()) {
            if label >= index.classes.len() {
                return Err(Error::Format(format!("{name}: label {label} out of range")));
            }
            out.push(EventSample::new(
                frames.clone(),
                label,
                manifest.trajectories.clone(),
                manifest.seed,
            )?);
        }
    }
    Ok(out)
}

/// Loads a folder of pre-extracted PPM frames (sorted by file name), keeps
/// every `every`-th frame, resizes to `n x n`, and cuts consecutive
/// four-frame batches. Each batch is emitted once per label.
pub fn load_frame_folder(dir: impl AsRef<Path>, labels: &[usize], every: usize, n: usize) -> Result<Vec<EventSample>> {
    if every == 0 {
        return Err(invalid("frame stride must be positive"));
    }
    if labels.is_empty() {
        return Err(invalid("a frame folder needs at least one label"));
    }
    let mut paths: Vec<_> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .collect();
    paths.sort();
    let frames = paths
        .iter()
        .step_by(every)
        .map(|p| Frame::load_ppm(p)?.resize(n, n))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for batch in frames.chunks_exact(BATCH_FRAMES) {
        for &label in labels {
            out.push(EventSample::new(batch.to_vec(), label, Vec::new(), 0)?);
        }
    }
    Ok(out)
}
