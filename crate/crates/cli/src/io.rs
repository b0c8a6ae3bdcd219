use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use momentmix::combinatorics::TensorKey;
use momentmix::gmm::{MixtureMoments, MomentSet, SampleSet};
use serde::{Deserialize, Serialize};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            writeln!(lock)?;
        }
    }
    Ok(())
}

/// `samples.csv` -> `samples.labels.csv`
pub fn labels_path(samples: &Path) -> PathBuf {
    let stem = samples
        .file_stem()
        .map_or_else(|| "samples".into(), |s| s.to_string_lossy().into_owned());
    samples.with_file_name(format!("{stem}.labels.csv"))
}

pub fn write_samples(path: &Path, samples: &SampleSet) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    for row in samples.rows() {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = create(path)?;
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<SampleSet> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut data = Vec::new();
    let mut width = None;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: bad CSV record", path.display()))?;
        if *width.get_or_insert(rec.len()) != rec.len() {
            bail!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                line + 1,
                rec.len(),
                width.unwrap()
            );
        }
        for field in rec.iter() {
            data.push(
                field
                    .parse::<f64>()
                    .with_context(|| format!("{}: row {}: not a number: {field:?}", path.display(), line + 1))?,
            );
        }
    }
    let Some(d) = width else {
        bail!("{}: no samples", path.display())
    };
    Ok(SampleSet::new(d, data)?)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .with_context(|| format!("{}: line {}: bad label", path.display(), i + 1))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct MomentEntry {
    key: Vec<usize>,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct MomentSetFile {
    order: usize,
    entries: Vec<MomentEntry>,
}

/// On-disk form of the moments the learner consumes.
#[derive(Serialize, Deserialize)]
pub struct MomentsFile {
    d: usize,
    high: MomentSetFile,
    aux: MomentSetFile,
    sign: Option<MomentSetFile>,
}

fn to_file(ms: &MomentSet) -> MomentSetFile {
    MomentSetFile {
        order: ms.order,
        entries: ms
            .values
            .iter()
            .map(|(k, &v)| MomentEntry {
                key: k.slots().to_vec(),
                value: v,
            })
            .collect(),
    }
}

fn from_file(f: MomentSetFile, d: usize) -> Result<MomentSet> {
    let mut values = std::collections::BTreeMap::new();
    for e in f.entries {
        if e.key.len() != f.order || e.key.iter().any(|&s| s >= d) {
            bail!("moment key {:?} does not fit order {} and dimension {d}", e.key, f.order);
        }
        values.insert(TensorKey::from_unsorted(e.key), e.value);
    }
    Ok(MomentSet {
        order: f.order,
        d,
        values,
    })
}

pub fn write_moments(w: &mut dyn Write, m: &MixtureMoments) -> Result<()> {
    let file = MomentsFile {
        d: m.high.d,
        high: to_file(&m.high),
        aux: to_file(&m.aux),
        sign: m.sign.as_ref().map(to_file),
    };
    serde_json::to_writer_pretty(w, &file)?;
    Ok(())
}

pub fn read_moments(path: &Path) -> Result<MixtureMoments> {
    let file: MomentsFile =
        serde_json::from_reader(open(path)?).with_context(|| format!("{}: bad moments file", path.display()))?;
    let d = file.d;
    Ok(MixtureMoments {
        high: from_file(file.high, d)?,
        aux: from_file(file.aux, d)?,
        sign: file.sign.map(|s| from_file(s, d)).transpose()?,
    })
}
