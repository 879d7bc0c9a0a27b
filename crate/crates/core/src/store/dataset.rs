//! Dataset directories.
//!
//! ```text
//! manifest.toml
//! x.bin | x.csv                 N × T × D abundances (subject,time,species)
//! labels.csv                    subject,y,split
//! concepts.csv                  subject,community,value
//! truth/theta.csv               subject,community,value
//! truth/dictionary.bin | .csv   K × T × D (community,time,species)
//! truth/kinds.csv               community,species,kind
//! truth/bloom_centers.csv       community,species,time
//! truth/clusters.csv            subject,cluster_id
//! truth/disease_clusters.csv    cluster,disease
//! ```
//!
//! `truth/` is optional; without it the dataset loads with no ground truth.

use std::path::Path;

use ndarray::{Array2, Array3, ArrayD, Ix2, Ix3};
use serde::{Deserialize, Serialize};

use super::{read_artifact, write_artifact, Artifact, ArtifactKind, ArtifactRef, Payload, WriteOptions};
use crate::error::{Error, Result};
use crate::format::{decode_binary, decode_csv, encode_binary, encode_csv};
use crate::sim::{BloomCenter, GroundTruth, Kind, SimConfig, Split, SubjectDataset, TrajectoryDictionary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayFormat {
    Binary,
    Csv,
}

/// Which encodings of the large arrays to write.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    #[default]
    Binary,
    Csv,
    Both,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(DatasetFormat::Binary),
            "csv" => Ok(DatasetFormat::Csv),
            "both" => Ok(DatasetFormat::Both),
            _ => Err(Error::InvalidArgument(format!("unknown dataset format `{s}` (binary, csv, both)"))),
        }
    }
}

fn add_array(p: &mut Payload, stem: &str, axes: &[&str], dims: &[usize], data: &[f64], format: DatasetFormat) {
    if matches!(format, DatasetFormat::Binary | DatasetFormat::Both) {
        p.add(format!("{stem}.bin"), encode_binary(dims, data));
    }
    if matches!(format, DatasetFormat::Csv | DatasetFormat::Both) {
        p.add(format!("{stem}.csv"), encode_csv(axes, dims, data));
    }
}

fn dataset_payload(ds: &SubjectDataset, format: DatasetFormat) -> Payload {
    let mut p = Payload::new();
    let (n, t, d) = ds.x.dim();
    let x: Vec<f64> = ds.x.iter().copied().collect();
    add_array(&mut p, "x", &["subject", "time", "species"], &[n, t, d], &x, format);

    let mut labels = String::from("subject,y,split\n");
    for i in 0..n {
        let split = match ds.split[i] {
            Split::Train => "train",
            Split::Val => "val",
        };
        labels.push_str(&format!("{i},{},{split}\n", ds.y[i]));
    }
    p.add("labels.csv", labels);
    let concepts: Vec<u8> = ds.concepts.iter().copied().collect();
    p.add("concepts.csv", encode_csv(&["subject", "community"], &[ds.concepts.nrows(), ds.concepts.ncols()], &concepts));

    if let Some(truth) = &ds.truth {
        let theta: Vec<f64> = truth.theta.iter().copied().collect();
        p.add("truth/theta.csv", encode_csv(&["subject", "community"], &[truth.theta.nrows(), truth.theta.ncols()], &theta));
        let dict = &truth.dictionary;
        let entries: Vec<f64> = dict.entries.iter().copied().collect();
        let (k, _, _) = dict.entries.dim();
        add_array(&mut p, "truth/dictionary", &["community", "time", "species"], &[k, t, d], &entries, format);
        let mut kinds = String::from("community,species,kind\n");
        for ((c, s), kind) in dict.kinds.indexed_iter() {
            kinds.push_str(&format!("{c},{s},{}\n", kind.as_str()));
        }
        p.add("truth/kinds.csv", kinds);
        let mut blooms = String::from("community,species,time\n");
        for b in &dict.bloom_centers {
            blooms.push_str(&format!("{},{},{}\n", b.community, b.species, b.time));
        }
        p.add("truth/bloom_centers.csv", blooms);
        let mut clusters = String::from("subject,cluster_id\n");
        for (i, c) in truth.cluster_id.iter().enumerate() {
            clusters.push_str(&format!("{i},{c}\n"));
        }
        p.add("truth/clusters.csv", clusters);
        let mut disease = String::from("cluster,disease\n");
        for (c, &v) in truth.disease_clusters.iter().enumerate() {
            disease.push_str(&format!("{c},{}\n", v as u8));
        }
        p.add("truth/disease_clusters.csv", disease);
    }
    p
}

pub fn save_dataset(ds: &SubjectDataset, dir: &Path, format: DatasetFormat, options: WriteOptions) -> Result<ArtifactRef> {
    write_artifact(dir, ArtifactKind::Dataset, &ds.config, ds.config.seed, &dataset_payload(ds, format), &[], options)
}

pub fn load_dataset(dir: &Path) -> Result<(SubjectDataset, Artifact)> {
    load_dataset_as(dir, ArrayFormat::Binary)
}

/// Load a dataset, reading arrays in `prefer` encoding when both are present.
pub fn load_dataset_as(dir: &Path, prefer: ArrayFormat) -> Result<(SubjectDataset, Artifact)> {
    let a = read_artifact(dir, Some(ArtifactKind::Dataset))?;
    let ds = dataset_from_artifact(&a, prefer)?;
    Ok((ds, a))
}

fn read_array(a: &Artifact, stem: &str, prefer: ArrayFormat) -> Result<ArrayD<f64>> {
    let bin = format!("{stem}.bin");
    let csv = format!("{stem}.csv");
    let use_bin = match prefer {
        ArrayFormat::Binary => a.has(&bin) || !a.has(&csv),
        ArrayFormat::Csv => !a.has(&csv),
    };
    if use_bin {
        Ok(decode_binary(&bin, a.file(&bin)?)?.mapv(f64::from))
    } else {
        Ok(decode_csv(&csv, a.text(&csv)?)?.1)
    }
}

/// Rows of a small CSV table after its header.
fn rows<'a>(a: &'a Artifact, name: &str, header: &str, width: usize) -> Result<Vec<Vec<&'a str>>> {
    let text = a.text(name)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(header) {
        return Err(Error::format(name, format!("expected header `{header}`")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() == width {
                Ok(f)
            } else {
                Err(Error::format(name, format!("expected {width} fields in `{l}`")))
            }
        })
        .collect()
}

fn num<T: std::str::FromStr>(name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::format(name, format!("bad number `{s}`")))
}

fn check_dims(name: &str, found: &[usize], expected: &[usize]) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::format(name, format!("shape {found:?}, expected {expected:?}")))
    }
}

pub fn dataset_from_artifact(a: &Artifact, prefer: ArrayFormat) -> Result<SubjectDataset> {
    let config: SimConfig = a.manifest.config_as()?;
    let x: Array3<f64> = read_array(a, "x", prefer)?
        .into_dimensionality::<Ix3>()
        .map_err(|_| Error::format("x", "expected rank 3"))?;
    let (n, t, d) = x.dim();

    let label_rows = rows(a, "labels.csv", "subject,y,split", 3)?;
    if label_rows.len() != n {
        return Err(Error::format("labels.csv", format!("{} rows for {n} subjects", label_rows.len())));
    }
    let mut y = vec![0u8; n];
    let mut split = vec![Split::Train; n];
    for r in &label_rows {
        let i: usize = num("labels.csv", r[0])?;
        if i >= n {
            return Err(Error::format("labels.csv", format!("subject {i} out of range")));
        }
        y[i] = num("labels.csv", r[1])?;
        split[i] = match r[2] {
            "train" => Split::Train,
            "val" => Split::Val,
            other => return Err(Error::format("labels.csv", format!("unknown split `{other}`"))),
        };
    }
    let (_, c) = decode_csv("concepts.csv", a.text("concepts.csv")?)?;
    let concepts: Array2<u8> = c
        .into_dimensionality::<Ix2>()
        .map_err(|_| Error::format("concepts.csv", "expected rank 2"))?
        .mapv(|v| v as u8);
    check_dims("concepts.csv", &[concepts.nrows(), concepts.ncols()], &[n, config.n_communities])?;

    let truth = if a.has("truth/theta.csv") { Some(read_truth(a, prefer, n, t, d)?) } else { None };
    Ok(SubjectDataset { config, x, y, concepts, split, truth })
}

fn read_truth(a: &Artifact, prefer: ArrayFormat, n: usize, t: usize, d: usize) -> Result<GroundTruth> {
    let (_, theta) = decode_csv("truth/theta.csv", a.text("truth/theta.csv")?)?;
    let theta = theta.into_dimensionality::<Ix2>().map_err(|_| Error::format("truth/theta.csv", "expected rank 2"))?;
    let k = theta.ncols();
    check_dims("truth/theta.csv", &[theta.nrows()], &[n])?;
    let entries = read_array(a, "truth/dictionary", prefer)?
        .into_dimensionality::<Ix3>()
        .map_err(|_| Error::format("truth/dictionary", "expected rank 3"))?;
    check_dims("truth/dictionary", entries.shape(), &[k, t, d])?;

    let mut kinds = Array2::from_elem((k, d), Kind::Noise);
    for r in rows(a, "truth/kinds.csv", "community,species,kind", 3)? {
        let (c, s): (usize, usize) = (num("truth/kinds.csv", r[0])?, num("truth/kinds.csv", r[1])?);
        let kind = Kind::parse(r[2]).ok_or_else(|| Error::format("truth/kinds.csv", format!("unknown kind `{}`", r[2])))?;
        *kinds.get_mut((c, s)).ok_or_else(|| Error::format("truth/kinds.csv", "index out of range"))? = kind;
    }
    let bloom_centers = rows(a, "truth/bloom_centers.csv", "community,species,time", 3)?
        .into_iter()
        .map(|r| {
            let f = "truth/bloom_centers.csv";
            Ok(BloomCenter { community: num(f, r[0])?, species: num(f, r[1])?, time: num(f, r[2])? })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cluster_id = vec![0usize; n];
    for r in rows(a, "truth/clusters.csv", "subject,cluster_id", 2)? {
        let i: usize = num("truth/clusters.csv", r[0])?;
        *cluster_id.get_mut(i).ok_or_else(|| Error::format("truth/clusters.csv", "subject out of range"))? = num("truth/clusters.csv", r[1])?;
    }
    let disease_clusters = rows(a, "truth/disease_clusters.csv", "cluster,disease", 2)?
        .into_iter()
        .map(|r| Ok(num::<u8>("truth/disease_clusters.csv", r[1])? == 1))
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth { theta, cluster_id, disease_clusters, dictionary: TrajectoryDictionary { entries, kinds, bloom_centers } })
}
