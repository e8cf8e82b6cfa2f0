//! Dataset directories: `geometry.txt`, one forcing and one truth CSV per
//! period, and a `dataset.json` manifest tying them together.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use reach_surrogate_core::geometry::{ForcingSeries, Reach};
use reach_surrogate_core::hydro::StateField;
use reach_surrogate_core::synthetic::{FloodEvent, Scenario, Segment, SyntheticSpec};

use crate::container::{write_atomic, ContainerError};
use crate::geometry_file::{parse_geometry, serialize_geometry, GeometryFileError};
use crate::series_csv::{read_forcings, read_state, write_forcings, write_state, CsvError};

pub const MANIFEST: &str = "dataset.json";
pub const GEOMETRY: &str = "geometry.txt";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: CsvError,
    },
    #[error("{path}: {source}")]
    Geometry {
        path: PathBuf,
        #[source]
        source: GeometryFileError,
    },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Write(#[from] ContainerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodEntry {
    pub name: String,
    pub role: Role,
    pub forcings: String,
    pub truth: String,
    #[serde(default)]
    pub events: Vec<FloodEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub reach_id: String,
    pub geometry: String,
    /// Generator settings when the data is synthetic.
    pub spec: Option<SyntheticSpec>,
    pub periods: Vec<PeriodEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Period {
    pub entry: PeriodEntry,
    pub forcings: ForcingSeries,
    pub truth: StateField,
}

impl Period {
    pub fn largest_event(&self) -> Option<FloodEvent> {
        self.entry
            .events
            .iter()
            .copied()
            .max_by(|a, b| a.peak_m3s.total_cmp(&b.peak_m3s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub reach: Reach,
    pub periods: Vec<Period>,
}

impl Dataset {
    pub fn from_scenario(sc: &Scenario) -> Self {
        let entry = |name: String, role, seg: &Segment| Period {
            entry: PeriodEntry {
                forcings: format!("{name}.forcings.csv"),
                truth: format!("{name}.truth.csv"),
                name,
                role,
                events: seg.events.clone(),
            },
            forcings: seg.forcings.clone(),
            truth: seg.truth.clone(),
        };
        let mut periods: Vec<Period> = sc
            .train
            .iter()
            .enumerate()
            .map(|(k, seg)| entry(format!("train-{}", k + 1), Role::Train, seg))
            .collect();
        periods.push(entry("test".into(), Role::Test, &sc.test));
        Self {
            manifest: Manifest {
                reach_id: sc.reach.id.clone(),
                geometry: GEOMETRY.into(),
                spec: Some(sc.spec.clone()),
                periods: periods.iter().map(|p| p.entry.clone()).collect(),
            },
            reach: sc.reach.clone(),
            periods,
        }
    }

    pub fn role(&self, role: Role) -> impl Iterator<Item = &Period> {
        self.periods.iter().filter(move |p| p.entry.role == role)
    }

    pub fn test(&self) -> Option<&Period> {
        self.role(Role::Test).next()
    }

    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_atomic(&dir.join(&self.manifest.geometry), serialize_geometry(&self.reach).as_bytes())?;
        for p in &self.periods {
            let mut buf = Vec::new();
            write_forcings(&mut buf, &p.forcings).map_err(|source| DatasetError::Csv {
                path: dir.join(&p.entry.forcings),
                source,
            })?;
            write_atomic(&dir.join(&p.entry.forcings), &buf)?;
            buf.clear();
            write_state(&mut buf, &p.truth).map_err(|source| DatasetError::Csv {
                path: dir.join(&p.entry.truth),
                source,
            })?;
            write_atomic(&dir.join(&p.entry.truth), &buf)?;
        }
        // Manifest last: a directory without one is visibly incomplete.
        let mut json = serde_json::to_vec_pretty(&self.manifest)?;
        json.push(b'\n');
        write_atomic(&dir.join(MANIFEST), &json)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, DatasetError> {
        let manifest: Manifest = serde_json::from_slice(&read(&dir.join(MANIFEST))?)?;
        let reach = read_geometry(&dir.join(&manifest.geometry))?;
        if reach.id != manifest.reach_id {
            return Err(DatasetError::Invalid(format!(
                "geometry is for reach `{}`, manifest says `{}`",
                reach.id, manifest.reach_id
            )));
        }
        let mut periods = Vec::new();
        for entry in &manifest.periods {
            let fpath = dir.join(&entry.forcings);
            let forcings = read_forcings(read(&fpath)?.as_slice()).map_err(|source| DatasetError::Csv { path: fpath, source })?;
            let tpath = dir.join(&entry.truth);
            let truth = read_state(read(&tpath)?.as_slice(), &reach.id)
                .map_err(|source| DatasetError::Csv { path: tpath.clone(), source })?;
            if truth.n_xs != reach.len() || truth.hours() != forcings.len() {
                return Err(DatasetError::Invalid(format!(
                    "{}: {} hours × {} sections, expected {} × {}",
                    tpath.display(),
                    truth.hours(),
                    truth.n_xs,
                    forcings.len(),
                    reach.len()
                )));
            }
            periods.push(Period {
                entry: entry.clone(),
                forcings,
                truth,
            });
        }
        Ok(Self {
            manifest,
            reach,
            periods,
        })
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_geometry(path: &Path) -> Result<Reach, DatasetError> {
    let text = String::from_utf8_lossy(&read(path)?).into_owned();
    parse_geometry(&text).map_err(|source| DatasetError::Geometry {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_forcings(path: &Path) -> Result<ForcingSeries, DatasetError> {
    read_forcings(read(path)?.as_slice()).map_err(|source| DatasetError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_state(path: &Path, reach_id: &str) -> Result<StateField, DatasetError> {
    read_state(read(path)?.as_slice(), reach_id).map_err(|source| DatasetError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_state(path: &Path, s: &StateField) -> Result<(), DatasetError> {
    let mut buf = Vec::new();
    write_state(&mut buf, s).map_err(|source| DatasetError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(write_atomic(path, &buf)?)
}
