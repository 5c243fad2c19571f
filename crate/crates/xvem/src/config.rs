//! Run configuration: domain/mesh/degree/enrichment selection, solver options
//! and quadrature overrides. Configs load from a plain key = value file with
//! command-line flags taking precedence.

use crate::enrichment::{EnrichmentMode, EnrichmentPlan};
use crate::error::{Error, Result};
use crate::local_spaces::SpaceSettings;
use crate::scalar::Real;
use crate::solver::{SolveMethod, SolveOptions};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Fracture,
    LshapeTr,
    LshapeBr,
}

impl Domain {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fracture" => Ok(Self::Fracture),
            "lshape-tr" => Ok(Self::LshapeTr),
            "lshape-br" => Ok(Self::LshapeBr),
            _ => Err(Error::Config(format!(
                "unknown domain '{s}' (expected fracture, lshape-tr, lshape-br)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFamily {
    Cartesian,
    Hexagonal,
    File,
}

impl MeshFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cartesian" => Ok(Self::Cartesian),
            "hexagonal" => Ok(Self::Hexagonal),
            "file" => Ok(Self::File),
            _ => Err(Error::Config(format!(
                "unknown mesh family '{s}' (expected cartesian, hexagonal, file)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig<T: Real> {
    pub domain: Domain,
    pub mesh_family: MeshFamily,
    pub k: usize,
    pub enrichment: EnrichmentMode,
    pub gamma: Option<T>,
    /// subdivision counts (Cartesian) or levels (hexagonal)
    pub refine: Vec<usize>,
    /// mesh files when mesh_family = file
    pub mesh_files: Vec<PathBuf>,
    pub solver: SolveMethod,
    pub tol: T,
    pub out: Option<PathBuf>,
    pub grading_levels: usize,
    pub tau_rank: T,
    pub seed: u64,
}

impl<T: Real> Default for RunConfig<T> {
    fn default() -> Self {
        let settings = SpaceSettings::<T>::default();
        Self {
            domain: Domain::Fracture,
            mesh_family: MeshFamily::Cartesian,
            k: 1,
            enrichment: EnrichmentMode::Local,
            gamma: Some(T::of(0.15)),
            refine: vec![8, 16, 32],
            mesh_files: Vec::new(),
            solver: SolveMethod::Direct,
            tol: T::of(1e-10),
            out: None,
            grading_levels: settings.grading_levels,
            tau_rank: settings.tau_rank,
            seed: 0,
        }
    }
}

impl<T: Real> RunConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.k > 4 {
            return Err(Error::Config(format!("k must be in 1..=4, got {}", self.k)));
        }
        if self.enrichment == EnrichmentMode::Local && self.gamma.is_none() {
            return Err(Error::Config(
                "local enrichment requires --gamma".into(),
            ));
        }
        match self.mesh_family {
            MeshFamily::File => {
                if self.mesh_files.is_empty() {
                    return Err(Error::Config("mesh family 'file' requires --mesh-file".into()));
                }
            }
            _ => {
                if self.refine.is_empty() {
                    return Err(Error::Config("refinement list must not be empty".into()));
                }
            }
        }
        if self.mesh_family == MeshFamily::Hexagonal && self.domain != Domain::LshapeTr {
            return Err(Error::Config(
                "the hexagonal family tessellates the lshape-tr domain only".into(),
            ));
        }
        if self.domain == Domain::Fracture && self.mesh_family == MeshFamily::Hexagonal {
            return Err(Error::Config(
                "the fractured domain needs the cartesian family (slit topology)".into(),
            ));
        }
        Ok(())
    }

    pub fn plan(&self) -> EnrichmentPlan<T> {
        match self.enrichment {
            EnrichmentMode::None => EnrichmentPlan::none(),
            EnrichmentMode::Global => EnrichmentPlan::global(),
            EnrichmentMode::Local => EnrichmentPlan::local(self.gamma.unwrap_or(T::zero())),
        }
    }

    pub fn space_settings(&self) -> SpaceSettings<T> {
        SpaceSettings {
            tau_rank: self.tau_rank,
            grading_levels: self.grading_levels,
        }
    }

    pub fn solve_options(&self) -> SolveOptions<T> {
        SolveOptions {
            method: self.solver,
            tol: self.tol,
            max_iter: 0,
            seed: self.seed,
        }
    }

    /// Apply one key = value setting (config file key or flag name).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value '{value}' for {what}"));
        match key {
            "domain" => self.domain = Domain::parse(value)?,
            "mesh-family" => self.mesh_family = MeshFamily::parse(value)?,
            "k" => self.k = value.parse().map_err(|_| bad("k"))?,
            "enrichment" => {
                self.enrichment = match value {
                    "none" => EnrichmentMode::None,
                    "global" => EnrichmentMode::Global,
                    "local" => EnrichmentMode::Local,
                    _ => return Err(bad("enrichment")),
                }
            }
            "gamma" => {
                self.gamma = Some(T::of(value.parse::<f64>().map_err(|_| bad("gamma"))?))
            }
            "refine" => {
                self.refine = value
                    .split(',')
                    .map(|t| t.trim().parse().map_err(|_| bad("refine")))
                    .collect::<Result<_>>()?
            }
            "mesh-file" => self
                .mesh_files
                .extend(value.split(',').map(|t| PathBuf::from(t.trim()))),
            "solver" => {
                self.solver = match value {
                    "direct" => SolveMethod::Direct,
                    "krylov" => SolveMethod::Krylov,
                    _ => return Err(bad("solver")),
                }
            }
            "tol" => self.tol = T::of(value.parse::<f64>().map_err(|_| bad("tol"))?),
            "out" => self.out = Some(PathBuf::from(value)),
            "grading-levels" => {
                self.grading_levels = value.parse().map_err(|_| bad("grading-levels"))?
            }
            "tau-rank" => {
                self.tau_rank = T::of(value.parse::<f64>().map_err(|_| bad("tau-rank"))?)
            }
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Load settings from a key = value file ('#' starts a comment).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected 'key = value'",
                    path.display(),
                    lineno + 1
                )));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }
}
