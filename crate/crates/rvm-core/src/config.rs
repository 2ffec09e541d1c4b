//! Plain-text run configuration: sectioned key/value files with strict
//! unknown-key rejection and a canonical serializer (parse → serialize →
//! parse is the identity).
//!
//! Sections: `[domain]`, `[time]`, `[species.N]` (N = 0, 1, …),
//! `[diagnostics]`, `[model]`. All quantities use units with c = 1.

use crate::error::{Error, Result};
use crate::kinematics::{Model, SpeciesSpec};

/// Cubic domain [-extent, extent]³ with `cells` cells per axis.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DomainConfig {
    pub extent: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_max: f64,
}

/// One species: physical parameters plus sampling controls.
/// `mirror_of` reuses the phase-space sample points of an earlier species
/// (for exact-cancellation two-species constructions).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpeciesConfig {
    pub mass: f64,
    pub charge: f64,
    /// Spatial support radius L_x of the initial bump.
    pub support_x: f64,
    /// Momentum support radius L_p.
    pub support_p: f64,
    /// Peak value of f₀ (the small-data dial ε₀).
    pub amplitude: f64,
    pub particles: usize,
    pub mirror_of: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiagnosticsConfig {
    /// Time between diagnostic rows (snapped to whole steps).
    pub interval: f64,
    /// Times at which field/density/histogram snapshots are written
    /// (snapped to whole steps; dyadic ladders recommended).
    pub snapshot_times: Vec<f64>,
    /// Tracer particles per species (taken from the start of the sample).
    pub tracers: usize,
    /// Steps between tracer record points.
    pub tracer_cadence: usize,
    /// Momentum-histogram bins per axis.
    pub histogram_bins: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub kind: Model,
    pub seed: u64,
    /// Worker pool size; 0 = all cores. `RVM_WORKERS` overrides.
    pub workers: usize,
    /// Relative tolerance for classifying the vanishing regime.
    pub vanish_tol: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub time: TimeConfig,
    pub species: Vec<SpeciesConfig>,
    pub diagnostics: DiagnosticsConfig,
    pub model: ModelConfig,
}

impl SpeciesConfig {
    pub fn to_spec(&self, model: Model) -> SpeciesSpec {
        SpeciesSpec {
            mass: self.mass,
            charge: self.charge,
            model,
            support_x: self.support_x,
            support_p: self.support_p,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut sections: Vec<(String, Vec<(String, String)>)> = vec![];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: malformed section header", lineno + 1)))?;
                sections.push((name.trim().to_string(), vec![]));
            } else {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
                let sec = sections
                    .last_mut()
                    .ok_or_else(|| Error::Config(format!("line {}: key outside any section", lineno + 1)))?;
                sec.1.push((k.trim().to_string(), v.trim().to_string()));
            }
        }

        let mut domain = None;
        let mut time = None;
        let mut diagnostics = None;
        let mut model = None;
        let mut species: Vec<(usize, SpeciesConfig)> = vec![];

        for (name, kvs) in &sections {
            match name.as_str() {
                "domain" => domain = Some(parse_domain(kvs)?),
                "time" => time = Some(parse_time(kvs)?),
                "diagnostics" => diagnostics = Some(parse_diagnostics(kvs)?),
                "model" => model = Some(parse_model(kvs)?),
                other => {
                    if let Some(idx) = other.strip_prefix("species.") {
                        let idx: usize = idx
                            .parse()
                            .map_err(|_| Error::Config(format!("bad species index in [{other}]")))?;
                        species.push((idx, parse_species(kvs)?));
                    } else {
                        return Err(Error::Config(format!("unknown section [{other}]")));
                    }
                }
            }
        }

        species.sort_by_key(|(i, _)| *i);
        for (pos, (idx, _)) in species.iter().enumerate() {
            if *idx != pos {
                return Err(Error::Config(format!(
                    "species sections must be contiguous from 0; found [species.{idx}]"
                )));
            }
        }
        let species: Vec<SpeciesConfig> = species.into_iter().map(|(_, s)| s).collect();

        let cfg = RunConfig {
            domain: domain.ok_or_else(|| Error::Config("missing [domain] section".into()))?,
            time: time.ok_or_else(|| Error::Config("missing [time] section".into()))?,
            species,
            diagnostics: diagnostics
                .ok_or_else(|| Error::Config("missing [diagnostics] section".into()))?,
            model: model.ok_or_else(|| Error::Config("missing [model] section".into()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str("[domain]\n");
        out.push_str(&format!("extent = {}\ncells = {}\n\n", self.domain.extent, self.domain.cells));
        out.push_str("[time]\n");
        out.push_str(&format!("dt = {}\nt_max = {}\n\n", self.time.dt, self.time.t_max));
        for (i, s) in self.species.iter().enumerate() {
            out.push_str(&format!("[species.{i}]\n"));
            out.push_str(&format!("mass = {}\ncharge = {}\n", s.mass, s.charge));
            out.push_str(&format!("support_x = {}\nsupport_p = {}\n", s.support_x, s.support_p));
            out.push_str(&format!("amplitude = {}\nparticles = {}\n", s.amplitude, s.particles));
            if let Some(m) = s.mirror_of {
                out.push_str(&format!("mirror_of = {m}\n"));
            }
            out.push('\n');
        }
        out.push_str("[diagnostics]\n");
        out.push_str(&format!("interval = {}\n", self.diagnostics.interval));
        let times: Vec<String> = self.diagnostics.snapshot_times.iter().map(|t| t.to_string()).collect();
        out.push_str(&format!("snapshot_times = {}\n", times.join(",")));
        out.push_str(&format!(
            "tracers = {}\ntracer_cadence = {}\nhistogram_bins = {}\n\n",
            self.diagnostics.tracers, self.diagnostics.tracer_cadence, self.diagnostics.histogram_bins
        ));
        out.push_str("[model]\n");
        let kind = match self.model.kind {
            Model::Relativistic => "relativistic",
            Model::Classical => "classical",
        };
        out.push_str(&format!(
            "kind = {kind}\nseed = {}\nworkers = {}\nvanish_tol = {}\n",
            self.model.seed, self.model.workers, self.model.vanish_tol
        ));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.extent > 0.0) || d.cells < 4 {
            return Err(Error::Config("[domain]: need extent > 0 and cells ≥ 4".into()));
        }
        let dx = 2.0 * d.extent / d.cells as f64;
        let bound = dx / 3f64.sqrt();
        if !(self.time.dt > 0.0) || self.time.dt > bound * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "[time].dt = {} violates the CFL bound dx/√3 = {bound}",
                self.time.dt
            )));
        }
        if self.time.t_max < self.time.dt {
            return Err(Error::Config("[time].t_max shorter than one step".into()));
        }
        if self.species.is_empty() {
            return Err(Error::Config("at least one [species.N] section required".into()));
        }
        let mut max_lx: f64 = 0.0;
        let mut max_zeta: f64 = 0.0;
        let mut charged = false;
        for (i, s) in self.species.iter().enumerate() {
            s.to_spec(self.model.kind)
                .validate()
                .map_err(|e| Error::Config(format!("[species.{i}]: {e}")))?;
            if !(s.amplitude >= 0.0) {
                return Err(Error::Config(format!("[species.{i}]: amplitude must be ≥ 0")));
            }
            if s.particles == 0 {
                return Err(Error::Config(format!("[species.{i}]: particles must be ≥ 1")));
            }
            if let Some(m) = s.mirror_of {
                if m >= i {
                    return Err(Error::Config(format!(
                        "[species.{i}]: mirror_of must reference an earlier species"
                    )));
                }
                let src = &self.species[m];
                if src.particles != s.particles
                    || src.support_x != s.support_x
                    || src.support_p != s.support_p
                {
                    return Err(Error::Config(format!(
                        "[species.{i}]: mirror requires matching particles and supports"
                    )));
                }
            }
            charged |= s.charge != 0.0;
            max_lx = max_lx.max(s.support_x);
            let zeta = match self.model.kind {
                // Conservative velocity bound from the momentum support.
                Model::Relativistic => {
                    let beta = s.support_p / s.mass;
                    beta / (1.0 + beta * beta).sqrt()
                }
                Model::Classical => s.support_p / s.mass,
            };
            max_zeta = max_zeta.max(zeta);
        }
        // The box must contain the forward light cone (charged runs) or the
        // particle cone (neutral free-streaming) through t_max, plus slack.
        let front = if charged { 1.0 } else { max_zeta };
        let needed = front * self.time.t_max + max_lx + 2.0 * dx;
        if d.extent < needed {
            return Err(Error::Config(format!(
                "[domain].extent = {} cannot contain the support cone through t_max (need ≥ {needed:.3})",
                d.extent
            )));
        }
        let g = &self.diagnostics;
        if !(g.interval > 0.0) || g.tracer_cadence == 0 || g.histogram_bins < 2 {
            return Err(Error::Config("[diagnostics]: invalid cadence/bins".into()));
        }
        if !(self.model.vanish_tol > 0.0) {
            return Err(Error::Config("[model].vanish_tol must be > 0".into()));
        }
        Ok(())
    }
}

/// Switch the kinematic model, revalidating (classical needs support_p < 1).
pub fn set_model(mut cfg: RunConfig, kind: Model) -> Result<RunConfig> {
    cfg.model.kind = kind;
    cfg.validate()?;
    Ok(cfg)
}

struct Keys<'a> {
    section: &'a str,
    kvs: &'a [(String, String)],
    seen: Vec<bool>,
}

impl<'a> Keys<'a> {
    fn new(section: &'a str, kvs: &'a [(String, String)]) -> Keys<'a> {
        Keys { section, kvs, seen: vec![false; kvs.len()] }
    }

    fn take(&mut self, key: &str) -> Result<Option<&'a str>> {
        let mut found = None;
        for (i, (k, v)) in self.kvs.iter().enumerate() {
            if k == key {
                if found.is_some() {
                    return Err(Error::Config(format!("[{}]: duplicate key {key}", self.section)));
                }
                self.seen[i] = true;
                found = Some(v.as_str());
            }
        }
        Ok(found)
    }

    fn require(&mut self, key: &str) -> Result<&'a str> {
        self.take(key)?
            .ok_or_else(|| Error::Config(format!("[{}]: missing key {key}", self.section)))
    }

    fn finish(self) -> Result<()> {
        for (i, (k, _)) in self.kvs.iter().enumerate() {
            if !self.seen[i] {
                return Err(Error::Config(format!("[{}]: unknown key {k}", self.section)));
            }
        }
        Ok(())
    }
}

fn num<T: std::str::FromStr>(section: &str, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("[{section}]: cannot parse {key} = {v}")))
}

fn parse_domain(kvs: &[(String, String)]) -> Result<DomainConfig> {
    let mut k = Keys::new("domain", kvs);
    let cfg = DomainConfig {
        extent: num("domain", "extent", k.require("extent")?)?,
        cells: num("domain", "cells", k.require("cells")?)?,
    };
    k.finish()?;
    Ok(cfg)
}

fn parse_time(kvs: &[(String, String)]) -> Result<TimeConfig> {
    let mut k = Keys::new("time", kvs);
    let cfg = TimeConfig {
        dt: num("time", "dt", k.require("dt")?)?,
        t_max: num("time", "t_max", k.require("t_max")?)?,
    };
    k.finish()?;
    Ok(cfg)
}

fn parse_species(kvs: &[(String, String)]) -> Result<SpeciesConfig> {
    let mut k = Keys::new("species", kvs);
    let cfg = SpeciesConfig {
        mass: num("species", "mass", k.require("mass")?)?,
        charge: num("species", "charge", k.require("charge")?)?,
        support_x: num("species", "support_x", k.require("support_x")?)?,
        support_p: num("species", "support_p", k.require("support_p")?)?,
        amplitude: num("species", "amplitude", k.require("amplitude")?)?,
        particles: num("species", "particles", k.require("particles")?)?,
        mirror_of: match k.take("mirror_of")? {
            Some(v) => Some(num("species", "mirror_of", v)?),
            None => None,
        },
    };
    k.finish()?;
    Ok(cfg)
}

fn parse_diagnostics(kvs: &[(String, String)]) -> Result<DiagnosticsConfig> {
    let mut k = Keys::new("diagnostics", kvs);
    let times_raw = k.require("snapshot_times")?;
    let snapshot_times = times_raw
        .split(',')
        .map(|t| num("diagnostics", "snapshot_times", t.trim()))
        .collect::<Result<Vec<f64>>>()?;
    let cfg = DiagnosticsConfig {
        interval: num("diagnostics", "interval", k.require("interval")?)?,
        snapshot_times,
        tracers: num("diagnostics", "tracers", k.require("tracers")?)?,
        tracer_cadence: num("diagnostics", "tracer_cadence", k.require("tracer_cadence")?)?,
        histogram_bins: num("diagnostics", "histogram_bins", k.require("histogram_bins")?)?,
    };
    k.finish()?;
    Ok(cfg)
}

fn parse_model(kvs: &[(String, String)]) -> Result<ModelConfig> {
    let mut k = Keys::new("model", kvs);
    let kind = match k.require("kind")? {
        "relativistic" => Model::Relativistic,
        "classical" => Model::Classical,
        other => return Err(Error::Config(format!("[model]: unknown kind {other}"))),
    };
    let cfg = ModelConfig {
        kind,
        seed: num("model", "seed", k.require("seed")?)?,
        workers: num("model", "workers", k.require("workers")?)?,
        vanish_tol: num("model", "vanish_tol", k.require("vanish_tol")?)?,
    };
    k.finish()?;
    Ok(cfg)
}
