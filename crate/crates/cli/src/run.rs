//! Pipeline orchestration, artifact writing and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use mspec_core::analysis::{
    asymptotic_fit, default_fit_window, heat_content_spectral, heat_content_timestep_run, linear_times, log_times,
    verify_identities, HeatContentCurve,
};
use mspec_core::discrete_ops::{assemble_half_laplacian, lowest_eigenpairs};
use mspec_core::geometry::{
    boundary_measure, build_grid, build_radial_grid, perturb_polygon, volume, DomainSpec, Grid,
};
use mspec_core::moments::{analytic_moments, carleman_diagnostic, pde_moments, MomentSequence, Provenance, CARLEMAN_EPS};
use mspec_core::montecarlo::{
    laplace_from_samples, mc_moments, simulate_exit_times, survival_from_samples, SimConfig, MC_MAX_ORDER,
};
use mspec_core::spectral::{analytic_spectrum, essential_spectrum, numeric_spectrum, property_m_report, SpectralData};
use mspec_core::stieltjes::{
    hankel_psd_check, invert_moments, measure_to_spectrum, reconstruct_heat_content, AtomicMeasure,
};

use crate::compare::compare_spectra;
use crate::config::{MomentSource, Pipeline, RunConfig, SpectrumSource};
use crate::error::{CliError, Context};

/// File names written next to the artifacts.
pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Eigensolver tolerance used for λ₁ estimates attached to PDE moments.
const LAMBDA1_TOL: f64 = 1e-8;
/// Samples in the log-spaced curve used for the asymptotic fit.
const FIT_SAMPLES: usize = 40;

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub files: Vec<String>,
    /// Checks that ran but did not pass (verify tolerance, strict compare).
    pub failed_checks: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    spec: DomainSpec,
    out: PathBuf,
    outputs: BTreeMap<String, String>,
    inputs: Vec<Value>,
    failed: Vec<String>,
}

impl<'a> Runner<'a> {
    fn write_bytes(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), CliError> {
        let path = self.out.join(name);
        fs::write(&path, &bytes).map_err(|source| CliError::Io { path, source })?;
        self.outputs.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    fn write_with(
        &mut self,
        name: &str,
        pipeline: &'static str,
        f: impl FnOnce(&mut Vec<u8>) -> mspec_core::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf).ctx(pipeline)?;
        self.write_bytes(name, buf)
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report values serialize");
        bytes.push(b'\n');
        self.write_bytes(name, bytes)
    }

    fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.inputs.push(json!({ "path": path.display().to_string(), "sha256": sha256_hex(&bytes) }));
        Ok(bytes)
    }

    fn grid(&self, pipeline: &'static str) -> Result<Arc<Grid>, CliError> {
        let g = match self.spec {
            DomainSpec::Disk { .. } if self.cfg.radial => build_radial_grid(&self.spec, self.cfg.h),
            _ => build_grid(&self.spec, self.cfg.h),
        };
        g.map(Arc::new).ctx(pipeline)
    }

    fn has_closed_form(&self) -> bool {
        !matches!(self.spec, DomainSpec::Polygon { .. })
    }

    fn spectrum(&self, m: usize, pipeline: &'static str) -> Result<SpectralData, CliError> {
        let analytic = match self.cfg.spectrum_source {
            SpectrumSource::Analytic => true,
            SpectrumSource::Numeric => false,
            SpectrumSource::Auto => self.has_closed_form(),
        };
        if analytic {
            analytic_spectrum(&self.spec, m).ctx(pipeline)
        } else {
            numeric_spectrum(self.grid(pipeline)?, m, self.cfg.spectrum_tol).ctx(pipeline)
        }
    }

    fn lambda1(&self, pipeline: &'static str) -> Result<f64, CliError> {
        if self.has_closed_form() {
            return Ok(analytic_spectrum(&self.spec, 1).ctx(pipeline)?.entries()[0].lambda);
        }
        let op = assemble_half_laplacian(self.grid(pipeline)?);
        Ok(lowest_eigenpairs(&op, 1, LAMBDA1_TOL).ctx(pipeline)?[0].lambda)
    }

    fn moments(&mut self, n_max: usize, pipeline: &'static str) -> Result<MomentSequence, CliError> {
        if let Some(path) = self.cfg.moments_input.clone() {
            let bytes = self.read_input(&path)?;
            return MomentSequence::read_csv(bytes.as_slice(), Provenance::External, self.cfg.invert_noise)
                .map_err(|source| CliError::Input { path, source });
        }
        let ms = match self.cfg.moments_source {
            MomentSource::Analytic => analytic_moments(&self.spec, n_max).ctx(pipeline)?,
            MomentSource::Pde => pde_moments(self.grid(pipeline)?, n_max, self.cfg.moments_tol).ctx(pipeline)?,
        };
        Ok(ms.with_lambda1(self.lambda1(pipeline)?))
    }
}

fn run_moments(r: &mut Runner, ms: &MomentSequence) -> Result<(), CliError> {
    r.write_with("moments.csv", "moments", |w| ms.write_csv(w))?;
    let carleman = match ms.lambda1() {
        Some(_) => Some(carleman_diagnostic(ms, CARLEMAN_EPS).ctx("moments")?),
        None => None,
    };
    let ratios: Vec<f64> = ms.mu().windows(2).map(|w| w[1] / w[0]).collect();
    r.write_json(
        "moments_report.json",
        &json!({
            "provenance": ms.provenance(),
            "n_max": ms.n_max(),
            "noise_floor": ms.noise_floor(),
            "log_convexity_defect": ms.log_convexity_defect(),
            "ratios": ratios,
            "two_over_lambda1": ms.lambda1().map(|l| 2.0 / l),
            "carleman": carleman,
        }),
    )
}

fn run_spectrum(r: &mut Runner) -> Result<SpectralData, CliError> {
    let sd = r.spectrum(r.cfg.spectrum_m, "spectrum")?;
    r.write_with("spectrum.csv", "spectrum", |w| sd.write_csv(w))?;
    r.write_json(
        "spectrum_report.json",
        &json!({
            "source": sd.source(),
            "clusters": sd.len(),
            "volume": sd.volume(),
            "total_weight": sd.total_weight(),
            "weight_deficit": sd.weight_deficit(),
            "essential": essential_spectrum(&sd, r.cfg.zero_tol),
            "property_m": property_m_report(&sd, r.cfg.zero_tol),
        }),
    )?;
    Ok(sd)
}

fn run_invert(r: &mut Runner, ms: &MomentSequence) -> Result<AtomicMeasure, CliError> {
    let p = r.cfg.invert_p;
    let mut reports = Vec::new();
    let mut failure = None;
    for q in (1..=p).take_while(|q| 2 * q - 2 <= ms.n_max()) {
        let rep = hankel_psd_check(ms, q).ctx("invert")?;
        if !rep.pass && failure.is_none() {
            failure = rep.failure.clone();
        }
        reports.push(rep);
    }
    r.write_json("hankel.json", &reports)?;
    if let Some(msg) = failure {
        return Err(CliError::Pipeline {
            pipeline: "invert",
            source: mspec_core::Error::HankelNotPsd(msg),
        });
    }
    let am = invert_moments(ms, p, r.cfg.precision).ctx("invert")?;
    let sd = measure_to_spectrum(&am).ctx("invert")?;
    r.write_with("measure.csv", "invert", |w| am.write_csv(w))?;
    r.write_with("inverted_spectrum.csv", "invert", |w| sd.write_csv(w))?;
    r.write_json("inversion.json", &json!({ "atoms": am.atoms(), "diagnostics": am.diagnostics() }))?;
    Ok(am)
}

fn run_heat(r: &mut Runner, sd: &SpectralData, measure: Option<&AtomicMeasure>) -> Result<Value, CliError> {
    let cfg = r.cfg;
    let times = linear_times(cfg.heat_t_min, cfg.heat_t_max, cfg.heat_samples);
    let spectral = heat_content_spectral(sd, &times).ctx("heat")?;
    let grid = r.grid("heat")?;
    let stepped = heat_content_timestep_run(grid.clone(), &times, cfg.heat_dt).ctx("heat")?;
    r.write_with("heat_spectral.csv", "heat", |w| spectral.write_csv(w))?;
    r.write_with("heat_timestep.csv", "heat", |w| stepped.curve.write_csv(w))?;
    let vol = volume(&r.spec).ctx("heat")?;
    let mut report = json!({
        "volume": vol,
        "timestep_steps": stepped.steps,
        "timestep_min_u": stepped.min_u,
        "timestep_max_u": stepped.max_u,
        "spectral_tail_bound": spectral.tail_bound(),
        "max_abs_diff_spectral_vs_timestep": spectral.max_abs_diff(&stepped.curve).ctx("heat")?,
    });
    if let Some(am) = measure {
        let rec = reconstruct_heat_content(am, &times).ctx("heat")?;
        r.write_with("heat_reconstructed.csv", "heat", |w| rec.write_csv(w))?;
        report["max_abs_diff_reconstructed_vs_timestep"] = json!(rec.max_abs_diff(&stepped.curve).ctx("heat")?);
    }
    if cfg.heat_fit_terms > 0 {
        let boundary = boundary_measure(&r.spec).ctx("heat")?;
        let (t0, t1) = default_fit_window(cfg.h, vol, boundary);
        let fit_times = log_times(t0, t1, FIT_SAMPLES);
        let curve: HeatContentCurve = heat_content_timestep_run(grid, &fit_times, t0 / 4.0).ctx("heat")?.curve;
        let fit = asymptotic_fit(&curve, cfg.heat_fit_terms).ctx("heat")?;
        r.write_with("heat_fit_curve.csv", "heat", |w| curve.write_csv(w))?;
        r.write_with("heat_fit.csv", "heat", |w| fit.write_csv(w))?;
        report["fit"] = json!({
            "window": [t0, t1],
            "coefficients": fit.coefficients,
            "stderr": fit.stderr,
            "expected_q0": vol,
            "expected_q1": -(2.0 / std::f64::consts::PI).sqrt() * boundary,
        });
    }
    r.write_json("heat_report.json", &report)?;
    Ok(report)
}

fn run_mc(r: &mut Runner) -> Result<(), CliError> {
    let cfg = r.cfg;
    let sim = SimConfig::new(
        r.spec.clone(),
        [cfg.mc_x0[0], cfg.mc_x0[1]],
        cfg.mc_paths,
        cfg.mc_dt,
        cfg.mc_seed,
    )
    .with_workers(cfg.mc_workers);
    let samples = simulate_exit_times(&sim).ctx("mc")?;
    r.write_with("exit_times.csv", "mc", |w| samples.write_csv(w))?;
    let moments = mc_moments(&samples, cfg.mc_n_max.min(MC_MAX_ORDER)).ctx("mc")?;
    let survival = survival_from_samples(&samples, cfg.mc_t).ctx("mc")?;
    let laplace = laplace_from_samples(&samples, cfg.mc_s).ctx("mc")?;
    r.write_json(
        "mc_report.json",
        &json!({
            "config": sim,
            "excluded": samples.excluded,
            "moments": moments,
            "survival": { "t": cfg.mc_t, "estimate": survival },
            "laplace": { "s": cfg.mc_s, "estimate": laplace },
        }),
    )
}

fn run_verify(r: &mut Runner, ms: Option<&MomentSequence>) -> Result<f64, CliError> {
    let cfg = r.cfg;
    let owned;
    let ms = match ms {
        Some(ms) if ms.n_max() >= cfg.verify_n_max => ms,
        _ => {
            owned = r.moments(cfg.verify_n_max, "verify")?;
            &owned
        }
    };
    let m = if r.has_closed_form() { cfg.verify_m } else { cfg.spectrum_m };
    let sd = r.spectrum(m, "verify")?;
    let rep = verify_identities(ms, &sd, cfg.verify_n_max).ctx("verify")?;
    let mut csv = String::from("n,lhs,rhs,rel_err,rel_tail_bound\n");
    for row in &rep.rows {
        csv.push_str(&format!(
            "{},{:?},{:?},{:?},{:?}\n",
            row.n, row.lhs, row.rhs, row.rel_err, row.rel_tail_bound
        ));
    }
    r.write_bytes("identities.csv", csv.into_bytes())?;
    let pass = rep.max_rel_err < cfg.verify_tol;
    r.write_json(
        "verify_report.json",
        &json!({ "rows": rep.rows, "max_rel_err": rep.max_rel_err, "tol": cfg.verify_tol, "pass": pass }),
    )?;
    if !pass {
        r.failed.push(format!(
            "verify: max relative error {:.3e} is not below {:.1e}",
            rep.max_rel_err, cfg.verify_tol
        ));
    }
    Ok(rep.max_rel_err)
}

fn run_perturb(r: &mut Runner) -> Result<(), CliError> {
    let cfg = r.cfg;
    let base = match &r.spec {
        DomainSpec::Rectangle { lx, ly } => DomainSpec::rectangle_polygon(*lx, *ly).ctx("perturb")?,
        DomainSpec::Polygon { .. } => r.spec.clone(),
        other => {
            return Err(CliError::Config(format!(
                "perturb needs a rectangle or polygon domain, got {}",
                other.name()
            )))
        }
    };
    let moved = perturb_polygon(&base, &cfg.perturb_f, cfg.perturb_eps).ctx("perturb")?;
    let spectrum_of = |d: &DomainSpec| -> Result<SpectralData, CliError> {
        let grid = Arc::new(build_grid(d, cfg.h).ctx("perturb")?);
        numeric_spectrum(grid, cfg.spectrum_m, cfg.spectrum_tol).ctx("perturb")
    };
    let sd_base = spectrum_of(&base)?;
    let sd_moved = if moved == base { sd_base.clone() } else { spectrum_of(&moved)? };
    r.write_json("perturbed_domain.json", &moved)?;
    r.write_with("spectrum_base.csv", "perturb", |w| sd_base.write_csv(w))?;
    r.write_with("spectrum_perturbed.csv", "perturb", |w| sd_moved.write_csv(w))?;
    let rep_base = property_m_report(&sd_base, cfg.zero_tol);
    let rep_moved = property_m_report(&sd_moved, cfg.zero_tol);
    r.write_json(
        "perturb_report.json",
        &json!({
            "eps": cfg.perturb_eps,
            "f": cfg.perturb_f,
            "base": rep_base,
            "perturbed": rep_moved,
            "identical": sd_base == sd_moved,
        }),
    )
}

fn run_all(r: &mut Runner) -> Result<(), CliError> {
    let cfg = r.cfg;
    let n_max = cfg.moments_n_max.max(2 * cfg.invert_p - 1).max(cfg.verify_n_max);
    let ms = r.moments(n_max, "moments")?;
    run_moments(r, &ms)?;
    let am = run_invert(r, &ms)?;
    let reference = run_spectrum(r)?;
    let inverted = measure_to_spectrum(&am).ctx("invert")?;
    let cmp = compare_spectra(&reference, &inverted, cfg.compare_tol);
    r.write_json("compare.json", &cmp)?;
    let heat = run_heat(r, &reference, Some(&am))?;
    let verify_err = run_verify(r, Some(&ms))?;
    let l_ref = reference.entries()[0].lambda;
    let l_inv = inverted.entries()[0].lambda;
    r.write_json(
        "summary.json",
        &json!({
            "domain": r.spec,
            "lambda1_reference": l_ref,
            "lambda1_inverted": l_inv,
            "lambda1_rel_err": ((l_inv - l_ref) / l_ref).abs(),
            "atoms_used": am.len(),
            "compare_matched": cmp.matched.len(),
            "max_abs_diff_reconstructed_vs_timestep": heat["max_abs_diff_reconstructed_vs_timestep"],
            "verify_max_rel_err": verify_err,
            "failed_checks": r.failed,
        }),
    )
}

/// Runs the configured pipeline into `cfg.out`, then writes the resolved
/// config and the manifest.
pub fn run(cfg: &RunConfig, config_source: Option<&Path>) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let spec = cfg.domain()?;
    fs::create_dir_all(&cfg.out).map_err(|source| CliError::Io {
        path: cfg.out.clone(),
        source,
    })?;
    let mut r = Runner {
        cfg,
        spec,
        out: cfg.out.clone(),
        outputs: BTreeMap::new(),
        inputs: Vec::new(),
        failed: Vec::new(),
    };
    if let Some(path) = config_source {
        r.read_input(path)?;
    }
    match cfg.pipeline {
        Pipeline::Moments => {
            let ms = r.moments(cfg.moments_n_max, "moments")?;
            run_moments(&mut r, &ms)?;
        }
        Pipeline::Spectrum => {
            run_spectrum(&mut r)?;
        }
        Pipeline::Invert => {
            let ms = r.moments(cfg.moments_n_max.max(2 * cfg.invert_p - 1), "invert")?;
            run_invert(&mut r, &ms)?;
        }
        Pipeline::Heat => {
            let sd = r.spectrum(cfg.spectrum_m, "heat")?;
            run_heat(&mut r, &sd, None)?;
        }
        Pipeline::Mc => run_mc(&mut r)?,
        Pipeline::Verify => {
            run_verify(&mut r, None)?;
        }
        Pipeline::Perturb => run_perturb(&mut r)?,
        Pipeline::All => run_all(&mut r)?,
    }

    let config_text = cfg.emit();
    let config_sha = sha256_hex(config_text.as_bytes());
    r.write_bytes(CONFIG_FILE, config_text.into_bytes())?;
    let outputs: Vec<Value> = r
        .outputs
        .iter()
        .map(|(file, sha)| json!({ "file": file, "sha256": sha }))
        .collect();
    let manifest = json!({
        "tool": "mspec",
        "cli_version": env!("CARGO_PKG_VERSION"),
        "core_version": mspec_core::VERSION,
        "pipeline": cfg.pipeline.name(),
        "domain": r.spec,
        "precision": cfg.precision,
        "seeds": { "mc.seed": cfg.mc_seed },
        "config": CONFIG_FILE,
        "config_sha256": config_sha,
        "inputs": r.inputs,
        "outputs": outputs,
        "failed_checks": r.failed,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    let path = r.out.join(MANIFEST_FILE);
    fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;

    let mut files: Vec<String> = r.outputs.keys().cloned().collect();
    files.push(MANIFEST_FILE.to_string());
    Ok(RunOutcome {
        out: r.out,
        files,
        failed_checks: r.failed,
    })
}
