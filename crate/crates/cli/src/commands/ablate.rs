use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use denoise_core::cadt::StackConfig;
use denoise_core::metrics::psnr_display;
use denoise_core::model::ModelConfig;

use super::train::train;
use crate::config::RunConfig;
use crate::{CliError, REPORT_DIR};

pub const ABLATION_CSV: &str = "ablation.csv";

/// One row of the branch ablation. Every variant keeps the global
/// (attention) branch; the toggles add the local branch and the second stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Variant {
    Baseline,
    Sne,
    Cadt,
    CadtSne,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::Sne, Variant::Cadt, Variant::CadtSne];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Sne => "+SNE",
            Variant::Cadt => "+CADT",
            Variant::CadtSne => "+CADT+SNE",
        }
    }

    /// Directory name of the variant's runs.
    pub fn slug(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Sne => "sne",
            Variant::Cadt => "cadt",
            Variant::CadtSne => "cadt_sne",
        }
    }

    pub fn apply(self, m: &mut ModelConfig) {
        m.stack.enable_global = true;
        m.stack.enable_local = matches!(self, Variant::Cadt | Variant::CadtSne);
        m.enable_sne = matches!(self, Variant::Sne | Variant::CadtSne);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    /// Validation PSNR / SSIM of the best epoch.
    pub psnr: f64,
    pub ssim: f64,
    pub final_psnr: f64,
    pub noisy_psnr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    fn of(&self, v: Variant) -> impl Iterator<Item = &AblationRow> {
        self.rows.iter().filter(move |r| r.variant == v)
    }

    fn mean(&self, v: Variant, f: impl Fn(&AblationRow) -> f64) -> Option<f64> {
        let vals: Vec<f64> = self.of(v).map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Seed-averaged best validation PSNR.
    pub fn mean_psnr(&self, v: Variant) -> Option<f64> {
        self.mean(v, |r| r.psnr)
    }

    pub fn mean_ssim(&self, v: Variant) -> Option<f64> {
        self.mean(v, |r| r.ssim)
    }

    /// Seed-averaged PSNR of the noisy validation inputs.
    pub fn mean_noisy_psnr(&self, v: Variant) -> Option<f64> {
        self.mean(v, |r| r.noisy_psnr)
    }

    /// Variants present, in table order.
    pub fn variants(&self) -> Vec<Variant> {
        Variant::ALL.into_iter().filter(|v| self.of(*v).next().is_some()).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>6} {:>9} {:>7} {:>9} {:>9}", "variant", "seed", "psnr_db", "ssim", "final_db", "noisy_db");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>9.3} {:>7.4} {:>9.3} {:>9.3}",
                r.variant.label(),
                r.seed,
                r.psnr,
                r.ssim,
                r.final_psnr,
                r.noisy_psnr
            );
        }
        for v in self.variants() {
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>9.3} {:>7.4}",
                v.label(),
                "mean",
                self.mean_psnr(v).unwrap_or(f64::NAN),
                self.mean_ssim(v).unwrap_or(f64::NAN)
            );
        }
        let mut order: Vec<(Variant, f64)> = self
            .variants()
            .into_iter()
            .filter_map(|v| self.mean_psnr(v).map(|p| (v, p)))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1));
        let names: Vec<&str> = order.iter().map(|(v, _)| v.label()).collect();
        let _ = writeln!(s, "ordering (seed-averaged PSNR, best first): {}", names.join(" > "));
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(denoise_core::Error::from)?;
        let mut row = |rec: [String; 6]| w.write_record(rec).map_err(denoise_core::Error::from);
        row(["variant", "seed", "psnr_db", "ssim", "final_psnr_db", "noisy_psnr_db"].map(String::from))?;
        for r in &self.rows {
            row([
                r.variant.label().into(),
                r.seed.to_string(),
                format!("{:.6}", r.psnr),
                format!("{:.6}", r.ssim),
                format!("{:.6}", r.final_psnr),
                format!("{:.6}", r.noisy_psnr),
            ])?;
        }
        for v in self.variants() {
            row([
                v.label().into(),
                "mean".into(),
                format!("{:.6}", self.mean_psnr(v).unwrap_or(f64::NAN)),
                format!("{:.6}", self.mean_ssim(v).unwrap_or(f64::NAN)),
                format!("{:.6}", self.mean(v, |r| r.final_psnr).unwrap_or(f64::NAN)),
                format!("{:.6}", self.mean_noisy_psnr(v).unwrap_or(f64::NAN)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Refuses a stack larger than the toy preset unless explicitly allowed.
pub fn check_toy_scale(cfg: &RunConfig) -> Result<(), CliError> {
    let toy = StackConfig::toy(cfg.model.stack.image_channels);
    let s = &cfg.model.stack;
    if (s.groups, s.units_per_group, s.embed_dim) > (toy.groups, toy.units_per_group, toy.embed_dim) {
        return Err(CliError::Usage(format!(
            "ablation runs at toy scale ({} group x {} units, C={}); pass --any-scale to run a larger stack",
            toy.groups, toy.units_per_group, toy.embed_dim
        )));
    }
    Ok(())
}

/// Trains every (variant, seed) pair from `base` into
/// `base.out/<variant>/seed<k>` and writes `report/ablation.csv`.
/// Finished runs found on disk are reused.
pub fn ablate(
    base: &RunConfig,
    variants: &[Variant],
    seeds: &[u64],
    data_root: Option<&Path>,
) -> Result<AblationTable, CliError> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(CliError::Usage("ablation needs at least one variant and one seed".into()));
    }
    let mut table = AblationTable::default();
    for &v in variants {
        for &seed in seeds {
            let mut cfg = base.clone();
            v.apply(&mut cfg.model);
            cfg.train.seed = seed;
            cfg.out = base.out.join(v.slug()).join(format!("seed{seed}"));
            log::info!("ablation {} seed {seed}", v.label());
            let o = train(&cfg, data_root)?;
            let (best, last, noisy) = match (o.best, o.last, o.noisy_psnr) {
                (Some(b), Some(l), Some(n)) => (b, l, n),
                _ => return Err(CliError::Usage("ablation needs a validation set".into())),
            };
            table.rows.push(AblationRow {
                variant: v,
                seed,
                psnr: best.val_psnr.expect("validated epoch"),
                ssim: best.val_ssim.expect("validated epoch"),
                final_psnr: last.val_psnr.map(psnr_display).expect("validated epoch"),
                noisy_psnr: noisy,
            });
        }
    }
    let report = base.out.join(REPORT_DIR);
    fs::create_dir_all(&report)?;
    table.write_csv(&report.join(ABLATION_CSV))?;
    Ok(table)
}
