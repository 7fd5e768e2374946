use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use shiftrf::svm::{CoordinateOrder, SvmConfig};
use shiftrf::{ExperimentConfig, KernelFamily, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Exact kernel SVM on the Gram matrix (linear SVM for the linear kernel)
    Exact,
    /// Linear SVM on M random cosine features
    #[value(alias = "random-features")]
    Rff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Order {
    Shuffled,
    Cyclic,
}

/// Parses `2^-18`, `2^3` or a plain positive number.
pub fn parse_positive(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let v = match t.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.trim().parse().map_err(|_| format!("bad number '{t}'"))?;
            let exp: i32 = exp.trim().parse().map_err(|_| format!("bad exponent in '{t}'"))?;
            base.powi(exp)
        }
        None => t.parse().map_err(|_| format!("bad number '{t}'"))?,
    };
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("'{t}' must be a positive finite number"));
    }
    Ok(v)
}

fn parse_m(s: &str) -> Result<usize, String> {
    let v = parse_positive(s)?;
    if v.fract() != 0.0 || v > 1e9 {
        return Err(format!("'{s}' is not a valid dimension"));
    }
    Ok(v as usize)
}

#[derive(Args, Debug, Clone)]
pub struct SvmArgs {
    /// Regularization constant C
    #[arg(long = "c", default_value = "100", value_parser = parse_positive)]
    pub c: f64,
    /// Stop when the largest projected-gradient violation is at most this
    #[arg(long = "tol", default_value = "1e-4", value_parser = parse_positive)]
    pub tol: f64,
    /// Maximum solver epochs per binary problem
    #[arg(long = "max-iter", default_value_t = 1000)]
    pub max_iter: usize,
    /// Coordinate order within an epoch; the shuffle is seeded by --seed
    #[arg(long, value_enum, default_value = "shuffled")]
    pub order: Order,
    /// Shrink bound coordinates in the linear solver
    #[arg(long)]
    pub shrinking: bool,
}

impl SvmArgs {
    pub fn config(&self, seed: u64) -> SvmConfig {
        SvmConfig {
            regularization_c: self.c,
            tolerance: self.tol,
            max_iterations: self.max_iter,
            order: match self.order {
                Order::Shuffled => CoordinateOrder::Shuffled { seed },
                Order::Cyclic => CoordinateOrder::Cyclic,
            },
            shrinking: self.shrinking,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Feature CSV: segment_id,label,f1,...,fN (header optional)
    #[arg(long, value_name = "PATH")]
    pub features: PathBuf,
    /// Fold manifest: segment_id,fold_index
    #[arg(long, value_name = "PATH")]
    pub folds: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct KernelArgs {
    /// Comma-separated kernel families (linear, gaussian, laplacian, cauchy) or `all`
    #[arg(long, default_value = "gaussian")]
    pub kernel: String,
    /// Bandwidth(s): one value for every nonlinear kernel, or one per nonlinear kernel in order
    #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
    pub gamma: Vec<f64>,
}

impl KernelArgs {
    /// `all` expands to every family, or to the shift-invariant ones when
    /// `shift_invariant_only` is set.
    pub fn specs(&self, shift_invariant_only: bool) -> anyhow::Result<Vec<KernelSpec>> {
        let families: Vec<KernelFamily> = if self.kernel.trim() == "all" {
            if shift_invariant_only {
                KernelFamily::SHIFT_INVARIANT.to_vec()
            } else {
                KernelFamily::ALL.to_vec()
            }
        } else {
            self.kernel
                .split(',')
                .map(|s| s.parse::<KernelFamily>())
                .collect::<Result<_, _>>()?
        };
        if families.is_empty() {
            bail!("no kernel given");
        }
        let nonlinear = families.iter().filter(|f| f.is_shift_invariant()).count();
        let gammas: Vec<f64> = match self.gamma.len() {
            0 if nonlinear > 0 => bail!("--gamma is required for {} kernels", nonlinear_names(&families)),
            1 => vec![self.gamma[0]; nonlinear],
            n if n == nonlinear => self.gamma.clone(),
            n => bail!("--gamma has {n} values for {nonlinear} nonlinear kernels"),
        };
        let mut g = gammas.into_iter();
        families
            .into_iter()
            .map(|f| {
                if f.is_shift_invariant() {
                    KernelSpec::new(f, g.next().expect("counted above")).context("invalid kernel")
                } else {
                    Ok(KernelSpec::linear())
                }
            })
            .collect()
    }
}

fn nonlinear_names(families: &[KernelFamily]) -> String {
    families
        .iter()
        .filter(|f| f.is_shift_invariant())
        .map(|f| f.name())
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Args, Debug, Clone)]
pub struct ProbeArgs {
    /// Kernel family
    #[arg(long)]
    pub kernel: KernelFamily,
    /// Bandwidth (required unless the kernel is linear)
    #[arg(long, value_parser = parse_positive)]
    pub gamma: Option<f64>,
    /// Input dimension N of the random points
    #[arg(long, default_value_t = 20)]
    pub dim: usize,
    /// Number of random point pairs
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    /// Feature dimensions M to probe
    #[arg(long, value_delimiter = ',', value_parser = parse_m, default_value = "32,64,128,256,512,1024,2048,4096")]
    pub m_values: Vec<usize>,
    /// Seeds the points and the feature maps
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the table as JSON
    #[arg(long, value_name = "PATH")]
    pub report_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub svm: SvmArgs,
    /// Exact kernel SVM or linear SVM on random features
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: Mode,
    /// Random feature dimension (required with --mode rff)
    #[arg(long, value_parser = parse_m)]
    pub m: Option<usize>,
    /// Seeds the feature map and the solver's coordinate shuffle
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw a fresh map for each fold (seed + fold) instead of one shared map
    #[arg(long)]
    pub reseed_per_fold: bool,
}

impl ExperimentArgs {
    pub fn config(&self, kernel: KernelSpec) -> anyhow::Result<ExperimentConfig> {
        let svm = self.svm.config(self.seed);
        let mut cfg = match self.mode {
            Mode::Exact => ExperimentConfig::exact(kernel, svm),
            Mode::Rff => {
                let m = self.m.context("--mode rff needs --m")?;
                ExperimentConfig::random_features(kernel, m, svm, self.seed)
            }
        };
        cfg.map_seed = self.seed;
        cfg.reseed_per_fold = self.reseed_per_fold;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Feature CSV used in full for training
    #[arg(long, value_name = "PATH")]
    pub features: PathBuf,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Where to write the model file
    #[arg(long, value_name = "PATH")]
    pub model_out: PathBuf,
    /// Also write W (row-major) then b as little-endian f64 (rff mode only)
    #[arg(long, value_name = "PATH")]
    pub export_dense: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    /// Model file written by `train`
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Feature CSV; its label column is ignored
    #[arg(long, value_name = "PATH")]
    pub features: PathBuf,
    /// Output CSV (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Append one decision value column per class
    #[arg(long)]
    pub scores: bool,
}

#[derive(Args, Debug, Clone)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Structured report (JSON)
    #[arg(long, value_name = "PATH")]
    pub report_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub svm: SvmArgs,
    /// Random feature dimensions M, one table column each
    #[arg(long, value_delimiter = ',', value_parser = parse_m, default_value = "32,64,128,256,512,1024,2048,4096")]
    pub m_values: Vec<usize>,
    /// Seeds the feature maps and the solver's coordinate shuffle
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw a fresh map for each fold (seed + fold) instead of one shared map
    #[arg(long)]
    pub reseed_per_fold: bool,
    /// Structured report (JSON)
    #[arg(long, value_name = "PATH")]
    pub report_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Kernel family
    #[arg(long)]
    pub kernel: KernelFamily,
    /// Gamma grid, e.g. `2^-18,2^-14,2^-8`
    #[arg(long, value_delimiter = ',', value_parser = parse_positive, default_value = "2^-18,2^-14,2^-8")]
    pub gammas: Vec<f64>,
    /// C grid
    #[arg(long, value_delimiter = ',', value_parser = parse_positive, default_value = "1,10,100")]
    pub cs: Vec<f64>,
    /// Exact kernel SVM or linear SVM on random features
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: Mode,
    /// Random feature dimension (required with --mode rff)
    #[arg(long, value_parser = parse_m)]
    pub m: Option<usize>,
    /// Stop when the largest projected-gradient violation is at most this
    #[arg(long = "tol", default_value = "1e-4", value_parser = parse_positive)]
    pub tol: f64,
    /// Maximum solver epochs per binary problem
    #[arg(long = "max-iter", default_value_t = 1000)]
    pub max_iter: usize,
    /// Coordinate order within an epoch; the shuffle is seeded by --seed
    #[arg(long, value_enum, default_value = "shuffled")]
    pub order: Order,
    /// Shrink bound coordinates in the linear solver
    #[arg(long)]
    pub shrinking: bool,
    /// Seeds the feature map and the solver's coordinate shuffle
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Structured report (JSON)
    #[arg(long, value_name = "PATH")]
    pub report_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 15)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Minimum distance between class centers (within-class std is 1)
    #[arg(long, default_value_t = 8.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 4)]
    pub fold_count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature CSV to write
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Fold manifest to write
    #[arg(long, value_name = "PATH")]
    pub folds_out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ConvertMetaArgs {
    /// Tab-separated meta file: path<TAB>label per line
    #[arg(long, value_name = "PATH")]
    pub meta: PathBuf,
    /// segment_id,label skeleton CSV to write
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Fold index to assign every listed segment (for per-fold meta files)
    #[arg(long, requires = "folds_out")]
    pub fold: Option<usize>,
    /// segment_id,fold manifest to write
    #[arg(long, value_name = "PATH", requires = "fold")]
    pub folds_out: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn powers_of_two_parse() {
        assert_eq!(parse_positive("2^-18").unwrap(), 2f64.powi(-18));
        assert_eq!(parse_positive(" 2^3 ").unwrap(), 8.0);
        assert_eq!(parse_positive("0.25").unwrap(), 0.25);
        assert!(parse_positive("0").is_err());
        assert!(parse_positive("-1").is_err());
        assert!(parse_positive("2^x").is_err());
        assert_eq!(parse_m("2^12").unwrap(), 4096);
        assert!(parse_m("2^-1").is_err());
    }

    #[test]
    fn kernel_lists_pair_gammas_with_nonlinear_families() {
        let k = KernelArgs {
            kernel: "linear,gaussian,cauchy".into(),
            gamma: vec![0.5, 2.0],
        };
        let specs = k.specs(false).unwrap();
        assert_eq!(specs[0], KernelSpec::linear());
        assert_eq!(specs[1], KernelSpec::gaussian(0.5).unwrap());
        assert_eq!(specs[2], KernelSpec::cauchy(2.0).unwrap());
        let all = KernelArgs {
            kernel: "all".into(),
            gamma: vec![1.0],
        };
        assert_eq!(all.specs(false).unwrap().len(), 4);
        assert_eq!(all.specs(true).unwrap().len(), 3);
        let missing = KernelArgs {
            kernel: "gaussian".into(),
            gamma: vec![],
        };
        assert!(missing.specs(false).is_err());
        let linear = KernelArgs {
            kernel: "linear".into(),
            gamma: vec![],
        };
        assert!(linear.specs(false).is_ok());
        let bad = KernelArgs {
            kernel: "poly".into(),
            gamma: vec![1.0],
        };
        assert!(bad.specs(false).is_err());
    }
}
