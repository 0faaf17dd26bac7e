//! Input schemas and runners for each subcommand.

use modkam::diophantine;
use modkam::jackson;
use modkam::kam::{self, RunConfig};
use modkam::modulus::{self, ModulusSpec, PropertyReport, Validity};
use modkam::regularity::{self, DeltaRegularity, IntegralVerdict, PhiFunction, RegularityReport};
use modkam::torus::TorusFunction;
use modkam::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// What a subcommand produced: JSON document, CSV mirror, one-line summary, and
/// whether the outcome is a negative analytical verdict (exit 1).
pub struct Outcome {
    pub json: Value,
    pub csv: String,
    pub summary: String,
    pub negative: bool,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn half() -> f64 {
    0.5
}
fn forty() -> usize {
    40
}
fn sixty_four() -> usize {
    64
}
fn one() -> u8 {
    1
}
fn twenty_four() -> usize {
    24
}
fn k_max_default() -> u32 {
    diophantine::DEFAULT_K_MAX
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModcheckInput {
    pub modulus: ModulusSpec,
    /// Contraction factor for weak homogeneity.
    #[serde(default = "half")]
    pub a: f64,
    /// Grid decreasing to zero (weak homogeneity, concavity, comparison).
    #[serde(default)]
    pub x_grid: Option<Vec<f64>>,
    /// Increasing grid of dilations `x ≥ 1` for semi separability.
    #[serde(default)]
    pub dilations: Option<Vec<f64>>,
    #[serde(default = "forty")]
    pub grid_points: usize,
    #[serde(default = "sixty_four")]
    pub r_resolution: usize,
    #[serde(default)]
    pub compare_with: Option<ModulusSpec>,
}

#[derive(Serialize)]
struct ModcheckOutput {
    modulus: ModulusSpec,
    validity: Validity,
    semi_separability: PropertyReport,
    weak_homogeneity: PropertyReport,
    concavity: PropertyReport,
    comparison: Option<PropertyReport>,
}

fn witness_csv(reports: &[&PropertyReport]) -> String {
    let mut s = String::from("property,x,value,ratio\n");
    for r in reports {
        let tag = to_value(&r.property);
        let tag = tag.as_str().unwrap_or("unknown");
        for w in &r.witness {
            s.push_str(&format!("{tag},{:.16e},{:.16e},{:.16e}\n", w.x, w.value, w.ratio));
        }
    }
    s
}

pub fn modcheck(inp: ModcheckInput) -> Result<Outcome, Error> {
    let m = &inp.modulus;
    let grid = match inp.x_grid {
        Some(g) => g,
        None => modulus::default_zero_grid(m, inp.grid_points),
    };
    let dil = inp.dilations.clone().unwrap_or_else(|| modulus::geometric_grid(1.0, 1e6, 15));
    let validity = modulus::validate(m)?;
    let semi = modulus::semi_separability(m, &dil, inp.r_resolution)?;
    let weak = modulus::weak_homogeneity(m, inp.a, &grid)?;
    let concavity = modulus::concavity_check(m, &grid)?;
    let comparison = match &inp.compare_with {
        Some(o) => Some(modulus::compare(m, o, &grid)?),
        None => None,
    };
    let mut reports = vec![&semi, &weak, &concavity];
    if let Some(c) = &comparison {
        reports.push(c);
    }
    let csv = witness_csv(&reports);
    let summary = format!(
        "modcheck: valid={} semi_separability={} weak_homogeneity={} (limsup {:.6e})",
        validity.nondecreasing && validity.vanishes_at_zero && validity.ratio_bounded,
        semi.holds(),
        weak.holds(),
        weak.bound_constant
    );
    let out = ModcheckOutput { modulus: inp.modulus.clone(), validity, semi_separability: semi, weak_homogeneity: weak, concavity, comparison };
    Ok(Outcome { json: to_value(&out), csv, summary, negative: false })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiniInput {
    pub modulus: ModulusSpec,
    pub k: u32,
    pub tau: f64,
}

fn trace_csv(v: &IntegralVerdict) -> String {
    let mut s = String::from("loglog_inv_lower,partial\n");
    for p in &v.truncation_trace {
        s.push_str(&format!("{:.16e},{:.16e}\n", p.loglog_inv_lower, p.partial));
    }
    s
}

pub fn dini(inp: DiniInput) -> Result<Outcome, Error> {
    let v = regularity::dini_integral(&inp.modulus, inp.k, inp.tau)?;
    let summary = if v.converges {
        format!("dini: converges, value {:.16e}", v.value.unwrap_or(f64::NAN))
    } else {
        format!("dini: diverges (rate {:.6e})", v.divergence_rate.unwrap_or(f64::NAN))
    };
    let verdict = if v.converges { "converges" } else { "diverges" };
    Ok(Outcome {
        json: json!({ "verdict": verdict, "k": inp.k, "tau": inp.tau, "modulus": to_value(&inp.modulus), "integral": to_value(&v) }),
        csv: trace_csv(&v),
        summary,
        negative: !v.converges,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KstarInput {
    pub modulus: ModulusSpec,
    pub k: u32,
    pub tau: f64,
}

pub fn kstar(inp: KstarInput) -> Result<Outcome, Error> {
    let mut rows = Vec::new();
    let mut ks = Vec::new();
    for i in [1u8, 2] {
        let phi = regularity::phi_from_modulus(&inp.modulus, inp.k, inp.tau, i)?;
        let k = regularity::critical_exponent(&phi)?;
        rows.push(json!({ "i": i, "k_star": k, "phi": to_value(&phi) }));
        ks.push(k);
    }
    Ok(Outcome {
        json: json!({ "k": inp.k, "tau": inp.tau, "modulus": to_value(&inp.modulus), "phis": rows }),
        csv: format!("i,k_star\n1,{}\n2,{}\n", ks[0], ks[1]),
        summary: format!("kstar: k1* = {}, k2* = {}", ks[0], ks[1]),
        negative: false,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemainingInput {
    /// Either a modulus (with `k`, `tau`, `i`) or an explicit `phi`.
    #[serde(default)]
    pub modulus: Option<ModulusSpec>,
    #[serde(default)]
    pub k: Option<u32>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default = "one")]
    pub i: u8,
    #[serde(default)]
    pub phi: Option<PhiFunction>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    #[serde(default = "twenty_four")]
    pub gamma_points: usize,
}

pub fn remaining(inp: RemainingInput) -> Result<Outcome, Error> {
    let phi = match (&inp.phi, &inp.modulus) {
        (Some(p), None) => p.clone(),
        (None, Some(m)) => {
            let (k, tau) = match (inp.k, inp.tau) {
                (Some(k), Some(t)) => (k, t),
                _ => return Err(Error::Argument("`k` and `tau` are required with `modulus`".into())),
            };
            regularity::phi_from_modulus(m, k, tau, inp.i)?
        }
        _ => return Err(Error::Argument("give exactly one of `modulus` or `phi`".into())),
    };
    let k_star = regularity::critical_exponent(&phi)?;
    let eps = inp.eps.unwrap_or_else(|| 0.5f64.min(phi.base_modulus.delta()));
    let gamma = inp.gamma.unwrap_or_else(|| modulus::geometric_grid(eps * 0.5, eps * 1e-20, inp.gamma_points));
    let rep: RegularityReport = regularity::remaining_modulus(&phi, k_star, eps, &gamma)?;
    let summary = match &rep.fits {
        Some(f) => format!("remaining: k* = {k_star}, power {:.6}, log power {:.6}", f.power, f.log_power),
        None => format!("remaining: k* = {k_star}"),
    };
    Ok(Outcome { json: to_value(&rep), csv: rep.to_csv(), summary, negative: false })
}

fn default_resolution() -> usize {
    2048
}
fn three() -> u32 {
    3
}
fn default_cutoff() -> usize {
    2048
}
fn default_r_list() -> Vec<f64> {
    (3..=9).map(|j| 0.5f64.powi(j)).collect()
}

#[derive(Debug, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case", deny_unknown_fields)]
pub enum JacksonInput {
    /// Kernel moments `∫ x^α ∂^β K` against their exact values (n = 1).
    Moments {
        #[serde(default = "default_resolution")]
        resolution: usize,
        #[serde(default = "three")]
        max_order: u32,
    },
    /// Error table of `S_r f − f` for a synthesized `f ∈ C_{k, α̂}`.
    Error {
        k: u32,
        alpha_hat: f64,
        #[serde(default = "default_cutoff")]
        cutoff: usize,
        #[serde(default = "default_r_list")]
        r_list: Vec<f64>,
        /// Draw random phases for the series from the `--seed` stream.
        #[serde(default)]
        random_phases: bool,
    },
}

impl Default for JacksonInput {
    fn default() -> Self {
        JacksonInput::Moments { resolution: default_resolution(), max_order: three() }
    }
}

fn synthesized(k: u32, alpha_hat: f64, cutoff: usize, seed: Option<u64>) -> Result<TorusFunction, Error> {
    let base = jackson::power_decay_series(k, alpha_hat, cutoff);
    let Some(seed) = seed else { return Ok(base) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::with_capacity(cutoff);
    for j in 1..=cutoff as i64 {
        let amp = 2.0 * base.coeff(&[j]).re;
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        terms.push((vec![j], amp * th.cos(), amp * th.sin()));
    }
    TorusFunction::from_real_terms(1, &terms)
}

pub fn jackson_bench(inp: JacksonInput, seed: u64) -> Result<Outcome, Error> {
    match inp {
        JacksonInput::Moments { resolution, max_order } => {
            let kernel = jackson::build_kernel(1, resolution)?;
            let mut rows = Vec::new();
            let mut csv = String::from("alpha,beta,numeric,exact,abs_error\n");
            let mut worst = 0.0f64;
            for a in 0..=max_order {
                for b in 0..=max_order {
                    let num = jackson::kernel_moments(&kernel, &[a], &[b], max_order)?;
                    let ex = jackson::moment_exact(a, b);
                    worst = worst.max((num - ex).abs());
                    csv.push_str(&format!("{a},{b},{num:.16e},{ex:.16e},{:.16e}\n", (num - ex).abs()));
                    rows.push(json!({ "alpha": a, "beta": b, "numeric": num, "exact": ex }));
                }
            }
            Ok(Outcome {
                json: json!({ "task": "moments", "resolution": resolution, "max_abs_error": worst, "rows": rows }),
                csv,
                summary: format!("jackson-bench: moments up to order {max_order}, max abs error {worst:.3e}"),
                negative: false,
            })
        }
        JacksonInput::Error { k, alpha_hat, cutoff, r_list, random_phases } => {
            let f = synthesized(k, alpha_hat, cutoff, random_phases.then_some(seed))?;
            let m = ModulusSpec::hoelder(alpha_hat)?;
            let rep = jackson::smooth_error_report(&f, &m, k, &r_list)?;
            let slope = rep.fit(0).map(|f| f.slope_vs_r).unwrap_or(f64::NAN);
            Ok(Outcome {
                json: json!({ "task": "error", "seed": random_phases.then_some(seed), "report": to_value(&rep) }),
                csv: rep.to_csv(0),
                summary: format!("jackson-bench: sup-error slope vs r {slope:.4} (expected {:.4})", k as f64 + alpha_hat),
                negative: false,
            })
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DioInput {
    pub omega: Vec<f64>,
    pub tau: f64,
    #[serde(default = "k_max_default")]
    pub k_max: u32,
}

pub fn dio(inp: DioInput) -> Result<Outcome, Error> {
    let scan = diophantine::scan(&inp.omega, inp.tau, inp.k_max)?;
    let cert = diophantine::certify(&inp.omega, inp.tau, inp.k_max);
    let witness = scan.witness.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
    let csv = format!("minimum,witness\n{:.16e},{witness}\n", scan.minimum);
    match cert {
        Ok(f) => Ok(Outcome {
            json: json!({ "certified": true, "frequency": to_value(&f), "minimum": scan.minimum, "witness": scan.witness }),
            csv,
            summary: format!("dio: certified, alpha* = {:.16e} up to |k| = {}", f.alpha_star.unwrap_or(0.0), inp.k_max),
            negative: false,
        }),
        Err(Error::Resonance { witness }) => Ok(Outcome {
            json: json!({ "certified": false, "minimum": scan.minimum, "witness": witness }),
            csv,
            summary: format!("dio: resonant, witness {witness:?}"),
            negative: true,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityInput {
    pub r_seq: Vec<f64>,
    pub deltas: Vec<f64>,
}

pub fn regularity_cmd(inp: RegularityInput) -> Result<Outcome, Error> {
    let res = regularity::regularity_from_deltas(&inp.r_seq, &inp.deltas)?;
    let (summary, csv) = match &res {
        DeltaRegularity::AnalyticLimit => ("regularity: analytic limit".to_string(), String::from("gamma,omega_star,L,ln_inv_L\n")),
        DeltaRegularity::Finite { report, .. } => (format!("regularity: k* = {}", report.k_star), report.to_csv()),
    };
    Ok(Outcome { json: to_value(&res), csv, summary, negative: false })
}

/// A failed KAM run still yields its partial trace.
pub struct KamRunFailure {
    pub error: Error,
    pub json: Value,
    pub csv: String,
}

pub fn kam_run(cfg: RunConfig) -> Result<Outcome, KamRunFailure> {
    let (model, run) = kam::run_from_config(&cfg).map_err(|f| KamRunFailure {
        json: json!({ "status": "failed", "error": f.error.to_string(), "trace": to_value(&f.trace) }),
        csv: f.trace.to_csv(),
        error: f.error,
    })?;
    let last = run.trace.records.last();
    let (ru, rv) = last.map(|r| (r.residual_u, r.residual_v)).unwrap_or((0.0, 0.0));
    let reg = kam::conjugacy_regularity(&run.trace, &model, cfg.tau, cfg.tolerances.floor);
    let reg = match reg {
        Ok(r) => to_value(&r),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let max_freq = run.trace.records.iter().map(|r| r.freq_error).fold(0.0, f64::max);
    let json = json!({
        "status": "ok",
        "config": to_value(&cfg),
        "hypotheses": to_value(&run.hypotheses),
        "residuals": { "residual_u": ru, "residual_v": rv, "grid_size": cfg.grid_size },
        "trace": to_value(&run.trace),
        "regularity": reg,
        "torus": to_value(&run.torus),
    });
    Ok(Outcome {
        json,
        csv: run.trace.to_csv(),
        summary: format!(
            "kam-run: {} steps, max frequency error {max_freq:.3e}, residuals ({ru:.3e}, {rv:.3e})",
            run.trace.records.len()
        ),
        negative: false,
    })
}
